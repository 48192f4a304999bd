#pragma once

// Crosstalk matrices c_{kl}: row k is a detector mode, column l an ideal
// Hermite-Gauss mode, both flat-indexed like ModeGrid.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "superres/error.hpp"
#include "superres/parallel.hpp"
#include "superres/rng.hpp"

namespace superres {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

struct IdentityOrigin {};
struct RandomOrigin {
  double mu = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;
};
struct UniformOrigin {
  double r_magnitude = 0.0;
  double r_phase = 0.0;  // r = |r| exp(i r_phase); t is real and >= 0
};
struct LoadedOrigin {
  std::string path;
  double unitarity_deviation = 0.0;
  bool non_unitary = false;
};
using Provenance = std::variant<IdentityOrigin, RandomOrigin, UniformOrigin, LoadedOrigin>;

inline std::string describe(const Provenance& p) {
  char buf[160];
  struct Visitor {
    char* buf;
    std::string operator()(const IdentityOrigin&) const { return "identity"; }
    std::string operator()(const RandomOrigin& r) const {
      std::snprintf(buf, 160, "random(mu=%.17g;seed=%llu;index=%llu)", r.mu, static_cast<unsigned long long>(r.seed),
                    static_cast<unsigned long long>(r.sample_index));
      return buf;
    }
    std::string operator()(const UniformOrigin& u) const {
      std::snprintf(buf, 160, "uniform(r=%.17g;phase=%.17g)", u.r_magnitude, u.r_phase);
      return buf;
    }
    std::string operator()(const LoadedOrigin& l) const { return "loaded(" + l.path + ")"; }
  };
  return std::visit(Visitor{buf}, p);
}

/// ||C^dagger C - I||_max.
inline double unitarity_deviation(const ComplexMatrix& c) {
  const ComplexMatrix gram = c.adjoint() * c - ComplexMatrix::Identity(c.rows(), c.cols());
  return gram.cwiseAbs().maxCoeff();
}

struct CrosstalkMatrix {
  ComplexMatrix entries;
  Provenance provenance = IdentityOrigin{};
  bool unitarized = false;  // replaced by its nearest unitary (polar factor)

  int dim() const { return static_cast<int>(entries.rows()); }
  double unitarity_deviation() const { return superres::unitarity_deviation(entries); }
  std::string description() const { return describe(provenance) + (unitarized ? "+unitarized" : ""); }
};

inline CrosstalkMatrix identity_crosstalk(int dim) {
  if (dim < 1) throw ConfigError("identity_crosstalk: dim must be >= 1");
  return CrosstalkMatrix{ComplexMatrix::Identity(dim, dim), IdentityOrigin{}};
}

/// Generalized Gell-Mann matrices: for each j < k a symmetric and an
/// antisymmetric generator, then D-1 diagonal ones. Trace(G_a G_b) = 2 delta_ab.
inline std::vector<ComplexMatrix> gell_mann_basis(int dim) {
  if (dim < 2) throw ConfigError("gell_mann_basis: dimension must be >= 2");
  const Complex i1{0.0, 1.0};
  std::vector<ComplexMatrix> basis;
  basis.reserve(static_cast<std::size_t>(dim) * dim - 1);
  for (int j = 0; j < dim; ++j) {
    for (int k = j + 1; k < dim; ++k) {
      ComplexMatrix sym = ComplexMatrix::Zero(dim, dim);
      sym(j, k) = sym(k, j) = 1.0;
      basis.push_back(std::move(sym));
      ComplexMatrix anti = ComplexMatrix::Zero(dim, dim);
      anti(j, k) = -i1;
      anti(k, j) = i1;
      basis.push_back(std::move(anti));
    }
  }
  for (int l = 1; l < dim; ++l) {
    ComplexMatrix diag = ComplexMatrix::Zero(dim, dim);
    const double scale = std::sqrt(2.0 / (l * (l + 1.0)));
    for (int a = 0; a < l; ++a) diag(a, a) = scale;
    diag(l, l) = -l * scale;
    basis.push_back(std::move(diag));
  }
  return basis;
}

/// Hermitian generator H = sum_a lambda_a G_a.
inline ComplexMatrix combine_generators(const std::vector<ComplexMatrix>& basis, const std::vector<double>& lambda) {
  if (basis.empty() || basis.size() != lambda.size()) throw ConfigError("combine_generators: size mismatch");
  ComplexMatrix h = ComplexMatrix::Zero(basis.front().rows(), basis.front().cols());
  for (std::size_t a = 0; a < basis.size(); ++a) h += lambda[a] * basis[a];
  return h;
}

/// exp(-i mu H) for Hermitian H via its eigendecomposition V diag(e^{-i mu l}) V^dagger.
inline ComplexMatrix unitary_exponential(const Eigen::SelfAdjointEigenSolver<ComplexMatrix>& eig, double mu) {
  const auto& v = eig.eigenvectors();
  Eigen::VectorXcd phases(v.cols());
  for (Eigen::Index a = 0; a < v.cols(); ++a) phases(a) = std::polar(1.0, -mu * eig.eigenvalues()(a));
  return v * phases.asDiagonal() * v.adjoint();
}

inline ComplexMatrix unitary_exponential(const ComplexMatrix& hermitian, double mu) {
  return unitary_exponential(Eigen::SelfAdjointEigenSolver<ComplexMatrix>(hermitian), mu);
}

/// Fixed (dim, mu, seed) ensemble of C(mu) = exp(-i mu sum lambda_a G_a), with
/// lambda isotropic on the unit sphere in R^(D^2-1). Sample i draws lambda
/// from its own stream, so samples can be produced in any order.
class RandomCrosstalkEnsemble {
 public:
  RandomCrosstalkEnsemble(int dim, double mu, std::uint64_t seed)
      : dim_(dim), mu_(mu), seed_(seed), basis_(gell_mann_basis(dim)) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("random crosstalk: mu must be finite and >= 0");
  }

  int dim() const { return dim_; }
  double mu() const { return mu_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ComplexMatrix>& basis() const { return basis_; }

  std::vector<double> coefficients(std::uint64_t index) const {
    Engine engine = make_stream(seed_, StreamDomain::crosstalk, index);
    std::normal_distribution<double> normal;
    std::vector<double> lambda(basis_.size());
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& l : lambda) {
        l = normal(engine);
        norm2 += l * l;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& l : lambda) l *= inv;
    return lambda;
  }

  ComplexMatrix generator(std::uint64_t index) const { return combine_generators(basis_, coefficients(index)); }

  CrosstalkMatrix sample(std::uint64_t index) const {
    ComplexMatrix c = (mu_ == 0.0) ? ComplexMatrix::Identity(dim_, dim_) : unitary_exponential(generator(index), mu_);
    return CrosstalkMatrix{std::move(c), RandomOrigin{mu_, seed_, index}};
  }

 private:
  int dim_;
  double mu_;
  std::uint64_t seed_;
  std::vector<ComplexMatrix> basis_;
};

/// Single draw: sample `sample_index` of the (dim, mu, seed) ensemble.
inline CrosstalkMatrix sample_random_crosstalk(int dim, double mu, std::uint64_t seed, std::uint64_t sample_index = 0) {
  return RandomCrosstalkEnsemble(dim, mu, seed).sample(sample_index);
}

struct CrosstalkStats {
  double avg_diag = 0.0;     // mean |c_ii|^2
  double avg_offdiag = 0.0;  // mean |c_ij|^2, i != j
};

inline CrosstalkStats crosstalk_stats(const ComplexMatrix& c) {
  const Eigen::Index d = c.rows();
  if (d == 0 || c.cols() != d) throw ConfigError("crosstalk_stats: matrix must be square and non-empty");
  double diag = 0.0, off = 0.0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) (i == j ? diag : off) += std::norm(c(i, j));
  CrosstalkStats s;
  s.avg_diag = diag / static_cast<double>(d);
  s.avg_offdiag = d > 1 ? off / static_cast<double>(d * (d - 1)) : 0.0;
  return s;
}

inline CrosstalkStats crosstalk_stats(const CrosstalkMatrix& c) { return crosstalk_stats(c.entries); }

/// Uniform model: t on the diagonal, r = |r| e^{i phase} elsewhere, with
/// |t|^2 = 1 - (D-1)|r|^2. Not exactly unitary: the Gram off-diagonals are
/// 2 Re(t r*) + (D-2)|r|^2 in magnitude, bounded by 2|t||r| + (D-2)|r|^2.
inline CrosstalkMatrix uniform_crosstalk(int dim, double r_magnitude, double r_phase = 0.0) {
  if (dim < 1) throw ConfigError("uniform_crosstalk: dim must be >= 1");
  if (!(r_magnitude >= 0.0)) throw ConfigError("uniform_crosstalk: |r| must be >= 0");
  const double scatter = (dim - 1) * r_magnitude * r_magnitude;
  if (!(scatter < 1.0)) throw ConfigError("uniform_crosstalk: (D-1)|r|^2 must be < 1");
  const Complex r = std::polar(r_magnitude, r_phase);
  ComplexMatrix c = ComplexMatrix::Constant(dim, dim, r);
  c.diagonal().setConstant(std::sqrt(1.0 - scatter));
  return CrosstalkMatrix{std::move(c), UniformOrigin{r_magnitude, r_phase}};
}

/// Bound on the uniform model's Gram off-diagonal deviation.
inline double uniform_unitarity_bound(int dim, double r_magnitude) {
  const double t = std::sqrt(1.0 - (dim - 1) * r_magnitude * r_magnitude);
  return 2.0 * t * r_magnitude + (dim - 2) * r_magnitude * r_magnitude;
}

/// Total scattering probability (D-1)|r|^2 of the uniform model.
inline double scattering_probability(int dim, double r_magnitude) { return (dim - 1) * r_magnitude * r_magnitude; }

/// Nearest unitary in Frobenius norm (unitary polar factor W V^dagger of C = W S V^dagger).
inline CrosstalkMatrix nearest_unitary(const CrosstalkMatrix& c) {
  Eigen::JacobiSVD<ComplexMatrix> svd(c.entries, Eigen::ComputeFullU | Eigen::ComputeFullV);
  CrosstalkMatrix out{svd.matrixU() * svd.matrixV().adjoint(), c.provenance, true};
  return out;
}

struct MuCalibration {
  double mu = 0.0;
  double achieved_avg_offdiag = 0.0;  // ensemble mean at mu on the calibration ensemble
  int samples = 0;
};

/// Finds mu whose ensemble mean of avg_offdiag equals `target`. The same
/// generators are reused for every trial mu, so the estimate is a smooth
/// deterministic function of mu; the smallest crossing on [0, pi] is bisected.
inline MuCalibration calibrate_mu(int dim, double target, int samples, std::uint64_t seed, unsigned threads = 1,
                                  double rel_tol = 1e-6) {
  if (dim < 2) throw ConfigError("calibrate_mu: dimension must be >= 2");
  if (samples < 1) throw ConfigError("calibrate_mu: need at least one sample");
  if (!(target >= 0.0) || !(target < 1.0 / (dim - 1)))
    throw ConfigError("calibrate_mu: target must lie in [0, 1/(D-1))");
  if (target == 0.0) return MuCalibration{0.0, 0.0, samples};

  const RandomCrosstalkEnsemble ensemble(dim, 1.0, seed);
  std::vector<Eigen::SelfAdjointEigenSolver<ComplexMatrix>> eig(samples);
  parallel_for(static_cast<std::size_t>(samples), threads,
               [&](std::size_t i) { eig[i].compute(ensemble.generator(i)); });

  auto mean_offdiag = [&](double mu) {
    std::vector<double> v(samples);
    parallel_for(static_cast<std::size_t>(samples), threads,
                 [&](std::size_t i) { v[i] = crosstalk_stats(unitary_exponential(eig[i], mu)).avg_offdiag; });
    double s = 0.0;
    for (double a : v) s += a;
    return s / samples;
  };

  constexpr double mu_max = std::numbers::pi;
  constexpr int scan = 64;
  double lo = 0.0, hi = 0.0, f_hi = 0.0;
  bool bracketed = false;
  for (int k = 1; k <= scan; ++k) {
    hi = mu_max * k / scan;
    f_hi = mean_offdiag(hi);
    if (f_hi >= target) {
      bracketed = true;
      break;
    }
    lo = hi;
  }
  if (!bracketed) throw NumericalError("calibrate_mu: target unreachable for mu in [0, pi]");

  double mid = hi, f_mid = f_hi;
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    f_mid = mean_offdiag(mid);
    if (std::abs(f_mid - target) <= rel_tol * target) break;
    (f_mid < target ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return MuCalibration{mid, f_mid, samples};
}

}  // namespace superres
