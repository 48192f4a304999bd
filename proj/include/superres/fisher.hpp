#pragma once

// Per-photon Fisher information for the separation, reported as the
// dimensionless w^2 F. With x = d/(2w), d/dd = (1/2w) d/dx, hence
// w^2 F = (1/4) sum_k (dp_k/dx)^2 / p_k.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "superres/crosstalk.hpp"
#include "superres/error.hpp"
#include "superres/modes.hpp"
#include "superres/quadrature.hpp"

namespace superres {

enum class FisherMethod { exact_sum, closed_form, small_d_uniform, small_d_generic, direct_imaging };

inline const char* to_string(FisherMethod m) {
  switch (m) {
    case FisherMethod::exact_sum: return "exact_sum";
    case FisherMethod::closed_form: return "closed_form";
    case FisherMethod::small_d_uniform: return "small_d_uniform";
    case FisherMethod::small_d_generic: return "small_d_generic";
    case FisherMethod::direct_imaging: return "direct_imaging";
  }
  return "unknown";
}

struct FisherValue {
  double w2F = 0.0;
  FisherMethod method = FisherMethod::exact_sum;
};

/// Thresholds below which a (p, dp/dx) pair is a dark mode contributing 0.
inline constexpr double kDarkProbability = 1e-300;
inline constexpr double kDarkDerivative = 1e-150;

/// Detection probabilities behind crosstalk matrix C: with
/// gamma(+-r0) = conj(C) beta(+-r0), p = (|gamma(+r0)|^2 + |gamma(-r0)|^2) / 2.
/// Both displacements are evaluated explicitly.
inline ProbabilityModel demux_probabilities(const CrosstalkMatrix& c, const ModeGrid& grid, const SceneParams& scene) {
  if (c.dim() != grid.dim())
    throw ConfigError("demux_probabilities: matrix dimension " + std::to_string(c.dim()) +
                      " does not match mode grid dimension " + std::to_string(grid.dim()));
  if (scene.x < kXFloor) throw ConfigError("demux_probabilities: x below x_floor");
  const int d = grid.dim();
  const double cs = std::cos(scene.theta), sn = std::sin(scene.theta);
  Eigen::VectorXcd bp(d), bm(d), dbp(d), dbm(d);
  for (int k = 0; k < d; ++k) {
    const auto [n, m] = grid.mode(k);
    bp(k) = hermite_gauss_overlap(n, m, scene.x, cs, sn);
    bm(k) = hermite_gauss_overlap(n, m, scene.x, -cs, -sn);
    dbp(k) = hermite_gauss_overlap_dx(n, m, scene.x, cs, sn);
    dbm(k) = hermite_gauss_overlap_dx(n, m, scene.x, -cs, -sn);
  }
  const ComplexMatrix cc = c.entries.conjugate();
  const Eigen::VectorXcd gp = cc * bp, gm = cc * bm, dgp = cc * dbp, dgm = cc * dbm;
  ProbabilityModel model{grid, scene, std::vector<double>(d), std::vector<double>(d)};
  for (int k = 0; k < d; ++k) {
    model.probs[k] = 0.5 * (std::norm(gp(k)) + std::norm(gm(k)));
    model.dprobs[k] = (std::conj(gp(k)) * dgp(k)).real() + (std::conj(gm(k)) * dgm(k)).real();
  }
  return model;
}

/// w^2 F summed over the measured modes of the model.
inline FisherValue fisher_exact(const ProbabilityModel& model) {
  double sum = 0.0;
  for (int k : model.grid.measured_indices()) {
    const double p = model.probs[k], dp = model.dprobs[k];
    if (p < kDarkProbability) {
      if (std::abs(dp) < kDarkDerivative) continue;
      throw SingularTermError(k, p, dp);
    }
    sum += dp * dp / p;
  }
  return FisherValue{0.25 * sum, FisherMethod::exact_sum};
}

/// Ideal measurement of modes n, m <= Q at theta = 0 (or pi/2):
/// (e^{-x^2}(x^2-(Q+1)) x^{2Q} + Gamma(Q+1, x^2)) / Q!, with the finite sum
/// Gamma(Q+1, z) = Q! e^{-z} sum_{k<=Q} z^k / k!.
inline FisherValue fisher_ideal_closed_form(int q, double x) {
  if (q < 1) throw ConfigError("fisher_ideal_closed_form: Q must be >= 1");
  if (!(x >= 0.0)) throw ConfigError("fisher_ideal_closed_form: x must be >= 0");
  const double z = x * x;
  const double e = std::exp(-z);
  double term = 1.0, tail = 1.0;  // z^k / k!
  for (int k = 1; k <= q; ++k) {
    term *= z / k;
    tail += term;
  }
  // term now holds z^Q / Q!.
  return FisherValue{e * (z - (q + 1)) * term + e * tail, FisherMethod::closed_form};
}

enum class SmallDForm {
  full,      // complete O(x^2) expression for any theta
  aligned,   // theta = 0 (or pi/2) form
  weak_law,  // leading term for |r|^2 -> 0 at fixed P_scat
};

/// Small-separation Fisher information of the uniform crosstalk model.
/// `r`, `t` are the off-diagonal and diagonal amplitudes; q is the measured cutoff.
inline FisherValue fisher_uniform_smalld(int dim, Complex r, Complex t, double theta, double x, int q,
                                         SmallDForm form = SmallDForm::full) {
  const double r2 = std::norm(r), t2 = std::norm(t);
  if (dim < 2) throw ConfigError("fisher_uniform_smalld: dim must be >= 2");
  if (q < 1) throw ConfigError("fisher_uniform_smalld: Q must be >= 1");
  if (std::abs(t2 + (dim - 1) * r2 - 1.0) > 1e-12)
    throw ConfigError("fisher_uniform_smalld: need |t|^2 + (D-1)|r|^2 = 1");
  if (r2 == 0.0) throw ConfigError("fisher_uniform_smalld: r = 0 diverges; use the ideal measurement");
  const double x2 = x * x;
  switch (form) {
    case SmallDForm::aligned:
      return FisherValue{x2 * (r2 * r2 / t2 + t2 * t2 / r2 - r2 - t2), FisherMethod::small_d_uniform};
    case SmallDForm::weak_law: {
      const double p_scat = (dim - 1) * r2;
      const double angular = (3.0 + std::cos(4.0 * theta)) / 4.0;
      return FisherValue{x2 * angular * (1.0 - p_scat) * (1.0 - p_scat) / r2, FisherMethod::small_d_uniform};
    }
    case SmallDForm::full:
      break;
  }
  const double s2t = std::sin(2.0 * theta);
  const double c2 = std::cos(theta) * std::cos(theta), s2 = std::sin(theta) * std::sin(theta);
  const double g = s2t * (r2 + (std::conj(t) * r).real());
  const double a00 = r2 - t2 + g;
  const double a10 = c2 * (t2 - r2) + g;
  const double a01 = s2 * (t2 - r2) + g;
  const double w2f = x2 * (a00 * a00 / t2 + a10 * a10 / r2 + a01 * a01 / r2 + g * g / r2) +
                     4.0 * x2 * (q - 1.0) * (q - 1.0) * s2t * s2t * r2;
  return FisherValue{w2f, FisherMethod::small_d_uniform};
}

/// Matrix entries c_{nm,kl} (row = detector mode nm, column = ideal mode kl)
/// entering the generic small-separation law.
struct GenericSmallDEntries {
  Complex c00_01, c00_10, c01_01, c01_00, c10_10, c10_00;
};

inline GenericSmallDEntries generic_entries(const CrosstalkMatrix& c, const ModeGrid& grid) {
  if (c.dim() != grid.dim() || grid.q_crosstalk() < 1) throw ConfigError("generic_entries: need a grid with Q >= 1");
  auto at = [&](int n, int m, int k, int l) { return c.entries(grid.flat(n, m), grid.flat(k, l)); };
  return GenericSmallDEntries{at(0, 0, 0, 1), at(0, 0, 1, 0), at(0, 1, 0, 1),
                              at(0, 1, 0, 0), at(1, 0, 1, 0), at(1, 0, 0, 0)};
}

/// x^2 (|c01,01|^4 sin^4 / |c01,00|^2 + |c10,10|^4 cos^4 / |c10,00|^2).
inline FisherValue fisher_generic_smalld(const GenericSmallDEntries& e, double theta, double x) {
  const double s01 = std::norm(e.c01_00), s10 = std::norm(e.c10_00);
  if (s01 == 0.0 || s10 == 0.0)
    throw ConfigError("fisher_generic_smalld: zero scattering amplitude into mode 00 diverges");
  const double s = std::sin(theta), c = std::cos(theta);
  const double t01 = std::norm(e.c01_01), t10 = std::norm(e.c10_10);
  return FisherValue{x * x * (t01 * t01 * s * s * s * s / s01 + t10 * t10 * c * c * c * c / s10),
                     FisherMethod::small_d_generic};
}

/// Direct imaging: integral of (dp/dd)^2 / p over the image plane for
/// p(r) = (|u00(r - r0)|^2 + |u00(r + r0)|^2) / 2, on the square of half-width d/2 + 8w.
inline FisherValue fisher_direct_imaging(double x, double theta, double abs_tol = 1e-8) {
  if (!(x >= 0.0)) throw ConfigError("fisher_direct_imaging: x must be >= 0");
  const double ex = std::cos(theta), ey = std::sin(theta);
  const double ax = x * ex, ay = x * ey;
  constexpr double norm = 2.0 / std::numbers::pi;  // |u00|^2 peak for w = 1
  auto integrand = [=](double u, double v) {
    const double mx = u - ax, my = v - ay, px = u + ax, py = v + ay;
    const double gm = norm * std::exp(-2.0 * (mx * mx + my * my));
    const double gp = norm * std::exp(-2.0 * (px * px + py * py));
    const double p = 0.5 * (gm + gp);
    if (p <= 0.0) return 0.0;
    // dp/dx = 2 (gm (r - r0).e - gp (r + r0).e); dp/dd = dp/dx / 2.
    const double dpdd = gm * (mx * ex + my * ey) - gp * (px * ex + py * ey);
    return dpdd * dpdd / p;
  };
  const double half = x + 8.0;
  quadrature::Options opt;
  opt.abs_tol = abs_tol;
  opt.initial_splits = 8;
  opt.max_regions = 200000;
  const auto res = quadrature::integrate_2d(integrand, {-half, half, -half, half}, opt);
  if (!res.converged) throw QuadratureError("fisher_direct_imaging did not converge", res.error);
  return FisherValue{res.value, FisherMethod::direct_imaging};
}

/// Small-x direct-imaging law 8 x^2.
inline double direct_imaging_small_x(double x) { return 8.0 * x * x; }

}  // namespace superres
