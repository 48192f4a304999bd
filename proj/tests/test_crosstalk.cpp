#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "superres/crosstalk.hpp"

using namespace superres;
using namespace std::complex_literals;

namespace {
double max_abs(const ComplexMatrix& m) { return m.cwiseAbs().maxCoeff(); }
}  // namespace

TEST(GellMann, PauliAtDimensionTwo) {
  const auto g = gell_mann_basis(2);
  ASSERT_EQ(g.size(), 3u);
  ComplexMatrix sx(2, 2), sy(2, 2), sz(2, 2);
  sx << 0, 1, 1, 0;
  sy << 0, -1i, 1i, 0;
  sz << 1, 0, 0, -1;
  EXPECT_LT(max_abs(g[0] - sx), 1e-15);
  EXPECT_LT(max_abs(g[1] - sy), 1e-15);
  EXPECT_LT(max_abs(g[2] - sz), 1e-15);
  EXPECT_THROW(gell_mann_basis(1), ConfigError);
}

TEST(GellMann, CountTracelessHermitian) {
  const auto g = gell_mann_basis(9);
  ASSERT_EQ(g.size(), 80u);
  for (const auto& m : g) {
    EXPECT_LT(std::abs(m.trace()), 1e-15);
    EXPECT_LT(max_abs(m - m.adjoint()), 1e-15);
  }
}

TEST(GellMann, TraceOrthonormality) {
  for (int d : {3, 4}) {
    const auto g = gell_mann_basis(d);
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = 0; b < g.size(); ++b)
        EXPECT_NEAR(std::abs((g[a] * g[b]).trace() - (a == b ? 2.0 : 0.0)), 0.0, 1e-14) << d << " " << a << " " << b;
  }
}

TEST(GellMann, CompletenessReconstruction) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  ComplexMatrix a(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = Complex(n01(rng), n01(rng));
  ComplexMatrix h = a + a.adjoint();
  h -= (h.trace() / 3.0) * ComplexMatrix::Identity(3, 3);
  ComplexMatrix rebuilt = ComplexMatrix::Zero(3, 3);
  for (const auto& g : gell_mann_basis(3)) rebuilt += ((h * g).trace() / 2.0) * g;
  EXPECT_LT(max_abs(rebuilt - h), 1e-13);
}

TEST(RandomCrosstalk, ZeroMuIsIdentity) {
  const auto c = sample_random_crosstalk(9, 0.0, 3);
  EXPECT_LT(max_abs(c.entries - ComplexMatrix::Identity(9, 9)), 1e-15);
}

TEST(RandomCrosstalk, UnitaryWithUnitDeterminant) {
  const RandomCrosstalkEnsemble ens(9, 0.3, 11);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto c = ens.sample(i);
    EXPECT_LT(c.unitarity_deviation(), 1e-12);
    EXPECT_NEAR(std::abs(c.entries.determinant()), 1.0, 1e-10);
    // Generators are traceless, so det exp(-i mu H) = 1 exactly.
    EXPECT_NEAR(std::abs(c.entries.determinant() - 1.0), 0.0, 1e-10);
  }
}

TEST(RandomCrosstalk, CoefficientsOnUnitSphere) {
  const RandomCrosstalkEnsemble ens(4, 0.5, 2);
  const auto l = ens.coefficients(5);
  ASSERT_EQ(l.size(), 15u);
  double s = 0.0;
  for (double v : l) s += v * v;
  EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(RandomCrosstalk, Reproducible) {
  const auto a = sample_random_crosstalk(9, 0.2, 42, 17);
  const auto b = RandomCrosstalkEnsemble(9, 0.2, 42).sample(17);
  EXPECT_TRUE(a.entries == b.entries);
  EXPECT_FALSE(a.entries == sample_random_crosstalk(9, 0.2, 42, 18).entries);
  EXPECT_FALSE(a.entries == sample_random_crosstalk(9, 0.2, 43, 17).entries);
}

TEST(RandomCrosstalk, CalibrationIndependentOfThreads) {
  const auto one = calibrate_mu(9, 0.0017, 40, 5, 1);
  const auto four = calibrate_mu(9, 0.0017, 40, 5, 4);
  EXPECT_EQ(one.mu, four.mu);
  EXPECT_EQ(one.achieved_avg_offdiag, four.achieved_avg_offdiag);
}

TEST(CrosstalkStats, IdentityAndUniform) {
  const auto s = crosstalk_stats(identity_crosstalk(5));
  EXPECT_EQ(s.avg_diag, 1.0);
  EXPECT_EQ(s.avg_offdiag, 0.0);
  const auto u = crosstalk_stats(uniform_crosstalk(9, std::sqrt(0.0017)));
  EXPECT_NEAR(u.avg_offdiag, 0.0017, 1e-16);
  EXPECT_NEAR(u.avg_diag, 0.9864, 1e-15);
}

TEST(CrosstalkStats, ClosureForUnitary) {
  const RandomCrosstalkEnsemble ens(9, 0.4, 8);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto s = crosstalk_stats(ens.sample(i));
    EXPECT_NEAR(s.avg_diag + 8.0 * s.avg_offdiag, 1.0, 1e-12);
  }
}

TEST(UniformCrosstalk, ScatteringProbabilities) {
  EXPECT_NEAR(scattering_probability(9, std::sqrt(0.0017)), 0.0136, 1e-15);
  EXPECT_NEAR(scattering_probability(16, std::sqrt(0.017)), 0.255, 1e-15);
  const auto c = uniform_crosstalk(9, std::sqrt(0.0017));
  EXPECT_NEAR(std::norm(c.entries(0, 0)), 0.9864, 1e-15);
  EXPECT_NEAR(std::norm(c.entries(2, 5)), 0.0017, 1e-16);
  EXPECT_LT(max_abs(uniform_crosstalk(4, 0.0).entries - ComplexMatrix::Identity(4, 4)), 1e-16);
  EXPECT_THROW(uniform_crosstalk(9, std::sqrt(0.2)), ConfigError);
}

TEST(UniformCrosstalk, DeviationWithinDocumentedBound) {
  for (double r2 : {1.7e-4, 1.7e-3, 1.7e-2}) {
    const double r = std::sqrt(r2);
    const auto c = uniform_crosstalk(9, r);
    EXPECT_LE(c.unitarity_deviation(), uniform_unitarity_bound(9, r) + 1e-15);
    EXPECT_GT(c.unitarity_deviation(), 0.0);
  }
}

TEST(UniformCrosstalk, ComplexPhase) {
  const auto c = uniform_crosstalk(4, 0.1, 0.5);
  EXPECT_NEAR(std::arg(c.entries(0, 1)), 0.5, 1e-15);
  EXPECT_NEAR(std::norm(c.entries(1, 1)) + 3 * 0.01, 1.0, 1e-15);
}

TEST(NearestUnitary, ProducesUnitaryCloseToInput) {
  const auto c = uniform_crosstalk(9, std::sqrt(0.0017));
  const auto u = nearest_unitary(c);
  EXPECT_TRUE(u.unitarized);
  EXPECT_LT(u.unitarity_deviation(), 1e-13);
  EXPECT_LT(max_abs(u.entries - c.entries), 0.2);
  const auto i = nearest_unitary(identity_crosstalk(3));
  EXPECT_LT(max_abs(i.entries - ComplexMatrix::Identity(3, 3)), 1e-15);
}

TEST(Calibration, ZeroTargetAndRange) {
  EXPECT_EQ(calibrate_mu(9, 0.0, 10, 1).mu, 0.0);
  EXPECT_THROW(calibrate_mu(9, 0.2, 10, 1), ConfigError);
  EXPECT_THROW(calibrate_mu(9, -0.1, 10, 1), ConfigError);
}

TEST(Calibration, ResampledEnsembleHitsTarget) {
  const auto cal = calibrate_mu(9, 0.0017, 500, 1);
  EXPECT_NEAR(cal.achieved_avg_offdiag, 0.0017, 0.0017 * 1e-5);
  const RandomCrosstalkEnsemble fresh(9, cal.mu, 2);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 500; ++i) sum += crosstalk_stats(fresh.sample(i)).avg_offdiag;
  EXPECT_NEAR(sum / 500, 0.0017, 0.02 * 0.0017);
}

TEST(Calibration, MuScalesAsSquareRootOfTarget) {
  const double lo = calibrate_mu(9, 0.0017, 200, 1).mu;
  const double hi = calibrate_mu(9, 0.017, 200, 1).mu;
  EXPECT_NEAR(hi / lo, std::sqrt(10.0), 0.1 * std::sqrt(10.0));
}

TEST(Ensemble, MonotoneInMuAndClustered) {
  const RandomCrosstalkEnsemble base(9, 1.0, 4);
  const int samples = 500;
  std::vector<Eigen::SelfAdjointEigenSolver<ComplexMatrix>> eig(samples);
  for (int i = 0; i < samples; ++i) eig[i].compute(base.generator(i));
  double prev = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double mu = k / 20.0;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double v = crosstalk_stats(unitary_exponential(eig[i], mu)).avg_offdiag;
      sum += v;
      sq += v * v;
    }
    const double mean = sum / samples;
    EXPECT_GT(mean, prev) << "mu=" << mu;
    prev = mean;
    if (k > 0) {
      const double sd = std::sqrt((sq - samples * mean * mean) / (samples - 1));
      EXPECT_LT(sd / mean, 0.3) << "mu=" << mu;
    }
  }
}
