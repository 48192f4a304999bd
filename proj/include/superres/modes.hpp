#pragma once

// Hermite-Gauss mode overlaps and ideal demultiplexing probabilities.
//
// Units: the beam width w is 1. Separations enter only through the
// dimensionless half-separation x = d / (2w), so a source at +r0 sits at
// x * (cos theta, sin theta).

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "superres/error.hpp"
#include "superres/quadrature.hpp"

namespace superres {

/// Smallest x at which probability derivatives are evaluated directly.
inline constexpr double kXFloor = 1e-8;

struct SceneParams {
  double x = 0.0;          // d / (2w)
  double theta = 0.0;      // tilt angle, radians in [0, 2 pi)
  double n_photons = 1.0;  // total photon number N

  /// Validated scene; theta is wrapped into [0, 2 pi).
  static SceneParams make(double x, double theta, double n_photons = 1.0) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("scene: x must be finite and >= 0");
    if (!(n_photons > 0.0) || !std::isfinite(n_photons)) throw ConfigError("scene: n_photons must be > 0");
    if (!std::isfinite(theta)) throw ConfigError("scene: theta must be finite");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double t = std::fmod(theta, two_pi);
    if (t < 0.0) t += two_pi;
    if (t >= two_pi) t = 0.0;
    return SceneParams{x, t, n_photons};
  }

  SceneParams with_x(double new_x) const { return make(new_x, theta, n_photons); }
};

/// Square set of Hermite-Gauss indices 0 <= n, m <= q_crosstalk, flattened
/// row-major in (n, m). The measured subset is 0 <= n, m <= q_measured.
class ModeGrid {
 public:
  ModeGrid(int q_crosstalk, int q_measured) : q_crosstalk_(q_crosstalk), q_measured_(q_measured) {
    if (q_measured < 0 || q_measured > q_crosstalk)
      throw ConfigError("mode grid: need 0 <= q_measured <= q_crosstalk");
  }

  /// Grid whose crosstalk space has dimension `dim`, which must be a perfect square.
  static ModeGrid for_dimension(int dim, int q_measured) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
    if (dim < 1 || side * side != dim)
      throw ConfigError("mode grid: dimension " + std::to_string(dim) + " is not a perfect square");
    return ModeGrid(side - 1, q_measured);
  }

  int q_crosstalk() const { return q_crosstalk_; }
  int q_measured() const { return q_measured_; }
  int side() const { return q_crosstalk_ + 1; }
  int dim() const { return side() * side(); }

  int flat(int n, int m) const {
    if (n < 0 || m < 0 || n > q_crosstalk_ || m > q_crosstalk_) throw ConfigError("mode grid: index out of range");
    return n * side() + m;
  }
  std::pair<int, int> mode(int flat_index) const {
    if (flat_index < 0 || flat_index >= dim()) throw ConfigError("mode grid: flat index out of range");
    return {flat_index / side(), flat_index % side()};
  }
  bool measured(int flat_index) const {
    const auto [n, m] = mode(flat_index);
    return n <= q_measured_ && m <= q_measured_;
  }
  int measured_count() const { return (q_measured_ + 1) * (q_measured_ + 1); }
  std::vector<int> measured_indices() const {
    std::vector<int> out;
    out.reserve(measured_count());
    for (int n = 0; n <= q_measured_; ++n)
      for (int m = 0; m <= q_measured_; ++m) out.push_back(flat(n, m));
    return out;
  }

  bool operator==(const ModeGrid&) const = default;

 private:
  int q_crosstalk_;
  int q_measured_;
};

/// Detection probabilities p(k | x, theta) and dp/dx over the full crosstalk
/// space (flat index of `grid`). Fisher sums restrict to measured modes.
struct ProbabilityModel {
  ModeGrid grid;
  SceneParams scene;
  std::vector<double> probs;
  std::vector<double> dprobs;

  double total() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
  }
  double total_derivative() const {
    double s = 0.0;
    for (double d : dprobs) s += d;
    return s;
  }
};

namespace detail {

// log(base^k) with 0^0 = 1 and log(0) = -inf.
inline double log_power(double base, int k) {
  if (k == 0) return 0.0;
  if (base == 0.0) return -std::numeric_limits<double>::infinity();
  return k * std::log(std::abs(base));
}

inline double power_sign(double base, int k) { return (base < 0.0 && (k % 2 == 1)) ? -1.0 : 1.0; }

inline double log_angular(int n, int m, double cos_t, double sin_t) {
  return log_power(cos_t, n) + log_power(sin_t, m) - 0.5 * (std::lgamma(n + 1.0) + std::lgamma(m + 1.0));
}

}  // namespace detail

/// Overlap of u_nm with the fundamental mode displaced to x * (cos_t, sin_t):
/// x^(n+m) cos^n sin^m exp(-x^2/2) / sqrt(n! m!), evaluated in log space.
inline double hermite_gauss_overlap(int n, int m, double x, double cos_t, double sin_t) {
  const double log_mag = detail::log_power(x, n + m) + detail::log_angular(n, m, cos_t, sin_t) - 0.5 * x * x;
  return detail::power_sign(cos_t, n) * detail::power_sign(sin_t, m) * detail::power_sign(x, n + m) *
         std::exp(log_mag);
}

inline double hermite_gauss_overlap(int n, int m, const SceneParams& scene) {
  return hermite_gauss_overlap(n, m, scene.x, std::cos(scene.theta), std::sin(scene.theta));
}

/// d/dx of hermite_gauss_overlap: x^(n+m-1) (n+m-x^2) cos^n sin^m exp(-x^2/2) / sqrt(n! m!).
inline double hermite_gauss_overlap_dx(int n, int m, double x, double cos_t, double sin_t) {
  const int k = n + m;
  if (k == 0) return -x * std::exp(-0.5 * x * x);
  const double log_mag = detail::log_power(x, k - 1) + detail::log_angular(n, m, cos_t, sin_t) - 0.5 * x * x;
  return detail::power_sign(cos_t, n) * detail::power_sign(sin_t, m) * detail::power_sign(x, k - 1) * (k - x * x) *
         std::exp(log_mag);
}

/// Normalized Hermite-Gauss mode u_nm(x, y) for w = 1.
inline double hermite_gauss_mode(int n, int m, double x, double y) {
  const double s2 = std::numbers::sqrt2;
  const double log_norm =
      -0.5 * (std::log(0.5 * std::numbers::pi) + (n + m) * std::log(2.0) + std::lgamma(n + 1.0) + std::lgamma(m + 1.0));
  return std::exp(log_norm - (x * x + y * y)) * std::hermite(n, s2 * x) * std::hermite(m, s2 * y);
}

/// Overlap integral of u_nm with the displaced fundamental mode, evaluated by
/// adaptive cubature on the square |x|, |y| <= d/2 + 8w. Test-scale orders only.
inline double overlap_oracle(int n, int m, const SceneParams& scene, double abs_tol = 1e-11) {
  if (n < 0 || m < 0 || n > 6 || m > 6) throw ConfigError("overlap_oracle: orders limited to 0..6");
  const double ax = scene.x * std::cos(scene.theta);
  const double ay = scene.x * std::sin(scene.theta);
  const double half = scene.x + 8.0;
  auto integrand = [&](double x, double y) {
    return hermite_gauss_mode(n, m, x, y) * hermite_gauss_mode(0, 0, x - ax, y - ay);
  };
  quadrature::Options opt;
  opt.abs_tol = abs_tol;
  opt.initial_splits = 8;
  const auto res = quadrature::integrate_2d(integrand, {-half, half, -half, half}, opt);
  if (!res.converged) throw QuadratureError("overlap_oracle did not converge", res.error);
  return res.value;
}

/// p(nm) = beta_nm(r0)^2 and dp/dx = 2 beta beta' over the crosstalk space.
inline ProbabilityModel ideal_probabilities(const ModeGrid& grid, const SceneParams& scene) {
  if (scene.x < kXFloor) throw ConfigError("ideal_probabilities: x below x_floor");
  const double c = std::cos(scene.theta), s = std::sin(scene.theta);
  ProbabilityModel model{grid, scene, std::vector<double>(grid.dim()), std::vector<double>(grid.dim())};
  for (int k = 0; k < grid.dim(); ++k) {
    const auto [n, m] = grid.mode(k);
    const double b = hermite_gauss_overlap(n, m, scene.x, c, s);
    const double db = hermite_gauss_overlap_dx(n, m, scene.x, c, s);
    model.probs[k] = b * b;
    model.dprobs[k] = 2.0 * b * db;
  }
  return model;
}

}  // namespace superres
