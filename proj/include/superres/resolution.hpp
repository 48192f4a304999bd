#pragma once

// Signal-to-noise ratio SNR = d sqrt(N F) = 2x sqrt(N w^2F) and the
// minimal resolvable distance, its smallest root SNR = 1.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "superres/error.hpp"
#include "superres/fisher.hpp"

namespace superres {

inline double snr(double x, double n_photons, double w2F) {
  if (n_photons <= 0.0 || w2F <= 0.0 || x <= 0.0) return 0.0;
  return 2.0 * x * std::sqrt(n_photons * w2F);
}

inline double snr(double x, const SceneParams& scene, const FisherValue& f) { return snr(x, scene.n_photons, f.w2F); }

enum class ResolutionMethod { root_solve, analytic_ideal, analytic_uniform, analytic_direct_imaging };

inline const char* to_string(ResolutionMethod m) {
  switch (m) {
    case ResolutionMethod::root_solve: return "root_solve";
    case ResolutionMethod::analytic_ideal: return "analytic_ideal";
    case ResolutionMethod::analytic_uniform: return "analytic_uniform";
    case ResolutionMethod::analytic_direct_imaging: return "analytic_direct_imaging";
  }
  return "unknown";
}

enum class ResolutionStatus {
  resolved,
  unresolvable,  // SNR < 1 on the whole scan range
  below_range,   // SNR >= 1 already at the lowest scanned x
};

inline const char* to_string(ResolutionStatus s) {
  switch (s) {
    case ResolutionStatus::resolved: return "ok";
    case ResolutionStatus::unresolvable: return "unresolvable";
    case ResolutionStatus::below_range: return "below_range";
  }
  return "unknown";
}

struct ResolutionResult {
  double dmin_over_2w = std::nan("");
  double n_photons = 0.0;
  ResolutionMethod method = ResolutionMethod::root_solve;
  ResolutionStatus status = ResolutionStatus::resolved;
  std::pair<double, double> bracket{0.0, 0.0};
  int sign_changes = 0;  // upward crossings found by the scan; only the first is solved

  double dmin_over_w() const { return 2.0 * dmin_over_2w; }
  bool resolved() const { return status == ResolutionStatus::resolved; }
};

struct RootScanOptions {
  double x_min = 1e-6;
  double x_max = 5.0;
  int points = 400;
  double snr_tol = 1e-9;
};

/// Maps x to w^2 F.
using FisherCurve = std::function<double(double)>;

/// Smallest x with SNR(x) = 1. A log-spaced scan brackets the first upward
/// crossing of SNR - 1, which is then bisected until |SNR - 1| < snr_tol.
inline ResolutionResult minimal_resolvable_distance(const FisherCurve& curve, double n_photons,
                                                    const RootScanOptions& opt = {}) {
  if (!(n_photons > 0.0)) throw ConfigError("minimal_resolvable_distance: N must be > 0");
  if (!(opt.x_min > 0.0) || !(opt.x_max > opt.x_min) || opt.points < 2)
    throw ConfigError("minimal_resolvable_distance: invalid scan range");
  auto g = [&](double x) { return snr(x, n_photons, curve(x)) - 1.0; };

  ResolutionResult res;
  res.n_photons = n_photons;
  const double log_lo = std::log(opt.x_min), step = (std::log(opt.x_max) - log_lo) / (opt.points - 1);
  double prev_x = opt.x_min, prev_g = g(prev_x);
  if (prev_g >= 0.0) {
    res.status = ResolutionStatus::below_range;
    res.bracket = {0.0, opt.x_min};
    return res;
  }
  bool found = false;
  double lo = 0.0, hi = 0.0, g_hi = 0.0;
  for (int i = 1; i < opt.points; ++i) {
    const double x = (i + 1 == opt.points) ? opt.x_max : std::exp(log_lo + i * step);
    const double gx = g(x);
    if (prev_g < 0.0 && gx >= 0.0) {
      ++res.sign_changes;
      if (!found) {
        found = true;
        lo = prev_x;
        hi = x;
        g_hi = gx;
      }
    }
    prev_x = x;
    prev_g = gx;
  }
  if (!found) {
    res.status = ResolutionStatus::unresolvable;
    res.bracket = {opt.x_min, opt.x_max};
    return res;
  }

  double mid = hi, g_mid = g_hi;
  while (std::abs(g_mid) >= opt.snr_tol) {
    mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // one ulp
    g_mid = g(mid);
    (g_mid < 0.0 ? lo : hi) = mid;
  }
  if (std::abs(g_mid) >= opt.snr_tol) {
    // Bracket collapsed to adjacent doubles; take the side nearer to the root.
    mid = std::abs(g(lo)) < std::abs(g(hi)) ? lo : hi;
  }
  res.dmin_over_2w = mid;
  res.bracket = {lo, hi};
  return res;
}

namespace detail {
inline ResolutionResult analytic(double dmin_over_2w, double n, ResolutionMethod m) {
  ResolutionResult r;
  r.dmin_over_2w = dmin_over_2w;
  r.n_photons = n;
  r.method = m;
  r.bracket = {dmin_over_2w, dmin_over_2w};
  return r;
}
inline void require_positive_n(double n) {
  if (!(n > 0.0)) throw ConfigError("d_min: N must be > 0");
}
}  // namespace detail

/// Shot-noise limit d_min = w / sqrt(N).
inline ResolutionResult dmin_ideal(double n_photons) {
  detail::require_positive_n(n_photons);
  return detail::analytic(0.5 / std::sqrt(n_photons), n_photons, ResolutionMethod::analytic_ideal);
}

/// Uniform crosstalk, large N:
/// d_min = w N^(-1/4) sqrt(2|r| / (1 - P_scat)) (4 / (3 + cos 4 theta))^(1/4).
inline ResolutionResult dmin_uniform(double n_photons, double r_magnitude, double p_scat, double theta) {
  detail::require_positive_n(n_photons);
  if (!(r_magnitude > 0.0)) throw ConfigError("dmin_uniform: |r| must be > 0");
  if (!(p_scat >= 0.0 && p_scat < 1.0)) throw ConfigError("dmin_uniform: P_scat must lie in [0, 1)");
  const double dmin_over_w = std::pow(n_photons, -0.25) * std::sqrt(2.0 * r_magnitude / (1.0 - p_scat)) *
                             std::pow(4.0 / (3.0 + std::cos(4.0 * theta)), 0.25);
  return detail::analytic(0.5 * dmin_over_w, n_photons, ResolutionMethod::analytic_uniform);
}

/// Ideal direct imaging, large N: d_min = w N^(-1/4) (1/2)^(1/4).
inline ResolutionResult dmin_direct_imaging(double n_photons) {
  detail::require_positive_n(n_photons);
  return detail::analytic(0.5 * std::pow(n_photons, -0.25) * std::pow(0.5, 0.25), n_photons,
                          ResolutionMethod::analytic_direct_imaging);
}

/// Uniform demultiplexing beats ideal direct imaging iff |r|^2 / (1 - P_scat)^2 < 1/8.
inline bool demux_beats_direct_imaging(double r2, double p_scat) {
  return r2 / ((1.0 - p_scat) * (1.0 - p_scat)) < 0.125;
}

struct ScalingFit {
  double exponent = 0.0;   // slope of log d_min against log N
  double intercept = 0.0;  // log d_min at N = 1
  std::pair<double, double> n_range{0.0, 0.0};
  double residual = 0.0;   // rms residual in log d_min
  int points = 0;
};

struct ScalingFitOptions {
  int min_points = 5;
  double min_decades = 2.0;
};

/// Least-squares fit of log d_min = intercept + exponent log N.
inline ScalingFit scaling_exponent(const std::vector<std::pair<double, double>>& points,
                                   const ScalingFitOptions& opt = {}) {
  if (static_cast<int>(points.size()) < opt.min_points)
    throw ConfigError("scaling_exponent: need at least " + std::to_string(opt.min_points) + " points");
  double n_lo = points.front().first, n_hi = n_lo;
  for (auto [n, d] : points) {
    if (!(n > 0.0) || !(d > 0.0)) throw ConfigError("scaling_exponent: N and d_min must be positive");
    n_lo = std::min(n_lo, n);
    n_hi = std::max(n_hi, n);
  }
  if (std::log10(n_hi / n_lo) < opt.min_decades * (1.0 - 1e-12))
    throw ConfigError("scaling_exponent: N range spans fewer than the required decades");
  const double k = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [n, d] : points) {
    const double lx = std::log(n), ly = std::log(d);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  ScalingFit fit;
  fit.exponent = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  fit.intercept = (sy - fit.exponent * sx) / k;
  double ss = 0.0;
  for (auto [n, d] : points) {
    const double e = std::log(d) - (fit.intercept + fit.exponent * std::log(n));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / k);
  fit.n_range = {n_lo, n_hi};
  fit.points = static_cast<int>(points.size());
  return fit;
}

/// Log-spaced grid of `count` values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw ConfigError("log_grid: need 0 < lo <= hi and count >= 1");
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = lo;
    return v;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) v[i] = (i + 1 == count) ? hi : std::exp(a + (b - a) * i / (count - 1));
  v[0] = lo;
  return v;
}

/// Local slopes from sliding windows spanning `window_decades` of N, stepped by `step_decades`.
inline std::vector<ScalingFit> local_slopes(const FisherCurve& curve, double n_lo, double n_hi, double window_decades,
                                            double step_decades, int points_per_window = 7,
                                            const RootScanOptions& scan = {}) {
  std::vector<ScalingFit> out;
  for (double start = std::log10(n_lo); start + window_decades <= std::log10(n_hi) + 1e-9; start += step_decades) {
    std::vector<std::pair<double, double>> pts;
    for (double n : log_grid(std::pow(10.0, start), std::pow(10.0, start + window_decades), points_per_window)) {
      const auto r = minimal_resolvable_distance(curve, n, scan);
      if (!r.resolved()) throw NumericalError("local_slopes: d_min not resolved at N=" + std::to_string(n));
      pts.emplace_back(n, r.dmin_over_2w);
    }
    out.push_back(scaling_exponent(pts, ScalingFitOptions{points_per_window, window_decades}));
  }
  return out;
}

}  // namespace superres
