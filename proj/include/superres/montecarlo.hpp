#pragma once

// Poisson photon-count simulation and maximum-likelihood estimation of the
// separation with theta, N and the crosstalk matrix known.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "superres/crosstalk.hpp"
#include "superres/error.hpp"
#include "superres/fisher.hpp"
#include "superres/modes.hpp"
#include "superres/parallel.hpp"
#include "superres/resolution.hpp"
#include "superres/rng.hpp"

namespace superres {

/// Probability model as a function of the scene, for likelihood evaluation.
using ProbabilityFactory = std::function<ProbabilityModel(const SceneParams&)>;

inline ProbabilityFactory ideal_factory(ModeGrid grid) {
  return [grid](const SceneParams& s) { return ideal_probabilities(grid, s); };
}

inline ProbabilityFactory demux_factory(CrosstalkMatrix c, ModeGrid grid) {
  if (c.dim() != grid.dim()) throw ConfigError("demux_factory: matrix and grid dimensions differ");
  return [c = std::move(c), grid](const SceneParams& s) { return demux_probabilities(c, grid, s); };
}

/// w^2 F as a function of x, clamping x to x_floor (the x -> 0 limit).
inline FisherCurve fisher_curve(ProbabilityFactory factory, SceneParams scene) {
  return [factory = std::move(factory), scene](double x) {
    return fisher_exact(factory(scene.with_x(std::max(x, kXFloor)))).w2F;
  };
}

struct CountRecord {
  std::vector<long long> counts;  // one per measured mode, in measured_indices order
  std::vector<int> modes;         // flat indices of the measured modes
  SceneParams scene;
  std::string descriptor;
};

inline CountRecord simulate_counts(const ProbabilityModel& model, double n_photons, Engine& engine,
                                   std::string descriptor = {}) {
  if (!(n_photons > 0.0)) throw ConfigError("simulate_counts: N must be > 0");
  CountRecord rec;
  rec.modes = model.grid.measured_indices();
  rec.scene = model.scene;
  rec.descriptor = std::move(descriptor);
  rec.counts.reserve(rec.modes.size());
  for (int k : rec.modes) {
    const double mean = n_photons * model.probs[k];
    if (mean <= 0.0) {
      rec.counts.push_back(0);
      continue;
    }
    std::poisson_distribution<long long> poisson(mean);
    rec.counts.push_back(poisson(engine));
  }
  return rec;
}

/// Poisson log-likelihood sum_k (n_k log N_k - N_k), dropping log n_k!.
inline double log_likelihood(const CountRecord& rec, const ProbabilityModel& model) {
  const double n = rec.scene.n_photons;
  double ll = 0.0;
  for (std::size_t i = 0; i < rec.modes.size(); ++i) {
    const double mean = n * model.probs[rec.modes[i]];
    const auto count = rec.counts[i];
    if (mean <= 0.0) {
      if (count > 0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    ll += static_cast<double>(count) * std::log(mean) - mean;
  }
  return ll;
}

struct SearchInterval {
  double lo = kXFloor;
  double hi = 3.0;
};

struct MleOptions {
  int scan_points = 64;
  double x_tol = 1e-7;
};

struct MleResult {
  double x_hat = 0.0;
  double log_likelihood = 0.0;
  bool on_boundary = false;
};

namespace detail {

// Brent's golden-section / parabolic minimization of f on [a, b].
template <class F>
double brent_minimize(F&& f, double a, double b, double tol) {
  constexpr double golden = 0.3819660112501051;
  double x = a + golden * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol + 1e-12 * std::abs(x), tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool golden_step = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (x < m) ? tol1 : -tol1;
        golden_step = false;
      }
    }
    if (golden_step) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      (u < x ? b : a) = x;
      v = w, fv = fw;
      w = x, fw = fx;
      x = u, fx = fu;
    } else {
      (u < x ? a : b) = u;
      if (fu <= fw || w == x) {
        v = w, fv = fw;
        w = u, fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u, fv = fu;
      }
    }
  }
  return x;
}

}  // namespace detail

/// Maximizes the likelihood over x in `search`: a log-spaced scan locates the
/// best cell, then Brent refinement within its neighbours to `x_tol`.
inline MleResult mle_estimate(const CountRecord& rec, const ProbabilityFactory& factory, SearchInterval search = {},
                              const MleOptions& opt = {}) {
  if (!(search.lo >= kXFloor) || !(search.hi > search.lo)) throw ConfigError("mle_estimate: invalid search interval");
  bool any = false;
  for (auto c : rec.counts) any = any || c > 0;
  if (!any) throw NumericalError("mle_estimate: all counts are zero, estimator undefined");

  auto ll = [&](double x) { return log_likelihood(rec, factory(rec.scene.with_x(x))); };
  const auto grid = log_grid(search.lo, search.hi, std::max(opt.scan_points, 3));
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = ll(grid[i]);
    if (v > best_ll) {
      best_ll = v;
      best = i;
    }
  }
  if (!std::isfinite(best_ll)) throw NumericalError("mle_estimate: likelihood is zero over the search interval");
  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min(best + 1, grid.size() - 1)];
  double x_hat = detail::brent_minimize([&](double x) { return -ll(x); }, a, b, opt.x_tol);
  double v = ll(x_hat);
  if (v < best_ll) {
    x_hat = grid[best];
    v = best_ll;
  }
  const bool boundary = (x_hat - search.lo) <= 2.0 * opt.x_tol || (search.hi - x_hat) <= 2.0 * opt.x_tol;
  return MleResult{x_hat, v, boundary};
}

struct CrbConfig {
  SceneParams scene;  // true x*, theta, N
  ProbabilityFactory factory;
  std::string descriptor;
  int trials = 1000;
  std::uint64_t seed = 1;
  SearchInterval search{};
  MleOptions mle{};
  int null_trials = -1;  // d = 0 datasets for the false-resolution rate; -1 means `trials`
  unsigned threads = 1;
};

struct TrialFailure {
  int trial;
  std::string message;
};

struct EstimationReport {
  int trials = 0;
  int succeeded = 0;
  int boundary_hits = 0;
  double x_true = 0.0;
  double mean = 0.0;  // of x_hat = d_hat / (2w)
  double std = 0.0;
  double bias = 0.0;
  double w2F = 0.0;      // at the true separation
  double crb_std = 0.0;  // 1 / (2 sqrt(N w^2F)), the CRB on x_hat
  double ratio = 0.0;    // std / crb_std
  double ratio_stderr = 0.0;
  double dmin_over_2w = std::nan("");
  int null_trials = 0;
  double null_false_resolution = std::nan("");  // fraction of d = 0 datasets with x_hat >= d_min/2w
  std::vector<double> estimates;                // per trial; NaN where the estimator failed
  std::vector<TrialFailure> failures;
};

/// Repeated simulate/estimate at the true scene, compared against 1/sqrt(N F).
inline EstimationReport crb_experiment(const CrbConfig& cfg) {
  if (cfg.trials < 2) throw ConfigError("crb_experiment: need at least 2 trials");
  if (!cfg.factory) throw ConfigError("crb_experiment: no probability model");
  const ProbabilityModel truth = cfg.factory(cfg.scene);
  const double n = cfg.scene.n_photons;

  EstimationReport rep;
  rep.trials = cfg.trials;
  rep.x_true = cfg.scene.x;
  rep.w2F = fisher_exact(truth).w2F;
  rep.crb_std = rep.w2F > 0.0 ? 0.5 / std::sqrt(n * rep.w2F) : std::numeric_limits<double>::infinity();

  std::vector<double> est(cfg.trials, std::nan(""));
  std::vector<char> boundary(cfg.trials, 0);
  std::vector<std::string> errors(cfg.trials);
  parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t t) {
    Engine engine = make_stream(cfg.seed, StreamDomain::counts, t);
    const auto rec = simulate_counts(truth, n, engine, cfg.descriptor);
    try {
      const auto r = mle_estimate(rec, cfg.factory, cfg.search, cfg.mle);
      est[t] = r.x_hat;
      boundary[t] = r.on_boundary;
    } catch (const NumericalError& e) {
      errors[t] = e.what();
    }
  });

  double sum = 0.0;
  for (int t = 0; t < cfg.trials; ++t) {
    if (!errors[t].empty()) {
      rep.failures.push_back({t, errors[t]});
      continue;
    }
    ++rep.succeeded;
    rep.boundary_hits += boundary[t];
    sum += est[t];
  }
  if (rep.succeeded < 2) throw NumericalError("crb_experiment: fewer than two successful trials");
  rep.mean = sum / rep.succeeded;
  double ss = 0.0;
  for (int t = 0; t < cfg.trials; ++t)
    if (errors[t].empty()) ss += (est[t] - rep.mean) * (est[t] - rep.mean);
  rep.std = std::sqrt(ss / (rep.succeeded - 1));
  rep.bias = rep.mean - rep.x_true;
  rep.ratio = rep.std / rep.crb_std;
  rep.ratio_stderr = rep.ratio / std::sqrt(2.0 * (rep.succeeded - 1));
  rep.estimates = std::move(est);

  rep.null_trials = cfg.null_trials < 0 ? cfg.trials : cfg.null_trials;
  if (rep.null_trials > 0) {
    const auto dmin = minimal_resolvable_distance(fisher_curve(cfg.factory, cfg.scene), n);
    rep.dmin_over_2w = dmin.dmin_over_2w;
    if (dmin.resolved()) {
      const ProbabilityModel null_model = cfg.factory(cfg.scene.with_x(kXFloor));
      std::vector<int> hit(rep.null_trials, -1);
      parallel_for(static_cast<std::size_t>(rep.null_trials), cfg.threads, [&](std::size_t t) {
        Engine engine = make_stream(cfg.seed, StreamDomain::null_counts, t);
        const auto rec = simulate_counts(null_model, n, engine, cfg.descriptor);
        try {
          hit[t] = mle_estimate(rec, cfg.factory, cfg.search, cfg.mle).x_hat >= dmin.dmin_over_2w ? 1 : 0;
        } catch (const NumericalError&) {
        }
      });
      int valid = 0, hits = 0;
      for (int h : hit)
        if (h >= 0) {
          ++valid;
          hits += h;
        }
      if (valid > 0) rep.null_false_resolution = static_cast<double>(hits) / valid;
    }
  }
  return rep;
}

}  // namespace superres
