#pragma once

// Command-line front end: fisher-curve, dmin, audit-matrix, mle-verify,
// calibrate-mu. Every artifact embeds the RunConfig that produced it, and
// `--config <file>` replays a config from a JSON file or an earlier output.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "superres/superres.hpp"

namespace superres::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3 };

struct RunConfig {
  std::string command;
  std::string model = "ideal";  // ideal | uniform | random | file
  int dim = 9;
  int q_measured = 1;
  std::string r2 = "0.0017";  // real or grid
  double r_phase = 0.0;
  bool unitarize = false;
  std::string target_offdiag;  // real or grid; random model
  std::optional<double> mu;    // random model, overrides calibration
  double theta = 0.0;
  int samples = 500;
  std::string x_grid = "1e-4:2.5:200:log";
  std::string n_photons = "1e4";  // real or grid
  double x_true = 0.1;
  int trials = 1000;
  int null_trials = 200;
  std::uint64_t seed = 1;
  std::string format = "csv";
  std::string matrix;  // model=file and audit-matrix
  bool direct_imaging = false;
};

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"command", c.command},
           {"model", c.model},
           {"dim", c.dim},
           {"q_measured", c.q_measured},
           {"r2", c.r2},
           {"r_phase", c.r_phase},
           {"unitarize", c.unitarize},
           {"target_offdiag", c.target_offdiag},
           {"mu", c.mu ? json(*c.mu) : json(nullptr)},
           {"theta", c.theta},
           {"samples", c.samples},
           {"x_grid", c.x_grid},
           {"n_photons", c.n_photons},
           {"x_true", c.x_true},
           {"trials", c.trials},
           {"null_trials", c.null_trials},
           {"seed", c.seed},
           {"format", c.format},
           {"matrix", c.matrix},
           {"direct_imaging", c.direct_imaging}};
}

inline void from_json(const json& j, RunConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("command", c.command);
  get("model", c.model);
  get("dim", c.dim);
  get("q_measured", c.q_measured);
  get("r2", c.r2);
  get("r_phase", c.r_phase);
  get("unitarize", c.unitarize);
  get("target_offdiag", c.target_offdiag);
  if (j.contains("mu")) {
    if (j.at("mu").is_null())
      c.mu.reset();
    else
      c.mu = j.at("mu").get<double>();
  }
  get("theta", c.theta);
  get("samples", c.samples);
  get("x_grid", c.x_grid);
  get("n_photons", c.n_photons);
  get("x_true", c.x_true);
  get("trials", c.trials);
  get("null_trials", c.null_trials);
  get("seed", c.seed);
  get("format", c.format);
  get("matrix", c.matrix);
  get("direct_imaging", c.direct_imaging);
}

/// Reads a config from a JSON file or from the "# config:" header line of a
/// CSV artifact (or the "config" member of a JSON artifact).
inline RunConfig read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    if (!text.empty() && text.front() == '#') {
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        constexpr std::string_view tag = "# config: ";
        if (line.rfind(tag, 0) == 0) {
          j = json::parse(line.substr(tag.size()));
          break;
        }
      }
      if (j.is_null()) throw ConfigError("no '# config:' line in " + path);
    } else {
      j = json::parse(text);
      if (j.contains("config")) j = j.at("config");
    }
    return j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid config in " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Value grids: "v", "a,b,c", or "min:max:steps:log|lin".

inline double parse_real(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v)) throw ConfigError("not a finite number: '" + s + "'");
  return v;
}

inline std::vector<double> parse_grid(const std::string& spec) {
  if (spec.empty()) throw ConfigError("empty grid specification");
  std::vector<std::string> parts;
  const char sep = spec.find(':') != std::string::npos ? ':' : ',';
  std::stringstream in(spec);
  for (std::string p; std::getline(in, p, sep);) parts.push_back(p);
  if (sep == ',') {
    std::vector<double> v;
    for (const auto& p : parts) v.push_back(parse_real(p));
    return v;
  }
  if (parts.size() != 4) throw ConfigError("grid must be min:max:steps:log|lin, got '" + spec + "'");
  const double lo = parse_real(parts[0]), hi = parse_real(parts[1]);
  const double steps_d = parse_real(parts[2]);
  const int steps = static_cast<int>(steps_d);
  if (steps < 1 || steps != steps_d) throw ConfigError("grid steps must be a positive integer");
  if (hi < lo) throw ConfigError("grid max must be >= min");
  if (parts[3] == "log") return log_grid(lo, hi, steps);
  if (parts[3] != "lin") throw ConfigError("grid spacing must be 'log' or 'lin'");
  std::vector<double> v(steps);
  for (int i = 0; i < steps; ++i) v[i] = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
  if (steps > 1) v.back() = hi;
  return v;
}

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Tabular output shared by fisher-curve and dmin.

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline std::string header_config_line(const RunConfig& cfg) { return json(cfg).dump(); }

inline std::string render(const Table& t, const RunConfig& cfg) {
  std::string out;
  if (cfg.format == "json") {
    json rows = json::array();
    for (const auto& r : t.rows) {
      json row = json::array();
      for (const auto& c : r) {
        if (auto d = std::get_if<double>(&c))
          row.push_back(num(*d));
        else if (auto i = std::get_if<long long>(&c))
          row.push_back(*i);
        else
          row.push_back(std::get<std::string>(c));
      }
      rows.push_back(std::move(row));
    }
    json j{{"tool", "superres"}, {"version", kVersion}, {"config", cfg}, {"columns", t.columns}, {"rows", rows}};
    return j.dump(2) + "\n";
  }
  out += std::string("# superres ") + kVersion + "\n";
  out += "# config: " + header_config_line(cfg) + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ",";
      if (auto d = std::get_if<double>(&r[i]))
        out += fmt17(*d);
      else if (auto n = std::get_if<long long>(&r[i]))
        out += std::to_string(*n);
      else
        out += std::get<std::string>(r[i]);
    }
    out += "\n";
  }
  return out;
}

inline json json_document(const RunConfig& cfg) {
  return json{{"tool", "superres"}, {"version", kVersion}, {"config", cfg}};
}

// ---------------------------------------------------------------------------
// Model construction.

/// One crosstalk configuration: a list of matrices (one unless random) on a grid.
struct ModelSet {
  ModeGrid grid{0, 0};
  std::vector<CrosstalkMatrix> matrices;  // empty for ideal
  std::string descriptor;
  double r2_equivalent = 0.0;  // |r|^2 or ensemble avg_offdiag
  double p_scat = 0.0;
};

inline void validate_common(const RunConfig& cfg) {
  if (cfg.format != "csv" && cfg.format != "json") throw ConfigError("--format must be csv or json");
  if (cfg.q_measured < 0) throw ConfigError("--q-measured must be >= 0");
  if (cfg.model != "ideal" && cfg.model != "uniform" && cfg.model != "random" && cfg.model != "file")
    throw ConfigError("--model must be ideal, uniform, random or file");
  if (cfg.samples < 1) throw ConfigError("--samples must be >= 1");
}

inline double resolve_mu(const RunConfig& cfg, double target, unsigned threads, double* achieved = nullptr) {
  if (cfg.mu) {
    if (!(*cfg.mu >= 0.0)) throw ConfigError("--mu must be >= 0");
    return *cfg.mu;
  }
  const auto cal = calibrate_mu(cfg.dim, target, cfg.samples, cfg.seed, threads);
  if (achieved) *achieved = cal.achieved_avg_offdiag;
  return cal.mu;
}

/// `crosstalk` is |r|^2 (uniform) or the off-diagonal target (random); unused otherwise.
inline ModelSet build_models(const RunConfig& cfg, double crosstalk, unsigned threads) {
  ModelSet set;
  char buf[200];
  if (cfg.model == "ideal") {
    set.grid = ModeGrid(cfg.q_measured, cfg.q_measured);
    set.descriptor = "ideal";
    return set;
  }
  if (cfg.model == "file") {
    if (cfg.matrix.empty()) throw ConfigError("--model file requires --matrix <path>");
    auto c = load_matrix(cfg.matrix);
    if (cfg.unitarize) c = nearest_unitary(c);
    set.grid = ModeGrid::for_dimension(c.dim(), cfg.q_measured);
    const auto st = crosstalk_stats(c);
    set.r2_equivalent = st.avg_offdiag;
    set.p_scat = 1.0 - st.avg_diag;
    set.descriptor = c.description();
    set.matrices.push_back(std::move(c));
    return set;
  }
  set.grid = ModeGrid::for_dimension(cfg.dim, cfg.q_measured);
  if (cfg.model == "uniform") {
    if (!(crosstalk >= 0.0)) throw ConfigError("--r2 must be >= 0");
    auto c = uniform_crosstalk(cfg.dim, std::sqrt(crosstalk), cfg.r_phase);
    if (cfg.unitarize) c = nearest_unitary(c);
    set.r2_equivalent = crosstalk;
    set.p_scat = scattering_probability(cfg.dim, std::sqrt(crosstalk));
    std::snprintf(buf, sizeof buf, "uniform(D=%d;r2=%.17g;phase=%.17g%s)", cfg.dim, crosstalk, cfg.r_phase,
                  cfg.unitarize ? ";unitarized" : "");
    set.descriptor = buf;
    set.matrices.push_back(std::move(c));
    return set;
  }
  // random
  if (!cfg.mu && !(crosstalk >= 0.0)) throw ConfigError("--model random requires --mu or --target-offdiag");
  double achieved = std::nan("");
  const double mu = resolve_mu(cfg, crosstalk, threads, &achieved);
  const RandomCrosstalkEnsemble ens(cfg.dim, mu, cfg.seed);
  set.matrices.resize(cfg.samples);
  parallel_for(static_cast<std::size_t>(cfg.samples), threads, [&](std::size_t i) {
    set.matrices[i] = ens.sample(i);
    if (cfg.unitarize) set.matrices[i] = nearest_unitary(set.matrices[i]);
  });
  double mean = 0.0;
  for (const auto& c : set.matrices) mean += crosstalk_stats(c).avg_offdiag;
  mean /= cfg.samples;
  set.r2_equivalent = mean;
  set.p_scat = (cfg.dim - 1) * mean;
  std::snprintf(buf, sizeof buf, "random(D=%d;mu=%.17g;seed=%llu;samples=%d)", cfg.dim, mu,
                static_cast<unsigned long long>(cfg.seed), cfg.samples);
  set.descriptor = buf;
  return set;
}

inline ProbabilityFactory factory_for(const ModelSet& set, std::size_t sample) {
  if (set.matrices.empty()) return ideal_factory(set.grid);
  return demux_factory(set.matrices.at(sample), set.grid);
}

inline std::vector<double> crosstalk_levels(const RunConfig& cfg) {
  if (cfg.model == "uniform") return parse_grid(cfg.r2);
  if (cfg.model == "random") {
    if (!cfg.target_offdiag.empty()) return parse_grid(cfg.target_offdiag);
    if (cfg.mu) return {std::nan("")};
    throw ConfigError("--model random requires --mu or --target-offdiag");
  }
  return {std::nan("")};
}

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

// ---------------------------------------------------------------------------
// Commands. Each returns the artifact text.

inline std::string cmd_fisher_curve(const RunConfig& cfg, unsigned threads) {
  validate_common(cfg);
  const auto xs = parse_grid(cfg.x_grid);
  for (double x : xs)
    if (!(x >= 0.0)) throw ConfigError("--x-grid values must be >= 0");
  const auto scene0 = SceneParams::make(kXFloor, cfg.theta, 1.0);

  Table t;
  t.columns = {"x", "theta", "q_measured", "mean_w2F", "std_w2F", "mean_sqrt_w2F", "std_sqrt_w2F", "n_samples",
               "model"};
  if (cfg.direct_imaging) t.columns.push_back("direct_imaging_w2F");

  std::vector<double> di;
  if (cfg.direct_imaging) {
    di.resize(xs.size());
    parallel_for(xs.size(), threads, [&](std::size_t i) { di[i] = fisher_direct_imaging(xs[i], cfg.theta).w2F; });
  }

  for (double level : crosstalk_levels(cfg)) {
    const auto set = build_models(cfg, level, threads);
    const std::size_t n_samples = std::max<std::size_t>(1, set.matrices.size());
    std::vector<std::vector<double>> values(n_samples, std::vector<double>(xs.size()));
    parallel_for(n_samples, threads, [&](std::size_t s) {
      const auto curve = fisher_curve(factory_for(set, s), scene0);
      for (std::size_t i = 0; i < xs.size(); ++i) values[s][i] = curve(xs[i]);
    });
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<double> f(n_samples), rf(n_samples);
      for (std::size_t s = 0; s < n_samples; ++s) {
        f[s] = values[s][i];
        rf[s] = std::sqrt(std::max(0.0, values[s][i]));
      }
      double mf, sf, mr, sr;
      mean_std(f, mf, sf);
      mean_std(rf, mr, sr);
      std::vector<Cell> row{xs[i], cfg.theta, static_cast<long long>(cfg.q_measured), mf, sf, mr, sr,
                            static_cast<long long>(n_samples), set.descriptor};
      if (cfg.direct_imaging) row.emplace_back(di[i]);
      t.rows.push_back(std::move(row));
    }
  }
  return render(t, cfg);
}

inline std::string cmd_dmin(const RunConfig& cfg, unsigned threads) {
  validate_common(cfg);
  const auto ns = parse_grid(cfg.n_photons);
  for (double n : ns)
    if (!(n > 0.0)) throw ConfigError("--n-photons values must be > 0");
  const auto scene0 = SceneParams::make(kXFloor, cfg.theta, 1.0);

  Table t;
  t.columns = {"N",       "r2",           "dmin_over_2w",    "dmin_std", "n_samples", "dmin_analytic",
               "analytic_method", "status", "model"};
  if (cfg.direct_imaging) {
    t.columns.push_back("dmin_di_over_2w");
    t.columns.push_back("dmin_di_analytic");
  }

  std::vector<ResolutionResult> di_root;
  if (cfg.direct_imaging) {
    di_root.resize(ns.size());
    const FisherCurve di_curve = [&](double x) { return fisher_direct_imaging(x, cfg.theta).w2F; };
    parallel_for(ns.size(), threads, [&](std::size_t i) { di_root[i] = minimal_resolvable_distance(di_curve, ns[i]); });
  }

  for (double level : crosstalk_levels(cfg)) {
    const auto set = build_models(cfg, level, threads);
    const std::size_t n_samples = std::max<std::size_t>(1, set.matrices.size());
    std::vector<std::vector<ResolutionResult>> res(n_samples, std::vector<ResolutionResult>(ns.size()));
    parallel_for(n_samples, threads, [&](std::size_t s) {
      const auto curve = fisher_curve(factory_for(set, s), scene0);
      for (std::size_t i = 0; i < ns.size(); ++i) res[s][i] = minimal_resolvable_distance(curve, ns[i]);
    });
    for (std::size_t i = 0; i < ns.size(); ++i) {
      std::vector<double> ok;
      std::string status = "ok";
      for (std::size_t s = 0; s < n_samples; ++s) {
        if (res[s][i].resolved())
          ok.push_back(res[s][i].dmin_over_2w);
        else
          status = to_string(res[s][i].status);
      }
      if (!ok.empty() && ok.size() < n_samples) status = "partial";
      double mean = std::nan(""), sd = std::nan("");
      if (!ok.empty()) mean_std(ok, mean, sd);

      ResolutionResult analytic;
      if (set.r2_equivalent > 0.0)
        analytic = dmin_uniform(ns[i], std::sqrt(set.r2_equivalent), set.p_scat, cfg.theta);
      else
        analytic = dmin_ideal(ns[i]);

      std::vector<Cell> row{ns[i],
                            set.matrices.empty() ? 0.0 : set.r2_equivalent,
                            mean,
                            sd,
                            static_cast<long long>(ok.size()),
                            analytic.dmin_over_2w,
                            std::string(to_string(analytic.method)),
                            status,
                            set.descriptor};
      if (cfg.direct_imaging) {
        row.emplace_back(di_root[i].dmin_over_2w);
        row.emplace_back(dmin_direct_imaging(ns[i]).dmin_over_2w);
      }
      t.rows.push_back(std::move(row));
    }
  }
  return render(t, cfg);
}

inline std::string cmd_audit_matrix(const RunConfig& cfg, unsigned threads) {
  if (cfg.matrix.empty()) throw ConfigError("audit-matrix requires a matrix path");
  if (cfg.q_measured < 0) throw ConfigError("--q-measured must be >= 0");
  auto c = load_matrix(cfg.matrix);
  const auto& origin = std::get<LoadedOrigin>(c.provenance);
  const int d = c.dim();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) throw ConfigError("audit-matrix: dimension " + std::to_string(d) + " is not a perfect square");
  if (cfg.q_measured > side - 1)
    throw ConfigError("audit-matrix: --q-measured " + std::to_string(cfg.q_measured) + " exceeds the matrix grid (Q <= " +
                      std::to_string(side - 1) + ")");
  const ModeGrid grid(side - 1, cfg.q_measured);
  const auto st = crosstalk_stats(c);
  const double r2 = st.avg_offdiag;
  const double p_scat = 1.0 - st.avg_diag;
  const bool ideal_like = r2 == 0.0;

  json doc = json_document(cfg);
  doc["matrix"] = {{"path", origin.path},
                   {"dim", d},
                   {"unitarity_deviation", origin.unitarity_deviation},
                   {"non_unitary", origin.non_unitary}};
  doc["stats"] = {{"avg_diag", st.avg_diag},
                  {"avg_offdiag", st.avg_offdiag},
                  {"closure", st.avg_diag + (d - 1) * st.avg_offdiag}};

  const auto factory = demux_factory(c, grid);
  const auto scene0 = SceneParams::make(kXFloor, cfg.theta, 1.0);
  const auto curve = fisher_curve(factory, scene0);
  constexpr double x_probe = 1e-4;
  const double w2f_probe = curve(x_probe);
  json small{{"x_probe", x_probe}, {"w2F", w2f_probe}, {"coefficient", w2f_probe / (x_probe * x_probe)},
             {"ideal_like", ideal_like}};
  if (grid.q_crosstalk() >= 1) {
    const auto e = generic_entries(c, grid);
    if (std::norm(e.c01_00) > 0.0 && std::norm(e.c10_00) > 0.0)
      small["generic_prediction_coefficient"] = fisher_generic_smalld(e, cfg.theta, 1.0).w2F;
    else
      small["generic_prediction_coefficient"] = nullptr;
  }
  small["uniform_equivalent_coefficient"] =
      ideal_like || !(p_scat < 1.0) ? json(nullptr)
                                    : json((3.0 + std::cos(4.0 * cfg.theta)) / 4.0 * (1.0 - p_scat) * (1.0 - p_scat) / r2);
  doc["small_d"] = small;

  const double ratio = ideal_like ? 0.0 : r2 / ((1.0 - p_scat) * (1.0 - p_scat));
  doc["crossover"] = {{"r2_equivalent", r2},
                      {"p_scat", p_scat},
                      {"ratio", ratio},
                      {"threshold", 0.125},
                      {"demux_beats_direct_imaging", ideal_like || demux_beats_direct_imaging(r2, p_scat)}};

  const auto ns = parse_grid(cfg.n_photons);
  std::vector<ResolutionResult> roots(ns.size());
  parallel_for(ns.size(), threads, [&](std::size_t i) { roots[i] = minimal_resolvable_distance(curve, ns[i]); });
  json table = json::array();
  json crossover_n = nullptr;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double di = dmin_direct_imaging(ns[i]).dmin_over_2w;
    const double uni = ideal_like ? dmin_ideal(ns[i]).dmin_over_2w
                                  : dmin_uniform(ns[i], std::sqrt(r2), std::min(p_scat, 0.999999), cfg.theta).dmin_over_2w;
    table.push_back({{"N", ns[i]},
                     {"dmin_over_2w", num(roots[i].dmin_over_2w)},
                     {"status", to_string(roots[i].status)},
                     {"dmin_uniform_equivalent", uni},
                     {"dmin_direct_imaging", di}});
    if (crossover_n.is_null() && roots[i].resolved() && roots[i].dmin_over_2w > di) crossover_n = ns[i];
  }
  doc["dmin_table"] = table;
  doc["crossover_n_vs_direct_imaging"] = crossover_n;
  return doc.dump(2) + "\n";
}

inline std::string cmd_mle_verify(const RunConfig& cfg, unsigned threads, std::ostream& warn,
                                  const std::string& trials_out = {}) {
  validate_common(cfg);
  if (cfg.trials < 2) throw ConfigError("--trials must be >= 2");
  const auto ns = parse_grid(cfg.n_photons);
  if (ns.size() != 1) throw ConfigError("mle-verify takes a single --n-photons value");
  const auto levels = crosstalk_levels(cfg);
  if (levels.size() != 1) throw ConfigError("mle-verify takes a single crosstalk level");
  const auto set = build_models(cfg, levels.front(), threads);

  json warnings = json::array();
  if (cfg.trials < 100) {
    const std::string w = "trials=" + std::to_string(cfg.trials) + " is below 100; acceptance bands assume >= 100 trials";
    warn << "warning: " << w << "\n";
    warnings.push_back(w);
  }

  CrbConfig crb;
  crb.scene = SceneParams::make(cfg.x_true, cfg.theta, ns.front());
  crb.factory = factory_for(set, 0);
  crb.descriptor = set.matrices.empty() ? set.descriptor : set.matrices.front().description();
  crb.trials = cfg.trials;
  crb.seed = cfg.seed;
  crb.null_trials = cfg.null_trials;
  crb.threads = threads;
  const auto rep = crb_experiment(crb);

  json doc = json_document(cfg);
  doc["model"] = crb.descriptor;
  doc["report"] = {{"trials", rep.trials},
                   {"succeeded", rep.succeeded},
                   {"boundary_hits", rep.boundary_hits},
                   {"x_true", rep.x_true},
                   {"mean", rep.mean},
                   {"std", rep.std},
                   {"bias", rep.bias},
                   {"w2F", rep.w2F},
                   {"crb_std", rep.crb_std},
                   {"ratio", rep.ratio},
                   {"ratio_stderr", rep.ratio_stderr},
                   {"dmin_over_2w", num(rep.dmin_over_2w)},
                   {"null_trials", rep.null_trials},
                   {"null_false_resolution", num(rep.null_false_resolution)}};
  json failures = json::array();
  for (const auto& f : rep.failures) failures.push_back({{"trial", f.trial}, {"message", f.message}});
  doc["failures"] = failures;
  doc["warnings"] = warnings;

  if (!trials_out.empty()) {
    std::ofstream f(trials_out, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + trials_out);
    f << "# superres " << kVersion << "\n# config: " << header_config_line(cfg) << "\ntrial,x_hat\n";
    for (std::size_t i = 0; i < rep.estimates.size(); ++i) f << i << "," << fmt17(rep.estimates[i]) << "\n";
  }
  return doc.dump(2) + "\n";
}

inline std::string cmd_calibrate_mu(const RunConfig& cfg, unsigned threads) {
  if (cfg.target_offdiag.empty()) throw ConfigError("calibrate-mu requires --target-offdiag");
  if (cfg.samples < 1) throw ConfigError("--samples must be >= 1");
  const double target = parse_real(cfg.target_offdiag);
  const auto cal = calibrate_mu(cfg.dim, target, cfg.samples, cfg.seed, threads);

  // Independent ensemble (seed + 1) at the calibrated mu.
  const RandomCrosstalkEnsemble check(cfg.dim, cal.mu, cfg.seed + 1);
  std::vector<double> off(cfg.samples);
  parallel_for(off.size(), threads, [&](std::size_t i) { off[i] = crosstalk_stats(check.sample(i)).avg_offdiag; });
  double mean, sd;
  mean_std(off, mean, sd);

  json doc = json_document(cfg);
  doc["mu"] = cal.mu;
  doc["target"] = target;
  doc["achieved_avg_offdiag"] = cal.achieved_avg_offdiag;
  doc["verification"] = {{"seed", cfg.seed + 1},
                         {"mean_avg_offdiag", mean},
                         {"std_avg_offdiag", sd},
                         {"relative_error", target > 0.0 ? (mean - target) / target : 0.0}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

inline void write_output(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output " + path);
  f << text;
}

/// Full CLI: parses argv, runs the subcommand, returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  // --config is loaded first so explicit flags override the replayed values.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        cfg = read_config_file(argv[i + 1]);
      } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
      }
    }
  }

  CLI::App app{"Two-point superresolution limits under mode-sorter crosstalk"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("superres ") + kVersion);

  std::string out_path, config_path, trials_out, threads_opt = "1";
  double mu_value = cfg.mu.value_or(std::nan(""));

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Master RNG seed");
    sub->add_option("--out", out_path, "Output path (default stdout)");
    sub->add_option("--format", cfg.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", threads_opt, "Worker threads, a number or 'auto'");
    sub->add_option("--config", config_path, "Replay the config embedded in a JSON file or earlier output");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "ideal|uniform|random|file")
        ->check(CLI::IsMember({"ideal", "uniform", "random", "file"}));
    sub->add_option("--dim", cfg.dim, "Crosstalk space dimension D (perfect square)");
    sub->add_option("--q-measured", cfg.q_measured, "Largest measured mode index per axis");
    sub->add_option("--r2", cfg.r2, "Uniform crosstalk probability |r|^2 (value or grid)");
    sub->add_option("--r-phase", cfg.r_phase, "Phase of r in the uniform model (radians)");
    sub->add_flag("--unitarize", cfg.unitarize, "Replace the matrix by its nearest unitary");
    sub->add_option("--target-offdiag", cfg.target_offdiag, "Random model: target mean |c_ij|^2 (value or grid)");
    sub->add_option("--mu", mu_value, "Random model: coupling strength mu (skips calibration)");
    sub->add_option("--theta", cfg.theta, "Tilt angle in radians");
    sub->add_option("--samples", cfg.samples, "Random ensemble size");
    sub->add_option("--matrix", cfg.matrix, "Matrix file for --model file");
  };

  auto* fc = app.add_subcommand("fisher-curve", "Fisher information w^2F against x = d/2w");
  add_common(fc);
  add_model(fc);
  fc->add_option("--x-grid", cfg.x_grid, "min:max:steps:log|lin or a list");
  fc->add_flag("--direct-imaging", cfg.direct_imaging, "Add the direct-imaging Fisher information column");

  auto* dm = app.add_subcommand("dmin", "Minimal resolvable distance against N and crosstalk");
  add_common(dm);
  add_model(dm);
  dm->add_option("--n-photons", cfg.n_photons, "Photon number N (value or grid)");
  dm->add_flag("--direct-imaging", cfg.direct_imaging, "Add direct-imaging d_min columns");

  auto* au = app.add_subcommand("audit-matrix", "Report on a measured crosstalk matrix");
  add_common(au);
  au->add_option("path", cfg.matrix, "Matrix file");
  au->add_option("--q-measured", cfg.q_measured, "Largest measured mode index per axis");
  au->add_option("--theta", cfg.theta, "Tilt angle in radians");
  au->add_option("--n-photons", cfg.n_photons, "N grid for the d_min table");

  auto* ml = app.add_subcommand("mle-verify", "Monte Carlo check of Cramer-Rao saturation");
  add_common(ml);
  add_model(ml);
  ml->add_option("--n-photons", cfg.n_photons, "Photon number N");
  ml->add_option("--x-true", cfg.x_true, "True separation x = d/2w");
  ml->add_option("--trials", cfg.trials, "Monte Carlo trials");
  ml->add_option("--null-trials", cfg.null_trials, "d = 0 datasets for the false-resolution rate");
  ml->add_option("--trials-out", trials_out, "Per-trial CSV output path");

  auto* cm = app.add_subcommand("calibrate-mu", "Find mu for a target mean off-diagonal crosstalk");
  add_common(cm);
  cm->add_option("--dim", cfg.dim, "Matrix dimension D");
  cm->add_option("--target-offdiag", cfg.target_offdiag, "Target mean |c_ij|^2");
  cm->add_option("--samples", cfg.samples, "Ensemble size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }

  try {
    if (std::isnan(mu_value))
      cfg.mu.reset();
    else
      cfg.mu = mu_value;
    unsigned threads = 1;
    if (threads_opt == "auto") {
      threads = 0;
    } else {
      const double t = parse_real(threads_opt);
      if (t < 1 || t != std::floor(t)) throw ConfigError("--threads must be a positive integer or 'auto'");
      threads = static_cast<unsigned>(t);
    }
    threads = resolve_threads(threads);

    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (!cfg.command.empty() && !config_path.empty() && cfg.command != name)
      throw ConfigError("config file is for '" + cfg.command + "', not '" + name + "'");
    cfg.command = name;

    std::string text;
    if (name == "fisher-curve") {
      text = cmd_fisher_curve(cfg, threads);
    } else if (name == "dmin") {
      text = cmd_dmin(cfg, threads);
    } else if (name == "audit-matrix") {
      text = cmd_audit_matrix(cfg, threads);
    } else if (name == "mle-verify") {
      text = cmd_mle_verify(cfg, threads, err, trials_out);
    } else {
      text = cmd_calibrate_mu(cfg, threads);
    }
    write_output(text, out_path, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalError;
  }
  return kOk;
}

}  // namespace superres::cli
