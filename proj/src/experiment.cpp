#include "onprox/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "onprox/games.hpp"
#include "onprox/metrics.hpp"
#include "onprox/ontap.hpp"
#include "onprox/oracle.hpp"
#include "onprox/regularizer.hpp"
#include "onprox/solver.hpp"
#include "onprox/stream.hpp"
#include "onprox/types.hpp"

namespace onprox {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Malformed JSON, wrong types, unknown keys: exit code 4 territory.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Filesystem trouble: also exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- json helpers ----------------------------------------------------------

void check_keys(const json& j, const std::string& what,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(what + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw SchemaError(what + ": unknown key \"" + it.key() + "\"");
  }
}

const json& require_key(const json& j, const std::string& what, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(what + ": missing key \"" + key + "\"");
  return *it;
}

double jnum(const json& j, const std::string& what, const char* key,
            std::optional<double> def = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (def) return *def;
    throw SchemaError(what + ": missing number \"" + key + "\"");
  }
  if (!it->is_number()) throw SchemaError(what + ": \"" + key + "\" must be a number");
  return it->get<double>();
}

int jint(const json& j, const std::string& what, const char* key,
         std::optional<int> def = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (def) return *def;
    throw SchemaError(what + ": missing integer \"" + key + "\"");
  }
  if (!it->is_number_integer()) throw SchemaError(what + ": \"" + key + "\" must be an integer");
  return it->get<int>();
}

std::uint64_t juint64(const json& j, const std::string& what, const char* key,
                      std::optional<std::uint64_t> def = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (def) return *def;
    throw SchemaError(what + ": missing integer \"" + key + "\"");
  }
  if (!it->is_number_integer() && !it->is_number_unsigned())
    throw SchemaError(what + ": \"" + key + "\" must be a nonnegative integer");
  return it->get<std::uint64_t>();
}

bool jbool(const json& j, const std::string& what, const char* key, bool def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  if (!it->is_boolean()) throw SchemaError(what + ": \"" + key + "\" must be a boolean");
  return it->get<bool>();
}

std::string jstr(const json& j, const std::string& what, const char* key,
                 std::optional<std::string> def = std::nullopt) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (def) return *def;
    throw SchemaError(what + ": missing string \"" + key + "\"");
  }
  if (!it->is_string()) throw SchemaError(what + ": \"" + key + "\" must be a string");
  return it->get<std::string>();
}

json vec_to_json(const Vec& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& e : j) {
    if (!e.is_number()) throw SchemaError(what + " must be an array of numbers");
    v[i++] = e.get<double>();
  }
  return v;
}

// --- experiment config -----------------------------------------------------

struct ExperimentConfig {
  json root;  // echoed verbatim into reports
  std::string name = "run";
  json stream;   // exactly one of stream / game
  json game;
  json reg;      // empty => stream default
  std::string solver = "alg1";
  json step;
  json noise;    // empty => exact
  json offline;  // offline-reduction mode block (optional)
  bool require_iteration_bound = false;
  bool check_decrease = false;
  std::string trace_level = "full";  // "full" | "summary"
  int replications = 1;
  std::uint64_t seed = 1;
  std::string out;  // optional; see resolve_out_dir
};

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "config",
             {"name", "stream", "game", "regularizer", "solver", "step", "noise",
              "offline_reduction", "require_iteration_bound", "check_decrease", "trace_level",
              "replications", "seed", "out"});
  ExperimentConfig c;
  c.root = j;
  c.name = jstr(j, "config", "name", std::string("run"));
  if (j.contains("stream")) c.stream = j.at("stream");
  if (j.contains("game")) c.game = j.at("game");
  if (c.stream.is_null() == c.game.is_null())
    throw SchemaError("config: exactly one of \"stream\" and \"game\" is required");
  if (j.contains("regularizer")) c.reg = j.at("regularizer");
  c.solver = jstr(j, "config", "solver", std::string("alg1"));
  if (c.solver != "alg1" && c.solver != "alg2")
    throw ConfigError("config: solver must be \"alg1\" or \"alg2\", got \"" + c.solver + "\"");
  c.step = require_key(j, "config", "step");
  if (j.contains("noise")) c.noise = j.at("noise");
  if (j.contains("offline_reduction")) c.offline = j.at("offline_reduction");
  c.require_iteration_bound = jbool(j, "config", "require_iteration_bound", false);
  c.check_decrease = jbool(j, "config", "check_decrease", false);
  c.trace_level = jstr(j, "config", "trace_level", std::string("full"));
  if (c.trace_level != "full" && c.trace_level != "summary")
    throw ConfigError("config: trace_level must be \"full\" or \"summary\"");
  c.replications = jint(j, "config", "replications", 1);
  if (c.replications < 1) throw ConfigError("config: replications must be >= 1");
  c.seed = juint64(j, "config", "seed", std::uint64_t{1});
  c.out = jstr(j, "config", "out", std::string());
  return c;
}

// --- noise -----------------------------------------------------------------

NoiseModel noise_from_json(const json& j) {
  if (j.is_null()) return NoiseModel::exact();
  check_keys(j, "noise", {"kind", "sigma"});
  std::string kind = jstr(j, "noise", "kind");
  if (kind == "exact") return NoiseModel::exact();
  double sigma = jnum(j, "noise", "sigma");
  if (kind == "gaussian") return NoiseModel::gaussian(sigma);
  if (kind == "ball") return NoiseModel::ball(sigma);
  throw ConfigError("noise: unknown kind \"" + kind + "\" (exact|gaussian|ball)");
}

json noise_to_json(const NoiseModel& m) {
  const char* kind = m.kind == NoiseKind::Exact            ? "exact"
                     : m.kind == NoiseKind::GaussianIsotropic ? "gaussian"
                                                              : "ball";
  return json{{"kind", kind}, {"sigma", m.sigma}};
}

// --- stream / regularizer building ----------------------------------------

struct BuiltProblem {
  LossStream stream;
  Regularizer reg;
  std::string kind;
};

Regularizer reg_from_json(const json& j) {
  check_keys(j, "regularizer", {"kind", "mu", "lo", "hi", "blocks"});
  std::string kind = jstr(j, "regularizer", "kind");
  if (kind == "zero") return Regularizer::zero();
  if (kind == "l1") return Regularizer::l1(jnum(j, "regularizer", "mu"));
  if (kind == "box")
    return Regularizer::box(jnum(j, "regularizer", "lo"), jnum(j, "regularizer", "hi"));
  if (kind == "simplex" || kind == "simplex_l1") {
    const json& bj = require_key(j, "regularizer", "blocks");
    if (!bj.is_array() || bj.empty())
      throw SchemaError("regularizer: \"blocks\" must be a nonempty array of lengths");
    std::vector<Block> blocks;
    int begin = 0;
    for (const auto& e : bj) {
      if (!e.is_number_integer()) throw SchemaError("regularizer: block lengths must be integers");
      int len = e.get<int>();
      blocks.push_back({begin, len});
      begin += len;
    }
    if (kind == "simplex") return Regularizer::simplex(std::move(blocks));
    return Regularizer::simplex_l1(std::move(blocks), jnum(j, "regularizer", "mu"));
  }
  throw ConfigError("regularizer: unknown kind \"" + kind + "\"");
}

// Stream json must already carry its resolved seed. The regularizer json may
// be null, meaning the stream-specific default domain.
BuiltProblem build_problem(const json& sj, const json& regj) {
  check_keys(sj, "stream",
             {"kind", "seed", "T", "n", "drift_period", "box_radius", "sigma", "domain_radius",
              "demand_period", "demand_seed", "mu", "estimate_samples", "estimate_seed"});
  std::string kind = jstr(sj, "stream", "kind");
  std::uint64_t seed = juint64(sj, "stream", "seed");

  if (kind == "sign_flip") {
    int T = jint(sj, "stream", "T");
    LossStream s = make_sign_flip_stream(T, seed);
    Regularizer g = regj.is_null() ? Regularizer::box(-1.0, 1.0) : reg_from_json(regj);
    return {std::move(s), std::move(g), kind};
  }
  if (kind == "quadratic_drift") {
    QuadraticDriftOptions opt;
    opt.n = jint(sj, "stream", "n", 10);
    opt.T = jint(sj, "stream", "T");
    opt.drift_period = jnum(sj, "stream", "drift_period", 50.0);
    opt.box_radius = jnum(sj, "stream", "box_radius", 1.0);
    opt.seed = seed;
    LossStream s = make_quadratic_drift_stream(opt);
    Regularizer g =
        regj.is_null() ? Regularizer::box(-opt.box_radius, opt.box_radius) : reg_from_json(regj);
    return {std::move(s), std::move(g), kind};
  }
  if (kind == "stationary") {
    int n = jint(sj, "stream", "n", 10);
    int T = jint(sj, "stream", "T");
    double sigma = jnum(sj, "stream", "sigma");
    double radius = jnum(sj, "stream", "domain_radius", 1.0);
    QuadraticDriftOptions base_opt;
    base_opt.n = n;
    base_opt.T = 1;
    base_opt.drift_period = 0.0;
    base_opt.seed = seed;
    base_opt.box_radius = radius;
    LossStream base = make_quadratic_drift_stream(base_opt);
    LossStream s = make_stationary_stochastic_stream(base, sigma, T, seed, radius);
    Regularizer g = regj.is_null() ? Regularizer::box(-radius, radius) : reg_from_json(regj);
    return {std::move(s), std::move(g), kind};
  }
  if (kind == "ontap") {
    if (!regj.is_null())
      throw ConfigError("stream ontap carries its own regularizer; drop the regularizer block");
    OntapInstance inst = default_instance();
    inst.mu = jnum(sj, "stream", "mu", inst.mu);
    double period = jnum(sj, "stream", "demand_period", 10.0);
    std::uint64_t dseed = juint64(sj, "stream", "demand_seed", seed);
    DemandProcess demand = default_demand(inst, period, dseed);
    OntapStreamOptions opt;
    opt.T = jint(sj, "stream", "T", 100);
    opt.estimate_samples = jint(sj, "stream", "estimate_samples", opt.estimate_samples);
    opt.estimate_seed = juint64(sj, "stream", "estimate_seed", opt.estimate_seed);
    OntapStream os = make_ontap_stream(inst, demand, opt);
    return {std::move(os.stream), std::move(os.reg), kind};
  }
  throw ConfigError("stream: unknown kind \"" + kind +
                    "\" (sign_flip|quadratic_drift|stationary|ontap)");
}

// --- step resolution -------------------------------------------------------

// eta may be a number or {"scale_inv_l": s} => s/L, {"scale_inv_l1": s} =>
// s/(L+1). delta may be a number or {"admissible_margin": m} /
// {"iteration_margin": m}, the thresholds delta^2 = m * 2 sigma^2/(eta(1-eta L))
// (stochastic admissibility) and delta^2 = m * sigma^2/(eta(1-eta(L+1)))
// (iteration-bound regime) respectively.
StepConfig resolve_step(const json& stepj, int w, double L, double sigma, int horizon) {
  check_keys(stepj, "step", {"eta", "delta", "w", "T", "max_inner"});
  StepConfig c;
  c.L = L;
  c.w = w;
  c.sigma = sigma;
  c.T = jint(stepj, "step", "T", 0);
  if (c.T == 0) c.T = horizon;
  c.max_inner = static_cast<long>(jnum(stepj, "step", "max_inner", 0.0));

  const json& e = require_key(stepj, "step", "eta");
  if (e.is_number()) {
    c.eta = e.get<double>();
  } else {
    check_keys(e, "step.eta", {"scale_inv_l", "scale_inv_l1"});
    if (e.contains("scale_inv_l"))
      c.eta = jnum(e, "step.eta", "scale_inv_l") / L;
    else if (e.contains("scale_inv_l1"))
      c.eta = jnum(e, "step.eta", "scale_inv_l1") / (L + 1.0);
    else
      throw SchemaError("step.eta: expected scale_inv_l or scale_inv_l1");
  }

  const json& d = require_key(stepj, "step", "delta");
  if (d.is_number()) {
    c.delta = d.get<double>();
  } else {
    check_keys(d, "step.delta", {"admissible_margin", "iteration_margin"});
    if (d.contains("admissible_margin")) {
      double m = jnum(d, "step.delta", "admissible_margin");
      double denom = c.eta * (1.0 - c.eta * L);
      if (sigma <= 0.0)
        throw ConfigError("step.delta admissible_margin needs a noise model with sigma > 0");
      if (denom <= 0.0) throw ConfigError("step.delta admissible_margin needs eta in (0, 1/L)");
      c.delta = std::sqrt(m * 2.0 * sigma * sigma / denom);
    } else if (d.contains("iteration_margin")) {
      double m = jnum(d, "step.delta", "iteration_margin");
      double denom = c.eta * (1.0 - c.eta * (L + 1.0));
      if (sigma <= 0.0)
        throw ConfigError("step.delta iteration_margin needs a noise model with sigma > 0");
      if (denom <= 0.0) throw ConfigError("step.delta iteration_margin needs eta in (0, 1/(L+1))");
      c.delta = std::sqrt(m * sigma * sigma / denom);
    } else {
      throw SchemaError("step.delta: expected admissible_margin or iteration_margin");
    }
  }
  return c;
}

std::vector<int> window_list(const json& stepj) {
  const json& wj = require_key(stepj, "step", "w");
  std::vector<int> ws;
  if (wj.is_number_integer()) {
    ws.push_back(wj.get<int>());
  } else if (wj.is_array() && !wj.empty()) {
    for (const auto& e : wj) {
      if (!e.is_number_integer()) throw SchemaError("step.w entries must be integers");
      ws.push_back(e.get<int>());
    }
  } else {
    throw SchemaError("step.w must be an integer or a nonempty integer array");
  }
  return ws;
}

json step_to_json(const StepConfig& c, long resolved_max_inner) {
  return json{{"eta", c.eta},     {"L", c.L},           {"w", c.w},
              {"delta", c.delta}, {"sigma", c.sigma},   {"T", c.T},
              {"max_inner", c.max_inner}, {"resolved_max_inner", resolved_max_inner}};
}

// --- bound reports ---------------------------------------------------------

json bound_to_json(const BoundReport& b) {
  return json{{"name", b.name},
              {"measured", b.measured},
              {"bound", b.bound},
              {"slack", b.slack},
              {"tolerance", b.tolerance},
              {"passed", b.passed},
              {"expectation_semantics", b.expectation_semantics},
              {"inputs", b.inputs}};
}

BoundReport make_bound(std::string name, double measured, double bound, double tol,
                       bool expectation, std::map<std::string, double> inputs) {
  BoundReport b;
  b.name = std::move(name);
  b.measured = measured;
  b.bound = bound;
  b.slack = bound - measured;
  b.tolerance = tol;
  b.passed = measured <= bound + tol;
  b.expectation_semantics = expectation;
  b.inputs = std::move(inputs);
  return b;
}

std::vector<BoundReport> bounds_for_run(const std::string& solver, const StepConfig& cfg,
                                        const NoiseModel& noise, const Regularizer& g,
                                        const SolverTrace& tr, double M, double regret,
                                        double variation, bool require_iteration_bound) {
  std::vector<BoundReport> out;
  const double g_x1 = g.value(tr.x1);
  const double tau = static_cast<double>(tr.total_tau());
  if (solver == "alg1") {
    out.push_back(make_bound(
        "regret_det", regret, bound_thm_regret_det(cfg.T, cfg.w, cfg.delta, variation), 1e-9,
        false,
        {{"T", double(cfg.T)}, {"w", double(cfg.w)}, {"delta", cfg.delta},
         {"variation", variation}}));
    out.push_back(make_bound(
        "queries_det", tau,
        bound_thm_queries_det(cfg.w, g_x1, M, cfg.eta, cfg.L, cfg.delta), 0.0, false,
        {{"w", double(cfg.w)}, {"g_x1", g_x1}, {"M", M}, {"eta", cfg.eta},
         {"L", cfg.L}, {"delta", cfg.delta}}));
  } else {
    out.push_back(make_bound(
        "regret_stoch", regret,
        bound_thm_regret_stoch(cfg.T, cfg.w, cfg.delta, cfg.sigma, variation), 0.0, true,
        {{"T", double(cfg.T)}, {"w", double(cfg.w)}, {"delta", cfg.delta},
         {"sigma", cfg.sigma}, {"variation", variation}}));
    // Exact call accounting: one step-2 draw per round plus w per inner update,
    // with zero window-cache fallbacks.
    double expected_calls = double(cfg.T) + double(cfg.w) * tau;
    BoundReport id = make_bound("sfo_identity", double(tr.total_oracle_calls()), expected_calls,
                                0.0, false,
                                {{"T", double(cfg.T)}, {"w", double(cfg.w)}, {"tau", tau},
                                 {"fallback_sfo_calls", double(tr.fallback_sfo_calls)}});
    id.passed = tr.total_oracle_calls() == static_cast<long>(expected_calls) &&
                tr.fallback_sfo_calls == 0;
    out.push_back(id);
    double denom = (1.0 - cfg.eta * (cfg.L + 1.0)) * cfg.eta * cfg.delta * cfg.delta -
                   cfg.sigma * cfg.sigma;
    bool iteration_bound_applicable = noise.hard_bounded() && cfg.eta < 1.0 / (cfg.L + 1.0) && denom > 0.0;
    if (require_iteration_bound || iteration_bound_applicable) {
      out.push_back(make_bound(
          "queries_stoch", tau,
          bound_thm_queries_stoch(cfg.w, g_x1, M, cfg.eta, cfg.L, cfg.delta, cfg.sigma), 0.0,
          false,
          {{"w", double(cfg.w)}, {"g_x1", g_x1}, {"M", M}, {"eta", cfg.eta},
           {"L", cfg.L}, {"delta", cfg.delta}, {"sigma", cfg.sigma}}));
    }
  }
  return out;
}

// --- per-replication runs --------------------------------------------------

struct RepResult {
  int w = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  StepConfig cfg;
  SolverTrace trace;
  double regret = 0.0;
  double variation = 0.0;
  double min_decrease = std::numeric_limits<double>::quiet_NaN();
  std::vector<BoundReport> bounds;
  json trace_json;
  std::string trace_filename;
};

json round_to_json(const RoundRecord& r) {
  json j{{"t", r.t},
         {"x", vec_to_json(r.x)},
         {"entry_residual_sq", r.entry_residual_sq},
         {"tau", r.tau},
         {"residual_at_exit", r.residual_at_exit},
         {"oracle_calls", r.oracle_calls}};
  if (!r.inner_decrease.empty()) j["inner_decrease"] = r.inner_decrease;
  return j;
}

json trace_to_json(const ExperimentConfig& C, const json& stream_json, const StepConfig& cfg,
                   const NoiseModel& noise, std::uint64_t oracle_seed, long resolved_max_inner,
                   const BuiltProblem& P, const RepResult& R) {
  json cj;
  cj["stream"] = stream_json;
  if (!C.reg.is_null()) cj["regularizer"] = C.reg;
  cj["solver"] = C.solver;
  cj["step"] = step_to_json(cfg, resolved_max_inner);
  cj["noise"] = noise_to_json(noise);
  cj["oracle_seed"] = oracle_seed;
  cj["check_decrease"] = C.check_decrease;
  cj["require_iteration_bound"] = C.require_iteration_bound;
  cj["trace_level"] = C.trace_level;
  cj["base_seed"] = C.seed;
  cj["replication"] = R.rep;

  json j;
  j["schema"] = "onprox-trace-v1";
  j["config"] = std::move(cj);
  j["stream_info"] = json{{"descriptor", P.stream.descriptor()},
                          {"n", P.stream.dimension()},
                          {"horizon", P.stream.horizon()},
                          {"L", P.stream.smoothness()},
                          {"M", P.stream.value_bound()}};
  j["regularizer_info"] = P.reg.descriptor();
  j["x1"] = vec_to_json(R.trace.x1);
  j["x_final"] = vec_to_json(R.trace.x_final);
  if (C.trace_level == "full") {
    json rounds = json::array();
    for (const auto& r : R.trace.rounds) rounds.push_back(round_to_json(r));
    j["rounds"] = std::move(rounds);
  }
  j["totals"] = json{{"tau", R.trace.total_tau()},
                     {"oracle_calls", R.trace.total_oracle_calls()},
                     {"fallback_sfo_calls", R.trace.fallback_sfo_calls},
                     {"capped", R.trace.capped}};
  json summary{{"local_regret", R.regret}, {"trajectory_variation", R.variation}};
  if (std::isfinite(R.min_decrease)) summary["min_inner_decrease"] = R.min_decrease;
  j["summary"] = std::move(summary);
  json bounds = json::array();
  for (const auto& b : R.bounds) bounds.push_back(bound_to_json(b));
  j["bounds"] = std::move(bounds);
  return j;
}

double min_logged_decrease(const SolverTrace& tr) {
  double m = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : tr.rounds)
    for (double d : r.inner_decrease)
      if (!(d >= m)) m = std::isnan(m) ? d : std::min(m, d);
  return m;
}

// One (w, replication) cell of a single-agent experiment.
RepResult run_single_task(const ExperimentConfig& C, int w, int rep) {
  RepResult R;
  R.w = w;
  R.rep = rep;
  R.seed = C.seed + static_cast<std::uint64_t>(rep);

  json sj = C.stream;
  if (!sj.contains("seed")) sj["seed"] = R.seed;
  BuiltProblem P = build_problem(sj, C.reg);
  NoiseModel noise = noise_from_json(C.noise);
  StepConfig cfg = resolve_step(C.step, w, P.stream.smoothness(), noise.sigma, P.stream.horizon());

  if (C.solver == "alg1") {
    if (!noise.is_exact())
      throw ConfigError("alg1 uses exact gradients; drop the noise block or switch to alg2");
    R.trace = run_alg1(P.stream, P.reg, cfg, std::nullopt, C.check_decrease);
  } else {
    cfg = validate_config_alg2(cfg, noise, C.require_iteration_bound);
    R.trace = run_alg2(P.stream, P.reg, cfg, noise, R.seed);
  }
  R.cfg = cfg;
  R.cfg.sigma = noise.sigma;

  auto xs = R.trace.iterates();
  R.regret = local_regret(xs, P.stream, P.reg, cfg.w, cfg.eta);
  R.variation = trajectory_variation(xs, P.stream, cfg.w);
  R.min_decrease = min_logged_decrease(R.trace);
  R.bounds = bounds_for_run(C.solver, R.cfg, noise, P.reg, R.trace, P.stream.value_bound(),
                            R.regret, R.variation, C.require_iteration_bound);

  long resolved = resolve_max_inner(R.cfg, P.reg, R.trace.x1, P.stream.value_bound(),
                                    C.solver == "alg2");
  R.trace_json = trace_to_json(C, sj, R.cfg, noise, R.seed, resolved, P, R);
  char name[64];
  std::snprintf(name, sizeof(name), "trace_w%d_r%02d.json", w, rep);
  R.trace_filename = name;
  return R;
}

// --- output files ----------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

const char* kCsvHeader =
    "solver,stream,w,seed,T,eta,delta,sigma,local_regret,trajectory_variation,tau,sfo_calls,"
    "fallback_sfo_calls,bound_regret_det,pass_regret_det,bound_queries_det,pass_queries_det,"
    "bound_regret_stoch,pass_regret_stoch,bound_queries_stoch,pass_queries_stoch,"
    "min_inner_decrease";

const BoundReport* find_bound(const std::vector<BoundReport>& bs, const std::string& name) {
  for (const auto& b : bs)
    if (b.name == name) return &b;
  return nullptr;
}

std::string csv_row(const std::string& solver, const std::string& stream_kind, const RepResult& R) {
  std::ostringstream os;
  os << solver << ',' << stream_kind << ',' << R.w << ',' << R.seed << ',' << R.cfg.T << ','
     << fmt17(R.cfg.eta) << ',' << fmt17(R.cfg.delta) << ',' << fmt17(R.cfg.sigma) << ','
     << fmt17(R.regret) << ',' << fmt17(R.variation) << ',' << R.trace.total_tau() << ','
     << R.trace.total_oracle_calls() << ',' << R.trace.fallback_sfo_calls;
  auto cell = [&](const char* name) {
    const BoundReport* b = find_bound(R.bounds, name);
    if (b == nullptr) {
      os << ",,";
    } else {
      os << ',' << fmt17(b->bound) << ',' << (b->passed ? 1 : 0);
    }
  };
  cell("regret_det");
  cell("queries_det");
  cell("regret_stoch");
  cell("queries_stoch");
  if (std::isfinite(R.min_decrease))
    os << ',' << fmt17(R.min_decrease);
  else
    os << ',';
  return os.str();
}

// --- single-agent experiment driver ----------------------------------------

// Runs the (w x replication) grid, possibly in parallel; rows land in CSV in
// (w, seed) order regardless of completion order.
int run_experiment(const ExperimentConfig& C, const fs::path& out_dir, int jobs,
                   std::ostream& log) {
  std::vector<int> ws = window_list(C.step);
  const int reps = C.replications;
  const int total = static_cast<int>(ws.size()) * reps;

  std::vector<std::optional<RepResult>> results(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int i = next.fetch_add(1);
      if (i >= total) return;
      try {
        int w = ws[static_cast<std::size_t>(i) / reps];
        int rep = i % reps;
        results[i] = run_single_task(C, w, rep);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  int nthreads = std::max(1, std::min(jobs, total));
  std::vector<std::thread> pool;
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (int i = 0; i < total; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << kCsvHeader << '\n';
  json rows = json::array();
  bool all_sharp_pass = true;  // non-expectation bounds only
  for (const auto& slot : results) {
    const RepResult& R = *slot;
    write_text_file(out_dir / R.trace_filename, R.trace_json.dump(2) + "\n");
    csv << csv_row(C.solver, R.trace_json["config"]["stream"]["kind"].get<std::string>(), R)
        << '\n';
    json row{{"w", R.w},          {"seed", R.seed},
             {"replication", R.rep}, {"local_regret", R.regret},
             {"trajectory_variation", R.variation}, {"tau", R.trace.total_tau()},
             {"oracle_calls", R.trace.total_oracle_calls()}, {"trace", R.trace_filename}};
    json bj = json::array();
    for (const auto& b : R.bounds) {
      bj.push_back(bound_to_json(b));
      if (!b.expectation_semantics && !b.passed) all_sharp_pass = false;
    }
    row["bounds"] = std::move(bj);
    rows.push_back(std::move(row));
  }
  write_text_file(out_dir / "summary.csv", csv.str());

  // Per-window aggregates; the stochastic regret bound is checked against the
  // mean (its native expectation semantics).
  json aggregates = json::array();
  for (int w : ws) {
    double sum_reg = 0, sum_var = 0, sum_tau = 0, sum_calls = 0;
    const RepResult* any = nullptr;
    for (const auto& slot : results) {
      if (slot->w != w) continue;
      sum_reg += slot->regret;
      sum_var += slot->variation;
      sum_tau += double(slot->trace.total_tau());
      sum_calls += double(slot->trace.total_oracle_calls());
      any = &*slot;
    }
    double mean_reg = sum_reg / reps, mean_var = sum_var / reps;
    json agg{{"w", w},
             {"replications", reps},
             {"mean_local_regret", mean_reg},
             {"mean_trajectory_variation", mean_var},
             {"mean_tau", sum_tau / reps},
             {"mean_oracle_calls", sum_calls / reps}};
    if (C.solver == "alg2" && any != nullptr) {
      double bound =
          bound_thm_regret_stoch(any->cfg.T, w, any->cfg.delta, any->cfg.sigma, mean_var);
      agg["mean_regret_stoch_bound"] = bound;
      agg["mean_regret_stoch_pass"] = mean_reg <= bound;
    }
    aggregates.push_back(std::move(agg));
  }

  json report{{"schema", "onprox-report-v1"},
              {"name", C.name},
              {"config", C.root},
              {"rows", rows},
              {"aggregates", aggregates},
              {"all_nonexpectation_bounds_passed", all_sharp_pass}};
  write_text_file(out_dir / "report.json", report.dump(2) + "\n");

  log << C.name << ": " << total << " runs -> " << (out_dir / "summary.csv").string() << "\n";
  for (const auto& agg : aggregates) {
    log << "  w=" << agg["w"] << " mean Reg_w=" << fmt17(agg["mean_local_regret"].get<double>())
        << " mean V=" << fmt17(agg["mean_trajectory_variation"].get<double>());
    if (agg.contains("mean_regret_stoch_pass"))
      log << " mean<=stoch bound: " << (agg["mean_regret_stoch_pass"].get<bool>() ? "yes" : "NO");
    log << "\n";
  }
  if (!all_sharp_pass) log << "  note: some per-run bound checks failed; see report.json\n";
  return 0;
}

// --- offline reduction driver ----------------------------------------------

// Pilot runs measure c = 6 V / T on the fixed offline objective, then w and
// T = 2w come from the epsilon-stationarity recipe and each replication
// re-solves the same objective under a fresh oracle seed, reporting the exact
// residual at a uniformly drawn t* in {w..T}.
int run_offline(const ExperimentConfig& C, const fs::path& out_dir, std::ostream& log) {
  check_keys(C.offline, "offline_reduction",
             {"epsilon", "pilot_w", "pilot_T", "pilot_replications", "replications"});
  const double eps = jnum(C.offline, "offline_reduction", "epsilon");
  const int pilot_w = jint(C.offline, "offline_reduction", "pilot_w", 10);
  const int pilot_T = jint(C.offline, "offline_reduction", "pilot_T", 100);
  const int pilot_reps = jint(C.offline, "offline_reduction", "pilot_replications", 3);
  const int reps = jint(C.offline, "offline_reduction", "replications", 30);
  if (eps <= 0.0) throw ConfigError("offline_reduction: epsilon must be positive");
  if (C.solver != "alg2")
    throw ConfigError("offline_reduction runs alg2; set solver to \"alg2\"");
  if (C.stream.is_null() || jstr(C.stream, "stream", "kind") != "quadratic_drift" ||
      jnum(C.stream, "stream", "drift_period", 50.0) != 0.0)
    throw ConfigError(
        "offline_reduction needs stream kind quadratic_drift with drift_period 0 (a fixed "
        "objective)");

  NoiseModel noise = noise_from_json(C.noise);
  if (noise.is_exact())
    throw ConfigError("offline_reduction models a stochastic oracle; provide a noise block");

  auto fresh_problem = [&](int horizon) {
    json sj = C.stream;
    sj["seed"] = C.seed;  // one objective; replications vary the oracle only
    sj["T"] = horizon;
    return build_problem(sj, C.reg);
  };

  // Pilot phase.
  std::vector<double> cs;
  {
    BuiltProblem P = fresh_problem(pilot_T);
    StepConfig cfg = resolve_step(C.step, pilot_w, P.stream.smoothness(), noise.sigma, pilot_T);
    for (int r = 0; r < pilot_reps; ++r) {
      BuiltProblem Q = fresh_problem(pilot_T);
      SolverTrace tr = run_alg2(Q.stream, Q.reg, cfg, noise, C.seed + 10000 + r);
      double v = trajectory_variation(tr.iterates(), Q.stream, pilot_w);
      cs.push_back(6.0 * v / pilot_T);
    }
  }
  double c = *std::max_element(cs.begin(), cs.end());

  // Final parameters from the recipe (delta/eta resolved on the actual
  // objective's L, which is seed-fixed here).
  BuiltProblem probe = fresh_problem(pilot_T);
  StepConfig probe_cfg =
      resolve_step(C.step, pilot_w, probe.stream.smoothness(), noise.sigma, pilot_T);
  OfflineParams params = offline_params(eps, probe_cfg.delta, noise.sigma, c);
  const int w = params.w, T = params.T;

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "w,seed,T,eta,delta,sigma,tstar,residual_sq_tstar,local_regret,trajectory_variation,"
         "tau,sfo_calls\n";
  double sum_resid = 0.0, sum_calls = 0.0;
  bool variation_ok = true;
  json rows = json::array();
  ExperimentConfig traceC = C;  // reused for the trace writer
  for (int r = 0; r < reps; ++r) {
    RepResult R;
    R.w = w;
    R.rep = r;
    R.seed = C.seed + static_cast<std::uint64_t>(r);
    BuiltProblem P = fresh_problem(T);
    StepConfig cfg = resolve_step(C.step, w, P.stream.smoothness(), noise.sigma, T);
    cfg = validate_config_alg2(cfg, noise, C.require_iteration_bound);
    R.trace = run_alg2(P.stream, P.reg, cfg, noise, R.seed);
    R.cfg = cfg;
    auto xs = R.trace.iterates();
    R.regret = local_regret(xs, P.stream, P.reg, w, cfg.eta);
    R.variation = trajectory_variation(xs, P.stream, w);
    if (R.variation > c * T / 6.0) variation_ok = false;
    R.bounds = bounds_for_run("alg2", cfg, noise, P.reg, R.trace, P.stream.value_bound(),
                              R.regret, R.variation, C.require_iteration_bound);

    SplitMix64 rng = keyed_rng(C.seed, RngTag::experiment, {static_cast<std::uint64_t>(r)});
    int tstar = sample_tstar(w, T, rng);
    const Vec& xstar = R.trace.rounds[static_cast<std::size_t>(tstar - 1)].x;
    double resid = residual_norm_sq(P.reg, xstar, P.stream.grad(tstar, xstar), cfg.eta);
    sum_resid += resid;
    sum_calls += double(R.trace.total_oracle_calls());

    json sj = C.stream;
    sj["seed"] = C.seed;
    sj["T"] = T;
    long resolved = resolve_max_inner(cfg, P.reg, R.trace.x1, P.stream.value_bound(), true);
    R.trace_json = trace_to_json(traceC, sj, cfg, noise, R.seed, resolved, P, R);
    char name[64];
    std::snprintf(name, sizeof(name), "trace_r%02d.json", r);
    write_text_file(out_dir / name, R.trace_json.dump(2) + "\n");

    csv << w << ',' << R.seed << ',' << T << ',' << fmt17(cfg.eta) << ',' << fmt17(cfg.delta)
        << ',' << fmt17(noise.sigma) << ',' << tstar << ',' << fmt17(resid) << ','
        << fmt17(R.regret) << ',' << fmt17(R.variation) << ',' << R.trace.total_tau() << ','
        << R.trace.total_oracle_calls() << '\n';
    rows.push_back(json{{"seed", R.seed},
                        {"tstar", tstar},
                        {"residual_sq_tstar", resid},
                        {"tau", R.trace.total_tau()},
                        {"sfo_calls", R.trace.total_oracle_calls()},
                        {"trace", name}});
  }
  write_text_file(out_dir / "summary.csv", csv.str());

  double mean_resid = sum_resid / reps;
  double mean_calls = sum_calls / reps;
  double g_x1 = probe.reg.value(probe.reg.project_start(probe.stream.dimension()));
  double budget = offline_sfo_budget(params, g_x1, probe.stream.value_bound(), probe_cfg.eta,
                                     probe.stream.smoothness(), probe_cfg.delta, noise.sigma);
  double reference = probe.stream.value_bound() * noise.sigma * std::pow(eps, -1.5);
  json report{{"schema", "onprox-offline-report-v1"},
              {"name", C.name},
              {"config", C.root},
              {"epsilon", eps},
              {"c_pilot", c},
              {"pilot_cs", cs},
              {"w", w},
              {"T", T},
              {"w_proof_det", params.w_proof_det},
              {"eta", probe_cfg.eta},
              {"delta", probe_cfg.delta},
              {"sigma", noise.sigma},
              {"mean_residual_sq_tstar", mean_resid},
              {"epsilon_pass", mean_resid <= eps},
              {"variation_assumption_held", variation_ok},
              {"mean_sfo_calls", mean_calls},
              {"sfo_budget_formula", budget},
              {"reference_m_sigma_eps32", reference},
              {"rows", rows}};
  write_text_file(out_dir / "report.json", report.dump(2) + "\n");

  log << C.name << ": c=" << fmt17(c) << " -> w=" << w << " T=" << T
      << "; mean ||P(x_t*;grad f)||^2 = " << fmt17(mean_resid) << " vs eps=" << fmt17(eps)
      << (mean_resid <= eps ? " (pass)" : " (FAIL)") << "\n";
  log << "  mean SFO calls " << fmt17(mean_calls) << ", budget formula " << fmt17(budget)
      << ", M*sigma*eps^-3/2 = " << fmt17(reference) << "\n";
  return 0;
}

// --- games driver -----------------------------------------------------------

GameSpec game_from_json(const json& gj) {
  check_keys(gj, "game", {"kind", "dims", "seed", "box_radius", "zero_sum"});
  std::string kind = jstr(gj, "game", "kind");
  if (kind != "quadratic")
    throw ConfigError("game: unknown kind \"" + kind + "\" (quadratic)");
  const json& dj = require_key(gj, "game", "dims");
  if (!dj.is_array() || dj.size() < 2)
    throw SchemaError("game.dims must be an array of at least two block sizes");
  std::vector<int> dims;
  for (const auto& e : dj) {
    if (!e.is_number_integer()) throw SchemaError("game.dims entries must be integers");
    dims.push_back(e.get<int>());
  }
  return make_quadratic_game(dims, juint64(gj, "game", "seed", std::uint64_t{7}),
                             jnum(gj, "game", "box_radius", 1.0),
                             jbool(gj, "game", "zero_sum", false));
}

int run_games(const ExperimentConfig& C, const fs::path& out_dir, std::ostream& log) {
  GameSpec game = game_from_json(C.game);
  const int k = static_cast<int>(game.dims.size());
  NoiseModel noise = noise_from_json(C.noise);
  std::vector<int> ws = window_list(C.step);
  if (ws.size() != 1) throw ConfigError("game runs take a single window length");
  const int w = ws[0];
  if (w < 2) throw ConfigError("game runs need w >= 2");
  StepConfig cfg = resolve_step(C.step, w, game.L, noise.sigma, /*horizon=*/0);
  if (cfg.T == 0) cfg.T = w * w;  // the theorem-side horizon
  const int T = cfg.T;
  if (T <= w) throw ConfigError("game runs need T > w (the epsilon formula divides by T - w)");

  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "w,seed,player,T,eta,delta,sigma,local_regret,trajectory_variation,tau,sfo_calls,"
         "epsilon,first_fire_round,fired\n";
  json reps_json = json::array();
  bool all_fired = true;
  for (int r = 0; r < C.replications; ++r) {
    std::uint64_t oracle_seed = C.seed + static_cast<std::uint64_t>(r);
    GameRunResult run = run_simultaneous(game, C.solver, cfg, noise, oracle_seed);

    double c = 0.0;
    std::vector<double> regrets(k), variations(k);
    std::vector<long> taus(k), calls(k);
    for (int i = 0; i < k; ++i) {
      auto xs = run.traces[i].iterates();
      regrets[i] = local_regret(xs, run.streams[i], game.regs[i], w, cfg.eta);
      variations[i] = trajectory_variation(xs, run.streams[i], w);
      taus[i] = run.traces[i].total_tau();
      calls[i] = run.traces[i].total_oracle_calls();
      c = std::max(c, variations[i] / T);
    }
    // Sufficient threshold for the averaging argument: some round in [w, T]
    // must land at or below the mean residual sum, which the per-player regret
    // bounds cap at this value (with T = w^2 it reads 2k(delta^2+c)/((w-1)w)).
    double epsilon =
        2.0 * k * T * (cfg.delta * cfg.delta + c) / (double(T - w) * w * w);
    int fired_at = first_equilibrium_round(run, game, cfg.eta, w, epsilon, w);
    if (fired_at < 0) all_fired = false;

    for (int i = 0; i < k; ++i) {
      csv << w << ',' << oracle_seed << ',' << i << ',' << T << ',' << fmt17(cfg.eta) << ','
          << fmt17(cfg.delta) << ',' << fmt17(noise.sigma) << ',' << fmt17(regrets[i]) << ','
          << fmt17(variations[i]) << ',' << taus[i] << ',' << calls[i] << ',' << fmt17(epsilon)
          << ',' << fired_at << ',' << (fired_at >= 0 ? 1 : 0) << '\n';
    }

    json history = json::array();
    for (int t = 1; t <= run.history->rounds(); ++t)
      history.push_back(vec_to_json(run.history->at(t)));
    json players = json::array();
    for (int i = 0; i < k; ++i) {
      const SolverTrace& tr = run.traces[i];
      json p{{"player", i},
             {"x1", vec_to_json(tr.x1)},
             {"x_final", vec_to_json(tr.x_final)},
             {"totals", json{{"tau", tr.total_tau()},
                             {"oracle_calls", tr.total_oracle_calls()},
                             {"fallback_sfo_calls", tr.fallback_sfo_calls},
                             {"capped", tr.capped}}},
             {"summary", json{{"local_regret", regrets[i]},
                              {"trajectory_variation", variations[i]}}}};
      if (C.trace_level == "full") {
        json rounds = json::array();
        for (const auto& rr : tr.rounds) rounds.push_back(round_to_json(rr));
        p["rounds"] = std::move(rounds);
      }
      players.push_back(std::move(p));
    }
    json tj{{"schema", "onprox-game-trace-v1"},
            {"config", json{{"game", C.game},
                            {"solver", C.solver},
                            {"step", step_to_json(cfg, 0)},
                            {"noise", noise_to_json(noise)},
                            {"oracle_seed", oracle_seed},
                            {"trace_level", C.trace_level},
                            {"base_seed", C.seed},
                            {"replication", r}}},
            {"game_info", json{{"players", k},
                               {"dims", game.dims},
                               {"total_dim", game.total_dim()},
                               {"L", game.L},
                               {"M", game.M}}},
            {"history", std::move(history)},
            {"players", std::move(players)},
            {"equilibrium", json{{"c", c},
                                 {"epsilon", epsilon},
                                 {"first_fire_round", fired_at},
                                 {"fired", fired_at >= 0}}}};
    char name[64];
    std::snprintf(name, sizeof(name), "game_r%02d.json", r);
    write_text_file(out_dir / name, tj.dump(2) + "\n");
    reps_json.push_back(json{{"replication", r},
                             {"oracle_seed", oracle_seed},
                             {"c", c},
                             {"epsilon", epsilon},
                             {"first_fire_round", fired_at},
                             {"trace", name}});
    log << C.name << " rep " << r << ": epsilon=" << fmt17(epsilon) << ", equilibrium at t="
        << fired_at << (fired_at >= 0 ? "" : " (none — NOT fired)") << "\n";
  }
  write_text_file(out_dir / "summary.csv", csv.str());
  json report{{"schema", "onprox-game-report-v1"},
              {"name", C.name},
              {"config", C.root},
              {"replications", reps_json},
              {"all_fired", all_fired}};
  write_text_file(out_dir / "report.json", report.dump(2) + "\n");
  return 0;
}

// --- presets ---------------------------------------------------------------

const std::vector<std::pair<const char*, const char*>>& preset_table() {
  static const std::vector<std::pair<const char*, const char*>> table = {
      {"det-regret", R"({
        "name": "det-regret",
        "stream": {"kind": "quadratic_drift", "n": 10, "T": 200, "drift_period": 50.0,
                   "box_radius": 1.0},
        "solver": "alg1",
        "step": {"eta": {"scale_inv_l": 0.5}, "delta": 0.1, "w": [5, 10, 20]},
        "check_decrease": true,
        "replications": 10,
        "seed": 1
      })"},
      {"window-separation", R"({
        "name": "window-separation",
        "stream": {"kind": "sign_flip", "T": 10000},
        "solver": "alg1",
        "step": {"eta": 0.5, "delta": 0.1, "w": [1, 100]},
        "trace_level": "summary",
        "replications": 20,
        "seed": 1
      })"},
      {"stoch-regret", R"({
        "name": "stoch-regret",
        "stream": {"kind": "quadratic_drift", "n": 10, "T": 100, "drift_period": 50.0,
                   "box_radius": 1.0},
        "solver": "alg2",
        "noise": {"kind": "ball", "sigma": 0.3},
        "step": {"eta": {"scale_inv_l": 0.5}, "delta": {"admissible_margin": 1.1}, "w": 10},
        "trace_level": "summary",
        "replications": 50,
        "seed": 1
      })"},
      {"iteration-bound", R"({
        "name": "iteration-bound",
        "stream": {"kind": "quadratic_drift", "n": 10, "T": 100, "drift_period": 50.0,
                   "box_radius": 1.0},
        "solver": "alg2",
        "noise": {"kind": "ball", "sigma": 0.3},
        "step": {"eta": {"scale_inv_l1": 0.5}, "delta": {"admissible_margin": 1.1}, "w": 10},
        "require_iteration_bound": true,
        "trace_level": "summary",
        "replications": 20,
        "seed": 1
      })"},
      {"offline-reduction", R"({
        "name": "offline-reduction",
        "stream": {"kind": "quadratic_drift", "n": 10, "T": 100, "drift_period": 0.0,
                   "box_radius": 1.0},
        "solver": "alg2",
        "noise": {"kind": "ball", "sigma": 0.1},
        "step": {"eta": {"scale_inv_l1": 0.5}, "delta": {"admissible_margin": 1.1}, "w": 10},
        "offline_reduction": {"epsilon": 0.05, "pilot_w": 10, "pilot_T": 100,
                              "pilot_replications": 3, "replications": 30},
        "trace_level": "summary",
        "seed": 1
      })"},
      {"ontap", R"({
        "name": "ontap",
        "stream": {"kind": "ontap", "T": 100, "demand_period": 10.0, "mu": 0.1},
        "solver": "alg1",
        "step": {"eta": {"scale_inv_l": 0.5}, "delta": 0.1, "w": 10},
        "check_decrease": true,
        "replications": 3,
        "seed": 1
      })"},
      {"games-2p", R"({
        "name": "games-2p",
        "game": {"kind": "quadratic", "dims": [3, 3], "seed": 7, "box_radius": 1.0,
                 "zero_sum": false},
        "solver": "alg1",
        "step": {"eta": {"scale_inv_l": 0.5}, "delta": 0.1, "w": 10, "T": 100},
        "replications": 1,
        "seed": 1
      })"},
  };
  return table;
}

json preset_config(const std::string& name) {
  for (const auto& [n, text] : preset_table())
    if (name == n) return json::parse(text);
  std::string names;
  for (const auto& [n, text] : preset_table()) {
    (void)text;
    names += names.empty() ? n : std::string(", ") + n;
  }
  throw ConfigError("unknown preset \"" + name + "\" (available: " + names + ")");
}

// --- verification -----------------------------------------------------------

struct VerifyFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_eq(bool ok, const std::string& what) {
  if (!ok) throw VerifyFailure(what);
}

void require_num(double stored, double fresh, const std::string& what) {
  // Traces round-trip doubles exactly and replays are bit-reproducible, so
  // equality here is exact, NaN-for-NaN.
  bool ok = (stored == fresh) || (std::isnan(stored) && std::isnan(fresh));
  if (!ok)
    throw VerifyFailure(what + ": stored " + fmt17(stored) + " != recomputed " + fmt17(fresh));
}

void require_vec(const json& stored, const Vec& fresh, const std::string& what) {
  Vec s = vec_from_json(stored, what);
  require_eq(s.size() == fresh.size(), what + ": size mismatch");
  for (Eigen::Index i = 0; i < s.size(); ++i) require_num(s[i], fresh[i], what);
}

void verify_trace_against(const json& j, const SolverTrace& tr, const std::string& level) {
  const json& totals = require_key(j, "trace", "totals");
  require_num(double(totals.at("tau").get<long>()), double(tr.total_tau()), "totals.tau");
  require_num(double(totals.at("oracle_calls").get<long>()), double(tr.total_oracle_calls()),
              "totals.oracle_calls");
  require_num(double(totals.at("fallback_sfo_calls").get<long>()),
              double(tr.fallback_sfo_calls), "totals.fallback_sfo_calls");
  require_eq(totals.at("capped").get<bool>() == tr.capped, "totals.capped");
  require_vec(require_key(j, "trace", "x1"), tr.x1, "x1");
  require_vec(require_key(j, "trace", "x_final"), tr.x_final, "x_final");
  if (level != "full") return;
  const json& rounds = require_key(j, "trace", "rounds");
  require_eq(rounds.size() == tr.rounds.size(), "rounds: count mismatch");
  for (std::size_t i = 0; i < tr.rounds.size(); ++i) {
    const json& rj = rounds[i];
    const RoundRecord& rr = tr.rounds[i];
    std::string at = "rounds[" + std::to_string(i) + "].";
    require_eq(rj.at("t").get<int>() == rr.t, at + "t");
    require_eq(rj.at("tau").get<int>() == rr.tau, at + "tau");
    require_eq(rj.at("oracle_calls").get<long>() == rr.oracle_calls, at + "oracle_calls");
    require_vec(rj.at("x"), rr.x, at + "x");
    require_num(rj.at("entry_residual_sq").get<double>(), rr.entry_residual_sq,
                at + "entry_residual_sq");
    require_num(rj.at("residual_at_exit").get<double>(), rr.residual_at_exit,
                at + "residual_at_exit");
    std::vector<double> dec =
        rj.contains("inner_decrease") ? rj.at("inner_decrease").get<std::vector<double>>()
                                      : std::vector<double>{};
    require_eq(dec.size() == rr.inner_decrease.size(), at + "inner_decrease count");
    for (std::size_t q = 0; q < dec.size(); ++q)
      require_num(dec[q], rr.inner_decrease[q], at + "inner_decrease");
  }
}

StepConfig step_from_json(const json& sj) {
  StepConfig c;
  c.eta = jnum(sj, "step", "eta");
  c.L = jnum(sj, "step", "L");
  c.w = jint(sj, "step", "w");
  c.delta = jnum(sj, "step", "delta");
  c.sigma = jnum(sj, "step", "sigma");
  c.T = jint(sj, "step", "T");
  c.max_inner = static_cast<long>(jnum(sj, "step", "max_inner"));
  return c;
}

// Re-runs the solver from the embedded config and compares everything stored;
// then recomputes the summary metrics, the exit-test guarantee, and the bound
// reports from scratch.
void verify_single_trace(const json& j) {
  const json& cj = require_key(j, "trace", "config");
  json regj = cj.contains("regularizer") ? cj.at("regularizer") : json();
  BuiltProblem P = build_problem(require_key(cj, "config", "stream"), regj);
  StepConfig cfg = step_from_json(require_key(cj, "config", "step"));
  NoiseModel noise = noise_from_json(require_key(cj, "config", "noise"));
  std::string solver = jstr(cj, "config", "solver");
  std::string level = jstr(cj, "config", "trace_level", std::string("full"));
  bool check_decrease = jbool(cj, "config", "check_decrease", false);
  bool require_iter = jbool(cj, "config", "require_iteration_bound", false);
  Vec x1 = vec_from_json(require_key(j, "trace", "x1"), "x1");

  const json& si = require_key(j, "trace", "stream_info");
  require_num(si.at("L").get<double>(), P.stream.smoothness(), "stream_info.L");
  require_num(si.at("M").get<double>(), P.stream.value_bound(), "stream_info.M");

  SolverTrace tr;
  if (solver == "alg1") {
    tr = run_alg1(P.stream, P.reg, cfg, x1, check_decrease);
  } else if (solver == "alg2") {
    cfg = validate_config_alg2(cfg, noise, require_iter);
    tr = run_alg2(P.stream, P.reg, cfg, noise, juint64(cj, "config", "oracle_seed"), x1);
  } else {
    throw SchemaError("trace config: unknown solver \"" + solver + "\"");
  }
  verify_trace_against(j, tr, level);

  // Exit-test guarantee on the replay (covers summary-level traces too).
  for (const auto& rr : tr.rounds)
    require_eq(rr.residual_at_exit <= cfg.delta / cfg.w + 1e-12,
               "round " + std::to_string(rr.t) + ": exit residual above delta/w");
  if (solver == "alg1") {
    for (const auto& rr : tr.rounds)
      require_eq(rr.oracle_calls == rr.tau + 1,
                 "round " + std::to_string(rr.t) + ": oracle_calls != tau + 1");
  } else {
    require_eq(tr.total_oracle_calls() ==
                   cfg.T + static_cast<long>(cfg.w) * tr.total_tau() + tr.fallback_sfo_calls,
               "sfo call accounting identity broken");
  }

  auto xs = tr.iterates();
  double regret = local_regret(xs, P.stream, P.reg, cfg.w, cfg.eta);
  double variation = trajectory_variation(xs, P.stream, cfg.w);
  const json& summary = require_key(j, "trace", "summary");
  require_num(summary.at("local_regret").get<double>(), regret, "summary.local_regret");
  require_num(summary.at("trajectory_variation").get<double>(), variation,
              "summary.trajectory_variation");

  auto fresh = bounds_for_run(solver, cfg, noise, P.reg, tr, P.stream.value_bound(), regret,
                              variation, require_iter);
  const json& stored = require_key(j, "trace", "bounds");
  require_eq(stored.size() == fresh.size(), "bounds: count mismatch");
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const json& bj = stored[i];
    require_eq(bj.at("name").get<std::string>() == fresh[i].name, "bounds: name mismatch");
    require_num(bj.at("measured").get<double>(), fresh[i].measured,
                "bounds." + fresh[i].name + ".measured");
    require_num(bj.at("bound").get<double>(), fresh[i].bound,
                "bounds." + fresh[i].name + ".bound");
    require_eq(bj.at("passed").get<bool>() == fresh[i].passed,
               "bounds." + fresh[i].name + ".passed");
  }
}

void verify_game_trace(const json& j) {
  const json& cj = require_key(j, "trace", "config");
  GameSpec game = game_from_json(require_key(cj, "config", "game"));
  StepConfig cfg = step_from_json(require_key(cj, "config", "step"));
  NoiseModel noise = noise_from_json(require_key(cj, "config", "noise"));
  std::string level = jstr(cj, "config", "trace_level", std::string("full"));
  GameRunResult run = run_simultaneous(game, jstr(cj, "config", "solver"), cfg, noise,
                                       juint64(cj, "config", "oracle_seed"));
  const int k = static_cast<int>(game.dims.size());

  const json& gi = require_key(j, "trace", "game_info");
  require_num(gi.at("L").get<double>(), game.L, "game_info.L");
  require_num(gi.at("M").get<double>(), game.M, "game_info.M");

  const json& history = require_key(j, "trace", "history");
  require_eq(static_cast<int>(history.size()) == run.history->rounds(), "history: count");
  for (int t = 1; t <= run.history->rounds(); ++t)
    require_vec(history[t - 1], run.history->at(t), "history[" + std::to_string(t) + "]");

  const json& players = require_key(j, "trace", "players");
  require_eq(static_cast<int>(players.size()) == k, "players: count");
  for (int i = 0; i < k; ++i) {
    const json& p = players[i];
    const SolverTrace& tr = run.traces[i];
    std::string at = "players[" + std::to_string(i) + "].";
    verify_trace_against(p, tr, level);
    auto xs = tr.iterates();
    require_num(p.at("summary").at("local_regret").get<double>(),
                local_regret(xs, run.streams[i], game.regs[i], cfg.w, cfg.eta),
                at + "summary.local_regret");
    require_num(p.at("summary").at("trajectory_variation").get<double>(),
                trajectory_variation(xs, run.streams[i], cfg.w),
                at + "summary.trajectory_variation");
  }

  const json& eq = require_key(j, "trace", "equilibrium");
  double c = 0.0;
  for (int i = 0; i < k; ++i)
    c = std::max(c, trajectory_variation(run.traces[i].iterates(), run.streams[i], cfg.w) /
                        cfg.T);
  double epsilon = 2.0 * k * cfg.T * (cfg.delta * cfg.delta + c) /
                   (double(cfg.T - cfg.w) * cfg.w * cfg.w);
  require_num(eq.at("c").get<double>(), c, "equilibrium.c");
  require_num(eq.at("epsilon").get<double>(), epsilon, "equilibrium.epsilon");
  int fired_at = first_equilibrium_round(run, game, cfg.eta, cfg.w, epsilon, cfg.w);
  require_eq(eq.at("first_fire_round").get<int>() == fired_at, "equilibrium.first_fire_round");
}

int verify_paths(const std::vector<std::string>& paths, std::ostream& log) {
  int failures = 0;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace: " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw SchemaError(path + ": " + e.what());
    }
    std::string schema = jstr(j, "trace", "schema");
    try {
      if (schema == "onprox-trace-v1")
        verify_single_trace(j);
      else if (schema == "onprox-game-trace-v1")
        verify_game_trace(j);
      else
        throw SchemaError(path + ": unknown schema \"" + schema + "\"");
      log << "verified " << path << ": OK\n";
    } catch (const VerifyFailure& e) {
      ++failures;
      log << "verified " << path << ": MISMATCH — " << e.what() << "\n";
    }
  }
  if (failures > 0) {
    log << failures << " of " << paths.size() << " trace(s) failed verification\n";
    return 2;
  }
  return 0;
}

fs::path resolve_out_dir(const std::string& flag_out, const ExperimentConfig& C) {
  if (!flag_out.empty()) return flag_out;
  if (!C.out.empty()) return C.out;
  if (const char* env = std::getenv("ONPROX_OUT")) return env;
  return "onprox-out";
}

}  // namespace

namespace cli {

int run(int argc, const char* const* argv) {
  CLI::App app{"Time-smoothed online proximal-gradient benchmark runner"};
  app.get_formatter()->column_width(30);

  std::string config_path, preset, out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> reps_override;
  int jobs = 1;
  std::vector<std::string> verify;
  bool list_presets = false;

  app.add_option("--config", config_path, "JSON experiment config file");
  app.add_option("--preset", preset, "named built-in experiment");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--reps", reps_override, "override the replication count");
  app.add_option("--out", out_dir, "output directory (default: config out, then $ONPROX_OUT)");
  app.add_option("--jobs", jobs, "worker threads for replications")->check(CLI::PositiveNumber);
  app.add_option("--verify", verify, "re-run and cross-check trace files, then exit");
  app.add_flag("--list-presets", list_presets, "print preset names and exit");

  try {
    std::vector<const char*> argvv(argv, argv + argc);
    app.parse(argc, argvv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (list_presets) {
      for (const auto& [n, text] : preset_table()) {
        (void)text;
        std::cout << n << "\n";
      }
      return 0;
    }
    if (!verify.empty()) return verify_paths(verify, std::cout);

    if (config_path.empty() == preset.empty()) {
      std::cerr << "error: exactly one of --config and --preset is required "
                   "(or --verify / --list-presets)\n";
      return 1;
    }
    json cfg_json;
    if (!preset.empty()) {
      cfg_json = preset_config(preset);
    } else {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw IoError("cannot open config: " + config_path);
      try {
        in >> cfg_json;
      } catch (const json::exception& e) {
        throw SchemaError(config_path + ": " + e.what());
      }
    }
    ExperimentConfig C = parse_config(cfg_json);
    if (seed_override) C.seed = *seed_override;
    if (reps_override) C.replications = *reps_override;
    fs::path out = resolve_out_dir(out_dir, C);

    if (!C.game.is_null()) return run_games(C, out, std::cout);
    if (!C.offline.is_null()) return run_offline(C, out, std::cout);
    return run_experiment(C, out, jobs, std::cout);
  } catch (const CappedRunError& e) {
    std::cerr << "capped run: " << e.what() << " (rounds completed: " << e.partial.rounds.size()
              << ", tau so far: " << e.partial.total_tau() << ")\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    if (std::isfinite(e.min_delta))
      std::cerr << "  minimal admissible delta: " << fmt17(e.min_delta) << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("onprox");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cli
}  // namespace onprox
