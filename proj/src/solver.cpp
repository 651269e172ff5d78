#include "onprox/solver.hpp"

#include <algorithm>
#include <cmath>

namespace onprox {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void validate_common(const StepConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw ConfigError("step config: eta must be > 0");
  if (!(cfg.L > 0.0)) throw ConfigError("step config: L must be > 0");
  if (!(cfg.eta < 1.0 / cfg.L))
    throw ConfigError("step size precondition failed: need eta < 1/L (eta=" + fmt(cfg.eta) +
                      ", 1/L=" + fmt(1.0 / cfg.L) + ")");
  if (cfg.w < 1) throw ConfigError("step config: w must be >= 1");
  if (!(cfg.delta > 0.0)) throw ConfigError("step config: delta must be > 0");
  if (cfg.T < 0) throw ConfigError("step config: T must be >= 0");
  if (cfg.max_inner < 0) throw ConfigError("step config: max_inner must be >= 0");
  if (cfg.T > 0 && cfg.w > cfg.T)
    throw ConfigError("step config: w (" + std::to_string(cfg.w) + ") must be <= T (" +
                      std::to_string(cfg.T) + ")");
  if (!(cfg.sigma >= 0.0)) throw ConfigError("step config: sigma must be >= 0");
}

}  // namespace

StepConfig validate_config_alg1(StepConfig cfg) {
  validate_common(cfg);
  return cfg;
}

StepConfig validate_config_alg2(StepConfig cfg, const NoiseModel& noise,
                                bool require_iteration_bound) {
  validate_common(cfg);  // eta >= 1/L is rejected here, before any delta test
  cfg.sigma = noise.sigma;
  const double d2 = cfg.delta * cfg.delta;
  const double need = 2.0 * cfg.sigma * cfg.sigma / (cfg.eta * (1.0 - cfg.eta * cfg.L));
  if (!(d2 > need))
    throw ConfigError("stochastic admissibility failed: need delta^2 > 2*sigma^2/(eta*(1-eta*L)) "
                      "= " + fmt(need) + " but delta^2 = " + fmt(d2) +
                      "; minimal admissible delta (exclusive) = " + fmt(std::sqrt(need)),
                      std::sqrt(need));
  if (require_iteration_bound) {
    if (!noise.hard_bounded())
      throw ConfigError("iteration bound requires a hard-bounded noise model (got " +
                        noise.descriptor() + ")");
    if (!(cfg.eta < 1.0 / (cfg.L + 1.0)))
      throw ConfigError("iteration-bound step size failed: need eta < 1/(L+1) (eta=" +
                        fmt(cfg.eta) + ", 1/(L+1)=" + fmt(1.0 / (cfg.L + 1.0)) + ")");
    const double need2 =
        cfg.sigma * cfg.sigma / (cfg.eta * (1.0 - cfg.eta * (cfg.L + 1.0)));
    if (!(d2 > need2))
      throw ConfigError("iteration-bound admissibility failed: need delta^2 > "
                        "sigma^2/(eta*(1-eta*(L+1))) = " + fmt(need2) + " but delta^2 = " +
                        fmt(d2) + "; minimal admissible delta (exclusive) = " +
                        fmt(std::sqrt(need2)),
                        std::sqrt(need2));
  }
  return cfg;
}

long resolve_max_inner(const StepConfig& cfg, const Regularizer& g, const Vec& x1, double M,
                       bool stochastic) {
  if (cfg.max_inner > 0) return cfg.max_inner;
  const double gx1 = g.value(x1);
  const double w2 = static_cast<double>(cfg.w) * cfg.w;
  const double d2 = cfg.delta * cfg.delta;
  double bound = 2.0 * w2 * (gx1 + 2.0 * M) / ((2.0 - cfg.eta * cfg.L) * cfg.eta * d2);
  if (stochastic) {
    const double denom = (1.0 - cfg.eta * (cfg.L + 1.0)) * cfg.eta * d2 - cfg.sigma * cfg.sigma;
    if (denom > 0.0) bound = std::max(bound, 2.0 * w2 * (gx1 + 2.0 * M) / denom);
  }
  const double capped = std::min(std::ceil(10.0 * bound), 1e15);
  return std::max<long>(1000, static_cast<long>(capped));
}

void alg1_round(const LossStream& s, const Regularizer& g, const StepConfig& cfg, int t, Vec& x,
                SolverTrace& trace, bool check_decrease) {
  const double thresh = cfg.delta / cfg.w;
  const long cap = cfg.max_inner > 0 ? cfg.max_inner
                                     : resolve_max_inner(cfg, g, x, s.value_bound(), false);
  RoundRecord rec;
  rec.t = t;
  rec.x = x;
  double h_cur = check_decrease ? sliding_average_value(s, t, cfg.w, x) + g.value(x) : 0.0;
  bool first = true;
  for (;;) {
    const Vec d = sliding_average_grad(s, t, cfg.w, x);
    rec.oracle_calls += 1;  // one exact sliding-average gradient evaluation
    const Vec p = prox_grad_map(g, x, d, cfg.eta);
    const double rn = ((x - p) / cfg.eta).norm();
    if (first) {
      rec.entry_residual_sq = rn * rn;
      first = false;
    }
    if (!(rn > thresh)) {  // strict ">" continues; ties exit
      rec.residual_at_exit = rn;
      break;
    }
    if (rec.tau >= cap) {
      rec.residual_at_exit = rn;
      trace.rounds.push_back(std::move(rec));
      trace.capped = true;
      trace.x_final = x;
      throw CappedRunError("round " + std::to_string(t) + ": inner loop hit safety cap " +
                               std::to_string(cap) + " (residual " + fmt(rn) + ", target " +
                               fmt(thresh) + "); delta/eta likely mis-set",
                           trace);
    }
    if (check_decrease) {
      const double h_new = sliding_average_value(s, t, cfg.w, p) + g.value(p);
      const double dec = h_cur - h_new;
      const double per_delta =
          (cfg.eta - cfg.eta * cfg.eta * cfg.L / 2.0) * cfg.delta * cfg.delta /
          (static_cast<double>(cfg.w) * cfg.w);
      const double per_residual = cfg.eta * (1.0 - cfg.eta * cfg.L / 2.0) * rn * rn;
      if (dec < std::max(per_delta, per_residual) - 1e-9)
        throw InvariantError("sufficient decrease violated at round " + std::to_string(t) +
                             " inner step " + std::to_string(rec.tau + 1) + ": decrease " +
                             fmt(dec) + " < required " + fmt(std::max(per_delta, per_residual)));
      rec.inner_decrease.push_back(dec);
      h_cur = h_new;
    }
    x = p;
    ++rec.tau;
  }
  trace.rounds.push_back(std::move(rec));
  trace.x_final = x;
}

void alg2_round(const LossStream& s, const Regularizer& g, const StepConfig& cfg, int t, Vec& x,
                Sfo& oracle, WindowState& win, SolverTrace& trace) {
  const double thresh = cfg.delta / cfg.w;
  const long cap = cfg.max_inner > 0 ? cfg.max_inner
                                     : resolve_max_inner(cfg, g, x, s.value_bound(), true);
  oracle.begin_round(t, cfg.w);
  RoundRecord rec;
  rec.t = t;
  rec.x = x;

  // step 2: one sample of grad f_t at x_t
  GradientSample head = oracle.sample(s, t, 0, x);
  rec.oracle_calls += head.calls;

  // step 3: incremental aggregate; the t-w estimate comes from the window
  // cache (the fallback draw is provably unreachable but kept per contract)
  auto fallback = [&]() {
    GradientSample fs = oracle.sample(s, t - cfg.w, 0, x);
    rec.oracle_calls += fs.calls;
    return fs.grad;
  };
  Vec G = win.slide(t, x, head.grad, fallback, &trace.fallback_sfo_calls);

  // steps 4-5: inner loop on the surrogate gradient
  Vec y = x;
  int k = 1;
  for (;;) {
    const Vec p = prox_grad_map(g, y, G, cfg.eta);  // test prox == step 5(a) update
    const double rn = ((y - p) / cfg.eta).norm();
    if (k == 1) rec.entry_residual_sq = rn * rn;
    if (!(rn > thresh)) {
      rec.residual_at_exit = rn;
      break;
    }
    if (rec.tau >= cap) {
      rec.residual_at_exit = rn;
      trace.rounds.push_back(std::move(rec));
      trace.capped = true;
      trace.x_final = x;
      throw CappedRunError("round " + std::to_string(t) + ": stochastic inner loop hit safety "
                               "cap " + std::to_string(cap) + " (residual " + fmt(rn) +
                               ", target " + fmt(thresh) + "); delta too small for sigma?",
                           trace);
    }
    y = p;  // 5(a)
    std::vector<Vec> fresh(cfg.w);
    for (int j = 0; j < cfg.w; ++j) {  // 5(b): resample the whole window at y
      const int i = t - cfg.w + 1 + j;
      GradientSample gs = oracle.sample(s, i, k, y);
      rec.oracle_calls += gs.calls;
      fresh[j] = std::move(gs.grad);
    }
    G = win.refresh(t, y, fresh);  // 5(c): direct mean
    ++k;
    ++rec.tau;
  }

  // step 6: x_{t+1} = y^k; the carried estimate of grad S_t(x_{t+1}) is the
  // window aggregate, which equals the exit G by construction.
  x = y;
  trace.rounds.push_back(std::move(rec));
  trace.x_final = x;
}

namespace {

Vec resolve_start(const LossStream& s, const Regularizer& g, const std::optional<Vec>& x1) {
  Vec x = x1 ? *x1 : g.project_start(s.dimension());
  if (x.size() != s.dimension())
    throw std::invalid_argument("solver: x1 dimension mismatch with stream");
  ensure_finite(x, "solver x1");
  if (!std::isfinite(g.value(x)))
    throw std::invalid_argument("solver: x1 lies outside dom g");
  return x;
}

}  // namespace

SolverTrace run_alg1(const LossStream& s, const Regularizer& g, StepConfig cfg,
                     std::optional<Vec> x1, bool check_decrease) {
  cfg = validate_config_alg1(cfg);
  if (cfg.T == 0) cfg.T = s.horizon();
  if (cfg.T > s.horizon())
    throw ConfigError("solver: T exceeds the stream horizon");
  if (cfg.w > cfg.T) throw ConfigError("step config: w must be <= T");
  Vec x = resolve_start(s, g, x1);
  cfg.max_inner = resolve_max_inner(cfg, g, x, s.value_bound(), false);

  SolverTrace tr;
  tr.solver = "alg1";
  tr.T = cfg.T;
  tr.w = cfg.w;
  tr.eta = cfg.eta;
  tr.delta = cfg.delta;
  tr.sigma = 0.0;
  tr.x1 = x;
  tr.rounds.reserve(cfg.T);
  for (int t = 1; t <= cfg.T; ++t) {
    s.reveal(t);
    alg1_round(s, g, cfg, t, x, tr, check_decrease);
  }
  return tr;
}

SolverTrace run_alg2(const LossStream& s, const Regularizer& g, StepConfig cfg,
                     const NoiseModel& noise, std::uint64_t oracle_seed, std::optional<Vec> x1,
                     int player) {
  cfg = validate_config_alg2(cfg, noise, false);
  if (cfg.T == 0) cfg.T = s.horizon();
  if (cfg.T > s.horizon())
    throw ConfigError("solver: T exceeds the stream horizon");
  if (cfg.w > cfg.T) throw ConfigError("step config: w must be <= T");
  Vec x = resolve_start(s, g, x1);
  cfg.max_inner = resolve_max_inner(cfg, g, x, s.value_bound(), true);

  SolverTrace tr;
  tr.solver = "alg2";
  tr.T = cfg.T;
  tr.w = cfg.w;
  tr.eta = cfg.eta;
  tr.delta = cfg.delta;
  tr.sigma = cfg.sigma;
  tr.x1 = x;
  tr.rounds.reserve(cfg.T);
  Sfo oracle(oracle_seed, noise.scaled(cfg.w), player);  // queries at sigma/w
  WindowState win(cfg.w, s.dimension());
  for (int t = 1; t <= cfg.T; ++t) {
    s.reveal(t);
    alg2_round(s, g, cfg, t, x, oracle, win, tr);
  }
  return tr;
}

}  // namespace onprox
