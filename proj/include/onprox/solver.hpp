#pragma once

#include <cstdint>
#include <optional>

#include "onprox/oracle.hpp"
#include "onprox/regularizer.hpp"
#include "onprox/stream.hpp"
#include "onprox/trace.hpp"
#include "onprox/types.hpp"

namespace onprox {

struct StepConfig {
  double eta = 0.1;   // prox step size
  double L = 1.0;     // smoothness constant used for validation and bounds
  int w = 1;          // window length
  double delta = 0.1; // inner loops run until ||P|| <= delta/w
  double sigma = 0.0; // SFO noise parameter (queries go out at sigma/w)
  int T = 0;          // rounds to run; 0 = full stream horizon
  long max_inner = 0; // per-round inner-step safety cap; 0 = 10x the query bound
};

// A per-round inner loop exceeded the safety cap. Carries the trace up to and
// including the partially executed round.
struct CappedRunError : std::runtime_error {
  CappedRunError(const std::string& msg, SolverTrace partial_)
      : std::runtime_error(msg), partial(std::move(partial_)) {}
  SolverTrace partial;
};

// Checks eta in (0, 1/L), basic positivity, and w <= T.
StepConfig validate_config_alg1(StepConfig cfg);

// Additionally enforces the stochastic admissibility delta^2 >
// 2 sigma^2/(eta (1 - eta L)); with `require_iteration_bound` also
// eta in (0, 1/(L+1)) and delta^2 > sigma^2/(eta (1 - eta (L+1))) (the
// bounded-noise iteration-bound regime, which also requires a hard-bounded
// noise model). Throws ConfigError naming the failed inequality and the
// minimal admissible delta.
StepConfig validate_config_alg2(StepConfig cfg, const NoiseModel& noise,
                                bool require_iteration_bound = false);

// Per-round routines shared by the single-agent drivers and the games driver
// (which interleaves rounds across players). Both append a RoundRecord to
// `trace` and advance x to x_{t+1}; on a cap hit they record the partial
// round, mark the trace capped, and throw CappedRunError.
void alg1_round(const LossStream& s, const Regularizer& g, const StepConfig& cfg, int t, Vec& x,
                SolverTrace& trace, bool check_decrease);
void alg2_round(const LossStream& s, const Regularizer& g, const StepConfig& cfg, int t, Vec& x,
                Sfo& oracle, WindowState& win, SolverTrace& trace);

// Deterministic time-smoothed online prox-grad descent. Per round t: start
// from x_t and apply prox-grad steps on the sliding-average gradient until
// ||P_eta|| <= delta/w (strict ">" keeps ties out of the loop). When
// `check_decrease` is set, every inner step asserts the sufficient-decrease
// certificate (throws InvariantError on violation) and logs the decreases.
SolverTrace run_alg1(const LossStream& s, const Regularizer& g, StepConfig cfg,
                     std::optional<Vec> x1 = std::nullopt, bool check_decrease = false);

// Stochastic variant: one SFO sample of grad f_t(x_t) per round feeding an
// incremental window aggregate; inner steps on the surrogate gradient with all
// w window estimates resampled at every new inner point. SFO queries are
// issued at noise scale sigma/w. Accounting: sfo calls = T + w * total tau.
SolverTrace run_alg2(const LossStream& s, const Regularizer& g, StepConfig cfg,
                     const NoiseModel& noise, std::uint64_t oracle_seed,
                     std::optional<Vec> x1 = std::nullopt, int player = 0);

// Resolved per-round inner cap: cfg.max_inner if set, else 10x the relevant
// total-query theorem bound (clamped to at least 1000).
long resolve_max_inner(const StepConfig& cfg, const Regularizer& g, const Vec& x1, double M,
                       bool stochastic);

}  // namespace onprox
