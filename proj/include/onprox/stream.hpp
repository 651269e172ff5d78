#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "onprox/types.hpp"

namespace onprox {

// A finite-horizon sequence of smooth losses f_1..f_T revealed one round at a
// time. f_t for t <= 0 is identically zero (so sliding averages near the start
// just see fewer terms). Querying a round beyond the revealed horizon is a
// protocol error; copies share the reveal state.
class LossStream {
 public:
  using ValueFn = std::function<double(int, const Vec&)>;
  using GradFn = std::function<Vec(int, const Vec&)>;
  using SampleFn = std::function<Vec(SplitMix64&)>;

  LossStream(int n, int T, double L, double M, std::string descriptor, ValueFn value,
             GradFn grad, SampleFn domain_sampler = nullptr);

  int dimension() const { return n_; }
  int horizon() const { return T_; }
  double smoothness() const { return L_; }    // L: Lipschitz constant of the gradients
  double value_bound() const { return M_; }   // M: sup_t sup_{dom g} |f_t|
  const std::string& descriptor() const { return descriptor_; }

  void reveal(int t) const;  // monotone: raises the revealed horizon to at least t
  void reveal_all() const { reveal(T_); }
  int revealed() const { return revealed_->load(); }

  double value(int t, const Vec& x) const;
  Vec grad(int t, const Vec& x) const;

  bool has_domain_sampler() const { return static_cast<bool>(sample_); }
  Vec sample_domain(SplitMix64& rng) const;

 private:
  void check_query(int t, const Vec& x) const;

  int n_, T_;
  double L_, M_;
  std::string descriptor_;
  ValueFn value_;
  GradFn grad_;
  SampleFn sample_;
  std::shared_ptr<std::atomic<int>> revealed_;
};

// (1/w) * sum_{i=t-w+1..t} of grad/value, zero terms for i <= 0. Fixed
// ascending summation order so independent recomputations agree bitwise.
Vec sliding_average_grad(const LossStream& s, int t, int w, const Vec& x);
double sliding_average_value(const LossStream& s, int t, int w, const Vec& x);

// sum_t ||grad f_t(x_t) - grad f_{t-w}(x_t)||^2 along a trajectory
// (xs[t-1] = x_t). The comparator-free variation used by the regret bounds.
double trajectory_variation(const std::vector<Vec>& xs, const LossStream& s, int w);

// Sampled estimate of the sup-based variation sum_t sup_x ||grad f_t(x) -
// grad f_{t-w}(x)||^2 over the stream's domain sampler. A lower bound on the
// true sup; reported as an estimate only.
double variation_sup_estimate(const LossStream& s, int w, int num_points, std::uint64_t seed);

// Ring buffer of per-function gradient estimates at a common anchor point
// with the running aggregate G (the stochastic solver's estimate of the
// sliding-average gradient). Estimates for rounds i <= 0 are implicit exact
// zeros. The aggregate always equals the mean of the live estimates whenever
// the buffer is fully anchored (checked in tests to 1e-12).
class WindowState {
 public:
  WindowState(int w, int n);

  // Round-t aggregate update G += (1/w)(sample_t - estimate_{t-w}(anchor)).
  // The t-w estimate is exact zero for t-w <= 0; if it is missing at this
  // anchor (cannot happen under the solver's induction, see solver module)
  // `fallback` supplies a fresh sample and `fallback_uses` is bumped.
  const Vec& slide(int t, const Vec& anchor, const Vec& sample_t,
                   const std::function<Vec()>& fallback, long* fallback_uses);

  // Replace all live estimates with fresh samples at a new anchor; the
  // aggregate becomes the direct mean. samples[j] estimates grad f_i at the
  // anchor for i = t-w+1+j; entries with i <= 0 are ignored (zero functions).
  const Vec& refresh(int t, const Vec& anchor, const std::vector<Vec>& samples);

  const Vec& aggregate() const { return agg_; }
  int window() const { return w_; }

  // |aggregate - direct mean of live estimates| at round t; NaN when some
  // window slot is missing or off-anchor. Test hook for the 1e-12 invariant.
  double aggregate_drift(int t) const;

 private:
  bool slot_valid(int i, const Vec& anchor) const;

  int w_, n_;
  Vec agg_;
  std::vector<Vec> slots_;
  std::vector<int> slot_round_;  // 0 = empty
  Vec anchor_;
  bool anchored_ = false;
};

// --- stream factories ------------------------------------------------------

// Scalar adversarial stream f_t(x) = s_t * x with i.i.d. random signs; the
// worst case for w=1 smoothing. True L is 0; stores L=1 so eta in (0, 1/L)
// stays meaningful. M = 1 on [-1, 1].
LossStream make_sign_flip_stream(int T, std::uint64_t seed);

struct QuadraticDriftOptions {
  int n = 10;
  int T = 200;
  double drift_period = 50.0;  // <= 0 or +inf: no drift (offline stream)
  std::uint64_t seed = 1;
  double box_radius = 1.0;  // intended domain: [-r, r]^n
};

// f_t(x) = 0.5 x'A_t x + b_t'x with A_t, b_t drifting sinusoidally around a
// random base. L is the exact max spectral norm over rounds; M is the
// analytic bound max_t(0.5*||A_t||*R^2 + ||b_t||*R), R = r*sqrt(n).
LossStream make_quadratic_drift_stream(const QuadraticDriftOptions& opts);

// f_t(x) = f(x) + xi_t'x where f is round 1 of `base` (base must be
// round-independent) and xi_t ~ N(0, (sigma^2/n) I), so E||xi_t||^2 = sigma^2.
// Realizations are pure functions of (seed, t): re-querying a round re-derives
// the same function. M is the loose bound base.M + 5*sigma*domain_radius.
LossStream make_stationary_stochastic_stream(const LossStream& base, double sigma, int T,
                                             std::uint64_t seed, double domain_radius);

}  // namespace onprox
