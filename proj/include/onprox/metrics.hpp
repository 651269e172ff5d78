#pragma once

#include <vector>

#include "onprox/regularizer.hpp"
#include "onprox/stream.hpp"
#include "onprox/types.hpp"

namespace onprox {

// Sum over rounds of ||P_eta(x_t; grad S_{t,w}(x_t))||^2 with exact stream
// gradients (also for stochastic traces: the metric always uses true
// gradients). xs[t-1] = x_t.
double local_regret(const std::vector<Vec>& xs, const LossStream& s, const Regularizer& g,
                    int w, double eta);

// The w = 1 case (the classical stationarity-based regret).
double classical_regret(const std::vector<Vec>& xs, const LossStream& s, const Regularizer& g,
                        double eta);

// Deterministic regret bound (2/w^2)(T delta^2 + V).
double bound_thm_regret_det(int T, int w, double delta, double variation);

// Deterministic total-query bound 2 w^2 (g(x1) + 2M) / ((2 - eta L) eta delta^2).
double bound_thm_queries_det(int w, double g_x1, double M, double eta, double L, double delta);

// Expected-regret bound 2 (T/w^2)(delta^2 + 7 sigma^2) + (6/w^2) V.
double bound_thm_regret_stoch(int T, int w, double delta, double sigma, double variation);

// Bounded-noise total-query bound 2 w^2 (g(x1)+2M) / ((1-eta(L+1)) eta delta^2 - sigma^2);
// requires eta < 1/(L+1) and a positive denominator.
double bound_thm_queries_stoch(int w, double g_x1, double M, double eta, double L, double delta,
                               double sigma);

// Tail formula (h1_t + M) w^2 / (2 (eta (1 - eta L) delta^2 - 2 sigma^2) K); a
// probability bound reported as-is (may exceed 1). h1_t is the round's initial
// surrogate objective value S_t(y^1)+g(y^1).
double bound_tail_prob(double h1_t, double M, int w, double eta, double L, double delta,
                       double sigma, long K);

struct OfflineParams {
  int w = 1;            // ceil(2 sqrt((delta^2 + 7 sigma^2 + c) / eps))
  int T = 2;            // 2w
  int w_proof_det = 1;  // ceil(sqrt(2 (delta^2 + c) / eps)), the recorded
                        // deterministic proof-side variant (not used to run)
};

// Window/horizon choice for the offline reduction; c is the variation budget
// constant (V <= cT/6 stochastic, V <= cT deterministic).
OfflineParams offline_params(double epsilon, double delta, double sigma, double c);

// Report-only SFO budget T + w * (bounded-noise query bound) for the offline
// configuration (the O(M sigma eps^{-3/2}) constant made concrete).
double offline_sfo_budget(const OfflineParams& p, double g_x1, double M, double eta, double L,
                          double delta, double sigma);

// Uniform draw from {w, w+1, ..., T}.
int sample_tstar(int w, int T, SplitMix64& rng);

}  // namespace onprox
