#include "onprox/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace onprox {

double local_regret(const std::vector<Vec>& xs, const LossStream& s, const Regularizer& g,
                    int w, double eta) {
  if (w < 1) throw std::invalid_argument("local_regret: w must be >= 1");
  if (static_cast<int>(xs.size()) > s.horizon())
    throw std::out_of_range("local_regret: trajectory longer than the stream horizon");
  double acc = 0.0;
  for (std::size_t idx = 0; idx < xs.size(); ++idx) {
    const int t = static_cast<int>(idx) + 1;
    acc += residual_norm_sq(g, xs[idx], sliding_average_grad(s, t, w, xs[idx]), eta);
  }
  return acc;
}

double classical_regret(const std::vector<Vec>& xs, const LossStream& s, const Regularizer& g,
                        double eta) {
  return local_regret(xs, s, g, 1, eta);
}

double bound_thm_regret_det(int T, int w, double delta, double variation) {
  if (T < 1 || w < 1 || !(delta > 0.0) || variation < 0.0)
    throw std::invalid_argument("bound_thm_regret_det: bad arguments");
  const double w2 = static_cast<double>(w) * w;
  return (2.0 / w2) * (T * delta * delta + variation);
}

double bound_thm_queries_det(int w, double g_x1, double M, double eta, double L, double delta) {
  if (w < 1 || !(delta > 0.0) || !(L > 0.0) || g_x1 < 0.0 || M < 0.0)
    throw std::invalid_argument("bound_thm_queries_det: bad arguments");
  if (!(eta > 0.0 && eta < 1.0 / L))
    throw std::invalid_argument("bound_thm_queries_det: requires eta in (0, 1/L)");
  const double w2 = static_cast<double>(w) * w;
  return 2.0 * w2 * (g_x1 + 2.0 * M) / ((2.0 - eta * L) * eta * delta * delta);
}

double bound_thm_regret_stoch(int T, int w, double delta, double sigma, double variation) {
  if (T < 1 || w < 1 || !(delta > 0.0) || sigma < 0.0 || variation < 0.0)
    throw std::invalid_argument("bound_thm_regret_stoch: bad arguments");
  const double w2 = static_cast<double>(w) * w;
  return 2.0 * (T / w2) * (delta * delta + 7.0 * sigma * sigma) + (6.0 / w2) * variation;
}

double bound_thm_queries_stoch(int w, double g_x1, double M, double eta, double L, double delta,
                               double sigma) {
  if (w < 1 || !(delta > 0.0) || !(L > 0.0) || g_x1 < 0.0 || M < 0.0 || sigma < 0.0)
    throw std::invalid_argument("bound_thm_queries_stoch: bad arguments");
  if (!(eta > 0.0 && eta < 1.0 / (L + 1.0)))
    throw ConfigError("bound_thm_queries_stoch: requires eta in (0, 1/(L+1))");
  const double denom = (1.0 - eta * (L + 1.0)) * eta * delta * delta - sigma * sigma;
  if (!(denom > 0.0))
    throw ConfigError("bound_thm_queries_stoch: nonpositive denominator "
                      "(1-eta(L+1)) eta delta^2 - sigma^2; raise delta",
                      std::sqrt(sigma * sigma / ((1.0 - eta * (L + 1.0)) * eta)));
  const double w2 = static_cast<double>(w) * w;
  return 2.0 * w2 * (g_x1 + 2.0 * M) / denom;
}

double bound_tail_prob(double h1_t, double M, int w, double eta, double L, double delta,
                       double sigma, long K) {
  if (K < 1) throw std::invalid_argument("bound_tail_prob: K must be >= 1");
  if (w < 1 || M < 0.0 || sigma < 0.0) throw std::invalid_argument("bound_tail_prob: bad arguments");
  const double denom = eta * (1.0 - eta * L) * delta * delta - 2.0 * sigma * sigma;
  if (!(denom > 0.0))
    throw ConfigError("bound_tail_prob: requires eta(1-eta L) delta^2 > 2 sigma^2",
                      std::sqrt(2.0 * sigma * sigma / (eta * (1.0 - eta * L))));
  const double w2 = static_cast<double>(w) * w;
  return (h1_t + M) * w2 / (2.0 * denom * static_cast<double>(K));
}

OfflineParams offline_params(double epsilon, double delta, double sigma, double c) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("offline_params: epsilon must be > 0");
  if (!(delta > 0.0) || sigma < 0.0 || c < 0.0)
    throw std::invalid_argument("offline_params: bad arguments");
  OfflineParams p;
  const double d2 = delta * delta;
  p.w = std::max(1, static_cast<int>(
                        std::ceil(2.0 * std::sqrt((d2 + 7.0 * sigma * sigma + c) / epsilon))));
  p.T = 2 * p.w;
  p.w_proof_det =
      std::max(1, static_cast<int>(std::ceil(std::sqrt(2.0 * (d2 + c) / epsilon))));
  return p;
}

double offline_sfo_budget(const OfflineParams& p, double g_x1, double M, double eta, double L,
                          double delta, double sigma) {
  return p.T + p.w * bound_thm_queries_stoch(p.w, g_x1, M, eta, L, delta, sigma);
}

int sample_tstar(int w, int T, SplitMix64& rng) {
  if (w < 1 || w > T) throw std::invalid_argument("sample_tstar: need 1 <= w <= T");
  const int count = T - w + 1;
  const int offset = std::min(count - 1, static_cast<int>(rng.uniform() * count));
  return w + offset;
}

}  // namespace onprox
