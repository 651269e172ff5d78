#include "onprox/ontap.hpp"

#include <cmath>
#include <memory>

namespace onprox {

namespace {
// The smooth loss is a polynomial in x, defined on all of R^n; simplex
// feasibility is the regularizer's responsibility, so only dimensions are
// checked here (finite-difference probes legitimately step off the simplex).
void check_profile(const std::vector<OdPair>& ods, const Vec& x) {
  if (x.size() != total_paths(ods))
    throw std::invalid_argument("ontap: profile dimension mismatch");
}

void check_lambda(const std::vector<OdPair>& ods, const std::vector<double>& lambda) {
  if (lambda.size() != ods.size())
    throw std::invalid_argument("ontap: demand vector length mismatch");
  for (double l : lambda)
    if (!(l >= 0.0) || !std::isfinite(l))
      throw std::invalid_argument("ontap: demands must be finite and >= 0");
}

// Unweighted allocation carried by each edge: s_e = sum_i sum_{p ni e} x_{i,p}.
std::vector<double> edge_allocation(const Network& net, const std::vector<OdPair>& ods,
                                    const Vec& x) {
  std::vector<double> s(net.edges.size(), 0.0);
  int off = 0;
  for (const OdPair& od : ods) {
    for (const auto& path : od.paths) {
      for (int e : path) s[e] += x[off];
      ++off;
    }
  }
  return s;
}
}  // namespace

std::vector<double> DemandProcess::lambda(int t) const {
  if (base.size() != amplitude.size())
    throw std::invalid_argument("demand: base/amplitude length mismatch");
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    double v = base[i];
    if (period > 0.0 && std::isfinite(period)) {
      const double phase = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(base.size());
      v += amplitude[i] * std::sin(2.0 * M_PI * t / period + phase);
    }
    if (noise_amplitude > 0.0) {
      SplitMix64 rng = keyed_rng(seed, RngTag::demand,
                                 {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)});
      v += rng.uniform(-noise_amplitude, noise_amplitude);
    }
    out[i] = std::max(0.0, v);
  }
  return out;
}

int total_paths(const std::vector<OdPair>& ods) {
  int n = 0;
  for (const OdPair& od : ods) n += static_cast<int>(od.paths.size());
  return n;
}

std::vector<Block> path_blocks(const std::vector<OdPair>& ods) {
  std::vector<Block> blocks;
  int off = 0;
  for (const OdPair& od : ods) {
    blocks.push_back({off, static_cast<int>(od.paths.size())});
    off += static_cast<int>(od.paths.size());
  }
  return blocks;
}

void validate_instance(const OntapInstance& inst) {
  const int V = inst.net.vertices;
  const int E = static_cast<int>(inst.net.edges.size());
  if (V < 1 || E < 1) throw std::invalid_argument("ontap: need at least one vertex and edge");
  for (const auto& [tail, head] : inst.net.edges)
    if (tail < 0 || tail >= V || head < 0 || head >= V)
      throw std::invalid_argument("ontap: edge endpoint out of range");
  if (static_cast<int>(inst.bpr.a.size()) != E || static_cast<int>(inst.bpr.b.size()) != E)
    throw std::invalid_argument("ontap: BPR coefficient count must match edge count");
  for (int e = 0; e < E; ++e)
    if (inst.bpr.a[e] < 0.0 || inst.bpr.b[e] < 0.0)
      throw std::invalid_argument("ontap: BPR coefficients must be >= 0");
  if (inst.ods.empty()) throw std::invalid_argument("ontap: need at least one OD pair");
  if (inst.mu < 0.0) throw std::invalid_argument("ontap: mu must be >= 0");
  for (const OdPair& od : inst.ods) {
    if (od.origin < 0 || od.origin >= V || od.destination < 0 || od.destination >= V)
      throw std::invalid_argument("ontap: OD endpoint out of range");
    if (od.paths.empty()) throw std::invalid_argument("ontap: OD pair with no paths");
    for (const auto& path : od.paths) {
      if (path.empty()) throw std::invalid_argument("ontap: empty path");
      int at = od.origin;
      for (int e : path) {
        if (e < 0 || e >= E) throw std::invalid_argument("ontap: path edge id out of range");
        if (inst.net.edges[e].first != at)
          throw std::invalid_argument("ontap: path is not a consistent walk from its origin");
        at = inst.net.edges[e].second;
      }
      if (at != od.destination)
        throw std::invalid_argument("ontap: path does not end at the OD destination");
    }
  }
}

std::vector<double> edge_loads(const Network& net, const std::vector<OdPair>& ods, const Vec& x,
                               const std::vector<double>& lambda) {
  check_lambda(ods, lambda);
  if (x.size() != total_paths(ods))
    throw std::invalid_argument("ontap: profile dimension mismatch");
  std::vector<double> y(net.edges.size(), 0.0);
  int off = 0;
  for (std::size_t i = 0; i < ods.size(); ++i) {
    for (const auto& path : ods[i].paths) {
      const double flow = lambda[i] * x[off];
      for (int e : path) y[e] += flow;
      ++off;
    }
  }
  return y;
}

double path_cost(const Network& net, const std::vector<OdPair>& ods,
                 const BprCoefficients& bpr, const Vec& x, const std::vector<double>& lambda,
                 int global_path_id) {
  if (global_path_id < 0 || global_path_id >= total_paths(ods))
    throw std::out_of_range("ontap: path id out of range");
  const std::vector<double> y = edge_loads(net, ods, x, lambda);
  int off = 0;
  for (const OdPair& od : ods) {
    for (const auto& path : od.paths) {
      if (off == global_path_id) {
        double c = 0.0;
        for (int e : path) {
          const double ye = y[e];
          c += bpr.a[e] + bpr.b[e] * ye * ye * ye * ye;
        }
        return c;
      }
      ++off;
    }
  }
  throw std::logic_error("ontap: unreachable");
}

double ontap_smooth_loss(const Network& net, const std::vector<OdPair>& ods,
                         const BprCoefficients& bpr, const Vec& x,
                         const std::vector<double>& lambda) {
  check_profile(ods, x);
  check_lambda(ods, lambda);
  const std::vector<double> y = edge_loads(net, ods, x, lambda);
  const std::vector<double> s = edge_allocation(net, ods, x);
  // sum_i sum_p x_{i,p} l_p  ==  sum_e l_e(y_e) s_e after swapping sums
  double acc = 0.0;
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const double ye = y[e];
    acc += (bpr.a[e] + bpr.b[e] * ye * ye * ye * ye) * s[e];
  }
  return acc;
}

Vec ontap_smooth_grad(const Network& net, const std::vector<OdPair>& ods,
                      const BprCoefficients& bpr, const Vec& x,
                      const std::vector<double>& lambda) {
  check_profile(ods, x);
  check_lambda(ods, lambda);
  const std::vector<double> y = edge_loads(net, ods, x, lambda);
  const std::vector<double> s = edge_allocation(net, ods, x);
  std::vector<double> edge_cost(net.edges.size()), coupling(net.edges.size());
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const double ye = y[e];
    edge_cost[e] = bpr.a[e] + bpr.b[e] * ye * ye * ye * ye;
    coupling[e] = 4.0 * bpr.b[e] * ye * ye * ye * s[e];
  }
  Vec grad(x.size());
  int off = 0;
  for (std::size_t i = 0; i < ods.size(); ++i) {
    for (const auto& path : ods[i].paths) {
      double direct = 0.0, via_loads = 0.0;
      for (int e : path) {
        direct += edge_cost[e];
        via_loads += coupling[e];
      }
      grad[off] = direct + lambda[i] * via_loads;
      ++off;
    }
  }
  return grad;
}

OntapInstance default_instance() {
  OntapInstance inst;
  inst.net.vertices = 6;
  inst.net.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {1, 2}, {3, 5}, {2, 4}, {4, 5}, {3, 4}};
  inst.bpr.a = {1.0, 1.2, 0.8, 1.0, 0.6, 1.4, 1.1, 0.9, 0.7};
  inst.bpr.b = {0.10, 0.08, 0.12, 0.10, 0.06, 0.09, 0.11, 0.07, 0.05};
  inst.ods = {
      {0, 5, {{0, 2, 5}, {1, 3, 5}, {1, 6, 7}, {0, 4, 6, 7}}},
      {1, 5, {{2, 5}, {4, 6, 7}, {2, 8, 7}}},
      {0, 4, {{1, 6}, {0, 2, 8}, {1, 3, 8}}},
  };
  inst.mu = 0.1;
  validate_instance(inst);
  return inst;
}

DemandProcess default_demand(const OntapInstance& inst, double period, std::uint64_t seed) {
  DemandProcess d;
  d.base = {1.0, 1.5, 0.8};
  d.amplitude = {0.4, 0.3, 0.5};
  if (d.base.size() != inst.ods.size())
    throw std::invalid_argument("ontap: default demand sized for the default instance");
  d.period = period;
  d.noise_amplitude = 0.05;
  d.seed = seed;
  return d;
}

OntapStream make_ontap_stream(const OntapInstance& inst, const DemandProcess& demand,
                              const OntapStreamOptions& opts) {
  validate_instance(inst);
  if (opts.T < 1) throw std::invalid_argument("ontap: T must be >= 1");
  if (demand.base.size() != inst.ods.size())
    throw std::invalid_argument("ontap: demand length must match OD count");
  if (opts.estimate_samples < 1)
    throw std::invalid_argument("ontap: need at least one estimate sample");
  const int n = total_paths(inst.ods);
  auto shared = std::make_shared<OntapInstance>(inst);
  auto dem = std::make_shared<DemandProcess>(demand);

  auto sample_profile = [shared, n](SplitMix64& rng) {
    Vec x(n);
    int off = 0;
    for (const OdPair& od : shared->ods) {
      const int k = static_cast<int>(od.paths.size());
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        x[off + j] = -std::log1p(-rng.uniform());  // Exp(1) -> Dirichlet(1,..,1)
        sum += x[off + j];
      }
      for (int j = 0; j < k; ++j) x[off + j] /= sum;
      off += k;
    }
    return x;
  };

  // Sampled curvature and sup estimates, inflated 10%.
  SplitMix64 rng = keyed_rng(opts.estimate_seed, RngTag::domain, {0xABu});
  double l_max = 0.0, m_max = 0.0;
  for (int it = 0; it < opts.estimate_samples; ++it) {
    const int t = 1 + static_cast<int>(rng.uniform() * opts.T);
    const std::vector<double> lam = dem->lambda(std::min(t, opts.T));
    const Vec x1 = sample_profile(rng), x2 = sample_profile(rng);
    const Vec g1 = ontap_smooth_grad(shared->net, shared->ods, shared->bpr, x1, lam);
    const Vec g2 = ontap_smooth_grad(shared->net, shared->ods, shared->bpr, x2, lam);
    const double dx = (x1 - x2).norm();
    if (dx > 1e-12) l_max = std::max(l_max, (g1 - g2).norm() / dx);
    m_max = std::max(
        m_max, std::abs(ontap_smooth_loss(shared->net, shared->ods, shared->bpr, x1, lam)));
  }
  const double L = std::max(1e-9, 1.1 * l_max);
  const double M = 1.1 * m_max;

  auto value = [shared, dem](int t, const Vec& x) {
    return ontap_smooth_loss(shared->net, shared->ods, shared->bpr, x, dem->lambda(t));
  };
  auto grad = [shared, dem](int t, const Vec& x) {
    return ontap_smooth_grad(shared->net, shared->ods, shared->bpr, x, dem->lambda(t));
  };
  LossStream stream(n, opts.T, L, M,
                    "ontap(v=" + std::to_string(inst.net.vertices) +
                        ",e=" + std::to_string(inst.net.edges.size()) +
                        ",ods=" + std::to_string(inst.ods.size()) + ",T=" +
                        std::to_string(opts.T) + ",mu=" + std::to_string(inst.mu) + ")",
                    value, grad, sample_profile);
  return {std::move(stream), Regularizer::simplex_l1(path_blocks(inst.ods), inst.mu), L, M};
}

}  // namespace onprox
