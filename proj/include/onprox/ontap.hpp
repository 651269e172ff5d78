#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "onprox/regularizer.hpp"
#include "onprox/stream.hpp"
#include "onprox/types.hpp"

namespace onprox {

// Directed multigraph; parallel edges allowed.
struct Network {
  int vertices = 0;
  std::vector<std::pair<int, int>> edges;  // (tail, head)
};

struct OdPair {
  int origin = 0, destination = 0;
  std::vector<std::vector<int>> paths;  // edge-id sequences, each a valid walk
};

// Quartic BPR edge costs l_e(y) = a_e + b_e y^4.
struct BprCoefficients {
  std::vector<double> a, b;
};

// Seasonal per-OD demand: lambda_i(t) = max(0, base_i + amplitude_i *
// sin(2 pi t / period + phase_i) + seeded uniform noise). period <= 0 means
// constant demand. Deterministic given the seed.
struct DemandProcess {
  std::vector<double> base, amplitude;
  double period = 0.0;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;

  std::vector<double> lambda(int t) const;
};

struct OntapInstance {
  Network net;
  std::vector<OdPair> ods;
  BprCoefficients bpr;
  double mu = 0.0;  // L1 robustification weight (lives in the regularizer)
};

// Throws invalid_argument on inconsistent shapes, out-of-range ids, negative
// BPR coefficients, or a path that is not an origin->destination walk.
void validate_instance(const OntapInstance& inst);

int total_paths(const std::vector<OdPair>& ods);
std::vector<Block> path_blocks(const std::vector<OdPair>& ods);

// y_e = sum_i lambda_i sum_{p in P_i, e in p} x_{i,p}.
std::vector<double> edge_loads(const Network& net, const std::vector<OdPair>& ods, const Vec& x,
                               const std::vector<double>& lambda);

// l_p = sum_{e in p} l_e(y_e), by global path id (paths numbered in OD order).
double path_cost(const Network& net, const std::vector<OdPair>& ods,
                 const BprCoefficients& bpr, const Vec& x, const std::vector<double>& lambda,
                 int global_path_id);

// Smooth part sum_i sum_p x_{i,p} l_p(x; lambda); the mu ||x||_1 term is the
// regularizer's business (and is constant on the product of simplices).
double ontap_smooth_loss(const Network& net, const std::vector<OdPair>& ods,
                         const BprCoefficients& bpr, const Vec& x,
                         const std::vector<double>& lambda);

// d/dx_{j,q} = l_q + lambda_j sum_{e in q} 4 b_e y_e^3 s_e where s_e is the
// unweighted allocation sum through e (validated against finite differences).
Vec ontap_smooth_grad(const Network& net, const std::vector<OdPair>& ods,
                      const BprCoefficients& bpr, const Vec& x,
                      const std::vector<double>& lambda);

// Desk-scale benchmark: 6 vertices, 9 edges, 3 OD pairs, 10 paths.
OntapInstance default_instance();
DemandProcess default_demand(const OntapInstance& inst, double period, std::uint64_t seed);

struct OntapStreamOptions {
  int T = 100;
  int estimate_samples = 100000;  // sample pairs for the L estimate / points for M
  std::uint64_t estimate_seed = 7;
};

struct OntapStream {
  LossStream stream;
  Regularizer reg;
  double l_estimate = 0.0;  // sampled max ||dgrad||/||dx||, inflated 10%
  double m_estimate = 0.0;  // sampled sup |f|, inflated 10%
};

OntapStream make_ontap_stream(const OntapInstance& inst, const DemandProcess& demand,
                              const OntapStreamOptions& opts);

}  // namespace onprox
