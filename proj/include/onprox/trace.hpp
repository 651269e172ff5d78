#pragma once

#include <string>
#include <vector>

#include "onprox/types.hpp"

namespace onprox {

struct RoundRecord {
  int t = 0;
  Vec x;  // iterate played at round t (inner-loop entry point)
  // ||P_eta(x_t; d)||^2 at loop entry, with d the solver's round-t gradient
  // vector (exact sliding average for alg1, the stochastic estimate for alg2).
  double entry_residual_sq = 0.0;
  int tau = 0;                    // inner prox-grad updates this round
  double residual_at_exit = 0.0;  // ||P|| at the passing exit test
  long oracle_calls = 0;  // alg1: sliding-gradient evaluations; alg2: SFO calls
  std::vector<double> inner_decrease;  // logged sufficient-decrease values (hook on)
};

struct SolverTrace {
  std::string solver;  // "alg1" | "alg2"
  int T = 0, w = 0;
  double eta = 0.0, delta = 0.0, sigma = 0.0;
  Vec x1, x_final;  // x_final = x_{T+1}
  std::vector<RoundRecord> rounds;
  long fallback_sfo_calls = 0;  // see WindowState::slide; stays 0 in practice
  bool capped = false;          // true on the partial trace of a capped run

  long total_tau() const {
    long acc = 0;
    for (const auto& r : rounds) acc += r.tau;
    return acc;
  }
  long total_oracle_calls() const {
    long acc = 0;
    for (const auto& r : rounds) acc += r.oracle_calls;
    return acc;
  }
  std::vector<Vec> iterates() const {
    std::vector<Vec> xs;
    xs.reserve(rounds.size());
    for (const auto& r : rounds) xs.push_back(r.x);
    return xs;
  }
};

}  // namespace onprox
