#pragma once

#include <string>
#include <vector>

#include "onprox/types.hpp"

namespace onprox {

// Contiguous index range [begin, begin+length) treated as one probability
// simplex when used by the simplex regularizers.
struct Block {
  int begin = 0;
  int length = 0;
};

// Euclidean projection of v onto the unit simplex {z >= 0, sum z = 1}
// (sort-and-threshold).
Vec project_simplex(const Vec& v);

// The nonsmooth part g of the composite loss. Proper convex lsc, g >= 0, with
// a closed-form prox. Kinds cover the regularizers the experiments need.
class Regularizer {
 public:
  enum class Kind { Zero, L1, Box, Simplex, SimplexL1 };

  static Regularizer zero();
  static Regularizer l1(double mu);
  static Regularizer box(double lo, double hi);
  static Regularizer simplex(std::vector<Block> blocks);
  static Regularizer simplex_l1(std::vector<Block> blocks, double mu);

  Kind kind() const { return kind_; }
  double mu() const { return mu_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  // Simplex kinds pin the ambient dimension; the others are dimension-generic.
  bool fixed_dimension() const { return kind_ == Kind::Simplex || kind_ == Kind::SimplexL1; }
  int dimension() const;  // only for fixed-dimension kinds

  // g(x); +inf outside the domain (indicator tolerance 1e-9 per coordinate /
  // per block-sum).
  double value(const Vec& x) const;

  // prox_{step*g}(v), step > 0.
  Vec prox(const Vec& v, double step) const;

  // Default feasible start: origin (Zero/L1), origin clamped into the box, or
  // per-block barycenter. Always satisfies prox_{eta g}(x - eta*0) = x.
  Vec project_start(int n) const;

  std::string descriptor() const;

 private:
  Regularizer(Kind kind, double mu, double lo, double hi, std::vector<Block> blocks);

  Kind kind_;
  double mu_ = 0.0;
  double lo_ = 0.0, hi_ = 0.0;
  std::vector<Block> blocks_;
  int dim_ = -1;
};

// T_eta(x; d) = prox_{eta g}(x - eta d).
Vec prox_grad_map(const Regularizer& g, const Vec& x, const Vec& d, double eta);

// P_eta(x; d) = (x - T_eta(x; d)) / eta.
Vec prox_residual(const Regularizer& g, const Vec& x, const Vec& d, double eta);

// ||P_eta(x; d)||^2, the stationarity proxy.
double residual_norm_sq(const Regularizer& g, const Vec& x, const Vec& d, double eta);

}  // namespace onprox
