#include "onprox/regularizer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace onprox {

namespace {
constexpr double kDomainTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_blocks(const std::vector<Block>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("simplex regularizer: empty block list");
  std::vector<Block> sorted = blocks;
  std::sort(sorted.begin(), sorted.end(),
            [](const Block& a, const Block& b) { return a.begin < b.begin; });
  int expect = 0;
  for (const Block& b : sorted) {
    if (b.length < 1) throw std::invalid_argument("simplex regularizer: block length < 1");
    if (b.begin != expect)
      throw std::invalid_argument("simplex regularizer: blocks must partition [0, n) "
                                  "(gap or overlap at index " + std::to_string(b.begin) + ")");
    expect = b.begin + b.length;
  }
}
}  // namespace

Vec project_simplex(const Vec& v) {
  const Eigen::Index n = v.size();
  if (n < 1) throw std::invalid_argument("project_simplex: empty vector");
  ensure_finite(v, "project_simplex");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  for (Eigen::Index j = 1; j <= n; ++j) {
    css += u[j - 1];
    const double t = (css - 1.0) / static_cast<double>(j);
    if (u[j - 1] - t > 0.0) theta = t;  // holds at j=1, so theta is always set
  }
  return (v.array() - theta).max(0.0).matrix();
}

Regularizer::Regularizer(Kind kind, double mu, double lo, double hi, std::vector<Block> blocks)
    : kind_(kind), mu_(mu), lo_(lo), hi_(hi), blocks_(std::move(blocks)) {
  if (mu_ < 0.0) throw std::invalid_argument("regularizer: mu must be >= 0");
  if (kind_ == Kind::Box && !(lo_ <= hi_))
    throw std::invalid_argument("regularizer: box requires lo <= hi");
  if (fixed_dimension()) {
    validate_blocks(blocks_);
    dim_ = 0;
    for (const Block& b : blocks_) dim_ += b.length;
  }
}

Regularizer Regularizer::zero() { return Regularizer(Kind::Zero, 0, 0, 0, {}); }
Regularizer Regularizer::l1(double mu) { return Regularizer(Kind::L1, mu, 0, 0, {}); }
Regularizer Regularizer::box(double lo, double hi) { return Regularizer(Kind::Box, 0, lo, hi, {}); }
Regularizer Regularizer::simplex(std::vector<Block> blocks) {
  return Regularizer(Kind::Simplex, 0, 0, 0, std::move(blocks));
}
Regularizer Regularizer::simplex_l1(std::vector<Block> blocks, double mu) {
  return Regularizer(Kind::SimplexL1, mu, 0, 0, std::move(blocks));
}

int Regularizer::dimension() const {
  if (!fixed_dimension()) throw std::logic_error("regularizer: dimension() needs a simplex kind");
  return dim_;
}

double Regularizer::value(const Vec& x) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::L1:
      return mu_ * x.cwiseAbs().sum();
    case Kind::Box:
      if ((x.array() < lo_ - kDomainTol).any() || (x.array() > hi_ + kDomainTol).any())
        return kInf;
      return 0.0;
    case Kind::Simplex:
    case Kind::SimplexL1: {
      if (x.size() != dim_)
        throw std::invalid_argument("regularizer: dimension mismatch with block partition");
      for (const Block& b : blocks_) {
        const auto seg = x.segment(b.begin, b.length);
        if ((seg.array() < -kDomainTol).any()) return kInf;
        if (std::abs(seg.sum() - 1.0) > kDomainTol) return kInf;
      }
      return kind_ == Kind::SimplexL1 ? mu_ * x.cwiseAbs().sum() : 0.0;
    }
  }
  throw std::logic_error("regularizer: unknown kind");
}

Vec Regularizer::prox(const Vec& v, double step) const {
  if (!(step > 0.0)) throw std::invalid_argument("regularizer: prox step must be > 0");
  ensure_finite(v, "regularizer prox");
  switch (kind_) {
    case Kind::Zero:
      return v;
    case Kind::L1: {
      const double thr = step * mu_;
      return v.unaryExpr([thr](double z) {
        if (z > thr) return z - thr;
        if (z < -thr) return z + thr;
        return 0.0;
      });
    }
    case Kind::Box:
      return v.array().max(lo_).min(hi_).matrix();
    case Kind::Simplex:
    case Kind::SimplexL1: {
      // On a product of simplices ||x||_1 is constant, so the L1 term shifts
      // the objective by a constant and the prox is the plain projection.
      if (v.size() != dim_)
        throw std::invalid_argument("regularizer: dimension mismatch with block partition");
      Vec out(v.size());
      for (const Block& b : blocks_)
        out.segment(b.begin, b.length) = project_simplex(v.segment(b.begin, b.length));
      return out;
    }
  }
  throw std::logic_error("regularizer: unknown kind");
}

Vec Regularizer::project_start(int n) const {
  if (n < 1) throw std::invalid_argument("regularizer: start dimension must be >= 1");
  switch (kind_) {
    case Kind::Zero:
    case Kind::L1:
      return Vec::Zero(n);
    case Kind::Box:
      return Vec::Constant(n, std::clamp(0.0, lo_, hi_));
    case Kind::Simplex:
    case Kind::SimplexL1: {
      if (n != dim_)
        throw std::invalid_argument("regularizer: start dimension mismatch with block partition");
      Vec out(n);
      for (const Block& b : blocks_)
        out.segment(b.begin, b.length).setConstant(1.0 / b.length);
      return out;
    }
  }
  throw std::logic_error("regularizer: unknown kind");
}

std::string Regularizer::descriptor() const {
  switch (kind_) {
    case Kind::Zero: return "zero";
    case Kind::L1: return "l1(mu=" + std::to_string(mu_) + ")";
    case Kind::Box: return "box[" + std::to_string(lo_) + "," + std::to_string(hi_) + "]";
    case Kind::Simplex: return "simplex(" + std::to_string(blocks_.size()) + " blocks)";
    case Kind::SimplexL1:
      return "simplex+l1(" + std::to_string(blocks_.size()) +
             " blocks, mu=" + std::to_string(mu_) + ")";
  }
  return "?";
}

Vec prox_grad_map(const Regularizer& g, const Vec& x, const Vec& d, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("prox_grad_map: eta must be > 0");
  ensure_same_size(x, d, "prox_grad_map");
  ensure_finite(x, "prox_grad_map x");
  ensure_finite(d, "prox_grad_map d");
  return g.prox(x - eta * d, eta);
}

Vec prox_residual(const Regularizer& g, const Vec& x, const Vec& d, double eta) {
  return (x - prox_grad_map(g, x, d, eta)) / eta;
}

double residual_norm_sq(const Regularizer& g, const Vec& x, const Vec& d, double eta) {
  return prox_residual(g, x, d, eta).squaredNorm();
}

}  // namespace onprox
