#include "onprox/oracle.hpp"

#include <cmath>

namespace onprox {

NoiseModel NoiseModel::gaussian(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise: sigma must be >= 0");
  return {NoiseKind::GaussianIsotropic, sigma};
}

NoiseModel NoiseModel::ball(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise: sigma must be >= 0");
  return {NoiseKind::BallUniform, sigma};
}

NoiseModel NoiseModel::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("noise: scale factor must be > 0");
  return {kind, sigma / factor};
}

std::string NoiseModel::descriptor() const {
  switch (kind) {
    case NoiseKind::Exact: return "exact";
    case NoiseKind::GaussianIsotropic: return "gaussian(sigma=" + std::to_string(sigma) + ")";
    case NoiseKind::BallUniform: return "ball(sigma=" + std::to_string(sigma) + ")";
  }
  return "?";
}

Sfo::Sfo(std::uint64_t seed, NoiseModel model, int player)
    : seed_(seed), model_(model), player_(player) {
  if (player < 0) throw std::invalid_argument("oracle: player index must be >= 0");
}

void Sfo::begin_round(int t, int w) {
  if (t < 1 || w < 1) throw std::invalid_argument("oracle: begin_round needs t >= 1, w >= 1");
  round_ = t;
  w_ = w;
}

GradientSample Sfo::sample(const LossStream& stream, int i, int k, const Vec& x) {
  if (round_ < 1) throw ProtocolError("oracle: sample before begin_round");
  if (i > round_ || i < round_ - w_ + 1)
    throw ProtocolError("oracle: round-" + std::to_string(round_) + " query for f_" +
                        std::to_string(i) + " outside window reach [" +
                        std::to_string(round_ - w_ + 1) + ", " + std::to_string(round_) + "]");
  ++calls_;
  if (i <= 0) return {Vec::Zero(stream.dimension()), 1};  // f_i identically zero
  Vec g = stream.grad(i, x);
  if (!model_.is_exact()) g += noise(i, k, g.size());
  return {std::move(g), 1};
}

Vec Sfo::noise(int i, int k, Eigen::Index n) {
  SplitMix64 rng =
      keyed_rng(seed_, RngTag::oracle,
                {static_cast<std::uint64_t>(player_), static_cast<std::uint64_t>(round_),
                 static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)});
  switch (model_.kind) {
    case NoiseKind::Exact:
      return Vec::Zero(n);
    case NoiseKind::GaussianIsotropic:
      return Vec(rng.normal_vector(n) * (model_.sigma / std::sqrt(static_cast<double>(n))));
    case NoiseKind::BallUniform: {
      Vec dir = rng.normal_vector(n);
      const double nrm = dir.norm();
      if (nrm < 1e-300) return Vec::Zero(n);
      const double radius =
          model_.sigma * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
      Vec v = dir * (radius / nrm);
      const double vn = v.norm();  // guard the hard bound against rounding
      if (vn > model_.sigma) v *= model_.sigma / vn;
      return v;
    }
  }
  throw std::logic_error("oracle: unknown noise kind");
}

}  // namespace onprox
