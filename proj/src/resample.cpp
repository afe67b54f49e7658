#include "splatreorg/resample.hpp"

#include <algorithm>

#include "splatreorg/rng.hpp"

namespace splatreorg {

namespace {
// Stream ids; coordinate sampling consumes four streams per draw.
constexpr std::uint64_t kStreamCategory = 1;
constexpr std::uint64_t kStreamCoord = 2;
}  // namespace

void ResamplePlan::validate() const {
  if (samples < 0) throw std::invalid_argument("samples must be positive (or 0 for same count)");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");
  if (!(lambda_floor_rel > 0.0) || !(lambda_floor_abs > 0.0)) {
    throw std::invalid_argument("eigenvalue floors must be positive");
  }
  if (!(opacity_clip_min > 0.0)) throw std::invalid_argument("opacity clip must be positive");
}

Eigen::VectorXd clipped_weights(const Eigen::VectorXd& opacities, double clip_min) {
  if (opacities.size() < 1) throw NumericError("categorical", "empty opacity vector");
  if (opacities.maxCoeff() <= clip_min) {
    throw NumericError("categorical", "all opacities at or below the clip; weights undefined");
  }
  Eigen::VectorXd w = opacities.cwiseMax(clip_min);
  w /= w.sum();
  return w;
}

Eigen::VectorXd categorical_weights(const GaussianSet& set, double clip_min) {
  return clipped_weights(activated_opacities(set), clip_min);
}

std::vector<Index> draw_categories(const Eigen::VectorXd& weights, Index m, std::uint64_t seed) {
  const Index n = weights.size();
  Eigen::VectorXd cumulative(n);
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    acc += weights[i];
    cumulative[i] = acc;
  }
  const double total = cumulative[n - 1];

  std::vector<Index> out(static_cast<size_t>(m));
  parallel_for(m, [&](std::int64_t j) {
    const double u = rng::uniform(seed, kStreamCategory, static_cast<std::uint64_t>(j)) * total;
    const double* begin = cumulative.data();
    const double* pos = std::upper_bound(begin, begin + n, u);
    out[static_cast<size_t>(j)] = std::min<Index>(pos - begin, n - 1);
  });
  return out;
}

SampleBatch draw_coordinates(const GaussianSet& set, const std::vector<Index>& categories,
                             std::uint64_t seed) {
  const Index n = set.size();
  const Index m = static_cast<Index>(categories.size());

  // Per-component sampling transforms R_k S_k, built once.
  std::vector<Eigen::Matrix3d> transform(static_cast<size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    const Eigen::Matrix3d r = rotation_from_quaternion(set.rotations.row(i).transpose());
    const Eigen::Vector3d s = set.log_scales.row(i).array().exp();
    transform[static_cast<size_t>(i)] = r * s.asDiagonal();
  });

  SampleBatch batch;
  batch.centers.resize(m, 3);
  batch.source = categories;
  parallel_for(m, [&](std::int64_t j) {
    const Index k = categories[static_cast<size_t>(j)];
    if (k < 0 || k >= n) throw std::invalid_argument("category index out of range");
    const Eigen::Vector3d eps = rng::normal3(seed, kStreamCoord, static_cast<std::uint64_t>(j));
    const Eigen::Vector3d x =
        set.positions.row(k).transpose() + transform[static_cast<size_t>(k)] * eps;
    batch.centers.row(j) = x;
  });
  if (!batch.centers.allFinite()) {
    throw NumericError("coordinate sampling", "non-finite sample coordinate");
  }
  return batch;
}

SampleBatch draw_samples(const GaussianSet& set, const ResamplePlan& plan) {
  plan.validate();
  const Eigen::VectorXd weights = categorical_weights(set, plan.opacity_clip_min);
  const Index m = plan.resolve_samples(set.size());
  const std::vector<Index> categories = draw_categories(weights, m, plan.seed);
  return draw_coordinates(set, categories, plan.seed);
}

}  // namespace splatreorg
