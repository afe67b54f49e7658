#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "splatreorg/model.hpp"

namespace splatreorg {

// Seeded configuration for one reorganization pass.
struct ResamplePlan {
  std::int64_t samples = 0;       // target count M; 0 keeps the input count
  int k = 20;                     // kNN neighborhood size
  double alpha0 = 0.01;           // uniform output opacity
  std::uint64_t seed = 0;
  double lambda_floor_rel = 1e-6;   // eigenvalue floor, relative to lambda_max
  double lambda_floor_abs = 1e-12;  // absolute eigenvalue floor, scene-unit^2
  double opacity_clip_min = 1e-12;  // minimum categorical weight before normalization

  // Resolves the effective sample count for an input of n primitives.
  Index resolve_samples(Index n) const { return samples > 0 ? Index(samples) : n; }

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

// New centers with their source component ids.
struct SampleBatch {
  Eigen::MatrixX3d centers;    // M x 3
  std::vector<Index> source;   // M, each in [0, N)

  Index size() const { return centers.rows(); }
};

// Normalized categorical weights proportional to the clipped opacities.
// No volume term enters the weights. Throws NumericError when every
// opacity is at or below the clip.
Eigen::VectorXd clipped_weights(const Eigen::VectorXd& opacities, double clip_min);
Eigen::VectorXd categorical_weights(const GaussianSet& set, double clip_min = 1e-12);

// m i.i.d. categorical draws by inverse CDF; draw j depends only on
// (seed, j), so any execution order yields the same sequence.
std::vector<Index> draw_categories(const Eigen::VectorXd& weights, Index m, std::uint64_t seed);

// x_j = mu_k + R_k S_k eps with eps ~ N(0, I); R_k S_k is the exact
// per-component sampling transform, so Cov(x_j | z_j = k) = Sigma_k.
SampleBatch draw_coordinates(const GaussianSet& set, const std::vector<Index>& categories,
                             std::uint64_t seed);

// categorical_weights + draw_categories + draw_coordinates under one plan.
SampleBatch draw_samples(const GaussianSet& set, const ResamplePlan& plan);

}  // namespace splatreorg
