#pragma once

#include <cstdint>

#include "splatreorg/diagnostics.hpp"
#include "splatreorg/model.hpp"

namespace splatreorg {

// Built-in synthetic splat scenes used by the validation suites and tests.

// Three well-separated anisotropic components, each realized as count/3
// identical clones with a per-component opacity, so the activated field is
// exactly the returned analytic mixture.
struct MixtureScene {
  GaussianSet set;
  GaussianMixture mixture;           // normalized reference density p
  std::vector<Index> component_of;   // per-primitive component id
};

MixtureScene make_three_component_scene(Index count);

// Roughly uniform density in the unit cube: positions from a seeded uniform
// draw, isotropic covariances at half the mean spacing, one shared opacity.
GaussianSet make_uniform_scene(Index count, std::uint64_t seed);

// 10:1 density contrast across the x = 0.5 plane of the unit cube.
GaussianSet make_contrast_scene(Index count, std::uint64_t seed);

// s identical clones of one Gaussian: the degenerate cluster.
GaussianSet make_clone_cluster(Index clones, double alpha, const Eigen::Vector3d& mean,
                               const Eigen::Matrix3d& covariance);

// A thin surface patch at z = 5 plus a high-opacity floater at z = 2 on the
// axis ray; the canonical occlusion scene.
struct OccluderScene {
  GaussianSet set;
  Eigen::Vector3d ray_origin;
  Eigen::Vector3d ray_direction;
  double target_depth = 0.0;  // leading edge of the surface along the ray
};

OccluderScene make_occluder_scene(std::uint64_t seed);

// Probes drawn from the mixture itself (seeded), keeping only points where
// the density is at least min_fraction of its peak; grows candidates until
// count probes are found.
Eigen::MatrixX3d mixture_probes(const GaussianMixture& mixture, Index count, std::uint64_t seed,
                                double min_fraction);

// Probes placed at stored positions whose coordinates lie inside the given
// axis-aligned box, deterministically subsampled to count rows.
Eigen::MatrixX3d interior_probes(const Eigen::MatrixX3d& positions, const Eigen::Vector3d& lo,
                                 const Eigen::Vector3d& hi, Index count);

}  // namespace splatreorg
