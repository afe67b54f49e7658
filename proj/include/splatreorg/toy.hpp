#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "splatreorg/common.hpp"

namespace splatreorg {

// Desk-scale differentiable alpha compositor. Two variants:
//   kDepthOnly — primitives are an ordered stack on one ray; the effective
//                opacity is sigmoid(logit) with no spatial falloff.
//   kLateral   — primitives live in a (lateral, depth) plane; rays are
//                vertical lines at fixed lateral positions and the effective
//                opacity is sigmoid(logit) * exp(-(u - lateral)^2 / (2 w^2)).
// Depth only orders the compositing; the rendered color does not depend on
// it otherwise, so depth is not an optimization variable.
enum class ToyMode { kDepthOnly, kLateral };

struct ToyPrimitive {
  double depth = 0.0;
  double lateral = 0.0;  // unused in kDepthOnly
  double width = 1.0;    // lateral footprint; also the sampling scale
  double opacity_logit = 0.0;
  double color = 0.0;
};

struct ToyScene {
  ToyMode mode = ToyMode::kDepthOnly;
  std::vector<ToyPrimitive> primitives;
  std::vector<double> rays;  // lateral ray positions; kDepthOnly uses one ray
  Eigen::VectorXd target;    // per-ray ground truth color
  double target_depth = 0.0; // depth of the true surface's leading edge

  Index ray_count() const { return static_cast<Index>(rays.size()); }
  Index primitive_count() const { return static_cast<Index>(primitives.size()); }
};

// Front-to-back composite per ray; ties in depth break by primitive index.
Eigen::VectorXd toy_render(const ToyScene& scene);

// Sum of squared per-ray color residuals.
double toy_loss(const ToyScene& scene);

// Transmittance on one ray just before the given depth.
double toy_transmittance_at(const ToyScene& scene, Index ray, double depth);

// Exact analytic gradients of toy_loss. Lateral/width gradients are only
// populated in kLateral mode.
struct ToyGradients {
  Eigen::VectorXd d_logit;
  Eigen::VectorXd d_color;
  Eigen::VectorXd d_lateral;
  Eigen::VectorXd d_log_width;
};

ToyGradients toy_gradients(const ToyScene& scene);

// Plain gradient descent with a fixed step; no densification, no opacity
// reset, no momentum. Records the loss and the minimum transmittance to
// scene.target_depth across rays, once before the first step and once per
// iteration. Stops early (diverged = true) if the loss goes non-finite.
struct ToyOptState {
  ToyScene scene;
  int iterations = 0;
  double step = 0.0;
  std::vector<double> loss_history;
  std::vector<double> min_transmittance_history;
  bool diverged = false;
};

ToyOptState toy_optimize(const ToyScene& scene, int iterations, double step);

// Reduced-dimension reorganization: opacity-weighted categorical draws,
// coordinate sampling with the primitive width as the per-axis scale, kNN
// second moment about each sample (isotropic in kLateral mode), uniform
// alpha0 opacity, color from the nearest old primitive.
struct ToyPlan {
  std::int64_t samples = 0;  // 0 keeps the input count
  int k = 20;
  double alpha0 = 0.01;
  std::uint64_t seed = 0;
  double width_floor = 1e-3;
};

ToyScene toy_reorganize(const ToyScene& scene, const ToyPlan& plan);

// Built-in scenes.
ToyScene make_deadlock_scene(std::uint64_t seed);   // stacked floaters over a patterned surface
ToyScene make_cluster_scene(std::uint64_t seed);    // two depth clusters on one ray
ToyScene make_random_scene(std::uint64_t seed);     // well-conditioned random scene for checks

// Runs direct continuation vs reorganize-then-continue under the same
// budget on a deadlock scene built from the seed.
struct DeadlockRecord {
  double transmittance_before = 0.0;  // at target depth on the occluded ray
  double transmittance_after = 0.0;   // same, after reorganization
  double loss_direct = 0.0;
  double loss_reorg = 0.0;
  ToyOptState direct_state;
  ToyOptState reorg_state;
};

DeadlockRecord deadlock_experiment(std::uint64_t seed, int iterations = 2000, double step = 0.4);

}  // namespace splatreorg
