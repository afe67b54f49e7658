#include "splatreorg/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splatreorg/kdtree.hpp"
#include "splatreorg/model.hpp"
#include "splatreorg/rng.hpp"

namespace splatreorg {

namespace {

// Toy RNG streams, disjoint from the 3D pipeline's.
constexpr std::uint64_t kStreamToyCategory = 16;
constexpr std::uint64_t kStreamToyCoord = 17;     // +2 streams (lateral, depth)
constexpr std::uint64_t kStreamToyScene = 24;

// Depth order shared by every ray; ties break by index.
std::vector<Index> depth_order(const ToyScene& scene) {
  std::vector<Index> order(scene.primitives.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ta = scene.primitives[a].depth, tb = scene.primitives[b].depth;
    if (ta != tb) return ta < tb;
    return a < b;
  });
  return order;
}

double falloff(const ToyScene& scene, const ToyPrimitive& p, double u) {
  if (scene.mode == ToyMode::kDepthOnly) return 1.0;
  const double d = (u - p.lateral) / p.width;
  return std::exp(-0.5 * d * d);
}

void check_scene(const ToyScene& scene) {
  if (scene.rays.empty()) throw std::invalid_argument("toy scene has no rays");
  if (scene.target.size() != scene.ray_count()) {
    throw std::invalid_argument("toy target length disagrees with ray count");
  }
  for (const auto& p : scene.primitives) {
    if (!(p.width > 0.0) || !std::isfinite(p.depth) || !std::isfinite(p.opacity_logit) ||
        !std::isfinite(p.color) || !std::isfinite(p.lateral)) {
      throw std::invalid_argument("toy primitive with invalid fields");
    }
  }
}

// Maps toy positions into 3D so the exact spatial index can be reused.
Eigen::MatrixX3d embed(const ToyScene& scene, const Eigen::VectorXd& lateral,
                       const Eigen::VectorXd& depth) {
  Eigen::MatrixX3d pts = Eigen::MatrixX3d::Zero(depth.size(), 3);
  pts.col(0) = depth;
  if (scene.mode == ToyMode::kLateral) pts.col(1) = lateral;
  return pts;
}

}  // namespace

Eigen::VectorXd toy_render(const ToyScene& scene) {
  check_scene(scene);
  const std::vector<Index> order = depth_order(scene);
  Eigen::VectorXd colors(scene.ray_count());
  for (Index r = 0; r < scene.ray_count(); ++r) {
    const double u = scene.rays[static_cast<size_t>(r)];
    double t_accum = 1.0;
    double c = 0.0;
    for (Index i : order) {
      const ToyPrimitive& p = scene.primitives[static_cast<size_t>(i)];
      const double a = sigmoid(p.opacity_logit) * falloff(scene, p, u);
      c += t_accum * a * p.color;
      t_accum *= (1.0 - a);
    }
    colors[r] = c;
  }
  return colors;
}

double toy_loss(const ToyScene& scene) {
  const Eigen::VectorXd rendered = toy_render(scene);
  return (rendered - scene.target).squaredNorm();
}

double toy_transmittance_at(const ToyScene& scene, Index ray, double depth) {
  check_scene(scene);
  if (ray < 0 || ray >= scene.ray_count()) throw std::out_of_range("ray index out of range");
  const double u = scene.rays[static_cast<size_t>(ray)];
  double t_accum = 1.0;
  for (Index i : depth_order(scene)) {
    const ToyPrimitive& p = scene.primitives[static_cast<size_t>(i)];
    if (p.depth >= depth) break;
    const double a = sigmoid(p.opacity_logit) * falloff(scene, p, u);
    t_accum *= (1.0 - a);
  }
  return t_accum;
}

ToyGradients toy_gradients(const ToyScene& scene) {
  check_scene(scene);
  const Index n = scene.primitive_count();
  const std::vector<Index> order = depth_order(scene);

  ToyGradients g;
  g.d_logit = Eigen::VectorXd::Zero(n);
  g.d_color = Eigen::VectorXd::Zero(n);
  g.d_lateral = Eigen::VectorXd::Zero(n);
  g.d_log_width = Eigen::VectorXd::Zero(n);

  std::vector<double> a(static_cast<size_t>(n));
  std::vector<double> trans(static_cast<size_t>(n));  // T before each, in depth order

  for (Index r = 0; r < scene.ray_count(); ++r) {
    const double u = scene.rays[static_cast<size_t>(r)];
    double t_accum = 1.0;
    double c = 0.0;
    for (Index i : order) {
      const ToyPrimitive& p = scene.primitives[static_cast<size_t>(i)];
      a[static_cast<size_t>(i)] = sigmoid(p.opacity_logit) * falloff(scene, p, u);
      trans[static_cast<size_t>(i)] = t_accum;
      c += t_accum * a[static_cast<size_t>(i)] * p.color;
      t_accum *= (1.0 - a[static_cast<size_t>(i)]);
    }
    const double residual_term = 2.0 * (c - scene.target[r]);

    // dC/da_i = T_i (c_i - B_i), where B_i is the color composited by the
    // primitives behind i with transmittance restarted just after i.
    double behind = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Index i = *it;
      const ToyPrimitive& p = scene.primitives[static_cast<size_t>(i)];
      const double ai = a[static_cast<size_t>(i)];
      const double ti = trans[static_cast<size_t>(i)];
      const double dc_da = ti * (p.color - behind);
      const double sig = sigmoid(p.opacity_logit);
      const double fall = falloff(scene, p, u);

      g.d_color[i] += residual_term * ti * ai;
      g.d_logit[i] += residual_term * dc_da * fall * sig * (1.0 - sig);
      if (scene.mode == ToyMode::kLateral) {
        const double z = (u - p.lateral) / p.width;
        g.d_lateral[i] += residual_term * dc_da * ai * z / p.width;
        g.d_log_width[i] += residual_term * dc_da * ai * z * z;
      }
      behind = ai * p.color + (1.0 - ai) * behind;
    }
  }
  return g;
}

ToyOptState toy_optimize(const ToyScene& scene, int iterations, double step) {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  ToyOptState state;
  state.scene = scene;
  state.step = step;

  // Depths are not optimization variables, so the compositing order is fixed
  // for the whole run.
  const std::vector<Index> order = depth_order(scene);

  auto record = [&] {
    state.loss_history.push_back(toy_loss(state.scene));
    double t_min = 1.0;
    for (Index r = 0; r < state.scene.ray_count(); ++r) {
      const double u = state.scene.rays[static_cast<size_t>(r)];
      double t_accum = 1.0;
      for (Index i : order) {
        const ToyPrimitive& p = state.scene.primitives[static_cast<size_t>(i)];
        if (p.depth >= state.scene.target_depth) break;
        t_accum *= (1.0 - sigmoid(p.opacity_logit) * falloff(state.scene, p, u));
      }
      t_min = std::min(t_min, t_accum);
    }
    state.min_transmittance_history.push_back(t_min);
  };
  record();

  for (int it = 0; it < iterations; ++it) {
    if (!std::isfinite(state.loss_history.back())) {
      state.diverged = true;
      break;
    }
    const ToyGradients g = toy_gradients(state.scene);
    bool finite = true;
    for (Index i = 0; i < state.scene.primitive_count(); ++i) {
      ToyPrimitive& p = state.scene.primitives[static_cast<size_t>(i)];
      p.opacity_logit -= step * g.d_logit[i];
      p.color -= step * g.d_color[i];
      if (state.scene.mode == ToyMode::kLateral) {
        p.lateral -= step * g.d_lateral[i];
        // log-space step; the floor keeps the footprint representable.
        p.width = std::max(std::exp(std::log(p.width) - step * g.d_log_width[i]), 1e-8);
      }
      finite = finite && std::isfinite(p.opacity_logit) && std::isfinite(p.color) &&
               std::isfinite(p.lateral) && std::isfinite(p.width);
    }
    ++state.iterations;
    if (!finite) {
      state.diverged = true;
      break;
    }
    record();
    if (!std::isfinite(state.loss_history.back())) {
      state.diverged = true;
      break;
    }
  }
  return state;
}

ToyScene toy_reorganize(const ToyScene& scene, const ToyPlan& plan) {
  check_scene(scene);
  const Index n = scene.primitive_count();
  if (n < 1) throw std::invalid_argument("toy reorganize of an empty scene");
  if (plan.k < 1 || !(plan.alpha0 > 0.0 && plan.alpha0 < 1.0) || !(plan.width_floor > 0.0)) {
    throw std::invalid_argument("invalid toy plan");
  }
  const Index m = plan.samples > 0 ? Index(plan.samples) : n;
  if (m < plan.k + 1) throw std::invalid_argument("toy samples must exceed k");

  // Opacity-weighted categorical draws.
  Eigen::VectorXd weights(n);
  for (Index i = 0; i < n; ++i) {
    weights[i] = std::max(sigmoid(scene.primitives[static_cast<size_t>(i)].opacity_logit), 1e-12);
  }
  Eigen::VectorXd cumulative(n);
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    acc += weights[i];
    cumulative[i] = acc;
  }

  Eigen::VectorXd lateral(m), depth(m);
  std::vector<Index> source(static_cast<size_t>(m));
  for (Index j = 0; j < m; ++j) {
    const double u = rng::uniform(plan.seed, kStreamToyCategory, static_cast<std::uint64_t>(j)) * acc;
    const double* begin = cumulative.data();
    const Index k = std::min<Index>(std::upper_bound(begin, begin + n, u) - begin, n - 1);
    source[static_cast<size_t>(j)] = k;
    const ToyPrimitive& p = scene.primitives[static_cast<size_t>(k)];
    double e0, e1;
    rng::normal_pair(plan.seed, kStreamToyCoord, static_cast<std::uint64_t>(j), e0, e1);
    depth[j] = p.depth + p.width * e0;
    lateral[j] = scene.mode == ToyMode::kLateral ? p.lateral + p.width * e1 : 0.0;
  }

  // kNN second moment about each sample; isotropic width in kLateral mode.
  const Eigen::MatrixX3d samples = embed(scene, lateral, depth);
  const PointIndex index = PointIndex::build(samples);
  const double dims = scene.mode == ToyMode::kLateral ? 2.0 : 1.0;

  // Color source: nearest old primitive in the same embedding.
  Eigen::VectorXd old_lateral(n), old_depth(n);
  for (Index i = 0; i < n; ++i) {
    old_lateral[i] = scene.primitives[static_cast<size_t>(i)].lateral;
    old_depth[i] = scene.primitives[static_cast<size_t>(i)].depth;
  }
  const PointIndex old_index = PointIndex::build(embed(scene, old_lateral, old_depth));

  ToyScene out = scene;
  out.primitives.assign(static_cast<size_t>(m), ToyPrimitive{});
  const double logit0 = inverse_sigmoid(plan.alpha0);
  for (Index j = 0; j < m; ++j) {
    double moment = 0.0;
    for (const auto& nb : index.knn(samples.row(j).transpose(), plan.k, j)) {
      moment += nb.squared_distance;
    }
    moment /= static_cast<double>(plan.k) * dims;
    ToyPrimitive& p = out.primitives[static_cast<size_t>(j)];
    p.depth = depth[j];
    p.lateral = lateral[j];
    p.width = std::max(std::sqrt(moment), plan.width_floor);
    p.opacity_logit = logit0;
    p.color = scene.primitives[static_cast<size_t>(old_index.nearest(samples.row(j).transpose()))].color;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in scenes

ToyScene make_deadlock_scene(std::uint64_t seed) {
  ToyScene scene;
  scene.mode = ToyMode::kLateral;

  const Index rays = 21;
  for (Index r = 0; r < rays; ++r) {
    scene.rays.push_back(-1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(rays - 1));
  }

  // Correctly placed two-layer surface at depth 5 whose colors alternate
  // ray by ray. The alternation is the finest detail the ray grid can
  // carry, so no single smooth occluder color can fit it anywhere, and it
  // is even around u = 0 where the floaters sit. The target is the
  // surface's unoccluded rendering.
  const double amplitude = 0.30 + 0.10 * rng::uniform(seed, kStreamToyScene, 0);
  const double surface_width = 0.07;
  for (Index layer = 0; layer < 2; ++layer) {
    for (Index i = 0; i < rays; ++i) {
      const auto idx = static_cast<std::uint64_t>(layer * rays + i);
      ToyPrimitive p;
      p.lateral = scene.rays[static_cast<size_t>(i)] +
                  0.005 * rng::normal(seed, kStreamToyScene + 1, idx);
      p.depth = 5.0 + 0.08 * static_cast<double>(layer) +
                0.02 * rng::normal(seed, kStreamToyScene + 3, idx);
      p.width = surface_width;
      p.opacity_logit = inverse_sigmoid(0.6);
      p.color = 0.6 + (i % 2 == 0 ? amplitude : -amplitude);
      scene.primitives.push_back(p);
    }
  }
  scene.target_depth = 4.5;  // leading edge of the surface

  ToyScene clean = scene;
  clean.target = Eigen::VectorXd::Zero(rays);
  scene.target = toy_render(clean);

  // Two stacked narrow high-opacity floaters over the central rays, sharing
  // the response-weighted mean of the detail they hide. The rear floater
  // shields the front one (the composited color behind it is its own), the
  // saturated sigmoid damps both opacity logits, and the narrow footprint
  // keeps the color curvature low enough for a stable descent. Direct
  // descent spends most of its budget slowly working the stack loose and
  // never recovers the alternating detail behind it.
  const double floater_width = 0.12;
  double covered = 0.0, weight = 0.0;
  for (Index r = 0; r < rays; ++r) {
    const double u = scene.rays[static_cast<size_t>(r)];
    const double w = std::exp(-0.5 * u * u / (floater_width * floater_width));
    covered += w * scene.target[r];
    weight += w;
  }
  const double floater_color = covered / weight;
  for (int f = 0; f < 2; ++f) {
    ToyPrimitive p;
    p.lateral = 0.0;
    p.depth = 1.0 + 0.15 * f;
    p.width = floater_width;
    p.opacity_logit = inverse_sigmoid(0.99);
    p.color = floater_color;
    scene.primitives.push_back(p);
  }
  return scene;
}

ToyScene make_cluster_scene(std::uint64_t seed) {
  ToyScene scene;
  scene.mode = ToyMode::kDepthOnly;
  scene.rays = {0.0};
  auto add = [&](double depth, double alpha, double color) {
    ToyPrimitive p;
    p.depth = depth;
    p.width = 0.05;
    p.opacity_logit = inverse_sigmoid(alpha);
    p.color = color;
    scene.primitives.push_back(p);
  };
  for (int i = 0; i < 3; ++i) {
    add(1.0 + 0.02 * rng::normal(seed, kStreamToyScene, static_cast<std::uint64_t>(i)), 0.6, 0.8);
  }
  for (int i = 0; i < 5; ++i) {
    add(2.0 + 0.02 * rng::normal(seed, kStreamToyScene + 1, static_cast<std::uint64_t>(i)), 0.3, 0.3);
  }
  scene.target_depth = 1.9;
  ToyScene copy = scene;
  copy.target = Eigen::VectorXd::Zero(1);
  scene.target = toy_render(copy);
  return scene;
}

ToyScene make_random_scene(std::uint64_t seed) {
  ToyScene scene;
  scene.mode = (seed % 2 == 0) ? ToyMode::kLateral : ToyMode::kDepthOnly;

  const Index rays = scene.mode == ToyMode::kLateral ? 7 : 1;
  for (Index r = 0; r < rays; ++r) {
    scene.rays.push_back(rays == 1 ? 0.0
                                   : -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(rays - 1));
  }

  const Index n = 4 + static_cast<Index>(rng::word(seed, kStreamToyScene, 0) % 5);
  for (Index i = 0; i < n; ++i) {
    ToyPrimitive p;
    // Distinct depth slots keep the compositing order stable under the
    // finite-difference step.
    p.depth = 0.5 + 0.5 * static_cast<double>(i) +
              0.2 * rng::uniform(seed, kStreamToyScene + 1, static_cast<std::uint64_t>(i));
    p.lateral = -1.0 + 2.0 * rng::uniform(seed, kStreamToyScene + 2, static_cast<std::uint64_t>(i));
    p.width = 0.15 + 0.5 * rng::uniform(seed, kStreamToyScene + 3, static_cast<std::uint64_t>(i));
    p.opacity_logit = -2.0 + 4.0 * rng::uniform(seed, kStreamToyScene + 4, static_cast<std::uint64_t>(i));
    p.color = rng::uniform(seed, kStreamToyScene + 5, static_cast<std::uint64_t>(i));
    scene.primitives.push_back(p);
  }
  scene.target = Eigen::VectorXd::Zero(rays);
  for (Index r = 0; r < rays; ++r) {
    scene.target[r] = rng::uniform(seed, kStreamToyScene + 6, static_cast<std::uint64_t>(r));
  }
  scene.target_depth = 0.25;
  return scene;
}

DeadlockRecord deadlock_experiment(std::uint64_t seed, int iterations, double step) {
  const ToyScene scene = make_deadlock_scene(seed);
  const Index center = scene.ray_count() / 2;

  DeadlockRecord record;
  record.transmittance_before = toy_transmittance_at(scene, center, scene.target_depth);

  record.direct_state = toy_optimize(scene, iterations, step);

  ToyPlan plan;
  plan.samples = 300;
  plan.k = 20;
  plan.alpha0 = 0.01;
  plan.seed = seed;
  const ToyScene reorganized = toy_reorganize(scene, plan);
  record.transmittance_after = toy_transmittance_at(reorganized, center, reorganized.target_depth);
  record.reorg_state = toy_optimize(reorganized, iterations, step);

  record.loss_direct = record.direct_state.loss_history.back();
  record.loss_reorg = record.reorg_state.loss_history.back();
  return record;
}

}  // namespace splatreorg
