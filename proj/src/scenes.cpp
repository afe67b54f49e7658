#include "splatreorg/scenes.hpp"

#include <cmath>

#include "splatreorg/rng.hpp"

namespace splatreorg {

namespace {

constexpr std::uint64_t kStreamScene = 32;
constexpr Index kAppearanceDim = 3;  // DC-only payload for synthetic scenes

void set_primitive(GaussianSet& set, Index i, const Eigen::Vector3d& position,
                   const Eigen::Vector3d& sigma, double alpha) {
  set.positions.row(i) = position.transpose();
  set.log_scales.row(i) = sigma.array().log().matrix().transpose();
  set.opacity_logits[i] = inverse_sigmoid(alpha);
}

}  // namespace

MixtureScene make_three_component_scene(Index count) {
  if (count < 3 || count % 3 != 0) {
    throw std::invalid_argument("component scene count must be a positive multiple of 3");
  }
  const Index per = count / 3;

  MixtureScene scene;
  scene.mixture.means = Eigen::MatrixX3d(3, 3);
  scene.mixture.means << 0.0, 0.0, 0.0,
                         2.4, 0.4, -0.3,
                         -0.9, 2.1, 0.8;
  scene.mixture.covariances = {
      Eigen::Vector3d(0.040, 0.090, 0.020).asDiagonal().toDenseMatrix(),
      Eigen::Vector3d(0.100, 0.030, 0.050).asDiagonal().toDenseMatrix(),
      Eigen::Vector3d(0.060, 0.060, 0.110).asDiagonal().toDenseMatrix()};
  const Eigen::Vector3d alphas(0.2, 0.45, 0.7);
  scene.mixture.weights = alphas / alphas.sum();

  scene.set = make_gaussian_set(count, kAppearanceDim);
  scene.component_of.resize(static_cast<size_t>(count));
  for (Index c = 0; c < 3; ++c) {
    const Eigen::Vector3d sigma =
        scene.mixture.covariances[static_cast<size_t>(c)].diagonal().cwiseSqrt();
    for (Index i = c * per; i < (c + 1) * per; ++i) {
      set_primitive(scene.set, i, scene.mixture.means.row(c).transpose(), sigma, alphas[c]);
      scene.set.appearance.row(i).setConstant(static_cast<double>(c));
      scene.component_of[static_cast<size_t>(i)] = c;
    }
  }
  return scene;
}

GaussianSet make_uniform_scene(Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("scene needs at least one primitive");
  GaussianSet set = make_gaussian_set(count, kAppearanceDim);
  const double spacing = std::cbrt(1.0 / static_cast<double>(count));
  const Eigen::Vector3d sigma = Eigen::Vector3d::Constant(0.5 * spacing);
  for (Index i = 0; i < count; ++i) {
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) {
      p[a] = rng::uniform(seed, kStreamScene + static_cast<std::uint64_t>(a),
                          static_cast<std::uint64_t>(i));
    }
    set_primitive(set, i, p, sigma, 0.8);
  }
  return set;
}

GaussianSet make_contrast_scene(Index count, std::uint64_t seed) {
  if (count < 11) throw std::invalid_argument("contrast scene needs at least 11 primitives");
  const Index dense = (count * 10) / 11;
  const Index sparse = count - dense;
  GaussianSet set = make_gaussian_set(count, kAppearanceDim);

  const double dense_spacing = std::cbrt(0.5 / static_cast<double>(dense));
  const double sparse_spacing = std::cbrt(0.5 / static_cast<double>(sparse));
  for (Index i = 0; i < count; ++i) {
    const bool left = i < dense;
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) {
      p[a] = rng::uniform(seed, kStreamScene + 8 + static_cast<std::uint64_t>(a),
                          static_cast<std::uint64_t>(i));
    }
    p[0] = left ? 0.5 * p[0] : 0.5 + 0.5 * p[0];
    const double spacing = left ? dense_spacing : sparse_spacing;
    set_primitive(set, i, p, Eigen::Vector3d::Constant(0.5 * spacing), 0.8);
  }
  return set;
}

GaussianSet make_clone_cluster(Index clones, double alpha, const Eigen::Vector3d& mean,
                               const Eigen::Matrix3d& covariance) {
  if (clones < 1) throw std::invalid_argument("cluster needs at least one clone");
  const ScaleRotation sr = params_from_covariance(Covariance3(covariance));
  GaussianSet set = make_gaussian_set(clones, kAppearanceDim);
  for (Index i = 0; i < clones; ++i) {
    set.positions.row(i) = mean.transpose();
    set.log_scales.row(i) = sr.scale.array().log().matrix().transpose();
    set.rotations.row(i) = sr.rotation.transpose();
    set.opacity_logits[i] = inverse_sigmoid(alpha);
  }
  return set;
}

OccluderScene make_occluder_scene(std::uint64_t seed) {
  OccluderScene scene;
  scene.ray_origin = Eigen::Vector3d::Zero();
  scene.ray_direction = Eigen::Vector3d(0, 0, 1);

  const Index side = 21;
  const Index surface = side * side;
  scene.set = make_gaussian_set(surface + 1, kAppearanceDim);

  const double spacing = 2.0 / static_cast<double>(side - 1);
  const Eigen::Vector3d surface_sigma(0.6 * spacing, 0.6 * spacing, 0.12 * spacing);
  Index i = 0;
  for (Index gx = 0; gx < side; ++gx) {
    for (Index gy = 0; gy < side; ++gy, ++i) {
      Eigen::Vector3d p(-1.0 + spacing * static_cast<double>(gx),
                        -1.0 + spacing * static_cast<double>(gy),
                        5.0 + 0.01 * rng::normal(seed, kStreamScene + 16,
                                                 static_cast<std::uint64_t>(i)));
      set_primitive(scene.set, i, p, surface_sigma, 0.7);
      scene.set.appearance.row(i).setConstant(0.5);
    }
  }
  // Floater directly on the axis ray.
  set_primitive(scene.set, surface, Eigen::Vector3d(0, 0, 2), Eigen::Vector3d::Constant(0.25),
                0.99);
  scene.set.appearance.row(surface).setConstant(0.9);
  scene.target_depth = 5.0 - 4.0 * surface_sigma[2];
  return scene;
}

Eigen::MatrixX3d mixture_probes(const GaussianMixture& mixture, Index count, std::uint64_t seed,
                                double min_fraction) {
  const double threshold = min_fraction * mixture.peak_density();
  std::vector<Eigen::Vector3d> kept;
  const Index components = mixture.weights.size();
  Eigen::VectorXd cumulative(components);
  double acc = 0.0;
  for (Index c = 0; c < components; ++c) {
    acc += mixture.weights[c];
    cumulative[c] = acc;
  }
  std::vector<Eigen::Matrix3d> roots(static_cast<size_t>(components));
  for (Index c = 0; c < components; ++c) {
    roots[static_cast<size_t>(c)] =
        Eigen::LLT<Eigen::Matrix3d>(mixture.covariances[static_cast<size_t>(c)]).matrixL();
  }

  for (std::uint64_t j = 0; static_cast<Index>(kept.size()) < count; ++j) {
    if (j > static_cast<std::uint64_t>(count) * 1000 + 100000) {
      throw NumericError("probes", "density threshold rejects nearly all candidates");
    }
    const double u = rng::uniform(seed, kStreamScene + 24, j) * acc;
    const double* begin = cumulative.data();
    const Index c = std::min<Index>(std::upper_bound(begin, begin + components, u) - begin,
                                    components - 1);
    const Eigen::Vector3d x = mixture.means.row(c).transpose() +
                              roots[static_cast<size_t>(c)] *
                                  rng::normal3(seed, kStreamScene + 25, j);
    if (mixture.density(x) >= threshold) kept.push_back(x);
  }

  Eigen::MatrixX3d probes(count, 3);
  for (Index p = 0; p < count; ++p) probes.row(p) = kept[static_cast<size_t>(p)].transpose();
  return probes;
}

Eigen::MatrixX3d interior_probes(const Eigen::MatrixX3d& positions, const Eigen::Vector3d& lo,
                                 const Eigen::Vector3d& hi, Index count) {
  std::vector<Index> inside;
  for (Index i = 0; i < positions.rows(); ++i) {
    const Eigen::Vector3d p = positions.row(i).transpose();
    if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) inside.push_back(i);
  }
  if (static_cast<Index>(inside.size()) < count) {
    throw NumericError("probes", "not enough interior positions for the probe count");
  }
  Eigen::MatrixX3d probes(count, 3);
  const Index stride = static_cast<Index>(inside.size()) / count;
  for (Index p = 0; p < count; ++p) {
    probes.row(p) = positions.row(inside[static_cast<size_t>(p * stride)]);
  }
  return probes;
}

}  // namespace splatreorg
