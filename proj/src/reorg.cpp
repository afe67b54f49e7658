#include "splatreorg/reorg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace splatreorg {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::Matrix3d second_moment_about(const Eigen::MatrixX3d& centers,
                                    const std::vector<PointIndex::Neighbor>& neighbors,
                                    const Eigen::Vector3d& x) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const auto& nb : neighbors) {
    const Eigen::Vector3d d = centers.row(nb.index).transpose() - x;
    m.noalias() += d * d.transpose();
  }
  return m / static_cast<double>(neighbors.size());
}

}  // namespace

Covariance3 floor_eigenvalues(const Eigen::Matrix3d& m, double floor_rel, double floor_abs,
                              int* floored) {
  const SymmetricEigen3 eig = symmetric_eigen3(m);
  const double lambda_max = std::max(eig.values[0], 0.0);
  const double floor = std::max(floor_rel * lambda_max, floor_abs);
  Eigen::Vector3d values = eig.values;
  int raised = 0;
  for (int i = 0; i < 3; ++i) {
    if (values[i] < floor) {
      values[i] = floor;
      ++raised;
    }
  }
  if (floored) *floored = raised;
  return Covariance3(eig.vectors * values.asDiagonal() * eig.vectors.transpose());
}

Covariance3 knn_covariance(const SampleBatch& batch, const PointIndex& index, Index j, int k,
                           double floor_rel, double floor_abs) {
  if (batch.size() < k + 1) throw NumericError("knn covariance", "fewer than k + 1 samples");
  const auto neighbors = index.knn(batch.centers.row(j).transpose(), k, j);
  const Eigen::Matrix3d m =
      second_moment_about(batch.centers, neighbors, batch.centers.row(j).transpose());
  return floor_eigenvalues(m, floor_rel, floor_abs);
}

Eigen::MatrixXd inherit_appearance(const SampleBatch& batch, const PointIndex& old_index,
                                   const GaussianSet& old_set) {
  Eigen::MatrixXd appearance(batch.size(), old_set.appearance_dim());
  parallel_for(batch.size(), [&](std::int64_t j) {
    const Index nn = old_index.nearest(batch.centers.row(j).transpose());
    appearance.row(j) = old_set.appearance.row(nn);
  });
  return appearance;
}

GaussianSet assemble(const SampleBatch& batch, const std::vector<Covariance3>& covariances,
                     const Eigen::MatrixXd& appearance, double alpha0) {
  const Index m = batch.size();
  if (static_cast<Index>(covariances.size()) != m || appearance.rows() != m) {
    throw std::invalid_argument("assemble: input lengths disagree");
  }
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");

  GaussianSet out = make_gaussian_set(m, appearance.cols());
  out.positions = batch.centers;
  out.appearance = appearance;
  out.opacity_logits.setConstant(inverse_sigmoid(alpha0));
  parallel_for(m, [&](std::int64_t j) {
    const ScaleRotation sr = params_from_covariance(covariances[static_cast<size_t>(j)]);
    out.log_scales.row(j) = sr.scale.array().log().matrix().transpose();
    out.rotations.row(j) = sr.rotation.transpose();
  });
  if (!out.log_scales.allFinite()) {
    throw NumericError("assemble", "log scale underflow; eigenvalue floor too small");
  }
  return out;
}

ReorgResult reorganize(const GaussianSet& set, const ResamplePlan& plan) {
  plan.validate();
  const Index n = set.size();
  const Index m = plan.resolve_samples(n);
  if (m < plan.k + 1) {
    throw std::invalid_argument("sample count must exceed k for the kNN covariance");
  }

  ReorgResult result;
  auto t0 = std::chrono::steady_clock::now();
  const SampleBatch batch = draw_samples(set, plan);
  result.stats.sample_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const PointIndex sample_index = PointIndex::build(batch.centers);
  const PointIndex old_index = PointIndex::build(set.positions);
  result.stats.index_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  std::vector<Covariance3> covariances(static_cast<size_t>(m));
  std::vector<int> floored(static_cast<size_t>(m), 0);
  std::vector<double> radius(static_cast<size_t>(m), 0.0);
  parallel_for(m, [&](std::int64_t j) {
    const auto neighbors = sample_index.knn(batch.centers.row(j).transpose(), plan.k, j);
    const Eigen::Matrix3d moment =
        second_moment_about(batch.centers, neighbors, batch.centers.row(j).transpose());
    covariances[static_cast<size_t>(j)] =
        floor_eigenvalues(moment, plan.lambda_floor_rel, plan.lambda_floor_abs,
                          &floored[static_cast<size_t>(j)]);
    radius[static_cast<size_t>(j)] = std::sqrt(neighbors.back().squared_distance);
  });
  for (Index j = 0; j < m; ++j) {
    result.stats.floored_eigenvalues += floored[static_cast<size_t>(j)];
  }
  result.stats.min_neighborhood_radius = *std::min_element(radius.begin(), radius.end());
  result.stats.max_neighborhood_radius = *std::max_element(radius.begin(), radius.end());
  result.stats.covariance_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const Eigen::MatrixXd appearance = inherit_appearance(batch, old_index, set);
  result.stats.inherit_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  result.output = assemble(batch, covariances, appearance, plan.alpha0);
  result.stats.assemble_ms = ms_since(t0);
  return result;
}

ReorgResult reorganize_cascaded(const GaussianSet& set, const ResamplePlan& plan, int passes) {
  if (passes < 1) throw std::invalid_argument("passes must be at least 1");
  ResamplePlan pass_plan = plan;
  ReorgResult result = [&] {
    pass_plan.seed = plan.seed;
    return reorganize(set, pass_plan);
  }();
  for (int p = 1; p < passes; ++p) {
    pass_plan.seed = plan.seed + static_cast<std::uint64_t>(p);
    result = reorganize(result.output, pass_plan);
  }
  return result;
}

}  // namespace splatreorg
