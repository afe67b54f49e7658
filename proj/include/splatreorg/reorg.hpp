#pragma once

#include <vector>

#include "splatreorg/kdtree.hpp"
#include "splatreorg/model.hpp"
#include "splatreorg/resample.hpp"

namespace splatreorg {

struct ReorgStats {
  std::int64_t floored_eigenvalues = 0;
  double min_neighborhood_radius = 0.0;
  double max_neighborhood_radius = 0.0;
  double sample_ms = 0.0;
  double index_ms = 0.0;
  double covariance_ms = 0.0;
  double inherit_ms = 0.0;
  double assemble_ms = 0.0;
};

struct ReorgResult {
  GaussianSet output;
  ReorgStats stats;
};

// Clamps eigenvalues of a symmetric matrix at max(rel * lambda_max, abs) and
// reports how many were raised.
Covariance3 floor_eigenvalues(const Eigen::Matrix3d& m, double floor_rel, double floor_abs,
                              int* floored = nullptr);

// Local second moment about sample j taken over its k nearest neighbors in
// the batch (self excluded): (1/k) * sum (x_l - x_j)(x_l - x_j)^T, floored.
// The moment is about the query point, not the neighbor centroid.
Covariance3 knn_covariance(const SampleBatch& batch, const PointIndex& index, Index j, int k,
                           double floor_rel = 1e-6, double floor_abs = 1e-12);

// Row j is an exact copy of the appearance of the old primitive nearest to
// sample center j.
Eigen::MatrixXd inherit_appearance(const SampleBatch& batch, const PointIndex& old_index,
                                   const GaussianSet& old_set);

// Builds the output set: positions from the batch, scale/rotation from the
// eigendecomposition of each covariance, every opacity logit set to
// inverse_sigmoid(alpha0), appearance copied verbatim.
GaussianSet assemble(const SampleBatch& batch, const std::vector<Covariance3>& covariances,
                     const Eigen::MatrixXd& appearance, double alpha0);

// Full pass: sample, kNN covariance over the new point set, appearance from
// the nearest old primitive, assemble. Deterministic given (set, plan).
ReorgResult reorganize(const GaussianSet& set, const ResamplePlan& plan);

// passes >= 1 chained passes; pass p runs with seed plan.seed + p, so
// passes = 1 is exactly reorganize. Each pass feeds the previous output
// directly into the next with no optimization in between.
ReorgResult reorganize_cascaded(const GaussianSet& set, const ResamplePlan& plan, int passes);

}  // namespace splatreorg
