#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "splatreorg/common.hpp"

namespace splatreorg {

// Structure-of-arrays splat model in the native parameterization used by
// binary splat checkpoints: positions, per-axis log standard deviations,
// unit quaternions (w, x, y, z), pre-activation opacity logits, and an
// opaque appearance payload of D coefficients per primitive.
struct GaussianSet {
  Eigen::MatrixX3d positions;
  Eigen::MatrixX3d log_scales;
  Eigen::Matrix<double, Eigen::Dynamic, 4> rotations;
  Eigen::VectorXd opacity_logits;
  Eigen::MatrixXd appearance;

  // Load metadata: source property layout (for layout-preserving rewrites)
  // and the largest |quaternion norm - 1| seen before normalization.
  std::vector<std::string> io_properties;
  double max_quaternion_deviation = 0.0;
  Index normalized_quaternions = 0;

  Index size() const { return positions.rows(); }
  Index appearance_dim() const { return appearance.cols(); }
};

// Zero-initialized set with identity rotations.
GaussianSet make_gaussian_set(Index count, Index appearance_dim);

// Throws NumericError if array shapes disagree, any stored value is
// non-finite, or a quaternion norm deviates from 1 by more than 1e-6.
void check_invariants(const GaussianSet& set);

// Numerically stable logistic; exp(z)/(1+exp(z)) for z < 0 keeps the
// round trip sigmoid(inverse_sigmoid(a)) exact for small opacities.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double inverse_sigmoid(double a) { return std::log(a / (1.0 - a)); }

// Rotation from a (w, x, y, z) quaternion; the input is normalized first, so
// q and -q map to the same matrix. Throws on zero or non-finite input.
Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q);

// Inverse of the above with a canonical sign: w >= 0, and if w == 0 the
// first nonzero imaginary component is positive.
Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& r);

struct SymmetricEigen3 {
  Eigen::Vector3d values;   // descending
  Eigen::Matrix3d vectors;  // columns; right-handed (det +1)
};

// Eigendecomposition of a symmetric 3x3 matrix with deterministic
// conventions: eigenvalues sorted descending; each eigenvector oriented so
// its largest-magnitude component is positive (first such component on
// ties); the last column is negated if needed to make det(U) = +1.
// Uses the closed-form 3x3 solver and falls back to the iterative one when
// the reconstruction error exceeds 1e-12 * trace.
SymmetricEigen3 symmetric_eigen3(const Eigen::Matrix3d& m);

// Symmetric PSD 3x3 matrix. Construction symmetrizes, so only the six
// independent entries survive.
class Covariance3 {
 public:
  Covariance3() : m_(Eigen::Matrix3d::Zero()) {}
  explicit Covariance3(const Eigen::Matrix3d& m) : m_(0.5 * (m + m.transpose())) {}

  const Eigen::Matrix3d& matrix() const { return m_; }
  double trace() const { return m_.trace(); }
  SymmetricEigen3 eigensystem() const { return symmetric_eigen3(m_); }

 private:
  Eigen::Matrix3d m_;
};

// Sigma = R S S^T R^T with R from the quaternion and S = diag(exp(log_scale)).
Covariance3 covariance_from_params(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& quat);

struct ScaleRotation {
  Eigen::Vector3d scale;     // sqrt of eigenvalues, descending
  Eigen::Vector4d rotation;  // unit quaternion, canonical sign
};

// Inverse conversion via eigendecomposition. Eigenvalues below
// -1e-9 * trace are rejected; smaller negatives are clamped to zero.
ScaleRotation params_from_covariance(const Covariance3& cov);

// Overload that first checks symmetry of a raw matrix (relative tolerance
// 1e-9 on the Frobenius norm).
ScaleRotation params_from_covariance(const Eigen::Matrix3d& m);

struct ActivatedGaussian {
  Eigen::Vector3d position;
  Covariance3 covariance;
  double alpha;
  Eigen::VectorXd appearance;
};

// Applies the standard activations to row i. Pure; throws std::out_of_range.
ActivatedGaussian activate(const GaussianSet& set, Index i);

// Bulk accessors that skip the appearance copy.
Eigen::Matrix3d activated_covariance(const GaussianSet& set, Index i);
Eigen::VectorXd activated_opacities(const GaussianSet& set);

}  // namespace splatreorg
