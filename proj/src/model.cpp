#include "splatreorg/model.hpp"

#include <cmath>

namespace splatreorg {

namespace {
constexpr double kEigReconstructTol = 1e-12;
constexpr double kQuatNormTol = 1e-6;
constexpr double kPsdTol = 1e-9;
}  // namespace

GaussianSet make_gaussian_set(Index count, Index appearance_dim) {
  GaussianSet set;
  set.positions = Eigen::MatrixX3d::Zero(count, 3);
  set.log_scales = Eigen::MatrixX3d::Zero(count, 3);
  set.rotations = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(count, 4);
  set.rotations.col(0).setOnes();
  set.opacity_logits = Eigen::VectorXd::Zero(count);
  set.appearance = Eigen::MatrixXd::Zero(count, appearance_dim);
  return set;
}

void check_invariants(const GaussianSet& set) {
  const Index n = set.positions.rows();
  if (set.log_scales.rows() != n || set.rotations.rows() != n ||
      set.opacity_logits.size() != n || set.appearance.rows() != n) {
    throw NumericError("model", "array lengths disagree");
  }
  if (!set.positions.allFinite() || !set.log_scales.allFinite() ||
      !set.rotations.allFinite() || !set.opacity_logits.allFinite() ||
      !set.appearance.allFinite()) {
    throw NumericError("model", "non-finite field value");
  }
  for (Index i = 0; i < n; ++i) {
    const double norm = set.rotations.row(i).norm();
    if (std::abs(norm - 1.0) > kQuatNormTol) {
      throw NumericError("model", "quaternion " + std::to_string(i) + " is not unit length");
    }
  }
}

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q) {
  if (!q.allFinite()) throw NumericError("model", "non-finite quaternion");
  const double norm = q.norm();
  if (norm == 0.0) throw std::invalid_argument("zero quaternion");
  const Eigen::Vector4d u = q / norm;
  return Eigen::Quaterniond(u[0], u[1], u[2], u[3]).toRotationMatrix();
}

Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
  // Canonical representative of the {q, -q} double cover.
  double lead = out[0];
  if (lead == 0.0) {
    for (int i = 1; i < 4; ++i) {
      if (out[i] != 0.0) {
        lead = out[i];
        break;
      }
    }
  }
  if (lead < 0.0) out = -out;
  return out;
}

SymmetricEigen3 symmetric_eigen3(const Eigen::Matrix3d& m_in) {
  const Eigen::Matrix3d m = 0.5 * (m_in + m_in.transpose());
  if (!m.allFinite()) throw NumericError("eigendecomposition", "non-finite matrix");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(m);
  const double scale = std::max(std::abs(m.trace()), 1e-300);
  {
    const Eigen::Matrix3d recon = solver.eigenvectors() *
                                  solver.eigenvalues().asDiagonal() *
                                  solver.eigenvectors().transpose();
    if ((recon - m).norm() > kEigReconstructTol * scale) {
      solver.compute(m);  // iterative refinement path
    }
  }

  // Fully degenerate spectrum: any orthonormal basis is valid, so pin the
  // identity (replacing it changes the reconstruction by at most the spread,
  // which is within the documented tolerance).
  if (solver.eigenvalues()[2] - solver.eigenvalues()[0] <= kEigReconstructTol * scale) {
    SymmetricEigen3 out;
    out.values.setConstant(solver.eigenvalues()[1]);
    out.vectors.setIdentity();
    return out;
  }

  SymmetricEigen3 out;
  // Eigen sorts ascending; flip to descending.
  for (int c = 0; c < 3; ++c) {
    out.values[c] = solver.eigenvalues()[2 - c];
    out.vectors.col(c) = solver.eigenvectors().col(2 - c);
  }
  // Orient each eigenvector: largest-magnitude component positive,
  // first such component on ties.
  for (int c = 0; c < 3; ++c) {
    int arg = 0;
    double best = std::abs(out.vectors(0, c));
    for (int rrow = 1; rrow < 3; ++rrow) {
      const double a = std::abs(out.vectors(rrow, c));
      if (a > best) {
        best = a;
        arg = rrow;
      }
    }
    if (out.vectors(arg, c) < 0.0) out.vectors.col(c) = -out.vectors.col(c);
  }
  if (out.vectors.determinant() < 0.0) out.vectors.col(2) = -out.vectors.col(2);
  return out;
}

Covariance3 covariance_from_params(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& quat) {
  if (!log_scale.allFinite()) throw NumericError("model", "non-finite log scale");
  const Eigen::Matrix3d r = rotation_from_quaternion(quat);
  const Eigen::Vector3d s = log_scale.array().exp();
  if (!s.allFinite()) throw NumericError("model", "scale activation overflow");
  const Eigen::Matrix3d rs = r * s.asDiagonal();
  return Covariance3(rs * rs.transpose());
}

ScaleRotation params_from_covariance(const Covariance3& cov) {
  const SymmetricEigen3 eig = cov.eigensystem();
  const double tr = std::max(cov.trace(), 0.0);
  if (eig.values[2] < -kPsdTol * std::max(tr, 1e-300)) {
    throw NumericError("eigendecomposition", "matrix is not positive semidefinite");
  }
  ScaleRotation out;
  out.scale = eig.values.cwiseMax(0.0).cwiseSqrt();
  out.rotation = quaternion_from_rotation(eig.vectors);
  return out;
}

ScaleRotation params_from_covariance(const Eigen::Matrix3d& m) {
  const double scale = std::max(m.norm(), 1e-300);
  if ((m - m.transpose()).norm() > kPsdTol * scale) {
    throw NumericError("eigendecomposition", "matrix is not symmetric");
  }
  return params_from_covariance(Covariance3(m));
}

ActivatedGaussian activate(const GaussianSet& set, Index i) {
  if (i < 0 || i >= set.size()) throw std::out_of_range("gaussian index out of range");
  ActivatedGaussian g;
  g.position = set.positions.row(i).transpose();
  g.covariance = covariance_from_params(set.log_scales.row(i).transpose(),
                                        set.rotations.row(i).transpose());
  g.alpha = sigmoid(set.opacity_logits[i]);
  g.appearance = set.appearance.row(i).transpose();
  return g;
}

Eigen::Matrix3d activated_covariance(const GaussianSet& set, Index i) {
  if (i < 0 || i >= set.size()) throw std::out_of_range("gaussian index out of range");
  return covariance_from_params(set.log_scales.row(i).transpose(),
                                set.rotations.row(i).transpose())
      .matrix();
}

Eigen::VectorXd activated_opacities(const GaussianSet& set) {
  Eigen::VectorXd a(set.size());
  for (Index i = 0; i < set.size(); ++i) a[i] = sigmoid(set.opacity_logits[i]);
  return a;
}

}  // namespace splatreorg
