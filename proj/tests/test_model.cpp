#include <doctest.h>

#include <cmath>

#include "splatreorg/model.hpp"
#include "splatreorg/rng.hpp"

using namespace splatreorg;

namespace {

Eigen::Matrix3d random_psd(std::uint64_t seed, double scale = 1.0) {
  Eigen::Matrix3d a;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      a(r, c) = rng::normal(seed, 60 + static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(c));
    }
  }
  return scale * (a * a.transpose()) + 0.01 * scale * Eigen::Matrix3d::Identity();
}

Eigen::Vector4d random_unit_quat(std::uint64_t seed) {
  Eigen::Vector4d q;
  q[0] = rng::normal(seed, 70, 0);
  q[1] = rng::normal(seed, 71, 0);
  q[2] = rng::normal(seed, 72, 0);
  q[3] = rng::normal(seed, 73, 0);
  return q.normalized();
}

}  // namespace

TEST_CASE("identity activations") {
  GaussianSet set = make_gaussian_set(1, 3);
  const ActivatedGaussian g = activate(set, 0);
  CHECK(g.alpha == 0.5);
  CHECK((g.covariance.matrix() - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK(g.position.norm() == 0.0);
}

TEST_CASE("inverse sigmoid at 0.01 activates back exactly") {
  const double logit = inverse_sigmoid(0.01);
  CHECK(logit == doctest::Approx(-4.59512).epsilon(1e-5));
  CHECK(sigmoid(logit) == 0.01);

  GaussianSet set = make_gaussian_set(1, 3);
  set.opacity_logits[0] = logit;
  CHECK(activate(set, 0).alpha == 0.01);
}

TEST_CASE("log scale doubling squares into the covariance") {
  GaussianSet set = make_gaussian_set(1, 3);
  set.log_scales(0, 0) = std::log(2.0);
  const Eigen::Matrix3d cov = activate(set, 0).covariance.matrix();
  CHECK(cov(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(cov(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cov(2, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(cov(0, 1)) < 1e-15);
}

TEST_CASE("activate is pure and bounds-checked") {
  GaussianSet set = make_gaussian_set(2, 4);
  set.opacity_logits[1] = 0.75;
  const ActivatedGaussian a = activate(set, 1);
  const ActivatedGaussian b = activate(set, 1);
  CHECK(a.alpha == b.alpha);
  CHECK((a.covariance.matrix() - b.covariance.matrix()).norm() == 0.0);
  CHECK_THROWS_AS(activate(set, 2), std::out_of_range);
  CHECK_THROWS_AS(activate(set, -1), std::out_of_range);
}

TEST_CASE("covariance from params matches the direct matrix product") {
  // 90 degree rotation about z applied to diag(4, 1, 1).
  const double h = std::sqrt(0.5);
  const Eigen::Vector4d quat(h, 0.0, 0.0, h);
  const Eigen::Vector3d log_scale(std::log(2.0), 0.0, 0.0);
  const Eigen::Matrix3d cov = covariance_from_params(log_scale, quat).matrix();

  Eigen::Matrix3d rot;
  rot << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Eigen::Matrix3d direct =
      rot * Eigen::Vector3d(4.0, 1.0, 1.0).asDiagonal().toDenseMatrix() * rot.transpose();
  CHECK((cov - direct).norm() < 1e-14);
  CHECK(cov(1, 1) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("quaternion sign flip leaves the covariance unchanged") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Eigen::Vector4d q = random_unit_quat(s);
    const Eigen::Vector3d ls(0.3, -0.4, 0.1);
    const Eigen::Matrix3d a = covariance_from_params(ls, q).matrix();
    const Eigen::Matrix3d b = covariance_from_params(ls, -q).matrix();
    CHECK((a - b).norm() == 0.0);
  }
}

TEST_CASE("covariance from params rejects bad input") {
  CHECK_THROWS_AS(covariance_from_params(Eigen::Vector3d::Zero(), Eigen::Vector4d::Zero()),
                  std::invalid_argument);
  CHECK_THROWS_AS(covariance_from_params(Eigen::Vector3d(std::nan(""), 0, 0),
                                         Eigen::Vector4d(1, 0, 0, 0)),
                  NumericError);
}

TEST_CASE("params from covariance on a diagonal matrix") {
  const Covariance3 cov(Eigen::Vector3d(4.0, 1.0, 0.25).asDiagonal().toDenseMatrix());
  const ScaleRotation sr = params_from_covariance(cov);
  CHECK(sr.scale[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sr.scale[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sr.scale[2] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK((sr.rotation - Eigen::Vector4d(1, 0, 0, 0)).norm() < 1e-12);
}

TEST_CASE("degenerate spectrum resolves to the identity rotation") {
  const ScaleRotation sr = params_from_covariance(Covariance3(Eigen::Matrix3d::Identity()));
  CHECK((sr.scale - Eigen::Vector3d::Ones()).norm() < 1e-14);
  CHECK((sr.rotation - Eigen::Vector4d(1, 0, 0, 0)).norm() < 1e-12);
}

TEST_CASE("covariance round trip is tight for random PSD matrices") {
  for (std::uint64_t s = 1; s <= 200; ++s) {
    const Eigen::Matrix3d m = random_psd(s, s % 5 == 0 ? 1e-4 : 1.0);
    const ScaleRotation sr = params_from_covariance(Covariance3(m));
    const Eigen::Matrix3d r = rotation_from_quaternion(sr.rotation);
    const Eigen::Matrix3d rs = r * sr.scale.asDiagonal();
    const Eigen::Matrix3d recon = rs * rs.transpose();
    CHECK((recon - m).norm() / m.norm() < 1e-10);
  }
}

TEST_CASE("full parameter round trip recovers the covariance") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::Vector4d q = random_unit_quat(s + 1000);
    Eigen::Vector3d ls;
    ls[0] = rng::uniform(s, 80, 0) * 2.0 - 1.0;
    ls[1] = rng::uniform(s, 81, 0) * 2.0 - 1.0;
    ls[2] = rng::uniform(s, 82, 0) * 2.0 - 1.0;
    const Covariance3 cov = covariance_from_params(ls, q);
    const ScaleRotation sr = params_from_covariance(cov);
    const Eigen::Matrix3d recon =
        covariance_from_params(sr.scale.array().log().matrix(), sr.rotation).matrix();
    CHECK((recon - cov.matrix()).norm() / cov.matrix().norm() < 1e-10);
  }
}

TEST_CASE("symmetric eigendecomposition conventions") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::Matrix3d m = random_psd(s + 5000);
    const SymmetricEigen3 eig = symmetric_eigen3(m);
    CHECK(eig.values[0] >= eig.values[1]);
    CHECK(eig.values[1] >= eig.values[2]);
    CHECK(eig.vectors.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    const Eigen::Matrix3d recon =
        eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    CHECK((recon - m).norm() <= 1e-11 * std::max(m.trace(), 1.0));
  }
}

TEST_CASE("indefinite matrices beyond tolerance are rejected") {
  Eigen::Matrix3d m = Eigen::Vector3d(1.0, 1.0, -0.5).asDiagonal();
  CHECK_THROWS_AS(params_from_covariance(Covariance3(m)), NumericError);
  Eigen::Matrix3d asym = Eigen::Matrix3d::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(params_from_covariance(asym), NumericError);
}

TEST_CASE("set invariants catch drifted quaternions") {
  GaussianSet set = make_gaussian_set(2, 3);
  check_invariants(set);
  set.rotations(1, 0) = 1.5;
  CHECK_THROWS_AS(check_invariants(set), NumericError);
}
