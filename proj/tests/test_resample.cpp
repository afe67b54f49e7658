#include <doctest.h>

#include <cmath>

#include "splatreorg/resample.hpp"
#include "splatreorg/scenes.hpp"

using namespace splatreorg;

TEST_CASE("weights reproduce already-normalized opacities") {
  Eigen::VectorXd two(2);
  two << 0.5, 0.5;
  CHECK((clipped_weights(two, 1e-12) - two).norm() == 0.0);

  Eigen::VectorXd three(3);
  three << 0.1, 0.3, 0.6;
  const Eigen::VectorXd w = clipped_weights(three, 1e-12);
  CHECK(std::abs(w[0] - 0.1) < 1e-15);
  CHECK(std::abs(w[1] - 0.3) < 1e-15);
  CHECK(std::abs(w[2] - 0.6) < 1e-15);
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
}

TEST_CASE("zero opacities are clipped, not dropped") {
  Eigen::VectorXd alphas(2);
  alphas << 1.0, 0.0;
  const Eigen::VectorXd w = clipped_weights(alphas, 1e-12);
  CHECK(w[1] == doctest::Approx(1e-12).epsilon(1e-6));
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);

  Eigen::VectorXd dead(3);
  dead.setZero();
  CHECK_THROWS_AS(clipped_weights(dead, 1e-12), NumericError);
}

TEST_CASE("categorical weights come from activated opacities, not logits") {
  GaussianSet set = make_gaussian_set(2, 3);
  set.opacity_logits[0] = inverse_sigmoid(0.2);
  set.opacity_logits[1] = inverse_sigmoid(0.6);
  const Eigen::VectorXd w = categorical_weights(set);
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("single component draws are all zero and seeded draws repeat") {
  Eigen::VectorXd one(1);
  one << 1.0;
  const auto idx = draw_categories(one, 100, 5);
  for (Index i : idx) CHECK(i == 0);

  Eigen::VectorXd three(3);
  three << 0.1, 0.3, 0.6;
  const auto a = draw_categories(three, 5000, 99);
  const auto b = draw_categories(three, 5000, 99);
  CHECK(a == b);
  const auto c = draw_categories(three, 5000, 100);
  CHECK(a != c);
}

TEST_CASE("empirical frequencies stay within the 4-sigma binomial band") {
  Eigen::VectorXd weights(3);
  weights << 0.1, 0.3, 0.6;
  const Index m = 100000;
  const auto draws = draw_categories(weights, m, 4242);
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (Index z : draws) counts[z] += 1.0;
  for (int c = 0; c < 3; ++c) {
    const double p = weights[c];
    const double freq = counts[c] / static_cast<double>(m);
    const double band = 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(m));
    CHECK(std::abs(freq - p) <= band);
  }
}

TEST_CASE("a negligible transform pins samples to the component center") {
  GaussianSet set = make_gaussian_set(1, 3);
  set.positions.row(0) << 4.0, -1.0, 2.5;
  set.log_scales.row(0).setConstant(-40.0);  // transform scale ~ 4e-18
  const SampleBatch batch =
      draw_coordinates(set, std::vector<Index>(64, 0), 17);
  for (Index j = 0; j < batch.size(); ++j) {
    CHECK((batch.centers.row(j) - set.positions.row(0)).norm() < 1e-12);
  }
}

TEST_CASE("conditional sample moments match the source component") {
  // One primitive with Sigma = diag(4, 1, 0.25).
  GaussianSet set = make_gaussian_set(1, 3);
  set.positions.row(0) << 1.0, -2.0, 0.5;
  set.log_scales.row(0) << std::log(2.0), 0.0, std::log(0.5);

  const Index m = 200000;
  const std::vector<Index> categories(static_cast<size_t>(m), 0);
  const SampleBatch batch = draw_coordinates(set, categories, 31);

  const Eigen::Vector3d mean = batch.centers.colwise().mean();
  CHECK((mean - set.positions.row(0).transpose()).norm() < 0.02);

  const Eigen::MatrixX3d centered = batch.centers.rowwise() - mean.transpose();
  const Eigen::Matrix3d cov =
      centered.transpose() * centered / static_cast<double>(m - 1);
  const Eigen::Matrix3d expected = Eigen::Vector3d(4.0, 1.0, 0.25).asDiagonal();
  CHECK((cov - expected).norm() / expected.norm() < 0.03);
}

TEST_CASE("rotated transform reproduces the activated covariance") {
  GaussianSet set = make_gaussian_set(1, 3);
  const double h = std::sqrt(0.5);
  set.rotations.row(0) << h, 0.0, 0.0, h;  // 90 degrees about z
  set.log_scales.row(0) << std::log(2.0), 0.0, 0.0;

  const Index m = 200000;
  const SampleBatch batch =
      draw_coordinates(set, std::vector<Index>(static_cast<size_t>(m), 0), 77);
  const Eigen::Vector3d mean = batch.centers.colwise().mean();
  const Eigen::MatrixX3d centered = batch.centers.rowwise() - mean.transpose();
  const Eigen::Matrix3d cov = centered.transpose() * centered / static_cast<double>(m - 1);
  const Eigen::Matrix3d expected = activated_covariance(set, 0);
  CHECK((cov - expected).norm() / expected.norm() < 0.03);
}

TEST_CASE("the batch is a pure function of set and seed") {
  const MixtureScene scene = make_three_component_scene(300);
  ResamplePlan plan;
  plan.samples = 500;
  plan.seed = 7;
  const SampleBatch a = draw_samples(scene.set, plan);
  const SampleBatch b = draw_samples(scene.set, plan);
  CHECK((a.centers - b.centers).norm() == 0.0);
  CHECK(a.source == b.source);
  plan.seed = 8;
  const SampleBatch c = draw_samples(scene.set, plan);
  CHECK((a.centers - c.centers).norm() != 0.0);
}

TEST_CASE("plan validation") {
  ResamplePlan plan;
  plan.alpha0 = 1.5;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan.alpha0 = 0.01;
  plan.k = 0;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan.k = 20;
  plan.validate();
  CHECK(plan.resolve_samples(123) == 123);
  plan.samples = 64;
  CHECK(plan.resolve_samples(123) == 64);
}
