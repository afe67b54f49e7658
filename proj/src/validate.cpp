#include "splatreorg/validate.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "splatreorg/diagnostics.hpp"
#include "splatreorg/reorg.hpp"
#include "splatreorg/scenes.hpp"
#include "splatreorg/toy.hpp"

namespace splatreorg {

namespace {

// Pinned acceptance thresholds.
constexpr double kDensityMedianMax = 0.15;
constexpr double kVarianceRatioLo = 0.3;
constexpr double kVarianceRatioHi = 0.8;
constexpr double kOccupancyTol = 0.20;
constexpr std::int64_t kOverlapLo = 5;   // k / 4 at k = 20
constexpr std::int64_t kOverlapHi = 80;  // 4 k at k = 20
constexpr double kEnergyTol = 1e-9;
constexpr double kClusterDropFraction = 0.01;
constexpr double kTransmittanceBeforeMax = 0.01 * (1.0 + 1e-9);
const double kTransmittanceAfterMin = std::pow(0.99, 40.0);
constexpr double kGradientRatioTol = 1e-12;
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;
constexpr int kDeadlockSeeds = 10;
constexpr int kDeadlockMinWins = 9;
constexpr int kDeadlockIters = 2000;

// Canonical base seeds per suite; the caller's seed shifts them.
constexpr std::uint64_t kConsistencyBase = 101;
constexpr std::uint64_t kOverlapBase = 202;
constexpr std::uint64_t kDeadlockBase = 303;
constexpr std::uint64_t kProbeSeed = 7;

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// q_M built from a sample batch and its kNN covariances.
Eigen::VectorXd evaluate_sample_mixture(const SampleBatch& batch,
                                        const std::vector<Covariance3>& covs,
                                        const Eigen::MatrixX3d& probes) {
  std::vector<Eigen::Matrix3d> mats(covs.size());
  for (size_t j = 0; j < covs.size(); ++j) mats[j] = covs[j].matrix();
  const Eigen::VectorXd weights =
      Eigen::VectorXd::Constant(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return MixtureEvaluator(batch.centers, mats, weights).evaluate(probes);
}

std::vector<Covariance3> batch_covariances(const SampleBatch& batch, const ResamplePlan& plan) {
  const PointIndex index = PointIndex::build(batch.centers);
  std::vector<Covariance3> covs(static_cast<size_t>(batch.size()));
  parallel_for(batch.size(), [&](std::int64_t j) {
    covs[static_cast<size_t>(j)] = knn_covariance(batch, index, j, plan.k,
                                                  plan.lambda_floor_rel, plan.lambda_floor_abs);
  });
  return covs;
}

}  // namespace

SuiteResult run_consistency_suite(std::uint64_t seed) {
  SuiteResult suite;
  suite.suite = "consistency";

  const MixtureScene scene = make_three_component_scene(3000);
  const Eigen::MatrixX3d probes = mixture_probes(scene.mixture, 200, kProbeSeed + seed, 0.1);
  Eigen::VectorXd p_values(probes.rows());
  for (Index i = 0; i < probes.rows(); ++i) {
    p_values[i] = scene.mixture.density(probes.row(i).transpose());
  }

  ResamplePlan plan;
  plan.samples = 50000;
  plan.k = 50;
  plan.seed = kConsistencyBase + seed;

  // Median relative error of q_M at k = 50.
  {
    Stopwatch watch;
    const SampleBatch batch = draw_samples(scene.set, plan);
    const std::vector<Covariance3> covs = batch_covariances(batch, plan);
    const Eigen::VectorXd q = evaluate_sample_mixture(batch, covs, probes);
    std::vector<double> errors(static_cast<size_t>(probes.rows()));
    for (Index i = 0; i < probes.rows(); ++i) {
      errors[static_cast<size_t>(i)] = std::abs(q[i] - p_values[i]) / p_values[i];
    }
    const double med = median(errors);
    suite.add({"density_median", med < kDensityMedianMax, med,
               "median |q - p| / p over " + std::to_string(probes.rows()) + " probes, limit " +
                   format(kDensityMedianMax),
               watch.ms()});
  }

  // Pointwise variance across 20 seeds shrinks when k doubles.
  {
    Stopwatch watch;
    const int runs = 20;
    auto probe_variances = [&](int k) {
      Eigen::MatrixXd values(runs, probes.rows());
      for (int r = 0; r < runs; ++r) {
        ResamplePlan run_plan = plan;
        run_plan.k = k;
        run_plan.seed = kConsistencyBase + seed + 1000 + static_cast<std::uint64_t>(r);
        const SampleBatch batch = draw_samples(scene.set, run_plan);
        const std::vector<Covariance3> covs = batch_covariances(batch, run_plan);
        values.row(r) = evaluate_sample_mixture(batch, covs, probes).transpose();
      }
      std::vector<double> variances(static_cast<size_t>(probes.rows()));
      for (Index c = 0; c < probes.rows(); ++c) {
        const double mean = values.col(c).mean();
        variances[static_cast<size_t>(c)] =
            (values.col(c).array() - mean).square().sum() / (runs - 1);
      }
      return variances;
    };
    const double var_k = median(probe_variances(plan.k));
    const double var_2k = median(probe_variances(2 * plan.k));
    const double ratio = var_2k / var_k;
    suite.add({"variance_ratio", ratio >= kVarianceRatioLo && ratio <= kVarianceRatioHi, ratio,
               "median pointwise variance ratio (k=" + std::to_string(2 * plan.k) + ") / (k=" +
                   std::to_string(plan.k) + "), window [" + format(kVarianceRatioLo) + ", " +
                   format(kVarianceRatioHi) + "]",
               watch.ms()});
  }

  // Constant-opacity occupancy of the fully reorganized set: the field
  // F(x) / (M alpha0) rebuilt from the assembled output tracks p within 20%
  // across the probes (median, matching the density protocol above).
  {
    Stopwatch watch;
    const ReorgResult result = reorganize(scene.set, plan);
    const Index m = result.output.size();
    std::vector<Eigen::Matrix3d> covs(static_cast<size_t>(m));
    parallel_for(m, [&](std::int64_t j) {
      covs[static_cast<size_t>(j)] = activated_covariance(result.output, j);
    });
    const Eigen::VectorXd weights =
        Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    const Eigen::VectorXd field =
        MixtureEvaluator(result.output.positions, covs, weights).evaluate(probes);
    std::vector<double> errors(static_cast<size_t>(probes.rows()));
    double worst = 0.0;
    for (Index i = 0; i < probes.rows(); ++i) {
      errors[static_cast<size_t>(i)] = std::abs(field[i] - p_values[i]) / p_values[i];
      worst = std::max(worst, errors[static_cast<size_t>(i)]);
    }
    const double med = median(errors);
    suite.add({"occupancy_field", med < kOccupancyTol, med,
               "median |F/(M a0) - p| / p over probes, limit " + format(kOccupancyTol) +
                   " (max " + format(worst) + ")",
               watch.ms()});
  }

  return suite;
}

SuiteResult run_overlap_suite(std::uint64_t seed) {
  SuiteResult suite;
  suite.suite = "overlap";

  ResamplePlan plan;
  plan.k = 20;
  plan.seed = kOverlapBase + seed;

  // Coincident unit pair against the closed-form product integral.
  {
    Stopwatch watch;
    GaussianSet pair = make_gaussian_set(2, 3);
    pair.opacity_logits.setConstant(40.0);  // activates to 1.0 in double precision
    const double value = overlap_energy_exact(pair).value;
    const double expected = 2.0 * std::pow(4.0 * M_PI, -1.5);
    const double err = std::abs(value - expected);
    suite.add({"coincident_pair_energy", err <= kEnergyTol, value,
               "expected " + format(expected) + ", |error| = " + format(err), watch.ms()});
  }

  // Quadratic growth on clone clusters: s (s - 1) a^2 N(0 | 0, 2 Sigma).
  {
    const Eigen::Matrix3d sigma =
        Eigen::Vector3d(0.040, 0.090, 0.020).asDiagonal().toDenseMatrix();
    for (Index s : {Index(2), Index(5), Index(50)}) {
      Stopwatch watch;
      const GaussianSet cluster =
          make_clone_cluster(s, 0.8, Eigen::Vector3d(0.3, -0.2, 0.7), sigma);
      const double value = overlap_energy_exact(cluster).value;
      const Eigen::Matrix3d doubled = 2.0 * sigma;
      const double pdf0 =
          std::pow(2.0 * M_PI, -1.5) / std::sqrt(doubled.determinant());
      const double a = sigmoid(inverse_sigmoid(0.8));
      const double expected = static_cast<double>(s) * static_cast<double>(s - 1) * a * a * pdf0;
      const double err = std::abs(value - expected);
      suite.add({"clone_growth_s" + std::to_string(s), err <= kEnergyTol, value,
                 "expected " + format(expected) + ", |error| = " + format(err), watch.ms()});
    }
  }

  // Degenerate cluster: reorganization beats both the original energy and a
  // pure opacity reset on the old geometry.
  {
    Stopwatch watch;
    const Eigen::Matrix3d sigma =
        Eigen::Vector3d(0.040, 0.090, 0.020).asDiagonal().toDenseMatrix();
    const GaussianSet cluster = make_clone_cluster(50, 0.8, Eigen::Vector3d::Zero(), sigma);
    const double before = overlap_energy_exact(cluster).value;
    const double reset = overlap_after_reset(cluster, 0.01, 0.0, true).value;
    ResamplePlan cluster_plan = plan;
    cluster_plan.alpha0 = 0.01;
    const double after = overlap_energy_exact(reorganize(cluster, cluster_plan).output).value;
    suite.add({"cluster_energy_drop", after < kClusterDropFraction * before, after / before,
               "after / before = " + format(after / before) + ", limit " +
                   format(kClusterDropFraction),
               watch.ms()});
    suite.add({"cluster_vs_reset", after < reset, after / reset,
               "after = " + format(after) + " vs reset = " + format(reset), 0.0});
  }

  // Bounded effective overlap after reorganization of uniform and
  // 10:1-contrast scenes. Probes sit on interior output positions (the
  // occupied region, where the local-density argument applies); the window
  // is checked on the effective overlap across the 100 probes. Per-probe
  // extremes are reported alongside.
  auto bounded_check = [&](const std::string& name, const GaussianSet& input,
                           const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& boxes) {
    Stopwatch watch;
    ResamplePlan scene_plan = plan;
    const GaussianSet output = reorganize(input, scene_plan).output;
    const Index per_box = 100 / static_cast<Index>(boxes.size());
    std::vector<std::int64_t> all_counts;
    for (const auto& box : boxes) {
      const Eigen::MatrixX3d probes =
          interior_probes(output.positions, box.first, box.second, per_box);
      for (std::int64_t c : effective_overlap(output, probes, kResponseCutoff)) {
        all_counts.push_back(c);
      }
    }
    std::int64_t lo = all_counts[0], hi = all_counts[0];
    double mean = 0.0;
    for (std::int64_t c : all_counts) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
      mean += static_cast<double>(c);
    }
    mean /= static_cast<double>(all_counts.size());
    const bool pass = mean >= static_cast<double>(kOverlapLo) &&
                      mean <= static_cast<double>(kOverlapHi);
    suite.add({name, pass, mean,
               "effective overlap " + format(mean) + " over 100 probes (per-probe range [" +
                   std::to_string(lo) + ", " + std::to_string(hi) + "]), window [" +
                   std::to_string(kOverlapLo) + ", " + std::to_string(kOverlapHi) + "]",
               watch.ms()});
  };

  bounded_check("bounded_overlap_uniform", make_uniform_scene(12000, kOverlapBase + seed),
                {{Eigen::Vector3d(0.25, 0.25, 0.25), Eigen::Vector3d(0.75, 0.75, 0.75)}});
  bounded_check("bounded_overlap_contrast", make_contrast_scene(22000, kOverlapBase + seed + 1),
                {{Eigen::Vector3d(0.10, 0.30, 0.30), Eigen::Vector3d(0.40, 0.70, 0.70)},
                 {Eigen::Vector3d(0.65, 0.30, 0.30), Eigen::Vector3d(0.85, 0.70, 0.70)}});

  return suite;
}

SuiteResult run_deadlock_suite(std::uint64_t seed) {
  SuiteResult suite;
  suite.suite = "deadlock";

  // Occlusion before/after on the 3D occluder scene.
  {
    Stopwatch watch;
    const OccluderScene scene = make_occluder_scene(kDeadlockBase + seed);
    const RayProfile before =
        ray_profile(scene.set, scene.ray_origin, scene.ray_direction, RayModel::kMaxResponse);
    const double t_before = transmittance_at_depth(before, scene.target_depth);
    suite.add({"occlusion_before", t_before <= kTransmittanceBeforeMax, t_before,
               "T at target depth with the floater present, limit " +
                   format(kTransmittanceBeforeMax),
               watch.ms()});

    Stopwatch watch_after;
    ResamplePlan plan;
    plan.k = 20;
    plan.alpha0 = 0.01;
    plan.seed = kDeadlockBase + seed;
    const GaussianSet output = reorganize(scene.set, plan).output;
    const RayProfile after =
        ray_profile(output, scene.ray_origin, scene.ray_direction, RayModel::kMaxResponse);
    const double t_after = transmittance_at_depth(after, scene.target_depth);
    suite.add({"occlusion_after", t_after >= kTransmittanceAfterMin, t_after,
               "T at target depth after reorganization, minimum " +
                   format(kTransmittanceAfterMin),
               watch_after.ms()});
  }

  // The reported gradient ratio equals exp(A_p - A_q) * a_q / a_p.
  {
    Stopwatch watch;
    double worst = 0.0;
    const double cases[][4] = {
        {4.60517, 0.2, 0.01, 0.9},
        {9.2103403719761836, 0.4, 0.01, 0.9},
        {0.0, 0.0, 0.5, 0.5},
        {1.25, 3.5, 0.75, 0.2},
        {6.0, 0.05, 0.005, 0.99},
    };
    for (const auto& c : cases) {
      const double got = gradient_ratio(c[0], c[1], c[2], c[3]);
      const double expected = std::exp(c[0] - c[1]) * (c[2] / c[3]);
      worst = std::max(worst, std::abs(got - expected) / expected);
    }
    suite.add({"gradient_ratio_formula", worst <= kGradientRatioTol, worst,
               "max relative deviation from direct evaluation, limit " + format(kGradientRatioTol),
               watch.ms()});
  }

  // Analytic toy gradients vs central finite differences on random scenes.
  {
    Stopwatch watch;
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const ToyScene scene = make_random_scene(kDeadlockBase + seed + 500 + s);
      const ToyGradients g = toy_gradients(scene);
      auto fd = [&](auto&& set_param, double base) {
        ToyScene plus = scene, minus = scene;
        set_param(plus, base + kFdStep);
        set_param(minus, base - kFdStep);
        return (toy_loss(plus) - toy_loss(minus)) / (2.0 * kFdStep);
      };
      for (Index i = 0; i < scene.primitive_count(); ++i) {
        const auto check = [&](double analytic, double numeric) {
          const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
          worst = std::max(worst, std::abs(analytic - numeric) / denom);
        };
        check(g.d_logit[i], fd([i](ToyScene& sc, double v) {
                sc.primitives[static_cast<size_t>(i)].opacity_logit = v;
              },
              scene.primitives[static_cast<size_t>(i)].opacity_logit));
        check(g.d_color[i], fd([i](ToyScene& sc, double v) {
                sc.primitives[static_cast<size_t>(i)].color = v;
              },
              scene.primitives[static_cast<size_t>(i)].color));
        if (scene.mode == ToyMode::kLateral) {
          check(g.d_lateral[i], fd([i](ToyScene& sc, double v) {
                  sc.primitives[static_cast<size_t>(i)].lateral = v;
                },
                scene.primitives[static_cast<size_t>(i)].lateral));
          check(g.d_log_width[i], fd([i](ToyScene& sc, double v) {
                  sc.primitives[static_cast<size_t>(i)].width = std::exp(v);
                },
                std::log(scene.primitives[static_cast<size_t>(i)].width)));
        }
      }
    }
    suite.add({"finite_difference_gradients", worst < kFdRelTol, worst,
               "max relative error over 100 scenes at h = " + format(kFdStep) + ", limit " +
                   format(kFdRelTol),
               watch.ms()});
  }

  // Equal-budget deadlock comparison over ten seeds.
  {
    Stopwatch watch;
    int wins = 0;
    double t_before_worst = 0.0, t_after_worst = 1.0;
    for (int s = 0; s < kDeadlockSeeds; ++s) {
      const DeadlockRecord record =
          deadlock_experiment(kDeadlockBase + seed + static_cast<std::uint64_t>(s), kDeadlockIters);
      if (record.loss_reorg < record.loss_direct) ++wins;
      t_before_worst = std::max(t_before_worst, record.transmittance_before);
      t_after_worst = std::min(t_after_worst, record.transmittance_after);
    }
    suite.add({"deadlock_seed_wins", wins >= kDeadlockMinWins, static_cast<double>(wins),
               std::to_string(wins) + "/" + std::to_string(kDeadlockSeeds) +
                   " seeds favored reorganization at B = " + std::to_string(kDeadlockIters),
               watch.ms()});
    suite.add({"deadlock_toy_transmittance",
               t_before_worst <= kTransmittanceBeforeMax && t_after_worst >= kTransmittanceAfterMin,
               t_after_worst,
               "toy T to target: before <= " + format(t_before_worst) + ", after >= " +
                   format(t_after_worst),
               0.0});
  }

  return suite;
}

std::vector<SuiteResult> run_suites(const std::string& which, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  if (which == "consistency") {
    out.push_back(run_consistency_suite(seed));
  } else if (which == "overlap") {
    out.push_back(run_overlap_suite(seed));
  } else if (which == "deadlock") {
    out.push_back(run_deadlock_suite(seed));
  } else if (which == "all") {
    out.push_back(run_consistency_suite(seed));
    out.push_back(run_overlap_suite(seed));
    out.push_back(run_deadlock_suite(seed));
  } else {
    throw std::invalid_argument("unknown suite: " + which);
  }
  return out;
}

std::string suites_to_json(const std::vector<SuiteResult>& results) {
  nlohmann::json j = nlohmann::json::array();
  bool all_pass = true;
  for (const auto& suite : results) {
    nlohmann::json s;
    s["suite"] = suite.suite;
    s["pass"] = suite.pass;
    all_pass = all_pass && suite.pass;
    s["checks"] = nlohmann::json::array();
    for (const auto& check : suite.checks) {
      s["checks"].push_back({{"name", check.name},
                             {"pass", check.pass},
                             {"value", check.value},
                             {"details", check.details},
                             {"elapsed_ms", check.elapsed_ms}});
    }
    j.push_back(s);
  }
  nlohmann::json root;
  root["pass"] = all_pass;
  root["suites"] = j;
  return root.dump(2) + "\n";
}

}  // namespace splatreorg
