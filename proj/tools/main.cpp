#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatreorg/diagnostics.hpp"
#include "splatreorg/io.hpp"
#include "splatreorg/reorg.hpp"
#include "splatreorg/rng.hpp"
#include "splatreorg/toy.hpp"
#include "splatreorg/validate.hpp"

namespace {

using namespace splatreorg;

// Exit codes: 1 malformed input, 2 invalid flags, 3 numeric failure,
// 4 property failure (validate suites).
constexpr int kExitInput = 1;
constexpr int kExitFlags = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitProperty = 4;

void emit_report(const DiagnosticsReport& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report_to_json(report);
  } else {
    write_report(report, path);
  }
}

ReorgStatsBlock stats_block(const ReorgResult& result, Index input_count, int passes) {
  ReorgStatsBlock block;
  block.computed = true;
  block.input_count = input_count;
  block.output_count = result.output.size();
  block.passes = passes;
  block.floored_eigenvalues = result.stats.floored_eigenvalues;
  block.min_neighborhood_radius = result.stats.min_neighborhood_radius;
  block.max_neighborhood_radius = result.stats.max_neighborhood_radius;
  block.timing_ms = {{"sample", result.stats.sample_ms},
                     {"index", result.stats.index_ms},
                     {"covariance", result.stats.covariance_ms},
                     {"inherit", result.stats.inherit_ms},
                     {"assemble", result.stats.assemble_ms}};
  return block;
}

struct ReorgArgs {
  std::string input, output, report;
  ResamplePlan plan;
  int passes = 1;
};

int cmd_reorg(const ReorgArgs& args) {
  const GaussianSet set = read_splat(args.input);
  if (set.normalized_quaternions > 0) {
    std::cerr << "warning: renormalized " << set.normalized_quaternions
              << " quaternions (max deviation " << set.max_quaternion_deviation << ")\n";
  }
  if (args.passes > 1) {
    std::cerr << "note: --passes composes reorganization passes back-to-back "
                 "without optimization in between\n";
  }
  const ReorgResult result = reorganize_cascaded(set, args.plan, args.passes);
  write_splat(result.output, args.output);

  DiagnosticsReport report;
  report.reorg_stats = stats_block(result, set.size(), args.passes);
  emit_report(report, args.report);
  return 0;
}

struct DiagnoseArgs {
  std::string input, report, rays_path;
  bool want_overlap = false;
  bool exact = false;
  double cutoff = 6.0;
  double reset_alpha0 = 0.0;  // > 0 enables the reset comparison
  std::string model = "max";
  double tau = kResponseCutoff;
  Index probes = 0;
  std::string probe_mode = "positions";
  std::uint64_t probe_seed = 0;
  double radius = 0.0;  // > 0 enables the curvature proxy
};

Eigen::MatrixX3d make_probes(const GaussianSet& set, const DiagnoseArgs& args) {
  const Index n = set.size();
  Eigen::MatrixX3d probes(args.probes, 3);
  if (args.probe_mode == "positions") {
    for (Index p = 0; p < args.probes; ++p) {
      probes.row(p) = set.positions.row((p * n) / args.probes % n);
    }
  } else if (args.probe_mode == "uniform") {
    const Eigen::Vector3d lo = set.positions.colwise().minCoeff();
    const Eigen::Vector3d hi = set.positions.colwise().maxCoeff();
    for (Index p = 0; p < args.probes; ++p) {
      for (int a = 0; a < 3; ++a) {
        const double u = rng::uniform(args.probe_seed, 48 + static_cast<std::uint64_t>(a),
                                      static_cast<std::uint64_t>(p));
        probes(p, a) = lo[a] + u * (hi[a] - lo[a]);
      }
    }
  } else {
    throw std::invalid_argument("unknown probe mode: " + args.probe_mode);
  }
  return probes;
}

int cmd_diagnose(const DiagnoseArgs& args) {
  const GaussianSet set = read_splat(args.input);
  DiagnosticsReport report;

  if (args.want_overlap) {
    const OverlapEnergy energy =
        args.exact ? overlap_energy_exact(set) : overlap_energy(set, args.cutoff);
    report.overlap_energy = to_block(energy);
    if (args.reset_alpha0 > 0.0) {
      report.overlap_after_reset =
          to_block(overlap_after_reset(set, args.reset_alpha0, args.cutoff, args.exact));
    }
  }

  if (args.probes > 0) {
    const Eigen::MatrixX3d probes = make_probes(set, args);
    report.effective_overlap.computed = true;
    report.effective_overlap.tau = args.tau;
    report.effective_overlap.counts = effective_overlap(set, probes, args.tau);
    const auto& counts = report.effective_overlap.counts;
    double mean = 0.0;
    std::int64_t lo = counts[0], hi = counts[0];
    for (std::int64_t c : counts) {
      mean += static_cast<double>(c);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    report.effective_overlap.mean = mean / static_cast<double>(counts.size());
    report.effective_overlap.min = static_cast<double>(lo);
    report.effective_overlap.max = static_cast<double>(hi);

    if (args.radius > 0.0) {
      report.curvature.computed = true;
      report.curvature.radius = args.radius;
      for (Index p = 0; p < probes.rows(); ++p) {
        report.curvature.condition_numbers.push_back(
            curvature_proxy(set, probes.row(p).transpose(), args.radius).condition_number);
      }
    }
  }

  if (!args.rays_path.empty()) {
    std::ifstream rays(args.rays_path);
    if (!rays) throw IoError(args.rays_path + ": cannot open for reading");
    const RayModel model =
        args.model == "integrated" ? RayModel::kIntegrated : RayModel::kMaxResponse;
    std::string line;
    while (std::getline(rays, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      Eigen::Vector3d origin, direction;
      if (!(fields >> origin[0] >> origin[1] >> origin[2] >> direction[0] >> direction[1] >>
            direction[2])) {
        throw IoError(args.rays_path + ": expected 'ox oy oz dx dy dz' per line");
      }
      report.ray_profiles.push_back(to_block(ray_profile(set, origin, direction, model, args.tau)));
    }
  }

  emit_report(report, args.report);
  return 0;
}

struct ToyArgs {
  std::string scene = "deadlock";
  int iters = 500;
  double step = 0.4;
  bool reorg = false;
  std::uint64_t seed = 0;
  std::string csv, report;
  std::int64_t samples = 0;
};

ToyScene load_custom_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  ToyScene scene;
  const std::string mode = j.value("mode", "depth");
  if (mode == "depth") {
    scene.mode = ToyMode::kDepthOnly;
  } else if (mode == "lateral") {
    scene.mode = ToyMode::kLateral;
  } else {
    throw IoError(path + ": mode must be 'depth' or 'lateral'");
  }
  scene.rays = j.value("rays", std::vector<double>{0.0});
  const auto target = j.value("target", std::vector<double>{});
  scene.target.resize(static_cast<Index>(target.size()));
  for (size_t i = 0; i < target.size(); ++i) scene.target[static_cast<Index>(i)] = target[i];
  scene.target_depth = j.value("target_depth", 0.0);
  if (!j.contains("primitives")) throw IoError(path + ": missing primitives");
  for (const auto& pj : j["primitives"]) {
    ToyPrimitive p;
    p.depth = pj.value("depth", 0.0);
    p.lateral = pj.value("lateral", 0.0);
    p.width = pj.value("width", 1.0);
    p.color = pj.value("color", 0.0);
    if (pj.contains("alpha")) {
      p.opacity_logit = inverse_sigmoid(pj["alpha"].get<double>());
    } else {
      p.opacity_logit = pj.value("opacity_logit", 0.0);
    }
    scene.primitives.push_back(p);
  }
  return scene;
}

int cmd_toy(const ToyArgs& args) {
  ToyScene scene;
  if (args.scene == "deadlock") {
    scene = make_deadlock_scene(args.seed);
  } else if (args.scene == "cluster") {
    scene = make_cluster_scene(args.seed);
  } else {
    scene = load_custom_scene(args.scene);
  }

  if (args.reorg) {
    ToyPlan plan;
    plan.seed = args.seed;
    plan.samples = args.samples;
    scene = toy_reorganize(scene, plan);
  }

  const ToyOptState state = toy_optimize(scene, args.iters, args.step);

  if (!args.csv.empty()) {
    std::ofstream csv(args.csv, std::ios::trunc);
    if (!csv) throw IoError(args.csv + ": cannot open for writing");
    csv << "iteration,loss,min_transmittance_to_target\n";
    char buf[96];
    for (size_t i = 0; i < state.loss_history.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, state.loss_history[i],
                    state.min_transmittance_history[i]);
      csv << buf;
    }
  }

  nlohmann::json summary;
  summary["scene"] = args.scene;
  summary["reorganized"] = args.reorg;
  summary["iterations"] = state.iterations;
  summary["initial_loss"] = state.loss_history.front();
  summary["final_loss"] = state.loss_history.back();
  summary["final_min_transmittance"] = state.min_transmittance_history.back();
  summary["diverged"] = state.diverged;
  const std::string text = summary.dump(2) + "\n";
  if (args.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(args.report, std::ios::trunc);
    if (!out) throw IoError(args.report + ": cannot open for writing");
    out << text;
  }
  if (state.diverged) {
    std::cerr << "error: optimization diverged (non-finite loss)\n";
    return kExitNumeric;
  }
  return 0;
}

struct ValidateArgs {
  std::string suite;
  std::uint64_t seed = 0;
  std::string report;
};

int cmd_validate(const ValidateArgs& args) {
  const std::vector<SuiteResult> results = run_suites(args.suite, args.seed);
  const std::string text = suites_to_json(results);
  if (args.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(args.report, std::ios::trunc);
    if (!out) throw IoError(args.report + ": cannot open for writing");
    out << text;
  }
  for (const auto& suite : results) {
    for (const auto& check : suite.checks) {
      if (!check.pass) {
        std::cerr << "error: property failure: " << suite.suite << "/" << check.name << "\n";
        return kExitProperty;
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splat reorganization and diagnostics"};
  app.require_subcommand(1);

  ReorgArgs reorg_args;
  auto* reorg = app.add_subcommand("reorg", "Resample a splat model into a better-conditioned set");
  reorg->add_option("input", reorg_args.input, "input .ply")->required();
  reorg->add_option("output", reorg_args.output, "output .ply")->required();
  reorg->add_option("--samples", reorg_args.plan.samples, "output primitive count (default: input count)")
      ->check(CLI::PositiveNumber);
  reorg->add_option("--k", reorg_args.plan.k, "kNN neighborhood size")->check(CLI::PositiveNumber);
  reorg->add_option("--alpha0", reorg_args.plan.alpha0, "uniform output opacity");
  reorg->add_option("--seed", reorg_args.plan.seed, "RNG seed");
  reorg->add_option("--passes", reorg_args.passes, "number of chained passes")
      ->check(CLI::PositiveNumber);
  reorg->add_option("--floor-rel", reorg_args.plan.lambda_floor_rel, "relative eigenvalue floor");
  reorg->add_option("--floor-abs", reorg_args.plan.lambda_floor_abs, "absolute eigenvalue floor");
  reorg->add_option("--report", reorg_args.report, "stats JSON path (default: stdout)");

  DiagnoseArgs diag_args;
  auto* diagnose = app.add_subcommand("diagnose", "Compute overlap / transmittance diagnostics");
  diagnose->add_option("input", diag_args.input, "input .ply")->required();
  diagnose->add_flag("--overlap-energy", diag_args.want_overlap, "compute pairwise overlap energy");
  diagnose->add_flag("--exact", diag_args.exact, "disable spatial culling (O(N^2))");
  diagnose->add_option("--cutoff", diag_args.cutoff, "Mahalanobis culling cutoff in sigmas")
      ->check(CLI::PositiveNumber);
  diagnose->add_option("--reset-alpha0", diag_args.reset_alpha0,
                       "also report overlap energy after an opacity reset to this value");
  diagnose->add_option("--rays", diag_args.rays_path, "file of rays: ox oy oz dx dy dz per line");
  diagnose->add_option("--a-model", diag_args.model, "ray opacity model: max | integrated")
      ->check(CLI::IsMember({"max", "integrated"}));
  diagnose->add_option("--tau", diag_args.tau, "effective-response threshold");
  diagnose->add_option("--probes", diag_args.probes, "number of probe points");
  diagnose->add_option("--probe-mode", diag_args.probe_mode, "positions | uniform")
      ->check(CLI::IsMember({"positions", "uniform"}));
  diagnose->add_option("--probe-seed", diag_args.probe_seed, "probe sampling seed");
  diagnose->add_option("--radius", diag_args.radius, "curvature proxy ball radius");
  diagnose->add_option("--report", diag_args.report, "report JSON path (default: stdout)");

  ToyArgs toy_args;
  auto* toy = app.add_subcommand("toy", "Run the differentiable compositing simulator");
  toy->add_option("--scene", toy_args.scene, "deadlock | cluster | path to a scene JSON");
  toy->add_option("--iters", toy_args.iters, "gradient steps")->check(CLI::NonNegativeNumber);
  toy->add_option("--step", toy_args.step, "step size");
  toy->add_flag("--reorg", toy_args.reorg, "reorganize the scene before optimizing");
  toy->add_option("--seed", toy_args.seed, "scene / reorganization seed");
  toy->add_option("--samples", toy_args.samples, "reorganized primitive count (default: same)")
      ->check(CLI::NonNegativeNumber);
  toy->add_option("--csv", toy_args.csv, "per-iteration CSV path");
  toy->add_option("--report", toy_args.report, "summary JSON path (default: stdout)");

  ValidateArgs val_args;
  auto* validate = app.add_subcommand("validate", "Run property suites on built-in scenes");
  validate->add_option("--suite", val_args.suite, "consistency | overlap | deadlock | all")
      ->required()
      ->check(CLI::IsMember({"consistency", "overlap", "deadlock", "all"}));
  validate->add_option("--seed", val_args.seed, "suite seed offset (0 = canonical)");
  validate->add_option("--report", val_args.report, "results JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return kExitFlags;
  }

  try {
    if (reorg->parsed()) return cmd_reorg(reorg_args);
    if (diagnose->parsed()) return cmd_diagnose(diag_args);
    if (toy->parsed()) return cmd_toy(toy_args);
    if (validate->parsed()) return cmd_validate(val_args);
  } catch (const splatreorg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const splatreorg::NumericError& e) {
    std::cerr << "error: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFlags;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
