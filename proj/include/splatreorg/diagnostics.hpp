#pragma once

#include <vector>

#include "splatreorg/kdtree.hpp"
#include "splatreorg/model.hpp"
#include "splatreorg/report.hpp"

namespace splatreorg {

// Conventional rasterizer contribution cutoff: responses below this are
// treated as invisible by profiles and overlap counting.
constexpr double kResponseCutoff = 1.0 / 255.0;

// The effective per-ray opacity a_i(r) of a 3D Gaussian is model dependent.
// kMaxResponse uses alpha_i * max_t G_i(o + t d) (closed form along the
// ray); kIntegrated uses alpha_i * the line integral of G_i per scene unit,
// capped at 0.999. Neither is canonical; reports label the model used.
enum class RayModel { kMaxResponse, kIntegrated };

struct RayContributor {
  Index index;
  double depth;           // ray parameter of the response peak
  double alpha;           // effective opacity a_i(r)
  double transmittance;   // T before this contributor
};

struct RayProfile {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;
  RayModel model = RayModel::kMaxResponse;
  std::vector<RayContributor> contributors;  // depth ascending, ties by index
  double final_transmittance = 1.0;          // T after every contributor
  double accumulated_opacity = 0.0;          // A(r) = sum of a_i
};

// Contributors are primitives with a_i >= tau and response peak at t >= 0,
// sorted by (depth, index). T_1 = 1 and T_{i+1} = T_i (1 - a_i) exactly.
// Throws std::invalid_argument on a zero direction or empty set.
RayProfile ray_profile(const GaussianSet& set, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& direction, RayModel model = RayModel::kMaxResponse,
                       double tau = kResponseCutoff);

// Transmittance just before the given depth: product of (1 - a_i) over
// contributors with depth < d.
double transmittance_at_depth(const RayProfile& profile, double depth);

// Lower bound (1 - alpha0)^m for m foreground contributors of opacity at
// most alpha0, and its small-opacity linearization 1 - m * alpha0.
double transmittance_bound(std::int64_t m, double alpha0);
double transmittance_bound_linear(std::int64_t m, double alpha0);

// exp(accum_p - accum_q) * (a_q / a_p): leading-order ratio of gradient
// magnitudes for primitives responding to the same surface under two
// parameterizations. Throws on a_p == 0.
double gradient_ratio(double accum_p, double accum_q, double a_q, double a_p);

RayProfileBlock to_block(const RayProfile& profile);

// Opacity-weighted overlap energy: sum over ordered pairs i != j of
// alpha_i alpha_j N(mu_i | mu_j, Sigma_i + Sigma_j), with normalized
// Gaussians. The culled version skips pairs whose Mahalanobis separation
// under Sigma_i + Sigma_j exceeds cutoff_sigma and reports a rigorous upper
// bound on the truncated mass.
struct OverlapEnergy {
  double value = 0.0;
  double truncation_bound = 0.0;
  double cutoff_sigma = 0.0;
  bool exact = false;
  std::int64_t pairs_evaluated = 0;
  std::int64_t pairs_skipped = 0;
};

OverlapEnergy overlap_energy(const GaussianSet& set, double cutoff_sigma = 6.0);
OverlapEnergy overlap_energy_exact(const GaussianSet& set);

// Overlap energy of the same geometry with every opacity replaced by
// alpha0: the opacity-reset comparison point.
OverlapEnergy overlap_after_reset(const GaussianSet& set, double alpha0,
                                  double cutoff_sigma = 6.0, bool exact = false);

OverlapEnergyBlock to_block(const OverlapEnergy& energy);

// Per-probe count of primitives with alpha_i * G_i(probe) >= tau. Culled
// scan via the spatial index; exact because the Euclidean search radius
// dominates the Mahalanobis threshold.
std::vector<std::int64_t> effective_overlap(const GaussianSet& set,
                                            const Eigen::MatrixX3d& probes,
                                            double tau = kResponseCutoff);

// Analytic Gaussian mixture, used both for synthetic scenes and as the
// reference density p in consistency checks.
struct GaussianMixture {
  Eigen::VectorXd weights;  // sums to 1
  Eigen::MatrixX3d means;
  std::vector<Eigen::Matrix3d> covariances;

  double density(const Eigen::Vector3d& x) const;
  // Max of the density over the component means (plateau proxy for max p).
  double peak_density() const;
};

// Normalized mixture density evaluator with precomputed inverses:
// q(x) = sum_j weight_j * N(x | mean_j, cov_j).
class MixtureEvaluator {
 public:
  MixtureEvaluator(const Eigen::MatrixX3d& means, const std::vector<Eigen::Matrix3d>& covariances,
                   const Eigen::VectorXd& weights);
  double operator()(const Eigen::Vector3d& x) const;
  Eigen::VectorXd evaluate(const Eigen::MatrixX3d& probes) const;  // parallel over probes

 private:
  Eigen::MatrixX3d means_;
  std::vector<Eigen::Matrix3d> inverses_;
  Eigen::VectorXd log_norm_;  // log(weight) - 0.5 log((2 pi)^3 det)
};

// |q_M(x) - p(x)| / p(x) per probe, where q_M is the equal-weight mixture of
// the samples with their estimated covariances. Probes must already satisfy
// the caller's density threshold.
Eigen::VectorXd density_relative_errors(const Eigen::MatrixX3d& sample_centers,
                                        const std::vector<Covariance3>& sample_covariances,
                                        const GaussianMixture& reference,
                                        const Eigen::MatrixX3d& probes);

double median(std::vector<double> values);

// Sum of inverse covariances of primitives within radius of the probe, and
// its spectral condition number. Throws NumericError on an empty ball.
struct CurvatureProxy {
  Eigen::Matrix3d hessian_sum;
  double condition_number;
};

CurvatureProxy curvature_proxy(const GaussianSet& set, const Eigen::Vector3d& probe,
                               double radius);

}  // namespace splatreorg
