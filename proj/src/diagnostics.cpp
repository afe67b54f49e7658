#include "splatreorg/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace splatreorg {

namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

struct ActivatedArrays {
  Eigen::VectorXd alphas;
  std::vector<Eigen::Matrix3d> covariances;
  std::vector<Eigen::Matrix3d> inverses;
  Eigen::VectorXd lambda_max;
  Eigen::VectorXd lambda_min;
};

ActivatedArrays activate_arrays(const GaussianSet& set, bool need_inverses) {
  const Index n = set.size();
  ActivatedArrays a;
  a.alphas = activated_opacities(set);
  a.covariances.resize(static_cast<size_t>(n));
  a.lambda_max.resize(n);
  a.lambda_min.resize(n);
  if (need_inverses) a.inverses.resize(static_cast<size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    const Eigen::Matrix3d cov = activated_covariance(set, i);
    a.covariances[static_cast<size_t>(i)] = cov;
    const SymmetricEigen3 eig = symmetric_eigen3(cov);
    a.lambda_max[i] = eig.values[0];
    a.lambda_min[i] = eig.values[2];
    if (need_inverses) {
      if (!(eig.values[2] > 0.0)) {
        throw NumericError("diagnostics", "singular activated covariance");
      }
      a.inverses[static_cast<size_t>(i)] =
          eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
    }
  });
  return a;
}

// log N(d | 0, cov) for a symmetric positive definite cov.
double log_normal_pdf(const Eigen::Vector3d& d, const Eigen::Matrix3d& cov, double* mahal_sq) {
  const Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("diagnostics", "combined covariance is not positive definite");
  }
  const Eigen::Matrix3d l = llt.matrixL();
  const Eigen::Vector3d w = l.triangularView<Eigen::Lower>().solve(d);
  const double m2 = w.squaredNorm();
  if (mahal_sq) *mahal_sq = m2;
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (3.0 * kLog2Pi + log_det + m2);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ray profiles

RayProfile ray_profile(const GaussianSet& set, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& direction, RayModel model, double tau) {
  if (set.size() < 1) throw std::invalid_argument("ray profile of an empty set");
  const double dir_norm = direction.norm();
  if (!(dir_norm > 0.0) || !direction.allFinite()) {
    throw std::invalid_argument("ray direction must be nonzero");
  }
  const Eigen::Vector3d d = direction / dir_norm;

  const ActivatedArrays arrays = activate_arrays(set, true);
  const Index n = set.size();

  std::vector<char> keep(static_cast<size_t>(n), 0);
  std::vector<double> depth(static_cast<size_t>(n), 0.0);
  std::vector<double> alpha(static_cast<size_t>(n), 0.0);
  parallel_for(n, [&](std::int64_t i) {
    const Eigen::Matrix3d& inv = arrays.inverses[static_cast<size_t>(i)];
    const Eigen::Vector3d e = origin - set.positions.row(i).transpose();
    const double daa = d.dot(inv * d);
    const double dae = d.dot(inv * e);
    const double eae = e.dot(inv * e);
    const double t_star = -dae / daa;
    // Squared Mahalanobis distance from the ray line to the center.
    const double m2_min = std::max(eae - dae * dae / daa, 0.0);
    double a = 0.0;
    if (model == RayModel::kMaxResponse) {
      a = arrays.alphas[i] * std::exp(-0.5 * m2_min);
    } else {
      // Line integral of G_i per unit ray length: exp(-m2/2) sqrt(2 pi / daa).
      a = std::min(arrays.alphas[i] * std::exp(-0.5 * m2_min) * std::sqrt(2.0 * M_PI / daa),
                   0.999);
    }
    if (t_star >= 0.0 && a >= tau) {
      keep[static_cast<size_t>(i)] = 1;
      depth[static_cast<size_t>(i)] = t_star;
      alpha[static_cast<size_t>(i)] = a;
    }
  });

  RayProfile profile;
  profile.origin = origin;
  profile.direction = d;
  profile.model = model;
  std::vector<Index> order;
  for (Index i = 0; i < n; ++i) {
    if (keep[static_cast<size_t>(i)]) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](Index a_idx, Index b_idx) {
    const double ta = depth[static_cast<size_t>(a_idx)], tb = depth[static_cast<size_t>(b_idx)];
    if (ta != tb) return ta < tb;
    return a_idx < b_idx;
  });

  double t_accum = 1.0;
  for (Index i : order) {
    RayContributor c;
    c.index = i;
    c.depth = depth[static_cast<size_t>(i)];
    c.alpha = alpha[static_cast<size_t>(i)];
    c.transmittance = t_accum;
    profile.contributors.push_back(c);
    profile.accumulated_opacity += c.alpha;
    t_accum *= (1.0 - c.alpha);
  }
  profile.final_transmittance = t_accum;
  return profile;
}

double transmittance_at_depth(const RayProfile& profile, double depth) {
  double t = 1.0;
  for (const auto& c : profile.contributors) {
    if (c.depth >= depth) break;
    t *= (1.0 - c.alpha);
  }
  return t;
}

double transmittance_bound(std::int64_t m, double alpha0) {
  if (m < 0) throw std::invalid_argument("contributor count must be non-negative");
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");
  return std::pow(1.0 - alpha0, static_cast<double>(m));
}

double transmittance_bound_linear(std::int64_t m, double alpha0) {
  if (m < 0) throw std::invalid_argument("contributor count must be non-negative");
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");
  return 1.0 - static_cast<double>(m) * alpha0;
}

double gradient_ratio(double accum_p, double accum_q, double a_q, double a_p) {
  if (a_p == 0.0) throw std::invalid_argument("gradient ratio undefined for a_p = 0");
  return std::exp(accum_p - accum_q) * (a_q / a_p);
}

RayProfileBlock to_block(const RayProfile& profile) {
  RayProfileBlock b;
  for (int i = 0; i < 3; ++i) {
    b.origin[i] = profile.origin[i];
    b.direction[i] = profile.direction[i];
  }
  b.model = profile.model == RayModel::kMaxResponse ? "max-response" : "integrated";
  for (const auto& c : profile.contributors) {
    b.contributor_index.push_back(c.index);
    b.contributor_depth.push_back(c.depth);
    b.contributor_alpha.push_back(c.alpha);
    b.contributor_transmittance.push_back(c.transmittance);
  }
  b.final_transmittance = profile.final_transmittance;
  b.accumulated_opacity = profile.accumulated_opacity;
  return b;
}

// ---------------------------------------------------------------------------
// Overlap energy

namespace {

OverlapEnergy overlap_energy_impl(const Eigen::MatrixX3d& positions,
                                  const ActivatedArrays& arrays, double cutoff_sigma,
                                  bool exact) {
  const Index n = positions.rows();
  OverlapEnergy out;
  out.cutoff_sigma = exact ? 0.0 : cutoff_sigma;
  out.exact = exact;
  if (n < 2) return out;

  const double cutoff_sq = cutoff_sigma * cutoff_sigma;
  const double lambda_max_global = arrays.lambda_max.maxCoeff();
  const double lambda_min_global = arrays.lambda_min.minCoeff();
  const double alpha_max = arrays.alphas.maxCoeff();

  std::vector<double> partial(static_cast<size_t>(n), 0.0);
  std::vector<std::int64_t> evaluated(static_cast<size_t>(n), 0);

  if (exact) {
    parallel_for(n, [&](std::int64_t i) {
      double acc = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (j == static_cast<Index>(i)) continue;
        const Eigen::Vector3d diff = positions.row(i) - positions.row(j);
        const Eigen::Matrix3d combined = arrays.covariances[static_cast<size_t>(i)] +
                                         arrays.covariances[static_cast<size_t>(j)];
        acc += arrays.alphas[i] * arrays.alphas[j] *
               std::exp(log_normal_pdf(diff, combined, nullptr));
        ++evaluated[static_cast<size_t>(i)];
      }
      partial[static_cast<size_t>(i)] = acc;
    });
  } else {
    const PointIndex index = PointIndex::build(positions);
    parallel_for(n, [&](std::int64_t i) {
      // Any pair within the Mahalanobis cutoff satisfies
      // |d|^2 <= cutoff^2 * (lambda_max_i + max_j lambda_max_j).
      const double radius_sq = cutoff_sq * (arrays.lambda_max[i] + lambda_max_global);
      double acc = 0.0;
      for (Index j : index.within_radius(positions.row(i).transpose(), radius_sq)) {
        if (j == static_cast<Index>(i)) continue;
        const Eigen::Vector3d diff = positions.row(i) - positions.row(j);
        const Eigen::Matrix3d combined = arrays.covariances[static_cast<size_t>(i)] +
                                         arrays.covariances[static_cast<size_t>(j)];
        double mahal_sq = 0.0;
        const double log_pdf = log_normal_pdf(diff, combined, &mahal_sq);
        if (mahal_sq > cutoff_sq) continue;  // beyond the cutoff: truncated
        acc += arrays.alphas[i] * arrays.alphas[j] * std::exp(log_pdf);
        ++evaluated[static_cast<size_t>(i)];
      }
      partial[static_cast<size_t>(i)] = acc;
    });
  }

  // Fixed-order reduction keeps the result independent of the thread count.
  for (Index i = 0; i < n; ++i) {
    out.value += partial[static_cast<size_t>(i)];
    out.pairs_evaluated += evaluated[static_cast<size_t>(i)];
  }
  out.pairs_skipped = static_cast<std::int64_t>(n) * (n - 1) - out.pairs_evaluated;
  if (!exact && out.pairs_skipped > 0) {
    // Each skipped ordered pair contributes at most
    // alpha_max^2 (2 pi)^{-3/2} det(Sigma_i + Sigma_j)^{-1/2} exp(-cutoff^2/2),
    // and det >= (2 lambda_min_global)^3.
    const double det_floor = std::pow(2.0 * std::max(lambda_min_global, 0.0), 3.0);
    if (det_floor > 0.0) {
      out.truncation_bound = static_cast<double>(out.pairs_skipped) * alpha_max * alpha_max *
                             std::pow(2.0 * M_PI, -1.5) / std::sqrt(det_floor) *
                             std::exp(-0.5 * cutoff_sq);
    } else {
      out.truncation_bound = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

}  // namespace

OverlapEnergy overlap_energy(const GaussianSet& set, double cutoff_sigma) {
  if (set.size() < 1) throw std::invalid_argument("overlap energy of an empty set");
  if (!(cutoff_sigma > 0.0)) throw std::invalid_argument("cutoff must be positive");
  return overlap_energy_impl(set.positions, activate_arrays(set, false), cutoff_sigma, false);
}

OverlapEnergy overlap_energy_exact(const GaussianSet& set) {
  if (set.size() < 1) throw std::invalid_argument("overlap energy of an empty set");
  return overlap_energy_impl(set.positions, activate_arrays(set, false), 0.0, true);
}

OverlapEnergy overlap_after_reset(const GaussianSet& set, double alpha0, double cutoff_sigma,
                                  bool exact) {
  if (set.size() < 1) throw std::invalid_argument("overlap energy of an empty set");
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");
  ActivatedArrays arrays = activate_arrays(set, false);
  arrays.alphas.setConstant(alpha0);
  return overlap_energy_impl(set.positions, arrays, cutoff_sigma, exact);
}

OverlapEnergyBlock to_block(const OverlapEnergy& energy) {
  OverlapEnergyBlock b;
  b.computed = true;
  b.exact = energy.exact;
  b.value = energy.value;
  b.truncation_bound = energy.truncation_bound;
  b.cutoff_sigma = energy.cutoff_sigma;
  b.pairs_evaluated = energy.pairs_evaluated;
  b.pairs_skipped = energy.pairs_skipped;
  return b;
}

// ---------------------------------------------------------------------------
// Effective overlap

std::vector<std::int64_t> effective_overlap(const GaussianSet& set,
                                            const Eigen::MatrixX3d& probes, double tau) {
  if (!probes.allFinite()) throw std::invalid_argument("non-finite probe");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  std::vector<std::int64_t> counts(static_cast<size_t>(probes.rows()), 0);
  if (set.size() < 1 || probes.rows() < 1) return counts;

  const ActivatedArrays arrays = activate_arrays(set, true);
  const double alpha_max = arrays.alphas.maxCoeff();
  if (alpha_max < tau) return counts;

  // alpha exp(-m^2/2) >= tau requires |d|^2 <= 2 ln(alpha_max / tau) * lambda_max.
  const double radius_sq =
      2.0 * std::log(alpha_max / tau) * arrays.lambda_max.maxCoeff();
  const PointIndex index = PointIndex::build(set.positions);

  parallel_for(probes.rows(), [&](std::int64_t p) {
    const Eigen::Vector3d x = probes.row(p).transpose();
    std::int64_t count = 0;
    for (Index i : index.within_radius(x, radius_sq)) {
      const Eigen::Vector3d d = x - set.positions.row(i).transpose();
      const double m2 = d.dot(arrays.inverses[static_cast<size_t>(i)] * d);
      if (arrays.alphas[i] * std::exp(-0.5 * m2) >= tau) ++count;
    }
    counts[static_cast<size_t>(p)] = count;
  });
  return counts;
}

// ---------------------------------------------------------------------------
// Density consistency

double GaussianMixture::density(const Eigen::Vector3d& x) const {
  double acc = 0.0;
  for (Index c = 0; c < weights.size(); ++c) {
    const Eigen::Vector3d d = x - means.row(c).transpose();
    acc += weights[c] * std::exp(log_normal_pdf(d, covariances[static_cast<size_t>(c)], nullptr));
  }
  return acc;
}

double GaussianMixture::peak_density() const {
  double peak = 0.0;
  for (Index c = 0; c < weights.size(); ++c) {
    peak = std::max(peak, density(means.row(c).transpose()));
  }
  return peak;
}

MixtureEvaluator::MixtureEvaluator(const Eigen::MatrixX3d& means,
                                   const std::vector<Eigen::Matrix3d>& covariances,
                                   const Eigen::VectorXd& weights)
    : means_(means) {
  const Index m = means.rows();
  if (static_cast<Index>(covariances.size()) != m || weights.size() != m) {
    throw std::invalid_argument("mixture evaluator: input lengths disagree");
  }
  inverses_.resize(static_cast<size_t>(m));
  log_norm_.resize(m);
  parallel_for(m, [&](std::int64_t j) {
    const Eigen::LLT<Eigen::Matrix3d> llt(covariances[static_cast<size_t>(j)]);
    if (llt.info() != Eigen::Success) {
      throw NumericError("mixture evaluator", "component covariance not positive definite");
    }
    const Eigen::Matrix3d l = llt.matrixL();
    Eigen::Matrix3d inv_l = Eigen::Matrix3d::Identity();
    l.triangularView<Eigen::Lower>().solveInPlace(inv_l);
    inverses_[static_cast<size_t>(j)] = inv_l.transpose() * inv_l;
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    log_norm_[j] = std::log(weights[j]) - 0.5 * (3.0 * kLog2Pi + log_det);
  });
}

double MixtureEvaluator::operator()(const Eigen::Vector3d& x) const {
  double acc = 0.0;
  for (Index j = 0; j < means_.rows(); ++j) {
    const Eigen::Vector3d d = x - means_.row(j).transpose();
    const double m2 = d.dot(inverses_[static_cast<size_t>(j)] * d);
    acc += std::exp(log_norm_[j] - 0.5 * m2);
  }
  return acc;
}

Eigen::VectorXd MixtureEvaluator::evaluate(const Eigen::MatrixX3d& probes) const {
  Eigen::VectorXd out(probes.rows());
  parallel_for(probes.rows(), [&](std::int64_t p) { out[p] = (*this)(probes.row(p).transpose()); });
  return out;
}

Eigen::VectorXd density_relative_errors(const Eigen::MatrixX3d& sample_centers,
                                        const std::vector<Covariance3>& sample_covariances,
                                        const GaussianMixture& reference,
                                        const Eigen::MatrixX3d& probes) {
  const Index m = sample_centers.rows();
  std::vector<Eigen::Matrix3d> covs(static_cast<size_t>(m));
  for (Index j = 0; j < m; ++j) covs[static_cast<size_t>(j)] = sample_covariances[static_cast<size_t>(j)].matrix();
  const Eigen::VectorXd weights = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const MixtureEvaluator q(sample_centers, covs, weights);

  Eigen::VectorXd errors(probes.rows());
  const Eigen::VectorXd q_values = q.evaluate(probes);
  for (Index p = 0; p < probes.rows(); ++p) {
    const double p_value = reference.density(probes.row(p).transpose());
    if (!(p_value > 0.0)) throw NumericError("density consistency", "reference density is zero at probe");
    errors[p] = std::abs(q_values[p] - p_value) / p_value;
  }
  return errors;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty range");
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
  return 0.5 * (values[mid - 1] + hi);
}

// ---------------------------------------------------------------------------
// Curvature proxy

CurvatureProxy curvature_proxy(const GaussianSet& set, const Eigen::Vector3d& probe,
                               double radius) {
  if (set.size() < 1) throw std::invalid_argument("curvature proxy of an empty set");
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  const PointIndex index = PointIndex::build(set.positions);
  const std::vector<Index> in_ball = index.within_radius(probe, radius * radius);
  if (in_ball.empty()) throw NumericError("curvature proxy", "no primitives within radius");

  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  for (Index i : in_ball) {
    const Eigen::Matrix3d cov = activated_covariance(set, i);
    const SymmetricEigen3 eig = symmetric_eigen3(cov);
    if (!(eig.values[2] > 0.0)) throw NumericError("curvature proxy", "singular covariance");
    sum += eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
  }
  const SymmetricEigen3 eig = symmetric_eigen3(sum);
  CurvatureProxy out;
  out.hessian_sum = sum;
  out.condition_number = eig.values[0] / eig.values[2];
  return out;
}

}  // namespace splatreorg
