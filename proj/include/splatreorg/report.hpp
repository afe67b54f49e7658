#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splatreorg/common.hpp"

namespace splatreorg {

// Structured diagnostics record. Every block is always serialized; blocks
// that were not computed keep zeroed values and computed = false.

struct OverlapEnergyBlock {
  bool computed = false;
  bool exact = false;
  double value = 0.0;
  double truncation_bound = 0.0;
  double cutoff_sigma = 0.0;
  std::int64_t pairs_evaluated = 0;
  std::int64_t pairs_skipped = 0;
  std::string convention = "normalized";
};

struct EffectiveOverlapBlock {
  bool computed = false;
  double tau = 0.0;
  std::vector<std::int64_t> counts;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct DensityBlock {
  bool computed = false;
  std::vector<double> relative_errors;
  double median = 0.0;
};

struct CurvatureBlock {
  bool computed = false;
  double radius = 0.0;
  std::vector<double> condition_numbers;
};

struct RayProfileBlock {
  double origin[3] = {0, 0, 0};
  double direction[3] = {0, 0, 0};
  std::string model = "max-response";
  std::vector<std::int64_t> contributor_index;
  std::vector<double> contributor_depth;
  std::vector<double> contributor_alpha;
  std::vector<double> contributor_transmittance;  // T before each contributor
  double final_transmittance = 1.0;
  double accumulated_opacity = 0.0;
};

struct ReorgStatsBlock {
  bool computed = false;
  std::int64_t input_count = 0;
  std::int64_t output_count = 0;
  std::int64_t passes = 0;
  std::int64_t floored_eigenvalues = 0;
  double min_neighborhood_radius = 0.0;
  double max_neighborhood_radius = 0.0;
  // The only wall-clock data in a report; excluded from determinism claims.
  std::map<std::string, double> timing_ms;
};

struct DiagnosticsReport {
  OverlapEnergyBlock overlap_energy;
  OverlapEnergyBlock overlap_after_reset;
  EffectiveOverlapBlock effective_overlap;
  DensityBlock density;
  CurvatureBlock curvature;
  std::vector<RayProfileBlock> ray_profiles;
  ReorgStatsBlock reorg_stats;
};

// Throws NumericError if any scalar in the report is non-finite.
void check_finite(const DiagnosticsReport& report);

}  // namespace splatreorg
