#include "splatreorg/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace splatreorg {

namespace {

constexpr double kQuatNormTol = 1e-6;

static_assert(sizeof(float) == 4, "32-bit float payload assumed");

const std::vector<std::string>& fixed_properties() {
  static const std::vector<std::string> names = {
      "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
      "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};
  return names;
}

bool is_rest_property(const std::string& name, long& idx) {
  if (name.rfind("f_rest_", 0) != 0) return false;
  const std::string suffix = name.substr(7);
  if (suffix.empty()) return false;
  for (char c : suffix) {
    if (c < '0' || c > '9') return false;
  }
  idx = std::strtol(suffix.c_str(), nullptr, 10);
  return true;
}

SplatFileHeader parse_header(std::istream& in, const std::string& path) {
  SplatFileHeader header;
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw IoError(path + ": not a PLY file");
  }
  if (!std::getline(in, line) || line != "format binary_little_endian 1.0") {
    throw IoError(path + ": unsupported PLY format (need binary_little_endian 1.0)");
  }
  bool have_element = false;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      ended = true;
      break;
    }
    std::istringstream tokens(line);
    std::string word;
    tokens >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string kind;
      long long count = -1;
      tokens >> kind >> count;
      if (kind != "vertex" || count < 0 || have_element) {
        throw IoError(path + ": malformed element declaration: " + line);
      }
      header.count = static_cast<Index>(count);
      have_element = true;
      continue;
    }
    if (word == "property") {
      std::string type, name;
      tokens >> type >> name;
      if (!have_element) throw IoError(path + ": property before element declaration");
      if (type != "float") {
        throw IoError(path + ": property '" + name + "' has unsupported type '" + type + "'");
      }
      if (name.empty()) throw IoError(path + ": property without a name");
      header.properties.push_back(name);
      continue;
    }
    throw IoError(path + ": unrecognized header line: " + line);
  }
  if (!ended) throw IoError(path + ": header not terminated");
  if (!have_element) throw IoError(path + ": missing vertex element");
  return header;
}

// Maps every property to a slot; throws on duplicates, gaps in f_rest
// numbering, unknown names, or missing required properties.
struct PropertyLayout {
  // slot codes: 0..2 pos, 3..5 normals, 6.. appearance columns are handled
  // via explicit kind/column pairs below.
  enum class Kind { position, normal, appearance, opacity, scale, rotation };
  std::vector<Kind> kind;
  std::vector<int> column;
  Index rest_count = 0;
};

PropertyLayout resolve_layout(const SplatFileHeader& header, const std::string& path) {
  PropertyLayout layout;
  layout.kind.resize(header.properties.size());
  layout.column.resize(header.properties.size());
  std::unordered_map<std::string, int> seen;
  long max_rest = -1;
  for (size_t p = 0; p < header.properties.size(); ++p) {
    const std::string& name = header.properties[p];
    if (++seen[name] > 1) throw IoError(path + ": duplicate property '" + name + "'");
    long rest_idx = 0;
    if (name == "x" || name == "y" || name == "z") {
      layout.kind[p] = PropertyLayout::Kind::position;
      layout.column[p] = name[0] - 'x';
    } else if (name == "nx" || name == "ny" || name == "nz") {
      layout.kind[p] = PropertyLayout::Kind::normal;
      layout.column[p] = name[1] - 'x';
    } else if (name.rfind("f_dc_", 0) == 0 && name.size() == 6 && name[5] >= '0' && name[5] <= '2') {
      layout.kind[p] = PropertyLayout::Kind::appearance;
      layout.column[p] = name[5] - '0';
    } else if (is_rest_property(name, rest_idx)) {
      layout.kind[p] = PropertyLayout::Kind::appearance;
      layout.column[p] = 3 + static_cast<int>(rest_idx);
      max_rest = std::max(max_rest, rest_idx);
      ++layout.rest_count;
    } else if (name == "opacity") {
      layout.kind[p] = PropertyLayout::Kind::opacity;
      layout.column[p] = 0;
    } else if (name.rfind("scale_", 0) == 0 && name.size() == 7 && name[6] >= '0' && name[6] <= '2') {
      layout.kind[p] = PropertyLayout::Kind::scale;
      layout.column[p] = name[6] - '0';
    } else if (name.rfind("rot_", 0) == 0 && name.size() == 5 && name[4] >= '0' && name[4] <= '3') {
      layout.kind[p] = PropertyLayout::Kind::rotation;
      layout.column[p] = name[4] - '0';
    } else {
      throw IoError(path + ": unsupported property '" + name + "'");
    }
  }
  for (const std::string& required : fixed_properties()) {
    if (!seen.count(required)) throw IoError(path + ": missing property '" + required + "'");
  }
  if (max_rest + 1 != layout.rest_count) {
    throw IoError(path + ": f_rest_* properties are not contiguous from 0");
  }
  return layout;
}

}  // namespace

std::vector<std::string> canonical_properties(Index appearance_dim) {
  std::vector<std::string> names = {"x",      "y",      "z",      "nx",     "ny",
                                    "nz",     "f_dc_0", "f_dc_1", "f_dc_2"};
  for (Index j = 0; j + 3 < appearance_dim; ++j) {
    names.push_back("f_rest_" + std::to_string(j));
  }
  names.push_back("opacity");
  for (int j = 0; j < 3; ++j) names.push_back("scale_" + std::to_string(j));
  for (int j = 0; j < 4; ++j) names.push_back("rot_" + std::to_string(j));
  return names;
}

GaussianSet read_splat(const std::string& path) {
  if constexpr (std::endian::native != std::endian::little) {
    throw IoError("big-endian hosts are not supported");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");

  const SplatFileHeader header = parse_header(in, path);
  const PropertyLayout layout = resolve_layout(header, path);
  const Index n = header.count;
  const size_t record_floats = header.properties.size();
  const Index appearance_dim = 3 + layout.rest_count;

  GaussianSet set = make_gaussian_set(n, appearance_dim);
  set.io_properties = header.properties;

  std::vector<float> row(record_floats);
  for (Index i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(record_floats * sizeof(float)));
    if (!in) throw IoError(path + ": truncated payload at record " + std::to_string(i));
    for (size_t p = 0; p < record_floats; ++p) {
      const double v = static_cast<double>(row[p]);
      switch (layout.kind[p]) {
        case PropertyLayout::Kind::position:
          set.positions(i, layout.column[p]) = v;
          break;
        case PropertyLayout::Kind::normal:
          break;  // validated below, then discarded
        case PropertyLayout::Kind::appearance:
          set.appearance(i, layout.column[p]) = v;
          break;
        case PropertyLayout::Kind::opacity:
          set.opacity_logits[i] = v;
          break;
        case PropertyLayout::Kind::scale:
          set.log_scales(i, layout.column[p]) = v;
          break;
        case PropertyLayout::Kind::rotation:
          set.rotations(i, layout.column[p]) = v;
          break;
      }
    }
    if (!set.positions.row(i).allFinite()) {
      throw IoError(path + ": non-finite position at record " + std::to_string(i));
    }
  }
  char extra;
  if (in.read(&extra, 1)) throw IoError(path + ": trailing bytes after payload");

  // Normalize drifted quaternions; leave in-tolerance rows untouched so a
  // rewrite of a conformant file is byte-identical.
  for (Index i = 0; i < n; ++i) {
    const double norm = set.rotations.row(i).norm();
    const double deviation = std::abs(norm - 1.0);
    set.max_quaternion_deviation = std::max(set.max_quaternion_deviation, deviation);
    if (deviation > kQuatNormTol) {
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw IoError(path + ": quaternion with zero or non-finite norm at record " +
                      std::to_string(i));
      }
      set.rotations.row(i) /= norm;
      ++set.normalized_quaternions;
    }
  }
  return set;
}

void write_splat(const GaussianSet& set, const std::string& path) {
  check_invariants(set);
  const Index n = set.size();
  const Index appearance_dim = set.appearance_dim();
  std::vector<std::string> properties =
      set.io_properties.empty() ? canonical_properties(appearance_dim) : set.io_properties;

  SplatFileHeader header;
  header.count = n;
  header.properties = properties;
  const PropertyLayout layout = resolve_layout(header, path);
  if (3 + layout.rest_count != appearance_dim) {
    throw IoError(path + ": property layout disagrees with appearance width");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
  for (const std::string& name : properties) out << "property float " << name << "\n";
  out << "end_header\n";

  std::vector<float> row(properties.size());
  for (Index i = 0; i < n; ++i) {
    for (size_t p = 0; p < properties.size(); ++p) {
      double v = 0.0;
      switch (layout.kind[p]) {
        case PropertyLayout::Kind::position:
          v = set.positions(i, layout.column[p]);
          break;
        case PropertyLayout::Kind::normal:
          v = 0.0;
          break;
        case PropertyLayout::Kind::appearance:
          v = set.appearance(i, layout.column[p]);
          break;
        case PropertyLayout::Kind::opacity:
          v = set.opacity_logits[i];
          break;
        case PropertyLayout::Kind::scale:
          v = set.log_scales(i, layout.column[p]);
          break;
        case PropertyLayout::Kind::rotation:
          v = set.rotations(i, layout.column[p]);
          break;
      }
      row[p] = static_cast<float>(v);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError(path + ": write failure");
}

// ---------------------------------------------------------------------------
// JSON reports

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// nlohmann's dump() emits shortest-round-trip doubles; reports pin 17
// significant digits instead, so serialize through a custom walker.
void dump17(const json& j, std::string& out, int depth) {
  const std::string pad(static_cast<size_t>(depth) * 2, ' ');
  const std::string pad_in(static_cast<size_t>(depth + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in + json(it.key()).dump() + ": ";
        dump17(it.value(), out, depth + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      bool first = true;
      for (const auto& item : j) {
        if (!first) out += ", ";
        first = false;
        dump17(item, out, depth + 1);
      }
      out += "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

json to_json(const OverlapEnergyBlock& b) {
  return json{{"computed", b.computed},
              {"exact", b.exact},
              {"value", b.value},
              {"truncation_bound", b.truncation_bound},
              {"cutoff_sigma", b.cutoff_sigma},
              {"pairs_evaluated", b.pairs_evaluated},
              {"pairs_skipped", b.pairs_skipped},
              {"convention", b.convention}};
}

OverlapEnergyBlock overlap_from_json(const json& j) {
  OverlapEnergyBlock b;
  b.computed = j.value("computed", false);
  b.exact = j.value("exact", false);
  b.value = j.value("value", 0.0);
  b.truncation_bound = j.value("truncation_bound", 0.0);
  b.cutoff_sigma = j.value("cutoff_sigma", 0.0);
  b.pairs_evaluated = j.value("pairs_evaluated", std::int64_t{0});
  b.pairs_skipped = j.value("pairs_skipped", std::int64_t{0});
  b.convention = j.value("convention", "normalized");
  return b;
}

json to_json(const RayProfileBlock& b) {
  return json{{"origin", {b.origin[0], b.origin[1], b.origin[2]}},
              {"direction", {b.direction[0], b.direction[1], b.direction[2]}},
              {"model", b.model},
              {"contributor_index", b.contributor_index},
              {"contributor_depth", b.contributor_depth},
              {"contributor_alpha", b.contributor_alpha},
              {"contributor_transmittance", b.contributor_transmittance},
              {"final_transmittance", b.final_transmittance},
              {"accumulated_opacity", b.accumulated_opacity}};
}

RayProfileBlock ray_from_json(const json& j) {
  RayProfileBlock b;
  if (j.contains("origin")) {
    for (int i = 0; i < 3; ++i) b.origin[i] = j["origin"].at(i).get<double>();
  }
  if (j.contains("direction")) {
    for (int i = 0; i < 3; ++i) b.direction[i] = j["direction"].at(i).get<double>();
  }
  b.model = j.value("model", "max-response");
  b.contributor_index = j.value("contributor_index", std::vector<std::int64_t>{});
  b.contributor_depth = j.value("contributor_depth", std::vector<double>{});
  b.contributor_alpha = j.value("contributor_alpha", std::vector<double>{});
  b.contributor_transmittance = j.value("contributor_transmittance", std::vector<double>{});
  b.final_transmittance = j.value("final_transmittance", 1.0);
  b.accumulated_opacity = j.value("accumulated_opacity", 0.0);
  return b;
}

json report_json(const DiagnosticsReport& r) {
  json j;
  j["schema"] = "splatreorg-report-v1";
  j["overlap_energy"] = to_json(r.overlap_energy);
  j["overlap_after_reset"] = to_json(r.overlap_after_reset);
  j["effective_overlap"] = json{{"computed", r.effective_overlap.computed},
                                {"tau", r.effective_overlap.tau},
                                {"counts", r.effective_overlap.counts},
                                {"min", r.effective_overlap.min},
                                {"max", r.effective_overlap.max},
                                {"mean", r.effective_overlap.mean}};
  j["density"] = json{{"computed", r.density.computed},
                      {"relative_errors", r.density.relative_errors},
                      {"median", r.density.median}};
  j["curvature"] = json{{"computed", r.curvature.computed},
                        {"radius", r.curvature.radius},
                        {"condition_numbers", r.curvature.condition_numbers}};
  json rays = json::array();
  for (const auto& p : r.ray_profiles) rays.push_back(to_json(p));
  j["ray_profiles"] = rays;
  j["reorg_stats"] = json{{"computed", r.reorg_stats.computed},
                          {"input_count", r.reorg_stats.input_count},
                          {"output_count", r.reorg_stats.output_count},
                          {"passes", r.reorg_stats.passes},
                          {"floored_eigenvalues", r.reorg_stats.floored_eigenvalues},
                          {"min_neighborhood_radius", r.reorg_stats.min_neighborhood_radius},
                          {"max_neighborhood_radius", r.reorg_stats.max_neighborhood_radius},
                          {"timing_ms", r.reorg_stats.timing_ms}};
  return j;
}

}  // namespace

void check_finite(const DiagnosticsReport& r) {
  auto require = [](double v) {
    if (!std::isfinite(v)) throw NumericError("report", "non-finite scalar in report");
  };
  require(r.overlap_energy.value);
  require(r.overlap_energy.truncation_bound);
  require(r.overlap_after_reset.value);
  require(r.overlap_after_reset.truncation_bound);
  for (double v : r.density.relative_errors) require(v);
  require(r.density.median);
  for (double v : r.curvature.condition_numbers) require(v);
  for (const auto& p : r.ray_profiles) {
    for (double v : p.contributor_depth) require(v);
    for (double v : p.contributor_alpha) require(v);
    for (double v : p.contributor_transmittance) require(v);
    require(p.final_transmittance);
    require(p.accumulated_opacity);
  }
}

std::string report_to_json(const DiagnosticsReport& report) {
  check_finite(report);
  std::string out;
  dump17(report_json(report), out, 0);
  out += "\n";
  return out;
}

void write_report(const DiagnosticsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << report_to_json(report);
  out.flush();
  if (!out) throw IoError(path + ": write failure");
}

DiagnosticsReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  DiagnosticsReport r;
  if (j.contains("overlap_energy")) r.overlap_energy = overlap_from_json(j["overlap_energy"]);
  if (j.contains("overlap_after_reset")) {
    r.overlap_after_reset = overlap_from_json(j["overlap_after_reset"]);
  }
  if (j.contains("effective_overlap")) {
    const json& e = j["effective_overlap"];
    r.effective_overlap.computed = e.value("computed", false);
    r.effective_overlap.tau = e.value("tau", 0.0);
    r.effective_overlap.counts = e.value("counts", std::vector<std::int64_t>{});
    r.effective_overlap.min = e.value("min", 0.0);
    r.effective_overlap.max = e.value("max", 0.0);
    r.effective_overlap.mean = e.value("mean", 0.0);
  }
  if (j.contains("density")) {
    const json& d = j["density"];
    r.density.computed = d.value("computed", false);
    r.density.relative_errors = d.value("relative_errors", std::vector<double>{});
    r.density.median = d.value("median", 0.0);
  }
  if (j.contains("curvature")) {
    const json& c = j["curvature"];
    r.curvature.computed = c.value("computed", false);
    r.curvature.radius = c.value("radius", 0.0);
    r.curvature.condition_numbers = c.value("condition_numbers", std::vector<double>{});
  }
  if (j.contains("ray_profiles")) {
    for (const auto& p : j["ray_profiles"]) r.ray_profiles.push_back(ray_from_json(p));
  }
  if (j.contains("reorg_stats")) {
    const json& s = j["reorg_stats"];
    r.reorg_stats.computed = s.value("computed", false);
    r.reorg_stats.input_count = s.value("input_count", std::int64_t{0});
    r.reorg_stats.output_count = s.value("output_count", std::int64_t{0});
    r.reorg_stats.passes = s.value("passes", std::int64_t{0});
    r.reorg_stats.floored_eigenvalues = s.value("floored_eigenvalues", std::int64_t{0});
    r.reorg_stats.min_neighborhood_radius = s.value("min_neighborhood_radius", 0.0);
    r.reorg_stats.max_neighborhood_radius = s.value("max_neighborhood_radius", 0.0);
    r.reorg_stats.timing_ms = s.value("timing_ms", std::map<std::string, double>{});
  }
  return r;
}

}  // namespace splatreorg
