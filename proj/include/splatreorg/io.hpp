#pragma once

#include <string>
#include <vector>

#include "splatreorg/model.hpp"
#include "splatreorg/report.hpp"

namespace splatreorg {

// Header of a binary splat PLY file. All properties are 32-bit floats.
struct SplatFileHeader {
  Index count = 0;
  std::vector<std::string> properties;  // in file order
  Index rest_count = 0;                 // number of f_rest_* properties
};

// Canonical property order for D appearance coefficients (D >= 3):
// x y z nx ny nz f_dc_0..2 f_rest_0..(D-4) opacity scale_0..2 rot_0..3.
std::vector<std::string> canonical_properties(Index appearance_dim);

// Binary little-endian splat PLY reader. Quaternions are left untouched when
// their norm is within 1e-6 of 1 and renormalized otherwise; the largest
// deviation and the number of renormalized rows are recorded on the set.
// Throws IoError on malformed headers, truncated payloads, non-float
// properties, unknown properties, or non-finite positions.
GaussianSet read_splat(const std::string& path);

// Writes the set using its recorded property layout (canonical order for
// programmatically built sets). Normals are written as zeros. Throws
// IoError on I/O failure and NumericError on non-finite field values.
void write_splat(const GaussianSet& set, const std::string& path);

// JSON report serialization. Floating-point values are written with 17
// significant digits so read_report recovers them exactly.
std::string report_to_json(const DiagnosticsReport& report);
void write_report(const DiagnosticsReport& report, const std::string& path);
DiagnosticsReport read_report(const std::string& path);

}  // namespace splatreorg
