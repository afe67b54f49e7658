#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "splatreorg/io.hpp"
#include "splatreorg/rng.hpp"

using namespace splatreorg;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "splatreorg_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// A set whose every field is exactly representable in float32.
GaussianSet float_valued_set(Index n, Index appearance_dim, std::uint64_t seed) {
  GaussianSet set = make_gaussian_set(n, appearance_dim);
  auto f = [&](std::uint64_t stream, std::uint64_t idx) {
    return static_cast<double>(static_cast<float>(
        rng::normal(seed, stream, idx)));
  };
  for (Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    for (int c = 0; c < 3; ++c) {
      set.positions(i, c) = f(100 + static_cast<std::uint64_t>(c), ui);
      set.log_scales(i, c) = f(110 + static_cast<std::uint64_t>(c), ui) * 0.2 - 1.0;
    }
    set.opacity_logits[i] = f(120, ui);
    for (Index c = 0; c < appearance_dim; ++c) {
      set.appearance(i, c) = f(130 + static_cast<std::uint64_t>(c), ui);
    }
    // Quaternion normalized in float so a write/read/write cycle is stable.
    Eigen::Vector4f q;
    for (int c = 0; c < 4; ++c) {
      q[c] = static_cast<float>(rng::normal(seed, 140 + static_cast<std::uint64_t>(c), ui));
    }
    q.normalize();
    for (int c = 0; c < 4; ++c) set.rotations(i, c) = static_cast<double>(q[c]);
  }
  // Snap log scales to float too.
  for (Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      set.log_scales(i, c) = static_cast<double>(static_cast<float>(set.log_scales(i, c)));
    }
  }
  return set;
}

void patch_float(std::string& bytes, size_t offset, float value) {
  REQUIRE(offset + 4 <= bytes.size());
  std::memcpy(bytes.data() + offset, &value, sizeof(float));
}

}  // namespace

TEST_CASE("write then read is field-exact") {
  const GaussianSet set = float_valued_set(37, 6, 1);
  const fs::path path = temp_file("roundtrip.ply");
  write_splat(set, path.string());
  const GaussianSet back = read_splat(path.string());
  CHECK(back.size() == 37);
  CHECK(back.appearance_dim() == 6);
  CHECK((back.positions - set.positions).norm() == 0.0);
  CHECK((back.log_scales - set.log_scales).norm() == 0.0);
  CHECK((back.rotations - set.rotations).norm() == 0.0);
  CHECK((back.opacity_logits - set.opacity_logits).norm() == 0.0);
  CHECK((back.appearance - set.appearance).norm() == 0.0);
  CHECK(back.normalized_quaternions == 0);
}

TEST_CASE("read then write is byte-exact on conformant files") {
  const GaussianSet set = float_valued_set(19, 3, 2);
  const fs::path a = temp_file("bytes_a.ply");
  const fs::path b = temp_file("bytes_b.ply");
  write_splat(set, a.string());
  write_splat(read_splat(a.string()), b.string());
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("non-canonical property order is preserved on rewrite") {
  const GaussianSet set = float_valued_set(5, 4, 3);
  const fs::path canonical = temp_file("order_src.ply");
  write_splat(set, canonical.string());
  std::string bytes = slurp(canonical);

  // Swap the x and y property declarations and the corresponding payload
  // columns; the result is a valid file with a scrambled layout.
  const std::string header_x = "property float x\n";
  const std::string header_y = "property float y\n";
  const size_t hx = bytes.find(header_x);
  REQUIRE(hx != std::string::npos);
  bytes.replace(hx, header_x.size() + header_y.size(), header_y + header_x);
  const size_t payload = bytes.find("end_header\n") + 11;
  const size_t record = 18 * 4;  // 17 fixed + 1 rest property
  for (Index i = 0; i < 5; ++i) {
    const size_t base = payload + static_cast<size_t>(i) * record;
    float x, y;
    std::memcpy(&x, bytes.data() + base, 4);
    std::memcpy(&y, bytes.data() + base + 4, 4);
    patch_float(bytes, base, y);
    patch_float(bytes, base + 4, x);
  }
  const fs::path scrambled = temp_file("order_scrambled.ply");
  {
    std::ofstream out(scrambled, std::ios::binary | std::ios::trunc);
    out << bytes;
  }

  const GaussianSet back = read_splat(scrambled.string());
  CHECK(back.io_properties[0] == "y");
  CHECK(back.io_properties[1] == "x");
  CHECK((back.positions - set.positions).norm() == 0.0);

  const fs::path rewritten = temp_file("order_rewritten.ply");
  write_splat(back, rewritten.string());
  CHECK(slurp(rewritten) == bytes);
}

TEST_CASE("empty set round trip") {
  const GaussianSet empty = make_gaussian_set(0, 3);
  const fs::path path = temp_file("empty.ply");
  write_splat(empty, path.string());
  const GaussianSet back = read_splat(path.string());
  CHECK(back.size() == 0);
  CHECK(back.appearance_dim() == 3);
  const std::string bytes = slurp(path);
  CHECK(bytes.find("element vertex 0\n") != std::string::npos);
  CHECK(bytes.substr(bytes.size() - 11) == "end_header\n");
}

TEST_CASE("seventeen rest properties give twenty appearance coefficients") {
  const GaussianSet set = float_valued_set(3, 20, 4);
  const fs::path path = temp_file("rest17.ply");
  write_splat(set, path.string());
  const std::string bytes = slurp(path);
  CHECK(bytes.find("property float f_rest_16\n") != std::string::npos);
  CHECK(bytes.find("property float f_rest_17\n") == std::string::npos);
  CHECK(read_splat(path.string()).appearance_dim() == 20);
}

TEST_CASE("malformed files are rejected") {
  const fs::path path = temp_file("bad.ply");
  auto write_text = [&](const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
  };

  write_text("not a ply\n");
  CHECK_THROWS_AS(read_splat(path.string()), IoError);

  write_text("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n");
  CHECK_THROWS_AS(read_splat(path.string()), IoError);

  // Unknown property name.
  {
    GaussianSet set = float_valued_set(2, 3, 5);
    write_splat(set, path.string());
    std::string bytes = slurp(path);
    const size_t at = bytes.find("property float opacity");
    bytes.replace(at, 22, "property float mystery");
    write_text(bytes);
    CHECK_THROWS_AS(read_splat(path.string()), IoError);
  }

  // Non-float property type.
  {
    GaussianSet set = float_valued_set(2, 3, 6);
    write_splat(set, path.string());
    std::string bytes = slurp(path);
    const size_t at = bytes.find("property float x");
    bytes.replace(at, 16, "property uchar x");
    write_text(bytes);
    CHECK_THROWS_AS(read_splat(path.string()), IoError);
  }

  // Truncated payload.
  {
    GaussianSet set = float_valued_set(4, 3, 7);
    write_splat(set, path.string());
    std::string bytes = slurp(path);
    bytes.resize(bytes.size() - 9);
    write_text(bytes);
    CHECK_THROWS_AS(read_splat(path.string()), IoError);
  }

  // NaN position.
  {
    GaussianSet set = float_valued_set(2, 3, 8);
    write_splat(set, path.string());
    std::string bytes = slurp(path);
    const size_t payload = bytes.find("end_header\n") + 11;
    patch_float(bytes, payload, std::nanf(""));
    write_text(bytes);
    CHECK_THROWS_AS(read_splat(path.string()), IoError);
  }

  CHECK_THROWS_AS(read_splat((temp_file("missing_dir") / "nope.ply").string()), IoError);
}

TEST_CASE("drifted quaternions are renormalized and recorded") {
  GaussianSet set = float_valued_set(3, 3, 9);
  const fs::path path = temp_file("drift.ply");
  write_splat(set, path.string());
  std::string bytes = slurp(path);
  // rot_0..rot_3 are the last four floats of each record.
  const size_t payload = bytes.find("end_header\n") + 11;
  const size_t record = 17 * 4;
  const size_t rot0 = payload + record - 16;
  float w;
  std::memcpy(&w, bytes.data() + rot0, 4);
  patch_float(bytes, rot0, w * 2.0f);  // breaks unit norm for primitive 0
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  const GaussianSet back = read_splat(path.string());
  CHECK(back.normalized_quaternions == 1);
  CHECK(back.max_quaternion_deviation > 1e-3);
  CHECK(std::abs(back.rotations.row(0).norm() - 1.0) < 1e-12);
}

TEST_CASE("write rejects non-finite fields") {
  GaussianSet set = float_valued_set(2, 3, 10);
  set.log_scales(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(write_splat(set, temp_file("nonfinite.ply").string()), NumericError);
}

TEST_CASE("default report serializes zeroed blocks and round-trips exactly") {
  DiagnosticsReport report;
  const std::string text = report_to_json(report);
  CHECK(text.find("\"overlap_energy\"") != std::string::npos);
  CHECK(text.find("\"effective_overlap\"") != std::string::npos);
  CHECK(text.find("\"reorg_stats\"") != std::string::npos);

  report.overlap_energy.computed = true;
  report.overlap_energy.value = 1.0 / 3.0;
  report.overlap_energy.truncation_bound = M_PI * 1e-7;
  report.density.computed = true;
  report.density.relative_errors = {0.1, 2.0 / 7.0, 1e-17};
  report.density.median = 0.1;
  report.curvature.condition_numbers = {5000.5};
  RayProfileBlock ray;
  ray.contributor_alpha = {0.99};
  ray.contributor_depth = {2.0};
  ray.contributor_index = {7};
  ray.contributor_transmittance = {1.0};
  ray.final_transmittance = 0.010000000000000009;
  ray.accumulated_opacity = 0.99;
  report.ray_profiles.push_back(ray);

  const auto path = temp_file("report.json");
  write_report(report, path.string());
  const std::string serialized = slurp(path);
  CHECK(serialized.find("0.33333333333333331") != std::string::npos);

  const DiagnosticsReport back = read_report(path.string());
  CHECK(back.overlap_energy.value == report.overlap_energy.value);
  CHECK(back.overlap_energy.truncation_bound == report.overlap_energy.truncation_bound);
  CHECK(back.density.relative_errors == report.density.relative_errors);
  CHECK(back.ray_profiles.size() == 1);
  CHECK(back.ray_profiles[0].final_transmittance == ray.final_transmittance);
  CHECK(back.curvature.condition_numbers == report.curvature.condition_numbers);
}

TEST_CASE("reports reject non-finite scalars") {
  DiagnosticsReport report;
  report.density.median = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(report_to_json(report), NumericError);
}
