#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace splatreorg::rng {

// Counter-based generation: every variate is a pure function of
// (seed, stream, index), so parallel and sequential draws are identical and
// any draw can be recomputed in isolation. The mixer is the splitmix64
// finalizer applied to the chained key.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t word(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (stream + 0xD1B54A32D192ED03ull));
  h = mix64(h ^ (index + 0x8CB92BA72F3D8DD7ull));
  return h;
}

// Uniform in the open interval (0, 1); never returns an endpoint, so logs and
// inverse CDFs are always finite.
inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return (static_cast<double>(word(seed, stream, index) >> 11) + 0.5) * 0x1.0p-53;
}

// Box-Muller pair from two uniforms.
inline void normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t index,
                        double& z0, double& z1) {
  const double u1 = uniform(seed, stream, index);
  const double u2 = uniform(seed, stream + 1, index);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  double z0, z1;
  normal_pair(seed, stream, index, z0, z1);
  return z0;
}

// Three standard normals for one 3D draw; consumes streams [stream, stream+4).
inline Eigen::Vector3d normal3(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  Eigen::Vector3d z;
  normal_pair(seed, stream, index, z[0], z[1]);
  double z2, discard;
  normal_pair(seed, stream + 2, index, z2, discard);
  z[2] = z2;
  return z;
}

}  // namespace splatreorg::rng
