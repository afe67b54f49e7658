// Writes small synthetic splat files for CLI-level tests.
// Usage: make_fixture <mixture|uniform|cluster|single|ray> <path>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "splatreorg/io.hpp"
#include "splatreorg/scenes.hpp"

using namespace splatreorg;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: make_fixture <kind> <path>\n");
    return 2;
  }
  const std::string kind = argv[1];
  const std::string path = argv[2];
  try {
    if (kind == "mixture") {
      write_splat(make_three_component_scene(300).set, path);
    } else if (kind == "uniform") {
      write_splat(make_uniform_scene(500, 7), path);
    } else if (kind == "cluster") {
      write_splat(make_clone_cluster(50, 0.8, Eigen::Vector3d::Zero(),
                                     0.05 * Eigen::Matrix3d::Identity()),
                  path);
    } else if (kind == "single") {
      GaussianSet one = make_gaussian_set(1, 3);
      one.opacity_logits[0] = inverse_sigmoid(0.9);
      write_splat(one, path);
    } else if (kind == "occluder") {
      const OccluderScene scene = make_occluder_scene(1);
      write_splat(scene.set, path);
      std::ofstream rays(path + ".rays");
      rays << "0 0 0 0 0 1\n";
    } else {
      std::fprintf(stderr, "unknown fixture kind: %s\n", kind.c_str());
      return 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fixture failure: %s\n", e.what());
    return 1;
  }
  return 0;
}
