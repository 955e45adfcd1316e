#pragma once

#include <string>
#include <vector>

#include "fineray/camera.hpp"
#include "fineray/image.hpp"
#include "fineray/scene.hpp"

namespace fineray {

struct View {
  Camera camera;
  Image image;
  double near = 0.0, far = 1.0;
};

/// Posed images plus the scene configuration they came from. Immutable once
/// built; shareable across threads.
struct Dataset {
  SceneConfig scene_config;
  std::vector<View> train, val, test;

  const std::vector<View>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val" || name == "validation") return val;
    if (name == "test") return test;
    throw Error("Dataset: unknown split '" + name + "'");
  }
};

/// Renders posed views of an analytic scene with the quadrature oracle.
/// Cameras sit on an inward-facing sphere; deterministic given the seed.
/// Every image is checked to contain at least 1% non-background pixels.
Dataset generate_dataset(const AnalyticScene& scene, const SceneConfig& cfg, int n_train,
                         int n_val, int n_test, uint64_t seed, int oracle_quadrature = 2048);

/// Persists a split as manifest.txt + PPM images in the documented layout:
///   line 1: "fineray-manifest 1"
///   per image: filename focal cx cy p00..p23 near far
void save_views(const std::string& dir, const std::vector<View>& views);

/// Loads a directory in the layout above. Malformed manifests report the
/// offending line number; missing images report the file name.
std::vector<View> load_posed_images(const std::string& dir);

}  // namespace fineray
