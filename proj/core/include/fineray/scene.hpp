#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "fineray/camera.hpp"
#include "fineray/tensor.hpp"

namespace fineray {

enum class SceneKind { kAnalyticSpheres, kAnalyticBoxes, kPosedImages };

struct SceneConfig {
  SceneKind kind = SceneKind::kAnalyticSpheres;
  std::array<double, 3> background = {1.0, 1.0, 1.0};  // white or black per scene
  double density_noise_std = 0.0;  // training-time field noise
  double near = 1.5;
  double far = 5.5;
  int height = 64, width = 64;

  void validate() const {
    if (near >= far) throw Error("SceneConfig: near must be < far");
    if (height < 8 || width < 8) throw Error("SceneConfig: resolution must be at least 8x8");
  }
};

/// Constant-density primitives with RGB albedo. A shell is the set difference
/// of two concentric spheres, giving the oracle field a thin structure.
struct Primitive {
  enum class Kind { kSphere, kBox, kShell } kind = Kind::kSphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // sphere/shell
  double radius = 1.0;                               // sphere; shell outer radius
  double inner_radius = 0.0;                         // shell
  Eigen::Vector3d box_min = Eigen::Vector3d::Zero(); // box
  Eigen::Vector3d box_max = Eigen::Vector3d::Zero();
  double density = 1.0;  // world units, >= 0
  std::array<double, 3> albedo = {1.0, 1.0, 1.0};

  bool contains(const Eigen::Vector3d& p) const;
};

struct AnalyticScene {
  std::vector<Primitive> primitives;

  void validate() const {
    for (const Primitive& p : primitives)
      if (p.density < 0) throw Error("AnalyticScene: negative density");
  }
};

/// Ground-truth field: density is the sum over containing primitives (world
/// units); color is the density-weighted mean albedo, background when empty.
struct FieldSample {
  double sigma = 0.0;  // per world unit
  std::array<double, 3> color = {0.0, 0.0, 0.0};
};
FieldSample oracle_field(const AnalyticScene& scene, const Eigen::Vector3d& point,
                         const std::array<double, 3>& background);

/// Converged midpoint quadrature of the rendering equation on the analytic
/// field. Doubling n_quad must change the result by < tol (self-convergence);
/// failing that at 2^16 samples is an error.
std::array<double, 3> oracle_render(const AnalyticScene& scene, const SceneConfig& cfg,
                                    const Ray& ray, int n_quad, bool check_convergence = false,
                                    double tol = 1e-4);

/// Built-in toy scenes keyed by SceneKind.
AnalyticScene make_builtin_scene(SceneKind kind, uint64_t seed);

}  // namespace fineray
