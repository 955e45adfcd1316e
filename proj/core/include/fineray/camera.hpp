#pragma once

#include <Eigen/Dense>

#include "fineray/tensor.hpp"

namespace fineray {

/// World-space ray with depth bounds.
struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit length
  double t_near = 0.0;
  double t_far = 1.0;

  Eigen::Vector3d at_normalized(double t) const {
    return origin + (t_near + t * (t_far - t_near)) * direction;
  }
};

/// Pinhole camera: +x right, +y down, +z forward in camera space.
/// pose is the 3x4 world-from-camera rigid transform [R | t].
struct Camera {
  double focal = 1.0;
  double cx = 0.0, cy = 0.0;              // principal point, pixel units
  Eigen::Matrix<double, 3, 4> pose = Eigen::Matrix<double, 3, 4>::Zero();
  int width = 0, height = 0;

  void validate() const;

  /// Inward-facing camera at `eye` looking at `target`; `up` resolves roll.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double focal, int width, int height);
};

/// Ray through the center of pixel (px, py); near/far attached from the scene.
Ray pixel_ray(const Camera& cam, int px, int py, double t_near, double t_far);

/// Projects a world point into continuous pixel coordinates.
Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& world);

}  // namespace fineray
