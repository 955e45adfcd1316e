#include "fineray/camera.hpp"

namespace fineray {

void Camera::validate() const {
  if (width < 1 || height < 1) throw Error("Camera: empty image plane");
  if (focal <= 0) throw Error("Camera: focal must be positive");
  Eigen::Matrix3d r = pose.leftCols<3>();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw Error("Camera: rotation part is not orthonormal");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double focal, int width, int height) {
  Camera cam;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d up_ref = up;
  if (fwd.cross(up_ref).norm() < 1e-8) up_ref = Eigen::Vector3d(1, 0, 0);  // pole fallback
  Eigen::Vector3d right = fwd.cross(up_ref).normalized();
  Eigen::Vector3d down = fwd.cross(right).normalized();  // right x down == fwd
  cam.pose.col(0) = right;
  cam.pose.col(1) = down;
  cam.pose.col(2) = fwd;
  cam.pose.col(3) = eye;
  cam.validate();
  return cam;
}

Ray pixel_ray(const Camera& cam, int px, int py, double t_near, double t_far) {
  if (px < 0 || py < 0 || px >= cam.width || py >= cam.height)
    throw Error("pixel_ray: pixel (" + std::to_string(px) + "," + std::to_string(py) +
                ") outside " + std::to_string(cam.width) + "x" + std::to_string(cam.height));
  if (t_near >= t_far) throw Error("pixel_ray: t_near must be < t_far");
  Eigen::Vector3d dir_cam((px + 0.5 - cam.cx) / cam.focal, (py + 0.5 - cam.cy) / cam.focal, 1.0);
  Ray ray;
  ray.origin = cam.pose.col(3);
  ray.direction = (cam.pose.leftCols<3>() * dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& world) {
  Eigen::Matrix3d r = cam.pose.leftCols<3>();
  Eigen::Vector3d p_cam = r.transpose() * (world - cam.pose.col(3));
  if (p_cam.z() <= 0) throw Error("project: point is behind the camera");
  return {cam.cx + cam.focal * p_cam.x() / p_cam.z(),
          cam.cy + cam.focal * p_cam.y() / p_cam.z()};
}

}  // namespace fineray
