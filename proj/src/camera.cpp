// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/camera.hpp"

#include <cmath>

namespace inv3d {

void CameraPose::validate() const {
  if (!(fov > 0.0 && fov < M_PI)) {
    throw std::invalid_argument("CameraPose: fov must lie in (0, pi), got " + std::to_string(fov));
  }
  if (!(radius > 0.0)) {
    throw std::invalid_argument("CameraPose: radius must be positive, got " + std::to_string(radius));
  }
  if (!std::isfinite(azimuth) || !std::isfinite(elevation)) {
    throw std::invalid_argument("CameraPose: non-finite angles");
  }
}

torch::Tensor camera_position(const CameraPose& pose) {
  const double ce = std::cos(pose.elevation);
  return torch::tensor({pose.radius * ce * std::sin(pose.azimuth),
                        pose.radius * std::sin(pose.elevation),
                        pose.radius * ce * std::cos(pose.azimuth)},
                       f64());
}

torch::Tensor camera_rotation(const CameraPose& pose) {
  pose.validate();
  auto eye = camera_position(pose);
  auto forward = -eye / eye.norm();  // look at the origin
  auto up_hint = torch::tensor({0.0, 1.0, 0.0}, f64());
  if (std::abs(forward[1].item<double>()) > 0.999) {
    up_hint = torch::tensor({0.0, 0.0, 1.0}, f64());  // near-polar poses
  }
  auto right = torch::cross(forward, up_hint, 0);
  right = right / right.norm();
  auto up = torch::cross(right, forward, 0);
  // Columns: right, up, backward. Camera looks along -z in its own frame.
  return torch::stack({right, up, -forward}, /*dim=*/1);
}

RayBundle generate_rays(const CameraPose& pose, int height, int width, int n_samples,
                        bool stratified, double t_near, double t_far,
                        std::optional<torch::Generator> gen) {
  pose.validate();
  if (height < 1 || width < 1) {
    throw std::invalid_argument("generate_rays: resolution must be positive");
  }
  if (n_samples < 1) {
    throw std::invalid_argument("generate_rays: n_samples must be >= 1");
  }
  if (!(t_near >= 0.0 && t_far > t_near)) {
    throw std::invalid_argument("generate_rays: require 0 <= t_near < t_far");
  }

  const double tan_half = std::tan(0.5 * pose.fov);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);

  auto xs = (2.0 * torch::arange(width, f64()) + 1.0) / width - 1.0;   // ndc_x per column
  auto ys = (2.0 * torch::arange(height, f64()) + 1.0) / height - 1.0; // ndc_y per row
  auto grid = torch::meshgrid({ys, xs}, "ij");
  auto dir_cam = torch::stack({grid[1] * tan_half * aspect,
                               -grid[0] * tan_half,
                               -torch::ones({height, width}, f64())},
                              /*dim=*/-1);
  dir_cam = dir_cam / dir_cam.norm(2, -1, true);

  auto rot = camera_rotation(pose);
  auto directions = torch::matmul(dir_cam.reshape({-1, 3}), rot.t()).reshape({height, width, 3});
  auto origins = camera_position(pose).expand({height, width, 3}).contiguous();

  const double bin = (t_far - t_near) / n_samples;
  auto edges = t_near + bin * torch::arange(n_samples, f64());
  torch::Tensor offsets;
  if (stratified && gen.has_value()) {
    offsets = torch::empty({height, width, n_samples}, f64());
    offsets.uniform_(0.0, 1.0, *gen);
    offsets = offsets.clamp(1e-9, 1.0 - 1e-9);
  } else {
    offsets = torch::full({height, width, n_samples}, 0.5, f64());
  }
  auto sample_depths = edges.reshape({1, 1, n_samples}) + offsets * bin;

  RayBundle bundle;
  bundle.origins = origins;
  bundle.directions = directions;
  bundle.sample_depths = sample_depths;
  bundle.t_near = t_near;
  bundle.t_far = t_far;
  return bundle;
}

Projection project_to_image(const torch::Tensor& points, const CameraPose& pose, double aspect) {
  pose.validate();
  if (points.size(-1) != 3) {
    throw std::invalid_argument("project_to_image: points must have trailing dim 3");
  }
  auto rot = camera_rotation(pose);
  auto eye = camera_position(pose);
  auto cam = torch::matmul(points - eye, rot);  // world -> camera (R^T (x - eye))

  auto depth = -cam.index({torch::indexing::Ellipsis, 2});  // positive in front
  auto valid = depth > 1e-9;
  auto safe_depth = torch::where(valid, depth, torch::ones_like(depth));

  const double tan_half = std::tan(0.5 * pose.fov);
  auto ndc_x = cam.index({torch::indexing::Ellipsis, 0}) / (safe_depth * tan_half * aspect);
  auto ndc_y = -cam.index({torch::indexing::Ellipsis, 1}) / (safe_depth * tan_half);

  Projection proj;
  proj.ndc = torch::stack({ndc_x, ndc_y}, -1);
  proj.valid = valid;
  return proj;
}

}  // namespace inv3d
