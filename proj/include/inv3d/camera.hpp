// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <optional>

#include "inv3d/common.hpp"

namespace inv3d {

// Orbit camera: position determined by azimuth/elevation on a sphere of
// given radius around the origin, always looking at the origin.
struct CameraPose {
  double azimuth = 0.0;    // radians, 0 == +z axis
  double elevation = 0.0;  // radians, positive == above the equator
  double fov = 0.9;        // vertical field of view, radians
  double radius = 1.8;     // distance from the origin, scene units

  void validate() const;
};

// World-space camera position, shape [3].
torch::Tensor camera_position(const CameraPose& pose);

// 3x3 rotation whose columns are the camera axes (x right, y up, z backward);
// world ray direction = R * dir_camera. Orthonormal with det +1.
torch::Tensor camera_rotation(const CameraPose& pose);

struct RayBundle {
  torch::Tensor origins;        // [H, W, 3]
  torch::Tensor directions;     // [H, W, 3], unit length
  torch::Tensor sample_depths;  // [H, W, N], strictly increasing
  double t_near = 0.0;
  double t_far = 0.0;
};

// One ray per pixel center. Depths are midpoints of uniform bins in
// [t_near, t_far], jittered within each bin when `stratified` and a
// generator is supplied.
RayBundle generate_rays(const CameraPose& pose, int height, int width, int n_samples,
                        bool stratified, double t_near, double t_far,
                        std::optional<torch::Generator> gen = std::nullopt);

struct Projection {
  torch::Tensor ndc;    // [..., 2] normalized pixel coords in [-1, 1]
  torch::Tensor valid;  // [...] bool, false for points at/behind the camera
};

// Pinhole projection into normalized image coordinates. Uses the
// align-corners-false convention: pixel (i, j) center maps to
// ((2j+1)/W - 1, (2i+1)/H - 1); matches grid_sample lookups.
Projection project_to_image(const torch::Tensor& points, const CameraPose& pose,
                            double aspect = 1.0);

}  // namespace inv3d
