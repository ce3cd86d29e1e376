// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "inv3d/camera.hpp"
#include "inv3d/common.hpp"
#include "inv3d/config.hpp"
#include "inv3d/generator.hpp"

namespace inv3d {

inline constexpr int kCacheVersion = 1;

struct PoseDistribution {
  double mean_azimuth = 0.0;
  double mean_elevation = 0.0;
  double std_azimuth = 0.35;
  double std_elevation = 0.15;
  double min_elevation = -0.6;
  double max_elevation = 0.6;
  double curriculum = 1.0;  // scales both stds; 0 collapses to the mean

  static PoseDistribution from(const PoseConfig& cfg, double curriculum = 1.0);
};

CameraPose sample_pose(const PoseDistribution& dist, const SceneConfig& scene, Rng& rng);

struct SurfacePoints {
  torch::Tensor points;    // [N_kept, 3]
  torch::Tensor ray_mask;  // [H*W] bool, true where the ray produced a point
  std::int64_t n_dropped = 0;
};

// Surface points from render intermediates: origin + t_s * direction per ray,
// dropping rays whose weight sum is below the empty-ray threshold.
SurfacePoints surface_points_from_render(const RenderResult& render, double empty_threshold);

SurfacePoints extract_surface_points(Generator& gen, const torch::Tensor& w_codes,
                                     const CameraPose& pose, int n_samples = 0);

// Point budget: one Gaussian-offset point per nominal surface point plus half
// as many uniform points, 1.5x total.
struct FreePointCounts {
  std::int64_t gaussian;
  std::int64_t uniform;
};
FreePointCounts free_point_counts(std::int64_t nominal_surface_count);

// Gaussian offsets N(0,(r/4)^2) around surface points (resampled with
// replacement up to `counts.gaussian`) plus uniform points in the
// half-extent-r cube.
torch::Tensor sample_free_points(const torch::Tensor& surface_points, double scene_radius,
                                 const FreePointCounts& counts, Rng& rng);

using SdfFn = std::function<torch::Tensor(const torch::Tensor& points)>;  // [N,3] -> [N,1]

struct ShapeDescriptor {
  torch::Tensor points_on;      // [N_O, 3]
  torch::Tensor normals_on;     // [N_O, 3], unit where valid
  torch::Tensor normals_valid;  // [N_O] bool (false where the SDF gradient vanished)
  torch::Tensor points_free;    // [N_F, 3]
  torch::Tensor sdf_free;       // [N_F, 1]
  // sdf target on surface points is identically zero by convention
};

// Ground-truth geometry under the frozen generator: SDF values at free points
// and autodiff normals (normalized SDF gradients) at surface points.
ShapeDescriptor compute_descriptor(Generator& gen, const torch::Tensor& w,
                                   const torch::Tensor& points_on, const torch::Tensor& points_free);
ShapeDescriptor compute_descriptor_fn(const SdfFn& sdf, const torch::Tensor& points_on,
                                      const torch::Tensor& points_free);

// Visible iff distance along the view ray <= rendered depth at the projected
// pixel + tolerance. Empty rays (weight_sum below threshold) occlude nothing;
// points projecting outside the image are invisible.
torch::Tensor filter_visible(const torch::Tensor& points, const CameraPose& pose,
                             const torch::Tensor& depth_map, const torch::Tensor& weight_sum,
                             double tolerance, double empty_threshold);

struct SampleRecord {
  int identity = 0;
  int view = 0;
  bool holdout = false;
  torch::Tensor latent;      // [D]
  CameraPose pose;
  torch::Tensor image_lo;    // [3, H0, W0]
  torch::Tensor image_hi;    // [3, H1, W1]
  torch::Tensor depth;       // [H0, W0]
  ShapeDescriptor shape;
  torch::Tensor visible_on;    // [N_O] bool
  torch::Tensor visible_free;  // [N_F] bool
  std::int64_t n_dropped = 0;
};

struct TrajectoryMeta {
  std::string dir;
  int frames = 0;
  std::vector<CameraPose> poses;
};

class DatasetCache {
 public:
  static DatasetCache build(const RunConfig& cfg, Generator& gen,
                            const std::filesystem::path& dir);
  // Opens an existing cache; rebuilds when the version or config hash differs.
  static DatasetCache open_or_build(const RunConfig& cfg, Generator& gen,
                                    const std::filesystem::path& dir);
  static DatasetCache open(const std::filesystem::path& dir);

  std::int64_t size() const { return static_cast<std::int64_t>(records_.size()); }
  std::int64_t train_size() const;
  SampleRecord load(std::int64_t index) const;
  std::vector<std::int64_t> train_indices() const;
  std::vector<std::int64_t> holdout_indices() const;

  const std::vector<TrajectoryMeta>& trajectories() const { return trajectories_; }
  torch::Tensor trajectory_frame(const TrajectoryMeta& meta, int frame) const;

  const std::filesystem::path& dir() const { return dir_; }
  const nlohmann::json& index() const { return index_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json index_;
  struct Entry {
    std::string file;
    bool holdout;
  };
  std::vector<Entry> records_;
  std::vector<TrajectoryMeta> trajectories_;

  void parse_index();
};

}  // namespace inv3d
