// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace inv3d {

struct SceneConfig {
  double radius = 1.0;          // bounding radius of the object volume
  double camera_radius = 1.8;   // orbit distance of all cameras
  double fov = 0.9;             // vertical fov, radians
  double t_near = -1.0;         // <0 -> camera_radius - radius
  double t_far = -1.0;          // <0 -> camera_radius + radius
  std::array<double, 3> background = {1.0, 1.0, 1.0};
  double empty_ray_threshold = 1e-3;  // weight_sum below this renders background

  double near() const { return t_near >= 0.0 ? t_near : camera_radius - radius; }
  double far() const { return t_far >= 0.0 ? t_far : camera_radius + radius; }
};

struct GeneratorConfig {
  int latent_dim = 64;          // D_w
  int g0_layers = 4;            // style sites in the volume renderer MLP
  int g1_layers = 2;            // style sites in the upsampling decoder
  int mapping_layers = 3;
  int trunk_width = 64;
  int feature_channels = 32;    // width of the integrated feature map
  int pe_frequencies = 4;
  int image_size_lo = 32;       // H0 = W0
  int upsample = 2;             // H1 = upsample * H0
  int g1_channels = 32;
  int disc_channels = 16;
  double alpha_init = 0.1;      // density tightness at init (learned)
  double sphere_radius = 0.5;   // base shape the SDF head displaces
  double displacement_scale = 0.25;
  int ray_samples = 16;
  bool stratified = true;       // jittered depths during training renders

  int image_size_hi() const { return image_size_lo * upsample; }
  int total_layers() const { return g0_layers + g1_layers; }
  int geometry_layers() const { return (g0_layers + 1) / 2; }  // early G0 layers
};

struct PoseConfig {
  double mean_azimuth = 0.0;
  double mean_elevation = 0.0;
  double std_azimuth = 0.35;
  double std_elevation = 0.15;
  double min_elevation = -0.6;
  double max_elevation = 0.6;
};

struct DataConfig {
  int n_identities = 48;        // training identities
  int holdout_identities = 8;
  int views_per_identity = 2;
  int n_trajectories = 2;
  int trajectory_frames = 25;
  double trajectory_azimuth_amp = 0.5;
  double trajectory_elevation_amp = 0.2;
  std::string cache_dir;        // empty -> <run_dir>/cache
};

struct EncoderConfig {
  int global_channels = 24;     // stem width of the inversion encoder
  int head_hidden = 64;
  int local_channels = 32;      // C_L, width of the pixel-aligned feature map
  int local_stacks = 2;
  int ada_channels = 32;
  int film_hidden = 0;          // 0 -> local feature width
};

struct LossConfig {
  double lambda_l2 = 1.0;
  double lambda_perceptual = 0.8;
  double lambda_similarity = 0.1;
  double lambda_adv = 0.01;
  double lambda_d = 0.01;
  double lambda_r1 = 10.0;
  double lambda_ada = 0.1;
  double lambda_geo_surface = 1.0;  // weight on |d| over surface points
  double lambda_geo_normal = 1.0;   // weight on the normal l1 term
  double lambda_geo_free = 1.0;     // weight on |d - d_gt| over free points
  bool r1_on_reconstruction = false;  // penalize grad at reconstructions instead of real data
};

struct StageConfig {
  int iterations = 2000;
  int batch_size = 4;           // stage 3 requires an even value
  double learning_rate = 5e-5;
  int log_every = 25;
  int eval_every = 250;
  int checkpoint_every = 500;
  double curriculum_ramp = 0.5;  // fraction of iterations to ramp pose std 0 -> 1
  bool train_local_encoder = true;  // stage 3 only: finetune the local encoder
};

struct EditingConfig {
  int n_samples = 2000;
  int classifier_iterations = 400;
  double classifier_lr = 0.05;
  double classifier_l2 = 1e-3;
  std::string apply_to = "all";  // all | g0 | g0_geometry
};

struct EvalConfig {
  int mesh_resolution = 48;
  double mesh_extent = 0.9;       // half-extent of the sampled SDF grid
  int geometry_identities = 4;
  int surface_samples = 4096;     // dense point sets for scan-to-mesh
  double visibility_tolerance = 0.01;  // times scene radius
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  SceneConfig scene;
  GeneratorConfig generator;
  PoseConfig pose;
  DataConfig data;
  EncoderConfig encoder;
  LossConfig losses;
  StageConfig stage1;
  StageConfig stage2;
  StageConfig stage3;
  EditingConfig editing;
  EvalConfig eval;

  RunConfig();

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // partial: absent keys keep defaults
  static RunConfig load(const std::filesystem::path& file);

  // "a.b.c=value" override; value parsed as JSON, falling back to string.
  void apply_override(const std::string& assignment);

  std::string hash() const;  // 16-hex digest of the canonical dump
};

}  // namespace inv3d
