// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace inv3d {
namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    j.at(key).get_to(out);
  }
}

nlohmann::json scene_json(const SceneConfig& c) {
  return {{"radius", c.radius},       {"camera_radius", c.camera_radius},
          {"fov", c.fov},             {"t_near", c.t_near},
          {"t_far", c.t_far},         {"background", c.background},
          {"empty_ray_threshold", c.empty_ray_threshold}};
}

void scene_from(const nlohmann::json& j, SceneConfig& c) {
  get_if(j, "radius", c.radius);
  get_if(j, "camera_radius", c.camera_radius);
  get_if(j, "fov", c.fov);
  get_if(j, "t_near", c.t_near);
  get_if(j, "t_far", c.t_far);
  get_if(j, "background", c.background);
  get_if(j, "empty_ray_threshold", c.empty_ray_threshold);
}

nlohmann::json generator_json(const GeneratorConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"g0_layers", c.g0_layers},
          {"g1_layers", c.g1_layers},
          {"mapping_layers", c.mapping_layers},
          {"trunk_width", c.trunk_width},
          {"feature_channels", c.feature_channels},
          {"pe_frequencies", c.pe_frequencies},
          {"image_size_lo", c.image_size_lo},
          {"upsample", c.upsample},
          {"g1_channels", c.g1_channels},
          {"disc_channels", c.disc_channels},
          {"alpha_init", c.alpha_init},
          {"sphere_radius", c.sphere_radius},
          {"displacement_scale", c.displacement_scale},
          {"ray_samples", c.ray_samples},
          {"stratified", c.stratified}};
}

void generator_from(const nlohmann::json& j, GeneratorConfig& c) {
  get_if(j, "latent_dim", c.latent_dim);
  get_if(j, "g0_layers", c.g0_layers);
  get_if(j, "g1_layers", c.g1_layers);
  get_if(j, "mapping_layers", c.mapping_layers);
  get_if(j, "trunk_width", c.trunk_width);
  get_if(j, "feature_channels", c.feature_channels);
  get_if(j, "pe_frequencies", c.pe_frequencies);
  get_if(j, "image_size_lo", c.image_size_lo);
  get_if(j, "upsample", c.upsample);
  get_if(j, "g1_channels", c.g1_channels);
  get_if(j, "disc_channels", c.disc_channels);
  get_if(j, "alpha_init", c.alpha_init);
  get_if(j, "sphere_radius", c.sphere_radius);
  get_if(j, "displacement_scale", c.displacement_scale);
  get_if(j, "ray_samples", c.ray_samples);
  get_if(j, "stratified", c.stratified);
}

nlohmann::json pose_json(const PoseConfig& c) {
  return {{"mean_azimuth", c.mean_azimuth},   {"mean_elevation", c.mean_elevation},
          {"std_azimuth", c.std_azimuth},     {"std_elevation", c.std_elevation},
          {"min_elevation", c.min_elevation}, {"max_elevation", c.max_elevation}};
}

void pose_from(const nlohmann::json& j, PoseConfig& c) {
  get_if(j, "mean_azimuth", c.mean_azimuth);
  get_if(j, "mean_elevation", c.mean_elevation);
  get_if(j, "std_azimuth", c.std_azimuth);
  get_if(j, "std_elevation", c.std_elevation);
  get_if(j, "min_elevation", c.min_elevation);
  get_if(j, "max_elevation", c.max_elevation);
}

nlohmann::json data_json(const DataConfig& c) {
  return {{"n_identities", c.n_identities},
          {"holdout_identities", c.holdout_identities},
          {"views_per_identity", c.views_per_identity},
          {"n_trajectories", c.n_trajectories},
          {"trajectory_frames", c.trajectory_frames},
          {"trajectory_azimuth_amp", c.trajectory_azimuth_amp},
          {"trajectory_elevation_amp", c.trajectory_elevation_amp},
          {"cache_dir", c.cache_dir}};
}

void data_from(const nlohmann::json& j, DataConfig& c) {
  get_if(j, "n_identities", c.n_identities);
  get_if(j, "holdout_identities", c.holdout_identities);
  get_if(j, "views_per_identity", c.views_per_identity);
  get_if(j, "n_trajectories", c.n_trajectories);
  get_if(j, "trajectory_frames", c.trajectory_frames);
  get_if(j, "trajectory_azimuth_amp", c.trajectory_azimuth_amp);
  get_if(j, "trajectory_elevation_amp", c.trajectory_elevation_amp);
  get_if(j, "cache_dir", c.cache_dir);
}

nlohmann::json encoder_json(const EncoderConfig& c) {
  return {{"global_channels", c.global_channels}, {"head_hidden", c.head_hidden},
          {"local_channels", c.local_channels},   {"local_stacks", c.local_stacks},
          {"ada_channels", c.ada_channels},       {"film_hidden", c.film_hidden}};
}

void encoder_from(const nlohmann::json& j, EncoderConfig& c) {
  get_if(j, "global_channels", c.global_channels);
  get_if(j, "head_hidden", c.head_hidden);
  get_if(j, "local_channels", c.local_channels);
  get_if(j, "local_stacks", c.local_stacks);
  get_if(j, "ada_channels", c.ada_channels);
  get_if(j, "film_hidden", c.film_hidden);
}

nlohmann::json losses_json(const LossConfig& c) {
  return {{"lambda_l2", c.lambda_l2},
          {"lambda_perceptual", c.lambda_perceptual},
          {"lambda_similarity", c.lambda_similarity},
          {"lambda_adv", c.lambda_adv},
          {"lambda_d", c.lambda_d},
          {"lambda_r1", c.lambda_r1},
          {"lambda_ada", c.lambda_ada},
          {"lambda_geo_surface", c.lambda_geo_surface},
          {"lambda_geo_normal", c.lambda_geo_normal},
          {"lambda_geo_free", c.lambda_geo_free},
          {"r1_on_reconstruction", c.r1_on_reconstruction}};
}

void losses_from(const nlohmann::json& j, LossConfig& c) {
  get_if(j, "lambda_l2", c.lambda_l2);
  get_if(j, "lambda_perceptual", c.lambda_perceptual);
  get_if(j, "lambda_similarity", c.lambda_similarity);
  get_if(j, "lambda_adv", c.lambda_adv);
  get_if(j, "lambda_d", c.lambda_d);
  get_if(j, "lambda_r1", c.lambda_r1);
  get_if(j, "lambda_ada", c.lambda_ada);
  get_if(j, "lambda_geo_surface", c.lambda_geo_surface);
  get_if(j, "lambda_geo_normal", c.lambda_geo_normal);
  get_if(j, "lambda_geo_free", c.lambda_geo_free);
  get_if(j, "r1_on_reconstruction", c.r1_on_reconstruction);
}

nlohmann::json stage_json(const StageConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"log_every", c.log_every},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"curriculum_ramp", c.curriculum_ramp},
          {"train_local_encoder", c.train_local_encoder}};
}

void stage_from(const nlohmann::json& j, StageConfig& c) {
  get_if(j, "iterations", c.iterations);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "learning_rate", c.learning_rate);
  get_if(j, "log_every", c.log_every);
  get_if(j, "eval_every", c.eval_every);
  get_if(j, "checkpoint_every", c.checkpoint_every);
  get_if(j, "curriculum_ramp", c.curriculum_ramp);
  get_if(j, "train_local_encoder", c.train_local_encoder);
}

nlohmann::json editing_json(const EditingConfig& c) {
  return {{"n_samples", c.n_samples},
          {"classifier_iterations", c.classifier_iterations},
          {"classifier_lr", c.classifier_lr},
          {"classifier_l2", c.classifier_l2},
          {"apply_to", c.apply_to}};
}

void editing_from(const nlohmann::json& j, EditingConfig& c) {
  get_if(j, "n_samples", c.n_samples);
  get_if(j, "classifier_iterations", c.classifier_iterations);
  get_if(j, "classifier_lr", c.classifier_lr);
  get_if(j, "classifier_l2", c.classifier_l2);
  get_if(j, "apply_to", c.apply_to);
}

nlohmann::json eval_json(const EvalConfig& c) {
  return {{"mesh_resolution", c.mesh_resolution},
          {"mesh_extent", c.mesh_extent},
          {"geometry_identities", c.geometry_identities},
          {"surface_samples", c.surface_samples},
          {"visibility_tolerance", c.visibility_tolerance}};
}

void eval_from(const nlohmann::json& j, EvalConfig& c) {
  get_if(j, "mesh_resolution", c.mesh_resolution);
  get_if(j, "mesh_extent", c.mesh_extent);
  get_if(j, "geometry_identities", c.geometry_identities);
  get_if(j, "surface_samples", c.surface_samples);
  get_if(j, "visibility_tolerance", c.visibility_tolerance);
}

}  // namespace

RunConfig::RunConfig() {
  stage2.eval_every = 250;
  stage3.batch_size = 4;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["scene"] = scene_json(scene);
  j["generator"] = generator_json(generator);
  j["pose"] = pose_json(pose);
  j["data"] = data_json(data);
  j["encoder"] = encoder_json(encoder);
  j["losses"] = losses_json(losses);
  j["training"] = {{"stage1", stage_json(stage1)},
                   {"stage2", stage_json(stage2)},
                   {"stage3", stage_json(stage3)}};
  j["editing"] = editing_json(editing);
  j["eval"] = eval_json(eval);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  get_if(j, "seed", c.seed);
  get_if(j, "out_dir", c.out_dir);
  if (j.contains("scene")) scene_from(j.at("scene"), c.scene);
  if (j.contains("generator")) generator_from(j.at("generator"), c.generator);
  if (j.contains("pose")) pose_from(j.at("pose"), c.pose);
  if (j.contains("data")) data_from(j.at("data"), c.data);
  if (j.contains("encoder")) encoder_from(j.at("encoder"), c.encoder);
  if (j.contains("losses")) losses_from(j.at("losses"), c.losses);
  if (j.contains("training")) {
    const auto& t = j.at("training");
    if (t.contains("stage1")) stage_from(t.at("stage1"), c.stage1);
    if (t.contains("stage2")) stage_from(t.at("stage2"), c.stage2);
    if (t.contains("stage3")) stage_from(t.at("stage3"), c.stage3);
  }
  if (j.contains("editing")) editing_from(j.at("editing"), c.editing);
  if (j.contains("eval")) eval_from(j.at("eval"), c.eval);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + file.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config parse error in " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set expects key.path=value, got: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::string pointer = "/";
  for (char ch : key) {
    pointer += (ch == '.') ? '/' : ch;
  }

  nlohmann::json tree = to_json();
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // plain string
  }
  try {
    const nlohmann::json::json_pointer ptr(pointer);
    if (!tree.contains(ptr)) {
      throw std::invalid_argument("unknown config key: " + key);
    }
    tree[ptr] = parsed;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("bad config key '" + key + "': " + e.what());
  }
  *this = from_json(tree);
}

std::string RunConfig::hash() const {
  // FNV-1a over the canonical dump.
  const std::string dump = to_json().dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace inv3d
