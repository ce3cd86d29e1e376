// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "inv3d/camera.hpp"
#include "inv3d/common.hpp"
#include "inv3d/config.hpp"

namespace inv3d {

// Style-modulated sine layer: sin(gamma(w) * (Wx + b) + beta(w)).
struct StyledSineLayerImpl : torch::nn::Module {
  StyledSineLayerImpl(int in_dim, int out_dim, int latent_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w_layer);

  torch::nn::Linear linear{nullptr}, to_scale{nullptr}, to_shift{nullptr};
};
TORCH_MODULE(StyledSineLayer);

struct MappingNetworkImpl : torch::nn::Module {
  MappingNetworkImpl(int latent_dim, int n_layers);
  torch::Tensor forward(const torch::Tensor& z);

  torch::nn::Sequential net;
};
TORCH_MODULE(MappingNetwork);

// Per-point decode of the volume renderer: global feature, SDF, view
// feature, color. The trailing 3 channels of f_g carry the query position
// so the SDF head can anchor its displacement to the base sphere.
struct PointDecode {
  torch::Tensor f_g;      // [B, N, trunk_width + 3]
  torch::Tensor sdf;      // [B, N, 1]
  torch::Tensor feature;  // [B, N, C_feat]
  torch::Tensor color;    // [B, N, 3] in [0, 1]
};

// Swaps the global feature for a fused one right before the feature/color
// heads; geometry (SDF/density) always reads the unmodulated feature.
using PointModulator =
    std::function<torch::Tensor(const torch::Tensor& f_g, const torch::Tensor& points)>;

struct RenderSettings {
  int n_samples = 0;        // 0 -> config default
  bool stratified = false;  // jitter sample depths (needs gen)
  std::optional<torch::Generator> gen;
  int height = 0, width = 0;  // 0 -> config default
  bool with_hi = true;        // run the super-resolution decoder
};

struct RenderResult {
  torch::Tensor image_lo;       // [B, 3, H0, W0], background-composited
  torch::Tensor image_hi;       // [B, 3, H1, W1] (empty when with_hi=false)
  torch::Tensor feature_map;    // [B, C_feat, H0, W0]
  torch::Tensor depth;          // [B, H0, W0], 0 on empty rays
  torch::Tensor raw_depth;      // [B, H0, W0], before empty-ray masking
  torch::Tensor weight_sum;     // [B, H0, W0]
  torch::Tensor transmittance;  // [B, H0, W0, N]
  torch::Tensor origins;        // [B, H0, W0, 3]
  torch::Tensor directions;     // [B, H0, W0, 3]
  torch::Tensor sample_depths;  // [B, H0, W0, N]
};

struct SuperResolverImpl : torch::nn::Module {
  SuperResolverImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& w_codes);

  torch::nn::ModuleList convs, to_scales, to_shifts;
  torch::nn::Conv2d to_rgb{nullptr};
  int upsample;
};
TORCH_MODULE(SuperResolver);

struct DiscriminatorImpl : torch::nn::Module {
  DiscriminatorImpl(const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& images);  // [B] realism logits

  torch::nn::Sequential body;
  torch::nn::Linear head{nullptr};
  int expected_size;
};
TORCH_MODULE(Discriminator);

struct GeneratorImpl : torch::nn::Module {
  GeneratorImpl(const GeneratorConfig& cfg, const SceneConfig& scene);

  // z ~ N(0, I) mapped through the mapping network. Deterministic per Rng.
  torch::Tensor sample_z(int n, Rng& rng) const;
  torch::Tensor sample_latent(int n, Rng& rng);  // [n, D]

  torch::Tensor expand_codes(const torch::Tensor& w) const;  // [B,D] -> [B,L,D]

  PointDecode decode_points(const torch::Tensor& w_codes, const torch::Tensor& points,
                            const torch::Tensor& view_dirs = {},
                            const PointModulator& modulator = nullptr,
                            bool geometry_only = false);

  // SDF only, convenience for descriptors/meshing. points [B,N,3] -> [B,N,1].
  torch::Tensor sdf(const torch::Tensor& w_codes, const torch::Tensor& points);

  RenderResult render(const torch::Tensor& w_codes, const std::vector<CameraPose>& poses,
                      const RenderSettings& settings = {}, const PointModulator& modulator = nullptr);
  RenderResult render(const torch::Tensor& w_codes, const CameraPose& pose,
                      const RenderSettings& settings = {}, const PointModulator& modulator = nullptr);

  torch::Tensor alpha() const { return log_alpha.exp(); }

  GeneratorConfig cfg;
  SceneConfig scene;
  MappingNetwork mapping{nullptr};
  torch::nn::ModuleList trunk;
  torch::nn::Linear sdf_head{nullptr};
  torch::nn::Linear feat_in{nullptr}, feat_out{nullptr};
  torch::nn::Linear color_head{nullptr};
  SuperResolver g1{nullptr};
  torch::Tensor log_alpha;
};
TORCH_MODULE(Generator);

// Seed-deterministic construction (fresh weights).
Generator make_generator(const GeneratorConfig& cfg, const SceneConfig& scene, std::uint64_t seed);
Discriminator make_discriminator(const GeneratorConfig& cfg, std::uint64_t seed);

// Generator checkpoints carry their own dimensions so loading never needs the
// original config file.
void save_generator_checkpoint(const std::filesystem::path& path, const Generator& gen,
                               const Discriminator& disc, std::int64_t step = 0);
struct GeneratorCheckpoint {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::int64_t step = 0;
};
GeneratorCheckpoint load_generator_checkpoint(const std::filesystem::path& path);

}  // namespace inv3d
