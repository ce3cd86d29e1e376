// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>

#include "inv3d/config.hpp"
#include "inv3d/editing.hpp"
#include "inv3d/encoders.hpp"
#include "inv3d/fusion.hpp"
#include "inv3d/generator.hpp"

namespace inv3d {

// Staged inversion pipeline. The generator is always frozen here; encoder
// stages attach as their checkpoints are loaded (or as fresh modules during
// training). Rendering methods are pure given loaded weights.
class Pipeline {
 public:
  explicit Pipeline(const RunConfig& cfg) : cfg_(cfg) {}

  void load_generator(const std::filesystem::path& path);
  void load_stage1(const std::filesystem::path& path);
  void load_stage2(const std::filesystem::path& path);
  void load_stage3(const std::filesystem::path& path);

  void attach_generator(Generator gen, Discriminator disc);

  bool has_generator() const { return !gen_.is_empty(); }
  bool has_stage1() const { return !e_g_.is_empty(); }
  bool has_stage2() const { return !e_l_.is_empty(); }
  bool has_stage3() const { return !e_ada_.is_empty(); }

  torch::Tensor invert(const torch::Tensor& image);  // [3,H1,W1] -> [L,D]

  // Global-only reconstruction rendered at `query`.
  RenderResult reconstruct_global(const torch::Tensor& image, const CameraPose& source,
                                  const CameraPose& query);
  // Source-view local features (stage II); novel views reuse the source-view
  // projection of F_L.
  RenderResult reconstruct_local(const torch::Tensor& image, const CameraPose& source,
                                 const CameraPose& query);
  // Hybrid 2D-3D alignment (stage III), optionally with a latent edit.
  RenderResult reconstruct_hybrid(const torch::Tensor& image, const CameraPose& source,
                                  const CameraPose& query);
  RenderResult editing_forward(const torch::Tensor& image, const CameraPose& source,
                               const EditDirection& direction, double strength,
                               const CameraPose& query);

  RenderResult render_codes(const torch::Tensor& codes, const CameraPose& pose,
                            const PointModulator& modulator = nullptr);

  const RunConfig& config() const { return cfg_; }
  RunConfig& config() { return cfg_; }
  Generator generator() { return gen_; }
  Discriminator discriminator() { return disc_; }
  GlobalEncoder global_encoder() { return e_g_; }
  LocalEncoder local_encoder() { return e_l_; }
  LocalEncoder hybrid_local_encoder() { return e_l3_; }
  AdaModule ada() { return e_ada_; }
  FiLMLayer film_source() { return film_source_; }
  FiLMLayer film_inner() { return film_inner_; }
  FiLMLayer film_outer() { return film_outer_; }

  // Fresh (identity-initialized / randomly initialized) stage modules for
  // training; deterministic given the seed.
  GlobalEncoder fresh_global_encoder(std::uint64_t seed);
  LocalEncoder fresh_local_encoder(std::uint64_t seed);
  AdaModule fresh_ada(std::uint64_t seed);
  FiLMLayer fresh_film(int target_width, int condition_width, std::uint64_t seed);

  void set_stage1(GlobalEncoder e_g) { e_g_ = e_g; }
  void set_stage2(LocalEncoder e_l, FiLMLayer film_source) {
    e_l_ = e_l;
    film_source_ = film_source;
  }
  void set_stage3(LocalEncoder e_l, AdaModule ada, FiLMLayer inner, FiLMLayer outer) {
    e_l3_ = e_l;
    e_ada_ = ada;
    film_inner_ = inner;
    film_outer_ = outer;
  }

  int film_target_width() const;     // width of f_G
  int film_condition_width() const;  // width of f_L (local + positional)

  void require_generator() const;
  void require_stage1() const;
  void require_stage2() const;
  void require_stage3() const;

 private:
  struct HybridInputs {
    torch::Tensor local_map, ada_map;
    CameraPose source, query;
  };
  HybridInputs hybrid_inputs(const torch::Tensor& image, const torch::Tensor& codes,
                             const torch::Tensor& codes_edit, const CameraPose& source,
                             const CameraPose& query);

  RunConfig cfg_;
  Generator gen_{nullptr};
  Discriminator disc_{nullptr};
  GlobalEncoder e_g_{nullptr};
  LocalEncoder e_l_{nullptr};
  FiLMLayer film_source_{nullptr};
  LocalEncoder e_l3_{nullptr};
  AdaModule e_ada_{nullptr};
  FiLMLayer film_inner_{nullptr};
  FiLMLayer film_outer_{nullptr};
};

// Stage checkpoint helpers (shared by training and the pipeline loader).
void save_stage1_checkpoint(const std::filesystem::path& path, const GlobalEncoder& e_g,
                            std::int64_t step);
void save_stage2_checkpoint(const std::filesystem::path& path, const LocalEncoder& e_l,
                            const FiLMLayer& film_source, const Discriminator& disc,
                            std::int64_t step);
void save_stage3_checkpoint(const std::filesystem::path& path, const LocalEncoder& e_l,
                            const AdaModule& ada, const FiLMLayer& inner, const FiLMLayer& outer,
                            const Discriminator& disc, std::int64_t step);

// I - upsampled(I). Both [B,3,...]; the low-res image is bilinearly resized.
torch::Tensor upsample_to(const torch::Tensor& image_lo, std::int64_t size);

}  // namespace inv3d
