// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include "inv3d/camera.hpp"
#include "inv3d/generator.hpp"

namespace inv3d {

// Conditioning MLP (two residual blocks) emitting per-feature scale and bias.
// Initialized to the identity (gamma=1, beta=0) so fused paths start exactly
// at the unconditioned solution. `force_identity` bypasses the layer for
// ablations and collapse checks.
struct FiLMLayerImpl : torch::nn::Module {
  FiLMLayerImpl(int target_width, int condition_width, int hidden_width);

  std::pair<torch::Tensor, torch::Tensor> gamma_beta(const torch::Tensor& condition);
  torch::Tensor modulate(const torch::Tensor& target, const torch::Tensor& condition);

  torch::nn::Linear in{nullptr};
  torch::nn::Sequential block1, block2;
  torch::nn::Linear gamma_head{nullptr}, beta_head{nullptr};
  bool force_identity = false;
  int target_width, condition_width;
};
TORCH_MODULE(FiLMLayer);

// gamma(condition) * target + beta(condition).
torch::Tensor film_modulate(const torch::Tensor& target, const torch::Tensor& condition,
                            FiLMLayer& layer);

// Source-view fusion: modulate the generator's global per-point feature with
// the pixel-aligned local feature sampled in the source view.
PointModulator make_source_view_modulator(const torch::Tensor& feature_map,
                                          const CameraPose& source_pose, FiLMLayer film_outer,
                                          int pe_frequencies);

// Hybrid fusion: the 3D-aligned local feature (source-view projection) is
// first modulated by the 2D-aligned feature (query-view projection), and the
// result conditions the global feature.
PointModulator make_hybrid_modulator(const torch::Tensor& local_map, const CameraPose& source_pose,
                                     const torch::Tensor& ada_map, const CameraPose& query_pose,
                                     FiLMLayer film_inner, FiLMLayer film_outer,
                                     int pe_frequencies);

}  // namespace inv3d
