// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include "inv3d/camera.hpp"
#include "inv3d/config.hpp"

namespace inv3d {

struct FeaturePyramid {
  torch::Tensor fine;    // [B, C1, H/2,  W/2 ]
  torch::Tensor mid;     // [B, C2, H/4,  W/4 ]
  torch::Tensor coarse;  // [B, C3, H/8,  W/8 ]
};

// Inversion encoder: conv pyramid + one prediction head per generator style
// site. Head routing is fixed by construction: the coarsest level feeds the
// early (geometry) renderer codes, the mid level the later (texture) renderer
// codes, the finest level the decoder codes.
struct GlobalEncoderImpl : torch::nn::Module {
  GlobalEncoderImpl(const EncoderConfig& ecfg, const GeneratorConfig& gcfg);

  FeaturePyramid pyramid(const torch::Tensor& images);
  torch::Tensor codes_from_pyramid(const FeaturePyramid& pyr);
  torch::Tensor forward(const torch::Tensor& images);  // [B, L, D]

  torch::nn::Sequential stem, down1, down2, down3;
  torch::nn::ModuleList heads;  // ordered: g0 geometry, g0 texture, g1
  int n_geometry, n_texture, n_decoder;
  int expected_size, latent_dim;
};
TORCH_MODULE(GlobalEncoder);

// Pixel-aligned residual encoder: stacked hourglass over (residual, depth),
// emitting a feature map at the renderer resolution.
struct HourglassBlockImpl : torch::nn::Module {
  explicit HourglassBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential down1, down2, mid, up1, up2;
};
TORCH_MODULE(HourglassBlock);

struct LocalEncoderImpl : torch::nn::Module {
  LocalEncoderImpl(const EncoderConfig& ecfg, const GeneratorConfig& gcfg);

  // residual [B,3,H1,W1], depth [B,H0,W0] -> feature map [B,C_L,H0,W0]
  torch::Tensor forward(const torch::Tensor& residual, const torch::Tensor& depth);

  torch::nn::Sequential stem;
  torch::nn::ModuleList stacks;
  torch::nn::Conv2d out_conv{nullptr};
  int size_hi, size_lo;
};
TORCH_MODULE(LocalEncoder);

// 2D alignment module: (residual, conditioning image) -> aligned residual.
struct AdaModuleImpl : torch::nn::Module {
  explicit AdaModuleImpl(const EncoderConfig& ecfg);
  torch::Tensor forward(const torch::Tensor& residual, const torch::Tensor& conditioning);
  torch::nn::Sequential net;
};
TORCH_MODULE(AdaModule);

// F_L(pi(x)) (+) PE(x): bilinear lookup at the projected pixel, zeros outside
// the image or behind the camera, concatenated with the positional encoding.
torch::Tensor sample_local_feature(const torch::Tensor& feature_map, const torch::Tensor& points,
                                   const CameraPose& pose, int pe_frequencies);

inline int local_feature_width(const EncoderConfig& ecfg, const GeneratorConfig& gcfg) {
  return ecfg.local_channels + 3 + 6 * gcfg.pe_frequencies;
}

}  // namespace inv3d
