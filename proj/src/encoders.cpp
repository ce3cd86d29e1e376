// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/encoders.hpp"

#include "inv3d/volume.hpp"

namespace inv3d {
namespace {

torch::nn::Sequential conv_block(int in_ch, int out_ch, int stride) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1)),
      torch::nn::Functional(torch::leaky_relu, 0.2),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)),
      torch::nn::Functional(torch::leaky_relu, 0.2));
}

// Pool the level to a vector, then map to one style code.
struct StyleHeadImpl : torch::nn::Module {
  StyleHeadImpl(int in_ch, int hidden, int latent_dim) {
    net = register_module("net", torch::nn::Sequential(
                                     torch::nn::Linear(in_ch, hidden),
                                     torch::nn::Functional(torch::leaky_relu, 0.2),
                                     torch::nn::Linear(hidden, latent_dim)));
  }
  torch::Tensor forward(const torch::Tensor& level) {
    auto pooled = torch::adaptive_avg_pool2d(level, {1, 1}).flatten(1);
    return net->forward(pooled);
  }
  torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(StyleHead);

}  // namespace

GlobalEncoderImpl::GlobalEncoderImpl(const EncoderConfig& ecfg, const GeneratorConfig& gcfg)
    : expected_size(gcfg.image_size_hi()), latent_dim(gcfg.latent_dim) {
  const int c = ecfg.global_channels;
  stem = register_module("stem", conv_block(3, c, 1));
  down1 = register_module("down1", conv_block(c, 2 * c, 2));
  down2 = register_module("down2", conv_block(2 * c, 4 * c, 2));
  down3 = register_module("down3", conv_block(4 * c, 8 * c, 2));

  n_geometry = gcfg.geometry_layers();
  n_texture = gcfg.g0_layers - n_geometry;
  n_decoder = gcfg.g1_layers;
  for (int i = 0; i < n_geometry; ++i) {
    heads->push_back(StyleHead(8 * c, ecfg.head_hidden, latent_dim));
  }
  for (int i = 0; i < n_texture; ++i) {
    heads->push_back(StyleHead(4 * c, ecfg.head_hidden, latent_dim));
  }
  for (int i = 0; i < n_decoder; ++i) {
    heads->push_back(StyleHead(2 * c, ecfg.head_hidden, latent_dim));
  }
  register_module("heads", heads);
  this->to(torch::kFloat64);
}

FeaturePyramid GlobalEncoderImpl::pyramid(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != expected_size ||
      images.size(3) != expected_size) {
    std::ostringstream os;
    os << "GlobalEncoder: expected [B,3," << expected_size << "," << expected_size << "], got "
       << images.sizes();
    throw std::invalid_argument(os.str());
  }
  FeaturePyramid pyr;
  auto h = stem->forward(images);
  pyr.fine = down1->forward(h);
  pyr.mid = down2->forward(pyr.fine);
  pyr.coarse = down3->forward(pyr.mid);
  return pyr;
}

torch::Tensor GlobalEncoderImpl::codes_from_pyramid(const FeaturePyramid& pyr) {
  std::vector<torch::Tensor> codes;
  codes.reserve(heads->size());
  int idx = 0;
  for (int i = 0; i < n_geometry; ++i) {
    codes.push_back(heads[idx++]->as<StyleHeadImpl>()->forward(pyr.coarse));
  }
  for (int i = 0; i < n_texture; ++i) {
    codes.push_back(heads[idx++]->as<StyleHeadImpl>()->forward(pyr.mid));
  }
  for (int i = 0; i < n_decoder; ++i) {
    codes.push_back(heads[idx++]->as<StyleHeadImpl>()->forward(pyr.fine));
  }
  return torch::stack(codes, 1);  // [B, L, D]
}

torch::Tensor GlobalEncoderImpl::forward(const torch::Tensor& images) {
  return codes_from_pyramid(pyramid(images));
}

HourglassBlockImpl::HourglassBlockImpl(int channels) {
  auto res = [&](int ch) { return conv_block(ch, ch, 1); };
  down1 = register_module("down1", conv_block(channels, channels, 2));
  down2 = register_module("down2", conv_block(channels, channels, 2));
  mid = register_module("mid", res(channels));
  up1 = register_module("up1", res(channels));
  up2 = register_module("up2", res(channels));
}

torch::Tensor HourglassBlockImpl::forward(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  auto a = down1->forward(x);
  auto b = down2->forward(a);
  auto m = mid->forward(b);
  auto u1 = F::interpolate(m, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest)) +
            a;
  u1 = up1->forward(u1);
  auto u2 = F::interpolate(u1, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{2.0, 2.0})
                                   .mode(torch::kNearest)) +
            x;
  return up2->forward(u2);
}

LocalEncoderImpl::LocalEncoderImpl(const EncoderConfig& ecfg, const GeneratorConfig& gcfg)
    : size_hi(gcfg.image_size_hi()), size_lo(gcfg.image_size_lo) {
  const int c = ecfg.local_channels;
  // Residual + upsampled depth enter at high resolution; the stem brings them
  // down to the renderer resolution where the hourglass stacks operate.
  torch::nn::Sequential s;
  s->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(4, c, 3).padding(1)));
  s->push_back(torch::nn::Functional(torch::leaky_relu, 0.2));
  int size = size_hi;
  while (size > size_lo) {
    s->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).stride(2).padding(1)));
    s->push_back(torch::nn::Functional(torch::leaky_relu, 0.2));
    size /= 2;
  }
  stem = register_module("stem", s);
  for (int i = 0; i < ecfg.local_stacks; ++i) {
    stacks->push_back(HourglassBlock(c));
  }
  register_module("stacks", stacks);
  out_conv = register_module("out_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 1)));
  this->to(torch::kFloat64);
}

torch::Tensor LocalEncoderImpl::forward(const torch::Tensor& residual, const torch::Tensor& depth) {
  namespace F = torch::nn::functional;
  if (residual.dim() != 4 || residual.size(1) != 3 || residual.size(2) != size_hi) {
    std::ostringstream os;
    os << "LocalEncoder: expected residual [B,3," << size_hi << "," << size_hi << "], got "
       << residual.sizes();
    throw std::invalid_argument(os.str());
  }
  if (depth.dim() != 3 || depth.size(1) != size_lo || depth.size(0) != residual.size(0)) {
    throw std::invalid_argument("LocalEncoder: depth must be [B,H0,W0] matching the batch");
  }
  auto depth_hi = F::interpolate(depth.unsqueeze(1),
                                 F::InterpolateFuncOptions()
                                     .size(std::vector<std::int64_t>{size_hi, size_hi})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
  auto h = stem->forward(torch::cat({residual, depth_hi}, 1));
  for (std::size_t i = 0; i < stacks->size(); ++i) {
    h = h + stacks[i]->as<HourglassBlockImpl>()->forward(h);
  }
  return out_conv(h);
}

AdaModuleImpl::AdaModuleImpl(const EncoderConfig& ecfg) {
  const int c = ecfg.ada_channels;
  net = register_module(
      "net", torch::nn::Sequential(
                 torch::nn::Conv2d(torch::nn::Conv2dOptions(6, c, 3).padding(1)),
                 torch::nn::Functional(torch::leaky_relu, 0.2),
                 torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)),
                 torch::nn::Functional(torch::leaky_relu, 0.2),
                 torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)),
                 torch::nn::Functional(torch::leaky_relu, 0.2),
                 torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)),
                 torch::nn::Functional(torch::leaky_relu, 0.2),
                 torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 3, 3).padding(1))));
  this->to(torch::kFloat64);
}

torch::Tensor AdaModuleImpl::forward(const torch::Tensor& residual,
                                     const torch::Tensor& conditioning) {
  if (residual.sizes() != conditioning.sizes()) {
    throw std::invalid_argument("AdaModule: residual/conditioning shape mismatch");
  }
  return net->forward(torch::cat({residual, conditioning}, 1));
}

torch::Tensor sample_local_feature(const torch::Tensor& feature_map, const torch::Tensor& points,
                                   const CameraPose& pose, int pe_frequencies) {
  namespace F = torch::nn::functional;
  if (feature_map.dim() != 4 || points.dim() != 3 || points.size(-1) != 3) {
    throw std::invalid_argument("sample_local_feature: expected F_L [B,C,H,W], points [B,N,3]");
  }
  if (feature_map.size(0) != points.size(0)) {
    throw std::invalid_argument("sample_local_feature: batch mismatch");
  }
  auto proj = project_to_image(points, pose);
  // Points behind the camera land far outside [-1,1] and fetch zeros.
  auto ndc = torch::where(proj.valid.unsqueeze(-1), proj.ndc, torch::full_like(proj.ndc, 3.0));
  auto grid = ndc.unsqueeze(2);  // [B, N, 1, 2]
  auto sampled = F::grid_sample(feature_map, grid,
                                F::GridSampleFuncOptions()
                                    .mode(torch::kBilinear)
                                    .padding_mode(torch::kZeros)
                                    .align_corners(false));
  auto feat = sampled.squeeze(-1).permute({0, 2, 1});  // [B, N, C]
  return torch::cat({feat, positional_encode(points, pe_frequencies)}, -1);
}

}  // namespace inv3d
