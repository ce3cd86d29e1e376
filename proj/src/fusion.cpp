// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/fusion.hpp"

#include "inv3d/encoders.hpp"

namespace inv3d {
namespace {

torch::nn::Sequential residual_fc(int width) {
  return torch::nn::Sequential(torch::nn::Functional(torch::leaky_relu, 0.2),
                               torch::nn::Linear(width, width),
                               torch::nn::Functional(torch::leaky_relu, 0.2),
                               torch::nn::Linear(width, width));
}

}  // namespace

FiLMLayerImpl::FiLMLayerImpl(int target_width_in, int condition_width_in, int hidden_width)
    : target_width(target_width_in), condition_width(condition_width_in) {
  const int hidden = hidden_width > 0 ? hidden_width : condition_width_in;
  in = register_module("in", torch::nn::Linear(condition_width, hidden));
  block1 = register_module("block1", residual_fc(hidden));
  block2 = register_module("block2", residual_fc(hidden));
  gamma_head = register_module("gamma_head", torch::nn::Linear(hidden, target_width));
  beta_head = register_module("beta_head", torch::nn::Linear(hidden, target_width));
  {
    torch::NoGradGuard guard;
    gamma_head->weight.zero_();
    gamma_head->bias.fill_(1.0);
    beta_head->weight.zero_();
    beta_head->bias.zero_();
  }
  this->to(torch::kFloat64);
}

std::pair<torch::Tensor, torch::Tensor> FiLMLayerImpl::gamma_beta(const torch::Tensor& condition) {
  if (condition.size(-1) != condition_width) {
    throw std::invalid_argument("FiLMLayer: condition width " + std::to_string(condition.size(-1)) +
                                " != expected " + std::to_string(condition_width));
  }
  auto h = in(condition);
  h = h + block1->forward(h);
  h = h + block2->forward(h);
  return {gamma_head(h), beta_head(h)};
}

torch::Tensor FiLMLayerImpl::modulate(const torch::Tensor& target, const torch::Tensor& condition) {
  if (force_identity) {
    return target;
  }
  if (target.size(-1) != target_width) {
    throw std::invalid_argument("FiLMLayer: target width " + std::to_string(target.size(-1)) +
                                " != expected " + std::to_string(target_width));
  }
  auto [gamma, beta] = gamma_beta(condition);
  return gamma * target + beta;
}

torch::Tensor film_modulate(const torch::Tensor& target, const torch::Tensor& condition,
                            FiLMLayer& layer) {
  return layer->modulate(target, condition);
}

PointModulator make_source_view_modulator(const torch::Tensor& feature_map,
                                          const CameraPose& source_pose, FiLMLayer film_outer,
                                          int pe_frequencies) {
  return [feature_map, source_pose, film_outer, pe_frequencies](
             const torch::Tensor& f_g, const torch::Tensor& points) mutable {
    auto f_l = sample_local_feature(feature_map, points, source_pose, pe_frequencies);
    return film_outer->modulate(f_g, f_l);
  };
}

PointModulator make_hybrid_modulator(const torch::Tensor& local_map, const CameraPose& source_pose,
                                     const torch::Tensor& ada_map, const CameraPose& query_pose,
                                     FiLMLayer film_inner, FiLMLayer film_outer,
                                     int pe_frequencies) {
  return [=](const torch::Tensor& f_g, const torch::Tensor& points) mutable {
    auto f_l = sample_local_feature(local_map, points, source_pose, pe_frequencies);
    auto f_ada = sample_local_feature(ada_map, points, query_pose, pe_frequencies);
    auto fused_local = film_inner->modulate(f_l, f_ada);
    return film_outer->modulate(f_g, fused_local);
  };
}

}  // namespace inv3d
