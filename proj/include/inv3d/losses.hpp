// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include "inv3d/config.hpp"
#include "inv3d/generator.hpp"

namespace inv3d {

// All reductions are means (over batch, layers, pixels, points) so loss
// magnitudes stay comparable across resolutions and point budgets.

struct GeometryLossTerms {
  torch::Tensor surface;  // lambda_g1 |d| + lambda_g2 ||n - n_gt||_1 over P_O
  torch::Tensor free;     // lambda_g3 |d - d_gt| over P_F
  torch::Tensor total;
};

// Surface points carry a zero-distance target; free points carry the frozen
// generator's own signed distance. Invalid-normal points drop out of the
// normal term only.
GeometryLossTerms geometry_loss(const torch::Tensor& sdf_on, const torch::Tensor& normals_on,
                                const torch::Tensor& gt_normals_on,
                                const torch::Tensor& normals_valid,
                                const torch::Tensor& sdf_free, const torch::Tensor& gt_sdf_free,
                                const LossConfig& weights);

// Mean over batch and layers of the per-layer euclidean distance ||w_hat - w||_2.
torch::Tensor code_loss(const torch::Tensor& w_hat, const torch::Tensor& w);

// Frozen random conv feature extractor standing in for a pretrained
// perceptual network. Construction is seeded independently of global RNG
// state so metric values are comparable across runs.
struct PerceptualProxyImpl : torch::nn::Module {
  PerceptualProxyImpl();
  std::vector<torch::Tensor> features(const torch::Tensor& images);
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b);
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr};
};
TORCH_MODULE(PerceptualProxy);

// Frozen random projection embedding standing in for a pretrained identity
// network; similarity is the cosine of pooled embeddings.
struct SimilarityProxyImpl : torch::nn::Module {
  SimilarityProxyImpl();
  torch::Tensor embed(const torch::Tensor& images);             // [B, E], unit norm
  torch::Tensor score(const torch::Tensor& a, const torch::Tensor& b);  // mean cosine
  torch::Tensor projection;
};
TORCH_MODULE(SimilarityProxy);

struct ReconstructionTerms {
  torch::Tensor l2;          // rms pixel distance
  torch::Tensor perceptual;  // proxy feature distance
  torch::Tensor similarity;  // 1 - cosine
  torch::Tensor total;       // lambda-weighted sum
};

ReconstructionTerms reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& target,
                                        const LossConfig& weights, PerceptualProxy& perceptual,
                                        SimilarityProxy& similarity);

// Non-saturating generator loss: -E[log sigmoid(D(fake))].
torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_logits);

// Discriminator objective as a minimization target:
// E[log sigmoid(D(fake))] + E[log(1 - sigmoid(D(real)))]. Negative at the
// logit-0 stationary point (-2 log 2); drives fakes down and reals up.
torch::Tensor discriminator_loss(const torch::Tensor& real_logits,
                                 const torch::Tensor& fake_logits);

// lambda_r1 * mean_b ||grad_x D(x_b)||_2. `create_graph` enables the double
// backward needed when the penalty is part of a training objective.
torch::Tensor r1_penalty(Discriminator& disc, const torch::Tensor& images, double lambda_r1,
                         bool create_graph = true);

// lambda_ada * mean |residual_hat - (I - upsample(I_0))|.
torch::Tensor ada_residual_loss(const torch::Tensor& residual_hat, const torch::Tensor& image,
                                const torch::Tensor& image_lo, double lambda_ada);

}  // namespace inv3d
