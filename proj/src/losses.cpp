// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/losses.hpp"

#include <iostream>

namespace inv3d {
namespace {

constexpr std::uint64_t kProxySeed = 0x1D3A7;  // proxies are fixed, not trained

torch::Tensor rms(const torch::Tensor& diff) {
  return (diff.pow(2).mean() + 1e-24).sqrt();
}

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

GeometryLossTerms geometry_loss(const torch::Tensor& sdf_on, const torch::Tensor& normals_on,
                                const torch::Tensor& gt_normals_on,
                                const torch::Tensor& normals_valid,
                                const torch::Tensor& sdf_free, const torch::Tensor& gt_sdf_free,
                                const LossConfig& weights) {
  auto zero = torch::zeros({}, f64());
  GeometryLossTerms out{zero, zero, zero};

  if (sdf_on.numel() == 0) {
    std::cerr << "[losses] geometry_loss: empty surface point set, term is 0\n";
  } else {
    auto dist_term = weights.lambda_geo_surface * sdf_on.abs().mean();
    torch::Tensor normal_term = zero;
    if (normals_valid.any().item<bool>()) {
      auto diff = (normals_on - gt_normals_on).abs().sum(-1);
      auto valid = normals_valid.to(diff.scalar_type());
      normal_term = weights.lambda_geo_normal * (diff * valid).sum() / valid.sum();
    }
    out.surface = dist_term + normal_term;
  }

  if (sdf_free.numel() == 0) {
    std::cerr << "[losses] geometry_loss: empty free point set, term is 0\n";
  } else {
    check_same_shape(sdf_free, gt_sdf_free, "geometry_loss free sdf");
    out.free = weights.lambda_geo_free * (sdf_free - gt_sdf_free).abs().mean();
  }
  out.total = out.surface + out.free;
  return out;
}

torch::Tensor code_loss(const torch::Tensor& w_hat, const torch::Tensor& w) {
  check_same_shape(w_hat, w, "code_loss");
  auto a = w_hat.dim() == 2 ? w_hat.unsqueeze(0) : w_hat;
  auto b = w.dim() == 2 ? w.unsqueeze(0) : w;
  return (a - b).norm(2, -1).mean();
}

PerceptualProxyImpl::PerceptualProxyImpl() {
  c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 8, 3).stride(2).padding(1)));
  c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(8, 16, 3).stride(2).padding(1)));
  c3 = register_module("c3", torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 16, 3).stride(2).padding(1)));
  this->to(torch::kFloat64);
  torch::NoGradGuard guard;
  Rng rng(kProxySeed);
  for (auto& p : parameters()) {
    p.copy_(rng.normal(p.sizes(), 0.0, std::sqrt(2.0 / static_cast<double>(p.size(-1) * 9 + 1))));
    p.set_requires_grad(false);
  }
}

std::vector<torch::Tensor> PerceptualProxyImpl::features(const torch::Tensor& images) {
  auto h1 = torch::tanh(c1(images));
  auto h2 = torch::tanh(c2(h1));
  auto h3 = torch::tanh(c3(h2));
  return {h1, h2, h3};
}

torch::Tensor PerceptualProxyImpl::distance(const torch::Tensor& a, const torch::Tensor& b) {
  check_same_shape(a, b, "perceptual distance");
  auto fa = features(a);
  auto fb = features(b);
  auto total = torch::zeros({}, f64());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    total = total + rms(fa[i] - fb[i]);
  }
  return total / static_cast<double>(fa.size());
}

SimilarityProxyImpl::SimilarityProxyImpl() {
  Rng rng(kProxySeed + 1);
  projection = register_buffer("projection", rng.normal({3 * 8 * 8, 32}) / std::sqrt(192.0));
}

torch::Tensor SimilarityProxyImpl::embed(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw std::invalid_argument("SimilarityProxy: expected [B,3,H,W]");
  }
  auto pooled = torch::adaptive_avg_pool2d(images, {8, 8}).flatten(1);  // [B,192]
  auto e = torch::matmul(pooled, projection);
  return e / (e.norm(2, -1, true) + 1e-12);
}

torch::Tensor SimilarityProxyImpl::score(const torch::Tensor& a, const torch::Tensor& b) {
  check_same_shape(a, b, "similarity score");
  return (embed(a) * embed(b)).sum(-1).mean();
}

ReconstructionTerms reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& target,
                                        const LossConfig& weights, PerceptualProxy& perceptual,
                                        SimilarityProxy& similarity) {
  check_same_shape(pred, target, "reconstruction_loss");
  auto p = pred.dim() == 3 ? pred.unsqueeze(0) : pred;
  auto t = target.dim() == 3 ? target.unsqueeze(0) : target;

  ReconstructionTerms out;
  out.l2 = rms(p - t);
  out.perceptual = perceptual->distance(p, t);
  out.similarity = 1.0 - similarity->score(p, t);
  out.total = weights.lambda_l2 * out.l2 + weights.lambda_perceptual * out.perceptual +
              weights.lambda_similarity * out.similarity;
  return out;
}

torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_logits) {
  if (!fake_logits.isfinite().all().item<bool>()) {
    throw std::runtime_error("adversarial_generator_loss: non-finite logits");
  }
  // -log sigmoid(x) == softplus(-x)
  return torch::softplus(-fake_logits).mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& real_logits,
                                 const torch::Tensor& fake_logits) {
  if (!real_logits.isfinite().all().item<bool>() || !fake_logits.isfinite().all().item<bool>()) {
    throw std::runtime_error("discriminator_loss: non-finite logits");
  }
  // log sigmoid(fake) + log(1 - sigmoid(real)), both written via softplus.
  return (-torch::softplus(-fake_logits)).mean() + (-torch::softplus(real_logits)).mean();
}

torch::Tensor r1_penalty(Discriminator& disc, const torch::Tensor& images, double lambda_r1,
                         bool create_graph) {
  auto x = images.detach().clone().requires_grad_(true);
  auto logits = disc(x);
  if (!logits.isfinite().all().item<bool>()) {
    throw std::runtime_error("r1_penalty: non-finite discriminator logits");
  }
  auto grads = torch::autograd::grad({logits.sum()}, {x}, /*grad_outputs=*/{},
                                     /*retain_graph=*/create_graph, create_graph);
  auto norms = (grads[0].flatten(1).pow(2).sum(-1) + 1e-24).sqrt();
  return lambda_r1 * norms.mean();
}

torch::Tensor ada_residual_loss(const torch::Tensor& residual_hat, const torch::Tensor& image,
                                const torch::Tensor& image_lo, double lambda_ada) {
  namespace F = torch::nn::functional;
  check_same_shape(residual_hat, image, "ada_residual_loss");
  auto lo_up = F::interpolate(image_lo.dim() == 3 ? image_lo.unsqueeze(0) : image_lo,
                              F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{image.size(-2), image.size(-1)})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
  if (image.dim() == 3) {
    lo_up = lo_up.squeeze(0);
  }
  return lambda_ada * (residual_hat - (image - lo_up)).abs().mean();
}

}  // namespace inv3d
