// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/volume.hpp"

#include <stdexcept>

namespace inv3d {

torch::Tensor sdf_to_density(const torch::Tensor& sdf, double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("sdf_to_density: alpha must be positive, got " + std::to_string(alpha));
  }
  return torch::sigmoid(-sdf / alpha) / alpha;
}

torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& alpha) {
  if ((alpha <= 0).any().item<bool>()) {
    throw std::invalid_argument("sdf_to_density: alpha must be positive");
  }
  return torch::sigmoid(-sdf / alpha) / alpha;
}

IntegrationResult volume_integrate(const torch::Tensor& values, const torch::Tensor& densities,
                                   const torch::Tensor& sample_depths, double t_far) {
  const auto n = densities.size(-1);
  if (values.size(-2) != n || sample_depths.size(-1) != n) {
    throw std::invalid_argument("volume_integrate: sample dimension mismatch");
  }
  {
    torch::NoGradGuard guard;
    if ((densities < 0).any().item<bool>()) {
      throw std::invalid_argument("volume_integrate: negative densities");
    }
    if (n > 1 && (sample_depths.diff(1, -1) <= 0).any().item<bool>()) {
      throw std::invalid_argument("volume_integrate: sample_depths must be strictly increasing");
    }
    if ((sample_depths.index({torch::indexing::Ellipsis, n - 1}) > t_far).any().item<bool>()) {
      throw std::invalid_argument("volume_integrate: sample_depths exceed t_far");
    }
  }

  torch::Tensor deltas;
  if (n > 1) {
    auto inner = sample_depths.diff(1, -1);
    auto last = (t_far - sample_depths.index({torch::indexing::Ellipsis, n - 1})).unsqueeze(-1);
    deltas = torch::cat({inner, last}, -1);
  } else {
    deltas = (t_far - sample_depths).clamp_min(0.0);
  }

  auto tau = densities * deltas;  // optical thickness per bin
  auto accum = torch::cumsum(tau, -1);
  auto zeros = torch::zeros_like(accum.index({torch::indexing::Ellipsis, torch::indexing::Slice(0, 1)}));
  auto accum_before = torch::cat(
      {zeros, accum.index({torch::indexing::Ellipsis, torch::indexing::Slice(0, n - 1)})}, -1);
  auto transmittance = torch::exp(-accum_before);
  auto weights = transmittance * (1.0 - torch::exp(-tau));

  IntegrationResult out;
  out.integrated = (weights.unsqueeze(-1) * values).sum(-2);
  out.weights = weights;
  out.transmittance = transmittance;
  return out;
}

torch::Tensor render_depth(const torch::Tensor& densities, const torch::Tensor& sample_depths,
                           double t_far) {
  auto res = volume_integrate(sample_depths.unsqueeze(-1), densities, sample_depths, t_far);
  return res.integrated.squeeze(-1);
}

torch::Tensor positional_encode(const torch::Tensor& x, int n_frequencies) {
  if (n_frequencies < 0) {
    throw std::invalid_argument("positional_encode: n_frequencies must be >= 0");
  }
  if (n_frequencies == 0) {
    return x;
  }
  std::vector<torch::Tensor> parts;
  parts.reserve(1 + 2 * n_frequencies);
  parts.push_back(x);
  for (int k = 0; k < n_frequencies; ++k) {
    const double freq = std::pow(2.0, k) * M_PI;
    parts.push_back(torch::sin(freq * x));
    parts.push_back(torch::cos(freq * x));
  }
  return torch::cat(parts, -1);
}

}  // namespace inv3d
