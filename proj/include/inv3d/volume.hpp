// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

namespace inv3d {

// Sigmoid(-sdf/alpha)/alpha. Strictly positive, strictly decreasing in sdf;
// alpha controls how tightly density concentrates at the zero level set.
torch::Tensor sdf_to_density(const torch::Tensor& sdf, double alpha);
torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& alpha);

struct IntegrationResult {
  torch::Tensor integrated;     // [..., K]
  torch::Tensor weights;        // [..., N], sums to <= 1 along N
  torch::Tensor transmittance;  // [..., N], non-increasing along N
};

// Discrete alpha-compositing quadrature of the transmittance integral:
// w_i = T_i (1 - exp(-sigma_i * delta_i)), T_i = exp(-sum_{j<i} sigma_j delta_j),
// with the last bin extending to t_far.
IntegrationResult volume_integrate(const torch::Tensor& values, const torch::Tensor& densities,
                                   const torch::Tensor& sample_depths, double t_far);

// Expected ray-termination depth: volume_integrate with the depths themselves
// as the integrand. Empty rays (all weights ~ 0) yield ~0.
torch::Tensor render_depth(const torch::Tensor& densities, const torch::Tensor& sample_depths,
                           double t_far);

// [x, sin(2^k pi x), cos(2^k pi x)] for k = 0..n-1 per coordinate.
// Output width = D + 2*D*n (raw coordinates included).
torch::Tensor positional_encode(const torch::Tensor& x, int n_frequencies);

inline int positional_encode_width(int dims, int n_frequencies) {
  return dims + 2 * dims * n_frequencies;
}

}  // namespace inv3d
