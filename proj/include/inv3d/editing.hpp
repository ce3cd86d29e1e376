// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "inv3d/common.hpp"
#include "inv3d/config.hpp"
#include "inv3d/generator.hpp"

namespace inv3d {

struct EditDirection {
  torch::Tensor direction;  // [D], unit norm
  std::string attribute;
  double margin = 0.0;       // mean |projection - threshold| over the fit set
  double accuracy = 0.0;     // training accuracy of the separator
};

// Deterministic scalar score per latent; stands in for a pretrained
// attribute predictor.
using AttributeOracle = std::function<torch::Tensor(const torch::Tensor& latents)>;

// Fixed random linear functional v . w (correctness tests).
AttributeOracle planted_linear_oracle(int latent_dim, std::uint64_t seed);

// Mean rendered brightness of the low-res image (end-to-end demos).
AttributeOracle luminance_oracle(Generator gen, const CameraPose& pose);

// Sample latents from the frozen generator, score them, binarize at the
// median and fit an L2-regularized logistic separator; the direction is the
// normalized boundary normal.
EditDirection search_direction(Generator& gen, int n_samples, const AttributeOracle& oracle,
                               const std::string& attribute, const EditingConfig& cfg, Rng& rng);

// w + strength * direction, broadcast across the per-layer codes selected by
// `apply_to` (all | g0 | g0_geometry).
torch::Tensor apply_edit(const torch::Tensor& codes, const EditDirection& direction,
                         double strength, const GeneratorConfig& gcfg,
                         const std::string& apply_to = "all");

struct DirectionCatalog {
  std::map<std::string, EditDirection> directions;

  void save(const std::filesystem::path& path) const;
  static DirectionCatalog load(const std::filesystem::path& path);
  bool contains(const std::string& name) const { return directions.count(name) > 0; }
};

}  // namespace inv3d
