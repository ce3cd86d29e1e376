// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace inv3d {

// [3,H,W] (or [H,W]) float in [0,1] -> 8-bit PNG. Deterministic bytes.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// PNG -> [3,H,W] float64 in [0,1].
torch::Tensor read_png(const std::filesystem::path& path);

// Tile images (all [3,H,W]) into a single [3,?,?] grid, row-major.
torch::Tensor make_grid(const std::vector<torch::Tensor>& images, int columns);

}  // namespace inv3d
