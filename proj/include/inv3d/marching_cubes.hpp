// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace inv3d {

struct Mesh {
  torch::Tensor vertices;  // [V, 3] float64
  torch::Tensor faces;     // [F, 3] int64
  bool empty() const { return vertices.numel() == 0; }
};

// Isosurface of a scalar grid sampled at (res+1)^3 lattice points spanning
// [-extent, extent]^3. Cells are split into six tetrahedra; crossing edges
// are linearly interpolated and shared vertices deduplicated, so the surface
// is watertight wherever the level set stays inside the grid.
Mesh extract_isosurface(const torch::Tensor& grid, double iso, double extent);

void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_obj(const std::filesystem::path& path);

}  // namespace inv3d
