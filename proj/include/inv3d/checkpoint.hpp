// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "inv3d/common.hpp"

namespace inv3d {

inline constexpr std::uint32_t kStoreFormatVersion = 1;

// Named-tensor container with a JSON metadata record. Single-file binary:
// magic, format version, JSON header (metadata + tensor directory), raw
// little-endian payload. Self-consistent save/load only; not a wire format.
struct TensorStore {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  bool contains(const std::string& name) const;
  const torch::Tensor& at(const std::string& name) const;
  void put(const std::string& name, const torch::Tensor& t);
};

void save_store(const std::filesystem::path& path, const TensorStore& store);
TensorStore load_store(const std::filesystem::path& path);

// Snapshot/restore of a module's parameters and buffers under `prefix.`.
void store_module(TensorStore& store, const std::string& prefix, const torch::nn::Module& module);
void load_module(const TensorStore& store, const std::string& prefix, torch::nn::Module& module);

}  // namespace inv3d
