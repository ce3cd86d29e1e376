// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace inv3d {

// All numerics run in float64 on CPU. Call once from every entry point
// (CLI, tests, bindings) before constructing modules.
void init_runtime(int num_threads = 1);

inline torch::TensorOptions f64() { return torch::dtype(torch::kFloat64); }

// Thrown when an operation requires weights/stages that are not loaded.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on malformed/mismatched checkpoint or cache files.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a training run hits a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seedable RNG stream backed by a torch CPU generator. Forking derives an
// independent stream so subsystems cannot perturb each other's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  torch::Generator& gen() { return gen_; }
  std::uint64_t seed() const { return seed_; }

  torch::Tensor normal(torch::IntArrayRef shape, double mean = 0.0, double std = 1.0);
  torch::Tensor uniform(torch::IntArrayRef shape, double lo = 0.0, double hi = 1.0);
  std::int64_t randint(std::int64_t hi);  // uniform in [0, hi)

  Rng fork(std::uint64_t salt) const;

  torch::Tensor state() const;
  void set_state(const torch::Tensor& state);

 private:
  std::uint64_t seed_;
  torch::Generator gen_;
};

// Marks every parameter of a module as (un)trainable.
void set_requires_grad(torch::nn::Module& module, bool value);

// Order-stable fingerprint of all parameters; used for freeze contracts.
double parameter_fingerprint(const torch::nn::Module& module);

}  // namespace inv3d
