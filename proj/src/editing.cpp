// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/editing.hpp"

#include <fstream>

#include <json.hpp>

namespace inv3d {

AttributeOracle planted_linear_oracle(int latent_dim, std::uint64_t seed) {
  Rng rng(seed);
  auto v = rng.normal({latent_dim});
  v = v / v.norm();
  return [v](const torch::Tensor& latents) { return torch::matmul(latents, v); };
}

AttributeOracle luminance_oracle(Generator gen, const CameraPose& pose) {
  return [gen, pose](const torch::Tensor& latents) mutable {
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> scores;
    RenderSettings settings;
    settings.stratified = false;
    settings.with_hi = false;
    for (std::int64_t i = 0; i < latents.size(0); ++i) {
      auto render = gen->render(latents.index({i}).unsqueeze(0), pose, settings);
      scores.push_back(render.image_lo.mean());
    }
    return torch::stack(scores);
  };
}

EditDirection search_direction(Generator& gen, int n_samples, const AttributeOracle& oracle,
                               const std::string& attribute, const EditingConfig& cfg, Rng& rng) {
  if (n_samples < 4) {
    throw std::invalid_argument("search_direction: need at least 4 samples");
  }
  auto latents = gen->sample_latent(n_samples, rng);  // [N, D]
  auto scores = oracle(latents.detach());
  if (scores.dim() != 1 || scores.size(0) != n_samples) {
    throw std::invalid_argument("search_direction: oracle must return one score per latent");
  }
  auto threshold = scores.median();
  auto labels = (scores > threshold).to(torch::kFloat64);
  const double positives = labels.sum().item<double>();
  if (positives < 1.0 || positives > n_samples - 1.0) {
    throw std::runtime_error("search_direction: degenerate labels (all one class) for attribute '" +
                             attribute + "'");
  }

  // L2-regularized logistic separator, full-batch Adam from zero init.
  auto weight = torch::zeros({latents.size(1)}, f64()).requires_grad_(true);
  auto bias = torch::zeros({1}, f64()).requires_grad_(true);
  torch::optim::Adam opt({weight, bias}, torch::optim::AdamOptions(cfg.classifier_lr));
  auto x = latents.detach();
  for (int it = 0; it < cfg.classifier_iterations; ++it) {
    opt.zero_grad();
    auto logits = torch::matmul(x, weight) + bias;
    auto loss = torch::binary_cross_entropy_with_logits(logits, labels) +
                cfg.classifier_l2 * weight.pow(2).sum();
    loss.backward();
    opt.step();
  }

  torch::NoGradGuard guard;
  EditDirection dir;
  dir.attribute = attribute;
  dir.direction = (weight / weight.norm()).detach();
  auto logits = torch::matmul(x, weight) + bias;
  dir.accuracy = ((logits > 0) == (labels > 0.5)).to(torch::kFloat64).mean().item<double>();
  dir.margin = (torch::matmul(x, dir.direction) + bias / weight.norm()).abs().mean().item<double>();
  return dir;
}

torch::Tensor apply_edit(const torch::Tensor& codes, const EditDirection& direction,
                         double strength, const GeneratorConfig& gcfg,
                         const std::string& apply_to) {
  auto c = codes.dim() == 2 ? codes.unsqueeze(0) : codes;  // [B, L, D]
  if (c.size(-1) != direction.direction.size(0)) {
    throw std::invalid_argument("apply_edit: latent dimension mismatch");
  }
  int layers = gcfg.total_layers();
  if (apply_to == "g0") {
    layers = gcfg.g0_layers;
  } else if (apply_to == "g0_geometry") {
    layers = gcfg.geometry_layers();
  } else if (apply_to != "all") {
    throw std::invalid_argument("apply_edit: unknown apply_to mode '" + apply_to + "'");
  }
  auto mask = torch::zeros({1, c.size(1), 1}, f64());
  mask.index_put_({0, torch::indexing::Slice(0, layers), 0}, 1.0);
  auto edited = c + strength * mask * direction.direction.reshape({1, 1, -1});
  return codes.dim() == 2 ? edited.squeeze(0) : edited;
}

void DirectionCatalog::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = 1;
  auto arr = nlohmann::json::array();
  for (const auto& [name, dir] : directions) {
    nlohmann::json e;
    e["name"] = name;
    e["attribute"] = dir.attribute;
    e["margin"] = dir.margin;
    e["accuracy"] = dir.accuracy;
    std::vector<double> v(dir.direction.data_ptr<double>(),
                          dir.direction.data_ptr<double>() + dir.direction.numel());
    e["direction"] = v;
    arr.push_back(e);
  }
  j["directions"] = arr;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

DirectionCatalog DirectionCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("direction catalog not found: " + path.string());
  }
  nlohmann::json j;
  in >> j;
  DirectionCatalog cat;
  for (const auto& e : j.at("directions")) {
    EditDirection dir;
    dir.attribute = e.value("attribute", "");
    dir.margin = e.value("margin", 0.0);
    dir.accuracy = e.value("accuracy", 0.0);
    auto v = e.at("direction").get<std::vector<double>>();
    dir.direction = torch::tensor(v, f64());
    cat.directions[e.at("name").get<std::string>()] = dir;
  }
  return cat;
}

}  // namespace inv3d
