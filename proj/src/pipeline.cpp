// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/pipeline.hpp"

#include "inv3d/checkpoint.hpp"

namespace inv3d {

torch::Tensor upsample_to(const torch::Tensor& image_lo, std::int64_t size) {
  namespace F = torch::nn::functional;
  auto x = image_lo.dim() == 3 ? image_lo.unsqueeze(0) : image_lo;
  auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{size, size})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
  return image_lo.dim() == 3 ? up.squeeze(0) : up;
}

void Pipeline::require_generator() const {
  if (gen_.is_empty()) {
    throw StateError("pipeline: generator weights are not loaded");
  }
}
void Pipeline::require_stage1() const {
  require_generator();
  if (e_g_.is_empty()) {
    throw StateError("pipeline: stage-1 (global encoder) weights are not loaded");
  }
}
void Pipeline::require_stage2() const {
  require_stage1();
  if (e_l_.is_empty() || film_source_.is_empty()) {
    throw StateError("pipeline: stage-2 (local encoder) weights are not loaded");
  }
}
void Pipeline::require_stage3() const {
  require_stage1();
  if (e_l3_.is_empty() || e_ada_.is_empty() || film_inner_.is_empty() || film_outer_.is_empty()) {
    throw StateError("pipeline: stage-3 (hybrid alignment) weights are not loaded");
  }
}

int Pipeline::film_target_width() const { return cfg_.generator.trunk_width + 3; }
int Pipeline::film_condition_width() const {
  return local_feature_width(cfg_.encoder, cfg_.generator);
}

void Pipeline::attach_generator(Generator gen, Discriminator disc) {
  gen_ = gen;
  disc_ = disc;
  cfg_.generator = gen_->cfg;
  cfg_.scene = gen_->scene;
  set_requires_grad(*gen_, false);
}

void Pipeline::load_generator(const std::filesystem::path& path) {
  auto ckpt = load_generator_checkpoint(path);
  attach_generator(ckpt.generator, ckpt.discriminator);
}

GlobalEncoder Pipeline::fresh_global_encoder(std::uint64_t seed) {
  require_generator();
  torch::manual_seed(seed);
  return GlobalEncoder(cfg_.encoder, cfg_.generator);
}

LocalEncoder Pipeline::fresh_local_encoder(std::uint64_t seed) {
  require_generator();
  torch::manual_seed(seed);
  return LocalEncoder(cfg_.encoder, cfg_.generator);
}

AdaModule Pipeline::fresh_ada(std::uint64_t seed) {
  torch::manual_seed(seed);
  return AdaModule(cfg_.encoder);
}

FiLMLayer Pipeline::fresh_film(int target_width, int condition_width, std::uint64_t seed) {
  torch::manual_seed(seed);
  return FiLMLayer(target_width, condition_width, cfg_.encoder.film_hidden);
}

void Pipeline::load_stage1(const std::filesystem::path& path) {
  require_generator();
  auto store = load_store(path);
  if (store.meta.value("kind", "") != "stage1") {
    throw CheckpointError("not a stage-1 checkpoint: " + path.string());
  }
  e_g_ = GlobalEncoder(cfg_.encoder, cfg_.generator);
  load_module(store, "e_g", *e_g_);
  set_requires_grad(*e_g_, false);
}

void Pipeline::load_stage2(const std::filesystem::path& path) {
  require_generator();
  auto store = load_store(path);
  if (store.meta.value("kind", "") != "stage2") {
    throw CheckpointError("not a stage-2 checkpoint: " + path.string());
  }
  e_l_ = LocalEncoder(cfg_.encoder, cfg_.generator);
  film_source_ = FiLMLayer(film_target_width(), film_condition_width(), cfg_.encoder.film_hidden);
  load_module(store, "e_l", *e_l_);
  load_module(store, "film_source", *film_source_);
  set_requires_grad(*e_l_, false);
  set_requires_grad(*film_source_, false);
}

void Pipeline::load_stage3(const std::filesystem::path& path) {
  require_generator();
  auto store = load_store(path);
  if (store.meta.value("kind", "") != "stage3") {
    throw CheckpointError("not a stage-3 checkpoint: " + path.string());
  }
  e_l3_ = LocalEncoder(cfg_.encoder, cfg_.generator);
  e_ada_ = AdaModule(cfg_.encoder);
  film_inner_ =
      FiLMLayer(film_condition_width(), film_condition_width(), cfg_.encoder.film_hidden);
  film_outer_ = FiLMLayer(film_target_width(), film_condition_width(), cfg_.encoder.film_hidden);
  load_module(store, "e_l", *e_l3_);
  load_module(store, "e_ada", *e_ada_);
  load_module(store, "film_inner", *film_inner_);
  load_module(store, "film_outer", *film_outer_);
  for (auto* m : {static_cast<torch::nn::Module*>(e_l3_.get()),
                  static_cast<torch::nn::Module*>(e_ada_.get()),
                  static_cast<torch::nn::Module*>(film_inner_.get()),
                  static_cast<torch::nn::Module*>(film_outer_.get())}) {
    set_requires_grad(*m, false);
  }
}

torch::Tensor Pipeline::invert(const torch::Tensor& image) {
  require_stage1();
  auto batched = image.dim() == 3 ? image.unsqueeze(0) : image;
  auto codes = e_g_->forward(batched);
  return image.dim() == 3 ? codes.squeeze(0) : codes;
}

RenderResult Pipeline::render_codes(const torch::Tensor& codes, const CameraPose& pose,
                                    const PointModulator& modulator) {
  require_generator();
  RenderSettings settings;
  settings.stratified = false;
  auto c = codes.dim() == 2 ? codes.unsqueeze(0) : codes;
  return gen_->render(c, pose, settings, modulator);
}

RenderResult Pipeline::reconstruct_global(const torch::Tensor& image, const CameraPose& /*source*/,
                                          const CameraPose& query) {
  auto codes = invert(image);
  return render_codes(codes, query);
}

RenderResult Pipeline::reconstruct_local(const torch::Tensor& image, const CameraPose& source,
                                         const CameraPose& query) {
  require_stage2();
  auto codes = invert(image);
  auto recon = render_codes(codes, source);
  auto delta = image.unsqueeze(0) - recon.image_hi;
  auto local_map = e_l_->forward(delta, recon.depth);
  auto modulator = make_source_view_modulator(local_map, source, film_source_,
                                              cfg_.generator.pe_frequencies);
  return render_codes(codes, query, modulator);
}

Pipeline::HybridInputs Pipeline::hybrid_inputs(const torch::Tensor& image,
                                               const torch::Tensor& codes,
                                               const torch::Tensor& codes_edit,
                                               const CameraPose& source, const CameraPose& query) {
  const auto hi = static_cast<std::int64_t>(cfg_.generator.image_size_hi());
  auto recon = render_codes(codes, source);
  auto delta = image.unsqueeze(0) - recon.image_hi;

  // 3D branch: re-align the residual to the edited scene in the source view,
  // encode with the source-view depth.
  auto edit_src = render_codes(codes_edit, source);
  auto aligned_src = e_ada_->forward(delta, upsample_to(edit_src.image_lo, hi));
  auto local_map = e_l3_->forward(aligned_src, edit_src.depth);

  // 2D branch: align the residual to the novel-view rendering directly.
  auto edit_query = render_codes(codes_edit, query);
  auto aligned_query = e_ada_->forward(delta, upsample_to(edit_query.image_lo, hi));
  auto ada_map = e_l3_->forward(aligned_query, edit_query.depth);

  return {local_map, ada_map, source, query};
}

RenderResult Pipeline::reconstruct_hybrid(const torch::Tensor& image, const CameraPose& source,
                                          const CameraPose& query) {
  require_stage3();
  auto codes = invert(image);
  auto inputs = hybrid_inputs(image, codes, codes, source, query);
  auto modulator =
      make_hybrid_modulator(inputs.local_map, inputs.source, inputs.ada_map, inputs.query,
                            film_inner_, film_outer_, cfg_.generator.pe_frequencies);
  return render_codes(codes, query, modulator);
}

RenderResult Pipeline::editing_forward(const torch::Tensor& image, const CameraPose& source,
                                       const EditDirection& direction, double strength,
                                       const CameraPose& query) {
  require_stage3();
  auto codes = invert(image);
  auto codes_edit = apply_edit(codes, direction, strength, cfg_.generator, cfg_.editing.apply_to);
  auto inputs = hybrid_inputs(image, codes, codes_edit, source, query);
  auto modulator =
      make_hybrid_modulator(inputs.local_map, inputs.source, inputs.ada_map, inputs.query,
                            film_inner_, film_outer_, cfg_.generator.pe_frequencies);
  return render_codes(codes_edit, query, modulator);
}

void save_stage1_checkpoint(const std::filesystem::path& path, const GlobalEncoder& e_g,
                            std::int64_t step) {
  TensorStore store;
  store.meta["kind"] = "stage1";
  store.meta["step"] = step;
  store_module(store, "e_g", *e_g);
  save_store(path, store);
}

void save_stage2_checkpoint(const std::filesystem::path& path, const LocalEncoder& e_l,
                            const FiLMLayer& film_source, const Discriminator& disc,
                            std::int64_t step) {
  TensorStore store;
  store.meta["kind"] = "stage2";
  store.meta["step"] = step;
  store_module(store, "e_l", *e_l);
  store_module(store, "film_source", *film_source);
  store_module(store, "discriminator", *disc);
  save_store(path, store);
}

void save_stage3_checkpoint(const std::filesystem::path& path, const LocalEncoder& e_l,
                            const AdaModule& ada, const FiLMLayer& inner, const FiLMLayer& outer,
                            const Discriminator& disc, std::int64_t step) {
  TensorStore store;
  store.meta["kind"] = "stage3";
  store.meta["step"] = step;
  store_module(store, "e_l", *e_l);
  store_module(store, "e_ada", *ada);
  store_module(store, "film_inner", *inner);
  store_module(store, "film_outer", *outer);
  store_module(store, "discriminator", *disc);
  save_store(path, store);
}

}  // namespace inv3d
