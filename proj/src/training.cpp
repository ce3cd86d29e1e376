// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/training.hpp"

#include <torch/serialize.h>

#include <fstream>
#include <iostream>

#include "inv3d/checkpoint.hpp"
#include "inv3d/losses.hpp"

namespace inv3d {
namespace {

using std::filesystem::path;

class CsvLogger {
 public:
  CsvLogger(const path& file, const std::vector<std::string>& columns) : columns_(columns) {
    if (file.has_parent_path()) {
      std::filesystem::create_directories(file.parent_path());
    }
    out_.open(file, std::ios::trunc);
    out_ << "step";
    for (const auto& c : columns_) out_ << "," << c;
    out_ << "\n";
  }
  void log(std::int64_t step, const std::map<std::string, double>& values) {
    out_ << step;
    for (const auto& c : columns_) {
      char buf[40];
      auto it = values.find(c);
      std::snprintf(buf, sizeof(buf), "%.9g", it == values.end() ? 0.0 : it->second);
      out_ << "," << buf;
    }
    out_ << "\n";
    out_.flush();
  }

 private:
  std::vector<std::string> columns_;
  std::ofstream out_;
};

void check_finite(const torch::Tensor& loss, std::int64_t step, const path& last_ckpt) {
  if (!loss.isfinite().all().item<bool>()) {
    throw TrainingError("non-finite loss at step " + std::to_string(step) +
                        "; last good checkpoint: " +
                        (last_ckpt.empty() ? std::string("<none>") : last_ckpt.string()));
  }
}

// Predicted geometry under the current code estimate: SDF at both point sets
// and autodiff normals (kept in the graph for backprop into the codes).
struct PredictedGeometry {
  torch::Tensor sdf_on, normals_on, sdf_free;
};

PredictedGeometry predict_geometry(Generator& gen, const torch::Tensor& codes,
                                   const torch::Tensor& points_on,
                                   const torch::Tensor& points_free) {
  PredictedGeometry out;
  auto pts = points_on.detach().clone().requires_grad_(true);
  auto d_on = gen->sdf(codes, pts.unsqueeze(0)).squeeze(0);
  auto grads = torch::autograd::grad({d_on.sum()}, {pts}, /*grad_outputs=*/{},
                                     /*retain_graph=*/true, /*create_graph=*/true);
  auto norms = grads[0].norm(2, -1, true);
  out.normals_on = grads[0] / (norms + 1e-12);
  out.sdf_on = d_on;
  out.sdf_free = gen->sdf(codes, points_free.unsqueeze(0)).squeeze(0);
  return out;
}

torch::Tensor masked_rows(const torch::Tensor& t, const torch::Tensor& mask) {
  return t.index({mask});
}

double tensor_mse(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).pow(2).mean().item<double>();
}

void save_optimizer(const torch::optim::Optimizer& opt, const path& file) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  archive.save_to(file.string());
}

void load_optimizer(torch::optim::Optimizer& opt, const path& file) {
  torch::serialize::InputArchive archive;
  archive.load_from(file.string());
  opt.load(archive);
}

}  // namespace

double CurriculumSchedule::at(std::int64_t step) const {
  const auto ramp = std::max<std::int64_t>(ramp_steps, 1);
  if (step <= 0) return 0.0;
  if (step >= ramp) return 1.0;
  return static_cast<double>(step) / static_cast<double>(ramp);
}

StageResult train_stage1(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const path& out_dir, const path& resume_from) {
  pipeline.require_generator();
  auto gen = pipeline.generator();
  const auto& weights = pipeline.config().losses;
  std::filesystem::create_directories(out_dir);

  const double gen_fingerprint = parameter_fingerprint(*gen);

  auto e_g = pipeline.fresh_global_encoder(pipeline.config().seed + 11);
  torch::optim::Adam opt(e_g->parameters(), torch::optim::AdamOptions(stage.learning_rate));
  Rng rng(pipeline.config().seed + 1001);
  std::int64_t start_step = 0;

  const path ckpt_path = out_dir / "stage1.ckpt";
  const path optim_path = out_dir / "stage1.optim";
  if (!resume_from.empty()) {
    auto store = load_store(resume_from);
    if (store.meta.value("kind", "") != "stage1") {
      throw CheckpointError("resume: not a stage-1 checkpoint: " + resume_from.string());
    }
    load_module(store, "e_g", *e_g);
    start_step = store.meta.value("step", 0);
    if (store.contains("rng_state")) {
      rng.set_state(store.at("rng_state"));
    }
    const path opt_file = resume_from.string() + ".optim";
    if (std::filesystem::exists(opt_file)) {
      load_optimizer(opt, opt_file);
    }
  }

  PerceptualProxy perceptual;
  SimilarityProxy similarity;
  auto train_idx = cache.train_indices();
  if (train_idx.empty()) {
    throw TrainingError("stage 1: empty training split");
  }

  CsvLogger train_log(out_dir / "stage1_metrics.csv",
                      {"loss", "geo", "code", "rec_lo", "rec_hi"});
  CsvLogger eval_log(out_dir / "stage1_eval.csv", {"holdout_code", "holdout_mse"});

  auto save_ckpt = [&](std::int64_t step) {
    TensorStore store;
    store.meta["kind"] = "stage1";
    store.meta["step"] = step;
    store_module(store, "e_g", *e_g);
    store.put("rng_state", rng.state());
    save_store(ckpt_path, store);
    save_optimizer(opt, optim_path);
    std::filesystem::copy_file(optim_path, path(ckpt_path.string() + ".optim"),
                               std::filesystem::copy_options::overwrite_existing);
  };

  path last_ckpt;
  RenderSettings settings;
  settings.stratified = false;

  for (std::int64_t step = start_step; step < stage.iterations; ++step) {
    opt.zero_grad();
    auto total = torch::zeros({}, f64());
    double geo_v = 0, code_v = 0, rec_lo_v = 0, rec_hi_v = 0;

    for (int b = 0; b < stage.batch_size; ++b) {
      auto rec = cache.load(train_idx[static_cast<std::size_t>(
          rng.randint(static_cast<std::int64_t>(train_idx.size())))]);

      auto codes = e_g->forward(rec.image_hi.unsqueeze(0));
      auto render = gen->render(codes, rec.pose, settings);

      auto rec_lo = reconstruction_loss(render.image_lo.squeeze(0), rec.image_lo, weights,
                                        perceptual, similarity);
      auto rec_hi = reconstruction_loss(render.image_hi.squeeze(0), rec.image_hi, weights,
                                        perceptual, similarity);

      auto on_mask = rec.visible_on;
      auto free_mask = rec.visible_free;
      auto pred = predict_geometry(*&gen, codes, masked_rows(rec.shape.points_on, on_mask),
                                   masked_rows(rec.shape.points_free, free_mask));
      auto geo = geometry_loss(pred.sdf_on, pred.normals_on,
                               masked_rows(rec.shape.normals_on, on_mask),
                               masked_rows(rec.shape.normals_valid, on_mask), pred.sdf_free,
                               masked_rows(rec.shape.sdf_free, free_mask), weights);

      auto gt_codes = gen->expand_codes(rec.latent.unsqueeze(0));
      auto code = code_loss(codes, gt_codes);

      auto sample_loss = geo.total + code + rec_lo.total + rec_hi.total;
      total = total + sample_loss;
      geo_v += geo.total.item<double>();
      code_v += code.item<double>();
      rec_lo_v += rec_lo.total.item<double>();
      rec_hi_v += rec_hi.total.item<double>();
    }
    total = total / stage.batch_size;
    check_finite(total, step, last_ckpt);
    total.backward();
    opt.step();

    const double inv_b = 1.0 / stage.batch_size;
    if (step % stage.log_every == 0 || step + 1 == stage.iterations) {
      train_log.log(step, {{"loss", total.item<double>()},
                           {"geo", geo_v * inv_b},
                           {"code", code_v * inv_b},
                           {"rec_lo", rec_lo_v * inv_b},
                           {"rec_hi", rec_hi_v * inv_b}});
      std::cout << "[stage1] step " << step << " loss " << total.item<double>() << "\n";
    }
    if ((step + 1) % stage.eval_every == 0 || step + 1 == stage.iterations) {
      pipeline.set_stage1(e_g);
      auto holdout = evaluate_holdout_stage1(pipeline, cache);
      eval_log.log(step + 1, {{"holdout_code", holdout.code_loss}, {"holdout_mse", holdout.mse_hi}});
    }
    if ((step + 1) % stage.checkpoint_every == 0 || step + 1 == stage.iterations) {
      save_ckpt(step + 1);
      last_ckpt = ckpt_path;
    }
  }

  if (parameter_fingerprint(*gen) != gen_fingerprint) {
    throw TrainingError("stage 1: generator parameters changed despite freeze contract");
  }

  pipeline.set_stage1(e_g);
  auto holdout = evaluate_holdout_stage1(pipeline, cache);

  StageResult result;
  result.checkpoint = ckpt_path;
  result.metrics_csv = out_dir / "stage1_metrics.csv";
  result.final_metrics["holdout_code"] = holdout.code_loss;
  result.final_metrics["holdout_mse"] = holdout.mse_hi;
  return result;
}

StageResult train_stage2(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const path& out_dir) {
  pipeline.require_stage1();
  auto gen = pipeline.generator();
  auto e_g = pipeline.global_encoder();
  auto disc = pipeline.discriminator();
  const auto& cfg = pipeline.config();
  const auto& weights = cfg.losses;
  std::filesystem::create_directories(out_dir);

  const double gen_fingerprint = parameter_fingerprint(*gen);
  const double e_g_fingerprint = parameter_fingerprint(*e_g);
  set_requires_grad(*e_g, false);

  auto e_l = pipeline.fresh_local_encoder(cfg.seed + 21);
  auto film = pipeline.fresh_film(pipeline.film_target_width(), pipeline.film_condition_width(),
                                  cfg.seed + 22);
  set_requires_grad(*disc, true);

  std::vector<torch::Tensor> enc_params = e_l->parameters();
  for (auto& p : film->parameters()) enc_params.push_back(p);
  torch::optim::Adam opt_enc(enc_params, torch::optim::AdamOptions(stage.learning_rate));
  torch::optim::Adam opt_disc(disc->parameters(), torch::optim::AdamOptions(stage.learning_rate));

  Rng rng(cfg.seed + 2001);
  PerceptualProxy perceptual;
  SimilarityProxy similarity;
  auto train_idx = cache.train_indices();
  if (train_idx.empty()) {
    throw TrainingError("stage 2: empty training split");
  }

  CsvLogger train_log(out_dir / "stage2_metrics.csv", {"loss", "rec_hi", "adv", "d", "r1"});
  CsvLogger eval_log(out_dir / "stage2_eval.csv", {"holdout_mse_local", "holdout_mse_global"});
  const path ckpt_path = out_dir / "stage2.ckpt";
  path last_ckpt;

  RenderSettings settings;
  settings.stratified = false;
  const int pe = cfg.generator.pe_frequencies;

  auto forward_sample = [&](const SampleRecord& rec) {
    torch::Tensor codes, delta, depth;
    {
      torch::NoGradGuard guard;
      codes = e_g->forward(rec.image_hi.unsqueeze(0));
      auto recon = gen->render(codes, rec.pose, settings);
      delta = rec.image_hi.unsqueeze(0) - recon.image_hi;
      depth = recon.depth;
    }
    auto local_map = e_l->forward(delta, depth);
    auto modulator = make_source_view_modulator(local_map, rec.pose, film, pe);
    return gen->render(codes, rec.pose, settings, modulator);
  };

  for (std::int64_t step = 0; step < stage.iterations; ++step) {
    opt_enc.zero_grad();
    auto total = torch::zeros({}, f64());
    double rec_v = 0, adv_v = 0;

    std::vector<SampleRecord> batch;
    for (int b = 0; b < stage.batch_size; ++b) {
      batch.push_back(cache.load(train_idx[static_cast<std::size_t>(
          rng.randint(static_cast<std::int64_t>(train_idx.size())))]));
    }
    for (const auto& rec : batch) {
      auto render = forward_sample(rec);
      auto rec_hi = reconstruction_loss(render.image_hi.squeeze(0), rec.image_hi, weights,
                                        perceptual, similarity);
      auto adv = adversarial_generator_loss(disc(render.image_hi));
      auto sample_loss = rec_hi.total + weights.lambda_adv * adv;
      total = total + sample_loss;
      rec_v += rec_hi.total.item<double>();
      adv_v += adv.item<double>();
    }
    total = total / stage.batch_size;
    check_finite(total, step, last_ckpt);
    total.backward();
    opt_enc.step();

    double d_v = 0, r1_v = 0;
    if (step % 2 == 1) {  // discriminator on alternating steps
      opt_disc.zero_grad();
      std::vector<torch::Tensor> reals, fakes;
      {
        torch::NoGradGuard guard;
        for (const auto& rec : batch) {
          reals.push_back(rec.image_hi.unsqueeze(0));
          fakes.push_back(forward_sample(rec).image_hi);
        }
      }
      auto real = torch::cat(reals);
      auto fake = torch::cat(fakes);
      auto d_loss = weights.lambda_d * discriminator_loss(disc(real), disc(fake));
      auto r1 = r1_penalty(disc, weights.r1_on_reconstruction ? fake : real, weights.lambda_r1);
      auto disc_total = d_loss + r1;
      check_finite(disc_total, step, last_ckpt);
      disc_total.backward();
      opt_disc.step();
      d_v = d_loss.item<double>();
      r1_v = r1.item<double>();
    }

    const double inv_b = 1.0 / stage.batch_size;
    if (step % stage.log_every == 0 || step + 1 == stage.iterations) {
      train_log.log(step, {{"loss", total.item<double>()},
                           {"rec_hi", rec_v * inv_b},
                           {"adv", adv_v * inv_b},
                           {"d", d_v},
                           {"r1", r1_v}});
      std::cout << "[stage2] step " << step << " loss " << total.item<double>() << "\n";
    }
    if ((step + 1) % stage.eval_every == 0 || step + 1 == stage.iterations) {
      pipeline.set_stage2(e_l, film);
      eval_log.log(step + 1,
                   {{"holdout_mse_local", holdout_source_mse(pipeline, cache, "local")},
                    {"holdout_mse_global", holdout_source_mse(pipeline, cache, "global")}});
    }
    if ((step + 1) % stage.checkpoint_every == 0 || step + 1 == stage.iterations) {
      save_stage2_checkpoint(ckpt_path, e_l, film, disc, step + 1);
      last_ckpt = ckpt_path;
    }
  }

  if (parameter_fingerprint(*gen) != gen_fingerprint) {
    throw TrainingError("stage 2: generator parameters changed despite freeze contract");
  }
  if (parameter_fingerprint(*e_g) != e_g_fingerprint) {
    throw TrainingError("stage 2: global encoder changed despite freeze contract");
  }

  pipeline.set_stage2(e_l, film);
  StageResult result;
  result.checkpoint = ckpt_path;
  result.metrics_csv = out_dir / "stage2_metrics.csv";
  result.final_metrics["holdout_mse_local"] = holdout_source_mse(pipeline, cache, "local");
  result.final_metrics["holdout_mse_global"] = holdout_source_mse(pipeline, cache, "global");
  return result;
}

StageResult train_stage3(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const path& out_dir) {
  pipeline.require_stage2();
  if (stage.batch_size % 2 != 0) {
    throw std::invalid_argument("stage 3: batch size must be even (paired views per latent)");
  }
  auto gen = pipeline.generator();
  auto e_g = pipeline.global_encoder();
  auto disc = pipeline.discriminator();
  const auto& cfg = pipeline.config();
  const auto& weights = cfg.losses;
  std::filesystem::create_directories(out_dir);

  const double gen_fingerprint = parameter_fingerprint(*gen);
  const double e_g_fingerprint = parameter_fingerprint(*e_g);

  // The hybrid path starts from the stage-2 local encoder and fresh
  // identity-initialized FiLM layers.
  auto e_l = pipeline.fresh_local_encoder(cfg.seed + 31);
  {
    TensorStore tmp;
    store_module(tmp, "m", *pipeline.local_encoder());
    load_module(tmp, "m", *e_l);
  }
  auto ada = pipeline.fresh_ada(cfg.seed + 32);
  auto inner = pipeline.fresh_film(pipeline.film_condition_width(),
                                   pipeline.film_condition_width(), cfg.seed + 33);
  auto outer = pipeline.fresh_film(pipeline.film_target_width(), pipeline.film_condition_width(),
                                   cfg.seed + 34);

  std::vector<torch::Tensor> enc_params = ada->parameters();
  for (auto& p : inner->parameters()) enc_params.push_back(p);
  for (auto& p : outer->parameters()) enc_params.push_back(p);
  if (stage.train_local_encoder) {
    for (auto& p : e_l->parameters()) enc_params.push_back(p);
  } else {
    set_requires_grad(*e_l, false);
  }
  torch::optim::Adam opt_enc(enc_params, torch::optim::AdamOptions(stage.learning_rate));
  torch::optim::Adam opt_disc(disc->parameters(), torch::optim::AdamOptions(stage.learning_rate));

  Rng rng(cfg.seed + 3001);
  PerceptualProxy perceptual;
  SimilarityProxy similarity;
  CurriculumSchedule schedule{
      std::max<std::int64_t>(1, static_cast<std::int64_t>(stage.curriculum_ramp * stage.iterations))};

  CsvLogger train_log(out_dir / "stage3_metrics.csv",
                      {"loss", "rec", "ada", "adv", "d", "r1", "alpha_c"});
  CsvLogger eval_log(out_dir / "stage3_eval.csv", {"holdout_novel_mse"});
  const path ckpt_path = out_dir / "stage3.ckpt";
  path last_ckpt;

  RenderSettings settings;
  settings.stratified = false;
  const int pe = cfg.generator.pe_frequencies;
  const auto hi = static_cast<std::int64_t>(cfg.generator.image_size_hi());

  // Fixed held-out pairs for the novel-view eval curve.
  Rng eval_rng(cfg.seed + 3777);
  auto eval_latents = gen->sample_latent(4, eval_rng);
  auto eval_dist = PoseDistribution::from(cfg.pose);
  std::vector<std::pair<CameraPose, CameraPose>> eval_pairs;
  for (int i = 0; i < 4; ++i) {
    eval_pairs.emplace_back(sample_pose(eval_dist, cfg.scene, eval_rng),
                            sample_pose(eval_dist, cfg.scene, eval_rng));
  }

  auto hybrid_forward = [&](const torch::Tensor& image_src, const CameraPose& src,
                            const CameraPose& qry, torch::Tensor* ada_reg) {
    torch::Tensor codes, delta, recon_lo_src, depth_src, recon_lo_qry, depth_qry;
    {
      torch::NoGradGuard guard;
      codes = e_g->forward(image_src.unsqueeze(0));
      auto recon_src = gen->render(codes, src, settings);
      delta = image_src.unsqueeze(0) - recon_src.image_hi;
      recon_lo_src = recon_src.image_lo;
      depth_src = recon_src.depth;
      auto recon_qry = gen->render(codes, qry, settings);
      recon_lo_qry = recon_qry.image_lo;
      depth_qry = recon_qry.depth;
    }
    auto aligned_src = ada->forward(delta, upsample_to(recon_lo_src, hi));
    if (ada_reg != nullptr) {
      *ada_reg = ada_residual_loss(aligned_src, image_src.unsqueeze(0), recon_lo_src,
                                   weights.lambda_ada);
    }
    auto local_map = e_l->forward(aligned_src, depth_src);
    auto aligned_qry = ada->forward(delta, upsample_to(recon_lo_qry, hi));
    auto ada_map = e_l->forward(aligned_qry, depth_qry);
    auto modulator = make_hybrid_modulator(local_map, src, ada_map, qry, inner, outer, pe);
    return gen->render(codes, qry, settings, modulator);
  };

  const int n_latents = stage.batch_size / 2;
  auto dist = PoseDistribution::from(cfg.pose);

  for (std::int64_t step = 0; step < stage.iterations; ++step) {
    dist.curriculum = schedule.at(step);
    opt_enc.zero_grad();
    auto total = torch::zeros({}, f64());
    double rec_v = 0, ada_v = 0, adv_v = 0;

    struct Pair {
      torch::Tensor image1, image2;
      CameraPose pose1, pose2;
    };
    std::vector<Pair> pairs;
    {
      torch::NoGradGuard guard;
      for (int i = 0; i < n_latents; ++i) {
        auto w = gen->sample_latent(1, rng);
        Pair p;
        p.pose1 = sample_pose(dist, cfg.scene, rng);
        p.pose2 = sample_pose(dist, cfg.scene, rng);
        p.image1 = gen->render(w, p.pose1, settings).image_hi.squeeze(0);
        p.image2 = gen->render(w, p.pose2, settings).image_hi.squeeze(0);
        pairs.push_back(std::move(p));
      }
    }

    std::vector<torch::Tensor> fakes;
    for (const auto& p : pairs) {
      for (int dir = 0; dir < 2; ++dir) {
        const auto& src_img = dir == 0 ? p.image1 : p.image2;
        const auto& qry_img = dir == 0 ? p.image2 : p.image1;
        const auto& src_pose = dir == 0 ? p.pose1 : p.pose2;
        const auto& qry_pose = dir == 0 ? p.pose2 : p.pose1;

        torch::Tensor ada_reg;
        auto render = hybrid_forward(src_img, src_pose, qry_pose, &ada_reg);
        auto rec = reconstruction_loss(render.image_hi.squeeze(0), qry_img, weights, perceptual,
                                       similarity);
        auto adv = adversarial_generator_loss(disc(render.image_hi));
        total = total + rec.total + ada_reg + weights.lambda_adv * adv;
        rec_v += rec.total.item<double>();
        ada_v += ada_reg.item<double>();
        adv_v += adv.item<double>();
        fakes.push_back(render.image_hi.detach());
      }
    }
    total = total / stage.batch_size;
    check_finite(total, step, last_ckpt);
    total.backward();
    opt_enc.step();

    double d_v = 0, r1_v = 0;
    if (step % 2 == 1) {
      opt_disc.zero_grad();
      std::vector<torch::Tensor> reals;
      for (const auto& p : pairs) {
        reals.push_back(p.image1.unsqueeze(0));
        reals.push_back(p.image2.unsqueeze(0));
      }
      auto real = torch::cat(reals);
      auto fake = torch::cat(fakes);
      auto d_loss = weights.lambda_d * discriminator_loss(disc(real), disc(fake));
      auto r1 = r1_penalty(disc, weights.r1_on_reconstruction ? fake : real, weights.lambda_r1);
      auto disc_total = d_loss + r1;
      check_finite(disc_total, step, last_ckpt);
      disc_total.backward();
      opt_disc.step();
      d_v = d_loss.item<double>();
      r1_v = r1.item<double>();
    }

    const double inv_b = 1.0 / stage.batch_size;
    if (step % stage.log_every == 0 || step + 1 == stage.iterations) {
      train_log.log(step, {{"loss", total.item<double>()},
                           {"rec", rec_v * inv_b},
                           {"ada", ada_v * inv_b},
                           {"adv", adv_v * inv_b},
                           {"d", d_v},
                           {"r1", r1_v},
                           {"alpha_c", dist.curriculum}});
      std::cout << "[stage3] step " << step << " loss " << total.item<double>() << " alpha_c "
                << dist.curriculum << "\n";
    }
    if ((step + 1) % stage.eval_every == 0 || step + 1 == stage.iterations) {
      torch::NoGradGuard guard;
      double mse = 0;
      for (std::size_t i = 0; i < eval_pairs.size(); ++i) {
        auto w = eval_latents.index({static_cast<std::int64_t>(i)}).unsqueeze(0);
        auto img1 = gen->render(w, eval_pairs[i].first, settings).image_hi.squeeze(0);
        auto img2 = gen->render(w, eval_pairs[i].second, settings).image_hi.squeeze(0);
        auto pred = hybrid_forward(img1, eval_pairs[i].first, eval_pairs[i].second, nullptr);
        mse += tensor_mse(pred.image_hi.squeeze(0), img2);
      }
      eval_log.log(step + 1, {{"holdout_novel_mse", mse / eval_pairs.size()}});
    }
    if ((step + 1) % stage.checkpoint_every == 0 || step + 1 == stage.iterations) {
      save_stage3_checkpoint(ckpt_path, e_l, ada, inner, outer, disc, step + 1);
      last_ckpt = ckpt_path;
    }
  }

  if (parameter_fingerprint(*gen) != gen_fingerprint) {
    throw TrainingError("stage 3: generator parameters changed despite freeze contract");
  }
  if (parameter_fingerprint(*e_g) != e_g_fingerprint) {
    throw TrainingError("stage 3: global encoder changed despite freeze contract");
  }

  pipeline.set_stage3(e_l, ada, inner, outer);
  StageResult result;
  result.checkpoint = ckpt_path;
  result.metrics_csv = out_dir / "stage3_metrics.csv";
  return result;
}

Stage1Holdout evaluate_holdout_stage1(Pipeline& pipeline, const DatasetCache& cache,
                                      int max_samples) {
  pipeline.require_stage1();
  auto gen = pipeline.generator();
  auto e_g = pipeline.global_encoder();
  auto idx = cache.holdout_indices();
  if (max_samples > 0 && static_cast<int>(idx.size()) > max_samples) {
    idx.resize(static_cast<std::size_t>(max_samples));
  }
  if (idx.empty()) {
    throw std::invalid_argument("evaluate_holdout_stage1: no holdout samples in cache");
  }
  torch::NoGradGuard guard;
  RenderSettings settings;
  settings.stratified = false;
  Stage1Holdout out;
  for (auto i : idx) {
    auto rec = cache.load(i);
    auto codes = e_g->forward(rec.image_hi.unsqueeze(0));
    out.code_loss += code_loss(codes, gen->expand_codes(rec.latent.unsqueeze(0))).item<double>();
    auto render = gen->render(codes, rec.pose, settings);
    out.mse_hi += tensor_mse(render.image_hi.squeeze(0), rec.image_hi);
  }
  out.code_loss /= static_cast<double>(idx.size());
  out.mse_hi /= static_cast<double>(idx.size());
  return out;
}

double holdout_source_mse(Pipeline& pipeline, const DatasetCache& cache, const std::string& mode,
                          int max_samples) {
  auto idx = cache.holdout_indices();
  if (max_samples > 0 && static_cast<int>(idx.size()) > max_samples) {
    idx.resize(static_cast<std::size_t>(max_samples));
  }
  if (idx.empty()) {
    throw std::invalid_argument("holdout_source_mse: no holdout samples in cache");
  }
  torch::NoGradGuard guard;
  double mse = 0;
  for (auto i : idx) {
    auto rec = cache.load(i);
    torch::Tensor pred;
    if (mode == "global") {
      pred = pipeline.reconstruct_global(rec.image_hi, rec.pose, rec.pose).image_hi;
    } else if (mode == "local") {
      pred = pipeline.reconstruct_local(rec.image_hi, rec.pose, rec.pose).image_hi;
    } else if (mode == "hybrid") {
      pred = pipeline.reconstruct_hybrid(rec.image_hi, rec.pose, rec.pose).image_hi;
    } else {
      throw std::invalid_argument("holdout_source_mse: unknown mode " + mode);
    }
    mse += tensor_mse(pred.squeeze(0), rec.image_hi);
  }
  return mse / static_cast<double>(idx.size());
}

}  // namespace inv3d
