// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the self-supervised SDF-GAN inversion pipeline.
// Every subcommand resolves a config (defaults <- --config file <- --set
// overrides), echoes it into a run directory named by the config hash, and
// reads/writes artifacts only inside that directory.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "inv3d/checkpoint.hpp"
#include "inv3d/common.hpp"
#include "inv3d/config.hpp"
#include "inv3d/dataset.hpp"
#include "inv3d/editing.hpp"
#include "inv3d/evaluation.hpp"
#include "inv3d/image_io.hpp"
#include "inv3d/pipeline.hpp"
#include "inv3d/plots.hpp"
#include "inv3d/training.hpp"

namespace {

using namespace inv3d;
namespace fs = std::filesystem;

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

RunConfig resolve_config(const GlobalOptions& opts) {
  RunConfig cfg;
  if (!opts.config_file.empty()) {
    cfg = RunConfig::load(opts.config_file);
  } else if (const char* env = std::getenv("INV3D_CONFIG"); env != nullptr && *env != '\0') {
    cfg = RunConfig::load(env);
  }
  for (const auto& assignment : opts.overrides) {
    cfg.apply_override(assignment);
  }
  if (opts.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(opts.seed);
  }
  return cfg;
}

fs::path prepare_run_dir(const RunConfig& cfg) {
  fs::path run_dir = fs::path(cfg.out_dir) / cfg.hash();
  fs::create_directories(run_dir);
  std::ofstream out(run_dir / "config.json");
  out << cfg.to_json().dump(2) << "\n";
  return run_dir;
}

fs::path cache_dir_for(const RunConfig& cfg, const fs::path& run_dir) {
  return cfg.data.cache_dir.empty() ? run_dir / "cache" : fs::path(cfg.data.cache_dir);
}

CameraPose parse_pose(const std::string& text, const RunConfig& cfg) {
  CameraPose pose;
  pose.fov = cfg.scene.fov;
  pose.radius = cfg.scene.camera_radius;
  pose.azimuth = cfg.pose.mean_azimuth;
  pose.elevation = cfg.pose.mean_elevation;
  if (text.empty()) {
    return pose;
  }
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw std::invalid_argument("--pose expects az,el (radians), got: " + text);
  }
  pose.azimuth = std::stod(text.substr(0, comma));
  pose.elevation = std::stod(text.substr(comma + 1));
  return pose;
}

Pipeline load_pipeline(const RunConfig& cfg, const fs::path& run_dir, int up_to_stage) {
  Pipeline pipeline(cfg);
  pipeline.load_generator(run_dir / "generator.ckpt");
  if (up_to_stage >= 1) pipeline.load_stage1(run_dir / "stage1.ckpt");
  if (up_to_stage >= 2) pipeline.load_stage2(run_dir / "stage2.ckpt");
  if (up_to_stage >= 3) pipeline.load_stage3(run_dir / "stage3.ckpt");
  return pipeline;
}

int stage_for_mode(const std::string& mode) {
  if (mode == "global") return 1;
  if (mode == "local") return 2;
  if (mode == "hybrid") return 3;
  throw std::invalid_argument("unknown mode '" + mode + "' (expected global|local|hybrid)");
}

int cmd_pretrain_gan(const RunConfig& cfg, const fs::path& run_dir) {
  auto gen = make_generator(cfg.generator, cfg.scene, cfg.seed);
  auto disc = make_discriminator(cfg.generator, cfg.seed);
  const auto path = run_dir / "generator.ckpt";
  save_generator_checkpoint(path, gen, disc, 0);

  // A sample sheet makes the frozen toy distribution easy to eyeball.
  Rng rng(cfg.seed + 7);
  auto w = gen->sample_latent(8, rng);
  std::vector<torch::Tensor> tiles;
  RenderSettings settings;
  settings.stratified = false;
  for (int i = 0; i < 8; ++i) {
    CameraPose pose;
    pose.fov = cfg.scene.fov;
    pose.radius = cfg.scene.camera_radius;
    pose.azimuth = cfg.pose.mean_azimuth;
    pose.elevation = cfg.pose.mean_elevation;
    torch::NoGradGuard guard;
    tiles.push_back(gen->render(w.index({i}).unsqueeze(0), pose, settings).image_hi.squeeze(0));
  }
  write_png(run_dir / "generator_samples.png", make_grid(tiles, 4));
  std::cout << "generator checkpoint: " << path.string() << "\n";
  return 0;
}

int cmd_build_data(const RunConfig& cfg, const fs::path& run_dir) {
  Pipeline pipeline(cfg);
  pipeline.load_generator(run_dir / "generator.ckpt");
  auto gen = pipeline.generator();
  auto cache = DatasetCache::open_or_build(pipeline.config(), gen, cache_dir_for(cfg, run_dir));
  std::cout << "dataset cache: " << cache.dir().string() << " (" << cache.size() << " samples, "
            << cache.trajectories().size() << " trajectories)\n";
  return 0;
}

int cmd_train_stage(const RunConfig& cfg, const fs::path& run_dir, int stage_no,
                    const std::string& resume) {
  Pipeline pipeline = load_pipeline(cfg, run_dir, stage_no - 1);
  auto gen = pipeline.generator();
  auto cache = DatasetCache::open_or_build(pipeline.config(), gen, cache_dir_for(cfg, run_dir));
  StageResult result;
  if (stage_no == 1) {
    result = train_stage1(pipeline, cache, cfg.stage1, run_dir, resume);
  } else if (stage_no == 2) {
    result = train_stage2(pipeline, cache, cfg.stage2, run_dir);
  } else {
    result = train_stage3(pipeline, cache, cfg.stage3, run_dir);
  }
  std::cout << "stage " << stage_no << " checkpoint: " << result.checkpoint.string() << "\n";
  for (const auto& [k, v] : result.final_metrics) {
    std::cout << "  " << k << " = " << v << "\n";
  }
  return 0;
}

int cmd_invert(const RunConfig& cfg, const fs::path& run_dir, const std::string& image_path,
               const std::string& pose_text, const std::string& mode) {
  Pipeline pipeline = load_pipeline(cfg, run_dir, stage_for_mode(mode));
  auto image = read_png(image_path);
  auto pose = parse_pose(pose_text, cfg);

  torch::NoGradGuard guard;
  auto codes = pipeline.invert(image);
  RenderResult recon;
  if (mode == "global") {
    recon = pipeline.reconstruct_global(image, pose, pose);
  } else if (mode == "local") {
    recon = pipeline.reconstruct_local(image, pose, pose);
  } else {
    recon = pipeline.reconstruct_hybrid(image, pose, pose);
  }

  const auto stem = fs::path(image_path).stem().string();
  const auto out_png = run_dir / "invert" / (stem + "_" + mode + ".png");
  write_png(out_png, recon.image_hi.squeeze(0));

  TensorStore store;
  store.meta["kind"] = "latent";
  store.meta["mode"] = mode;
  store.put("codes", codes);
  save_store(run_dir / "invert" / (stem + "_codes.bin"), store);

  const double mse = (recon.image_hi.squeeze(0) - image).pow(2).mean().item<double>();
  std::cout << "reconstruction: " << out_png.string() << " (mse " << mse << ")\n";
  return 0;
}

int cmd_edit(const RunConfig& cfg, const fs::path& run_dir, const std::string& image_path,
             const std::string& edit_spec, const std::string& pose_text,
             const std::string& query_text) {
  const auto colon = edit_spec.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("--edit expects name:strength, got: " + edit_spec);
  }
  const std::string name = edit_spec.substr(0, colon);
  const double strength = std::stod(edit_spec.substr(colon + 1));

  Pipeline pipeline = load_pipeline(cfg, run_dir, 3);
  auto gen = pipeline.generator();

  const auto catalog_path = run_dir / "directions.json";
  DirectionCatalog catalog;
  if (fs::exists(catalog_path)) {
    catalog = DirectionCatalog::load(catalog_path);
  }
  if (!catalog.contains(name)) {
    std::cout << "direction '" << name << "' not in catalog, searching (luminance oracle)...\n";
    CameraPose frontal = parse_pose("", cfg);
    Rng rng(cfg.seed + 4001);
    auto dir = search_direction(gen, cfg.editing.n_samples, luminance_oracle(gen, frontal), name,
                                cfg.editing, rng);
    catalog.directions[name] = dir;
    catalog.save(catalog_path);
  }
  const auto& direction = catalog.directions.at(name);

  auto image = read_png(image_path);
  auto pose = parse_pose(pose_text, cfg);
  auto query = query_text.empty() ? pose : parse_pose(query_text, cfg);

  torch::NoGradGuard guard;
  auto edited = pipeline.editing_forward(image, pose, direction, strength, query);
  const auto stem = fs::path(image_path).stem().string();
  char suffix[64];
  std::snprintf(suffix, sizeof(suffix), "_%s_%+.2f.png", name.c_str(), strength);
  const auto out_png = run_dir / "edit" / (stem + suffix);
  write_png(out_png, edited.image_hi.squeeze(0));
  std::cout << "edited image: " << out_png.string() << "\n";
  return 0;
}

int cmd_render_trajectory(const RunConfig& cfg, const fs::path& run_dir, std::int64_t latent_seed) {
  Pipeline pipeline(cfg);
  pipeline.load_generator(run_dir / "generator.ckpt");
  auto gen = pipeline.generator();
  Rng rng(latent_seed >= 0 ? static_cast<std::uint64_t>(latent_seed) : cfg.seed + 17);
  auto w = gen->sample_latent(1, rng);

  const auto out_dir = run_dir / "trajectory_demo";
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "poses.csv");
  csv << "frame,azimuth,elevation\n";
  RenderSettings settings;
  settings.stratified = false;
  for (int f = 0; f < cfg.data.trajectory_frames; ++f) {
    const double phase = 2.0 * M_PI * f / cfg.data.trajectory_frames;
    CameraPose pose;
    pose.fov = cfg.scene.fov;
    pose.radius = cfg.scene.camera_radius;
    pose.azimuth = cfg.pose.mean_azimuth + cfg.data.trajectory_azimuth_amp * std::sin(phase);
    pose.elevation =
        std::clamp(cfg.pose.mean_elevation + cfg.data.trajectory_elevation_amp * std::cos(phase),
                   cfg.pose.min_elevation, cfg.pose.max_elevation);
    torch::NoGradGuard guard;
    auto render = gen->render(w, pose, settings);
    char fname[64];
    std::snprintf(fname, sizeof(fname), "frame_%03d.png", f);
    write_png(out_dir / fname, render.image_hi.squeeze(0));
    char line[128];
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", f, pose.azimuth, pose.elevation);
    csv << line;
  }
  std::cout << "trajectory: " << out_dir.string() << " (" << cfg.data.trajectory_frames
            << " frames)\n";
  return 0;
}

int cmd_eval_2d(const RunConfig& cfg, const fs::path& run_dir, const std::string& mode) {
  Pipeline pipeline = load_pipeline(cfg, run_dir, stage_for_mode(mode));
  auto gen = pipeline.generator();
  auto cache = DatasetCache::open_or_build(pipeline.config(), gen, cache_dir_for(cfg, run_dir));

  Rng rng(cfg.seed + 5001);
  auto model = trajectory_model_for(pipeline, mode);
  const auto rows_csv = run_dir / ("eval2d_" + mode + "_rows.csv");
  auto report = evaluate_trajectory(cache, model, rng, rows_csv);

  write_metric_rows_csv(run_dir / ("eval2d_" + mode + "_aggregates.csv"),
                        {{"source_mean", report.source.mean},
                         {"source_std", report.source.stddev},
                         {"novel_mean", report.novel.mean},
                         {"novel_std", report.novel.stddev}});
  std::cout << "eval-2d (" << mode << "): source mae " << report.source.mean.mae << ", novel mae "
            << report.novel.mean.mae << " over " << report.novel.count << " novel rows -> "
            << rows_csv.string() << "\n";
  return 0;
}

int cmd_eval_3d(const RunConfig& cfg, const fs::path& run_dir) {
  Pipeline pipeline = load_pipeline(cfg, run_dir, 1);
  auto gen = pipeline.generator();
  auto cache = DatasetCache::open_or_build(pipeline.config(), gen, cache_dir_for(cfg, run_dir));

  std::vector<torch::Tensor> latents;
  int last_identity = -1;
  for (auto i : cache.holdout_indices()) {
    auto rec = cache.load(i);
    if (rec.identity != last_identity) {
      latents.push_back(rec.latent);
      last_identity = rec.identity;
    }
    if (static_cast<int>(latents.size()) >= cfg.eval.geometry_identities) break;
  }
  if (latents.empty()) {
    throw std::runtime_error("eval-3d: no holdout identities in the cache");
  }

  CameraPose frontal = parse_pose("", cfg);
  auto report = evaluate_geometry(pipeline, latents, frontal, cfg.eval.surface_samples,
                                  run_dir / "eval3d_rows.csv");
  std::cout << "eval-3d: median " << report.median << ", mean " << report.mean << ", std "
            << report.stddev << " over " << report.rows.size() << " identities -> "
            << (run_dir / "eval3d_rows.csv").string() << "\n";
  return 0;
}

int cmd_export_mesh(const RunConfig& cfg, const fs::path& run_dir, std::int64_t latent_seed,
                    const std::string& image_path, const std::string& pose_text) {
  Pipeline pipeline =
      load_pipeline(cfg, run_dir, image_path.empty() ? 0 : 1);
  auto gen = pipeline.generator();

  torch::Tensor codes;
  std::string stem;
  if (!image_path.empty()) {
    auto image = read_png(image_path);
    (void)parse_pose(pose_text, cfg);
    torch::NoGradGuard guard;
    codes = pipeline.invert(image);
    stem = fs::path(image_path).stem().string();
  } else {
    Rng rng(latent_seed >= 0 ? static_cast<std::uint64_t>(latent_seed) : cfg.seed + 19);
    codes = gen->sample_latent(1, rng).squeeze(0);
    stem = "latent_" + std::to_string(latent_seed >= 0 ? latent_seed
                                                       : static_cast<std::int64_t>(cfg.seed + 19));
  }

  auto mesh = export_mesh(gen, codes, cfg.eval.mesh_resolution, cfg.eval.mesh_extent);
  const auto out = run_dir / "meshes" / (stem + ".obj");
  write_obj(out, mesh);
  std::cout << "mesh: " << out.string() << " (" << mesh.vertices.size(0) << " vertices, "
            << mesh.faces.size(0) << " faces)\n";
  return 0;
}

int cmd_plot(const fs::path& run_dir) {
  auto figures = plot_metrics(run_dir);
  for (const auto& f : figures) {
    std::cout << "figure: " << f.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_runtime();
  torch::manual_seed(0);

  CLI::App app{"Self-supervised 3D GAN inversion on a frozen SDF generator"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config_file, "JSON config file (or INV3D_CONFIG env)");
  app.add_option("--set", opts.overrides, "Config override key.path=value (repeatable)");
  app.add_option("--seed", opts.seed, "Override the config seed");

  std::string image_path, pose_text, query_text, mode = "global", edit_spec, resume;
  std::int64_t latent_seed = -1;

  auto* c_pretrain = app.add_subcommand("pretrain-gan", "Create the frozen generator checkpoint");
  auto* c_build = app.add_subcommand("build-data", "Build the 2D-3D sample cache and trajectories");
  auto* c_s1 = app.add_subcommand("train-stage1", "Train the global inversion encoder");
  c_s1->add_option("--resume", resume, "Resume from a stage-1 checkpoint");
  auto* c_s2 = app.add_subcommand("train-stage2", "Train the local encoder + source-view fusion");
  auto* c_s3 = app.add_subcommand("train-stage3", "Train hybrid alignment with novel-view pairs");

  auto* c_invert = app.add_subcommand("invert", "Invert an image and write its reconstruction");
  c_invert->add_option("image", image_path, "Input PNG")->required();
  c_invert->add_option("--pose", pose_text, "Source pose az,el (radians)");
  c_invert->add_option("--mode", mode, "global|local|hybrid");

  auto* c_edit = app.add_subcommand("edit", "Apply a latent edit and re-render");
  c_edit->add_option("image", image_path, "Input PNG")->required();
  c_edit->add_option("--edit", edit_spec, "Direction name:strength")->required();
  c_edit->add_option("--pose", pose_text, "Source pose az,el");
  c_edit->add_option("--query-pose", query_text, "Query pose az,el (default: source)");

  auto* c_traj = app.add_subcommand("render-trajectory", "Render an orbit video for one latent");
  c_traj->add_option("--latent-seed", latent_seed, "Seed for the rendered latent");

  auto* c_e2d = app.add_subcommand("eval-2d", "Trajectory-set source/novel view metrics");
  c_e2d->add_option("--mode", mode, "global|local|hybrid");

  auto* c_e3d = app.add_subcommand("eval-3d", "Keypoint-aligned scan-to-mesh geometry metrics");

  auto* c_mesh = app.add_subcommand("export-mesh", "Extract the SDF zero level set as an OBJ");
  c_mesh->add_option("--latent-seed", latent_seed, "Seed for a sampled latent");
  c_mesh->add_option("--image", image_path, "Invert this PNG instead of sampling");
  c_mesh->add_option("--pose", pose_text, "Pose for inversion");

  auto* c_plot = app.add_subcommand("plot", "Render figures for every CSV in the run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    RunConfig cfg = resolve_config(opts);
    torch::manual_seed(cfg.seed);
    const fs::path run_dir = prepare_run_dir(cfg);

    if (c_pretrain->parsed()) return cmd_pretrain_gan(cfg, run_dir);
    if (c_build->parsed()) return cmd_build_data(cfg, run_dir);
    if (c_s1->parsed()) return cmd_train_stage(cfg, run_dir, 1, resume);
    if (c_s2->parsed()) return cmd_train_stage(cfg, run_dir, 2, "");
    if (c_s3->parsed()) return cmd_train_stage(cfg, run_dir, 3, "");
    if (c_invert->parsed()) return cmd_invert(cfg, run_dir, image_path, pose_text, mode);
    if (c_edit->parsed()) return cmd_edit(cfg, run_dir, image_path, edit_spec, pose_text, query_text);
    if (c_traj->parsed()) return cmd_render_trajectory(cfg, run_dir, latent_seed);
    if (c_e2d->parsed()) return cmd_eval_2d(cfg, run_dir, mode);
    if (c_e3d->parsed()) return cmd_eval_3d(cfg, run_dir);
    if (c_mesh->parsed()) return cmd_export_mesh(cfg, run_dir, latent_seed, image_path, pose_text);
    if (c_plot->parsed()) return cmd_plot(prepare_run_dir(resolve_config(opts)));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
