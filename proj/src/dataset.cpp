// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/dataset.hpp"

#include <fstream>

#include "inv3d/checkpoint.hpp"
#include "inv3d/image_io.hpp"

namespace inv3d {
namespace {

using torch::indexing::Slice;

std::uint64_t fnv_hash(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Cache identity depends on everything that changes its contents.
std::string cache_config_hash(const RunConfig& cfg) {
  nlohmann::json j;
  auto full = cfg.to_json();
  j["scene"] = full["scene"];
  j["generator"] = full["generator"];
  j["pose"] = full["pose"];
  j["data"] = full["data"];
  j["seed"] = cfg.seed;
  std::ostringstream os;
  os << std::hex << fnv_hash(j.dump());
  return os.str();
}

torch::Tensor pose_tensor(const CameraPose& p) {
  return torch::tensor({p.azimuth, p.elevation, p.fov, p.radius}, f64());
}

CameraPose pose_from_tensor(const torch::Tensor& t) {
  CameraPose p;
  p.azimuth = t[0].item<double>();
  p.elevation = t[1].item<double>();
  p.fov = t[2].item<double>();
  p.radius = t[3].item<double>();
  return p;
}

}  // namespace

PoseDistribution PoseDistribution::from(const PoseConfig& cfg, double curriculum) {
  PoseDistribution d;
  d.mean_azimuth = cfg.mean_azimuth;
  d.mean_elevation = cfg.mean_elevation;
  d.std_azimuth = cfg.std_azimuth;
  d.std_elevation = cfg.std_elevation;
  d.min_elevation = cfg.min_elevation;
  d.max_elevation = cfg.max_elevation;
  d.curriculum = curriculum;
  return d;
}

CameraPose sample_pose(const PoseDistribution& dist, const SceneConfig& scene, Rng& rng) {
  if (dist.curriculum < 0.0 || dist.std_azimuth < 0.0 || dist.std_elevation < 0.0) {
    throw std::invalid_argument("sample_pose: negative std or curriculum weight");
  }
  CameraPose pose;
  pose.fov = scene.fov;
  pose.radius = scene.camera_radius;
  const double scale = dist.curriculum;
  pose.azimuth =
      dist.mean_azimuth + rng.normal({1}).item<double>() * dist.std_azimuth * scale;
  const double el =
      dist.mean_elevation + rng.normal({1}).item<double>() * dist.std_elevation * scale;
  pose.elevation = std::clamp(el, dist.min_elevation, dist.max_elevation);
  return pose;
}

SurfacePoints surface_points_from_render(const RenderResult& render, double empty_threshold) {
  torch::NoGradGuard guard;
  if (render.depth.size(0) != 1) {
    throw std::invalid_argument("surface_points_from_render: expected batch of one");
  }
  auto ws = render.weight_sum.reshape({-1});
  auto mask = ws >= empty_threshold;
  auto origins = render.origins.reshape({-1, 3});
  auto dirs = render.directions.reshape({-1, 3});
  auto t_s = render.raw_depth.reshape({-1, 1});
  auto pts = origins + t_s * dirs;

  SurfacePoints out;
  out.points = pts.index({mask});
  out.ray_mask = mask;
  out.n_dropped = ws.size(0) - out.points.size(0);
  return out;
}

SurfacePoints extract_surface_points(Generator& gen, const torch::Tensor& w_codes,
                                     const CameraPose& pose, int n_samples) {
  torch::NoGradGuard guard;
  RenderSettings settings;
  settings.n_samples = n_samples;
  settings.stratified = false;  // deterministic midpoints for extraction
  settings.with_hi = false;
  auto render = gen->render(w_codes, pose, settings);
  return surface_points_from_render(render, gen->scene.empty_ray_threshold);
}

FreePointCounts free_point_counts(std::int64_t nominal_surface_count) {
  if (nominal_surface_count < 1) {
    throw std::invalid_argument("free_point_counts: need at least one surface point");
  }
  return {nominal_surface_count, nominal_surface_count / 2};
}

torch::Tensor sample_free_points(const torch::Tensor& surface_points, double scene_radius,
                                 const FreePointCounts& counts, Rng& rng) {
  if (surface_points.dim() != 2 || surface_points.size(0) == 0) {
    throw std::invalid_argument("sample_free_points: surface point set is empty");
  }
  if (scene_radius < 0.0) {
    throw std::invalid_argument("sample_free_points: negative scene radius");
  }
  torch::NoGradGuard guard;
  torch::Tensor base;
  if (surface_points.size(0) == counts.gaussian) {
    base = surface_points;
  } else {
    auto idx = torch::randint(surface_points.size(0), {counts.gaussian}, rng.gen(),
                              torch::dtype(torch::kInt64));
    base = surface_points.index({idx});
  }
  auto jittered = base + rng.normal({counts.gaussian, 3}, 0.0, scene_radius / 4.0);
  auto uniform = rng.uniform({counts.uniform, 3}, -scene_radius, scene_radius);
  return torch::cat({jittered, uniform}, 0);
}

ShapeDescriptor compute_descriptor_fn(const SdfFn& sdf, const torch::Tensor& points_on,
                                      const torch::Tensor& points_free) {
  if (!points_on.isfinite().all().item<bool>() || !points_free.isfinite().all().item<bool>()) {
    throw std::invalid_argument("compute_descriptor: non-finite points");
  }
  ShapeDescriptor out;
  out.points_on = points_on.detach();
  out.points_free = points_free.detach();

  torch::AutoGradMode enable_grad(true);  // normals need a graph even under no-grad callers
  auto pts = points_on.detach().clone().requires_grad_(true);
  auto d = sdf(pts);
  auto grads = torch::autograd::grad({d.sum()}, {pts});
  auto g = grads[0];
  auto norms = g.norm(2, -1, true);
  out.normals_valid = (norms.squeeze(-1) > 1e-12);
  auto safe = torch::where(norms > 1e-12, norms, torch::ones_like(norms));
  out.normals_on = (g / safe).detach();

  torch::NoGradGuard guard;
  out.sdf_free = sdf(points_free).detach();
  return out;
}

ShapeDescriptor compute_descriptor(Generator& gen, const torch::Tensor& w,
                                   const torch::Tensor& points_on,
                                   const torch::Tensor& points_free) {
  auto codes = gen->expand_codes(w);
  auto fn = [&](const torch::Tensor& pts) {
    return gen->sdf(codes, pts.unsqueeze(0)).squeeze(0);
  };
  return compute_descriptor_fn(fn, points_on, points_free);
}

torch::Tensor filter_visible(const torch::Tensor& points, const CameraPose& pose,
                             const torch::Tensor& depth_map, const torch::Tensor& weight_sum,
                             double tolerance, double empty_threshold) {
  torch::NoGradGuard guard;
  if (depth_map.dim() != 2 || weight_sum.sizes() != depth_map.sizes()) {
    throw std::invalid_argument("filter_visible: depth/weight maps must be [H,W]");
  }
  const auto h = depth_map.size(0);
  const auto w = depth_map.size(1);

  auto proj = project_to_image(points, pose);
  auto inside = proj.valid & (proj.ndc.abs().amax(-1) <= 1.0);

  // Nearest pixel under the align-corners-false convention.
  auto col = (((proj.ndc.select(-1, 0) + 1.0) * 0.5 * w) - 0.5).round().clamp(0, w - 1).to(torch::kInt64);
  auto row = (((proj.ndc.select(-1, 1) + 1.0) * 0.5 * h) - 0.5).round().clamp(0, h - 1).to(torch::kInt64);
  auto flat = row * w + col;
  auto depth_at = depth_map.reshape({-1}).index({flat});
  auto ws_at = weight_sum.reshape({-1}).index({flat});

  auto eye = camera_position(pose);
  auto t_point = (points - eye).norm(2, -1);

  auto occupied = ws_at >= empty_threshold;
  auto in_front = t_point <= depth_at + tolerance;
  // Empty rays occlude nothing.
  return inside & (in_front | ~occupied);
}

DatasetCache DatasetCache::build(const RunConfig& cfg, Generator& gen,
                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  Rng root(cfg.seed);
  Rng latent_rng = root.fork(101);
  Rng pose_rng = root.fork(102);
  Rng point_rng = root.fork(103);
  Rng traj_rng = root.fork(104);

  const auto dist = PoseDistribution::from(cfg.pose);
  const double tau = cfg.eval.visibility_tolerance * cfg.scene.radius;
  const int h0 = gen->cfg.image_size_lo;

  nlohmann::json index;
  index["version"] = kCacheVersion;
  index["config_hash"] = cache_config_hash(cfg);
  index["seed"] = cfg.seed;
  auto records = nlohmann::json::array();

  const int total = cfg.data.n_identities + cfg.data.holdout_identities;
  int file_no = 0;
  for (int id = 0; id < total; ++id) {
    const bool holdout = id >= cfg.data.n_identities;
    auto w = gen->sample_latent(1, latent_rng);  // [1, D]
    for (int view = 0; view < cfg.data.views_per_identity; ++view) {
      auto pose = sample_pose(dist, cfg.scene, pose_rng);

      RenderResult render;
      SurfacePoints surf;
      torch::Tensor free_pts;
      {
        torch::NoGradGuard guard;
        RenderSettings settings;
        settings.stratified = false;
        render = gen->render(w, pose, settings);
        surf = surface_points_from_render(render, cfg.scene.empty_ray_threshold);
        const std::int64_t nominal = static_cast<std::int64_t>(h0) * h0;
        free_pts = sample_free_points(surf.points, cfg.scene.radius, free_point_counts(nominal),
                                      point_rng);
      }
      auto desc = compute_descriptor(*&gen, w, surf.points, free_pts);
      torch::NoGradGuard guard;

      auto depth2d = render.depth.squeeze(0);
      auto ws2d = render.weight_sum.squeeze(0);
      auto vis_on = filter_visible(desc.points_on, pose, depth2d, ws2d, tau,
                                   cfg.scene.empty_ray_threshold);
      auto vis_free = filter_visible(desc.points_free, pose, depth2d, ws2d, tau,
                                     cfg.scene.empty_ray_threshold);

      TensorStore store;
      store.meta["identity"] = id;
      store.meta["view"] = view;
      store.meta["holdout"] = holdout;
      store.meta["n_dropped"] = surf.n_dropped;
      store.put("latent", w.squeeze(0));
      store.put("pose", pose_tensor(pose));
      store.put("image_lo", render.image_lo.squeeze(0));
      store.put("image_hi", render.image_hi.squeeze(0));
      store.put("depth", depth2d);
      store.put("points_on", desc.points_on);
      store.put("normals_on", desc.normals_on);
      store.put("normals_valid", desc.normals_valid);
      store.put("points_free", desc.points_free);
      store.put("sdf_free", desc.sdf_free);
      store.put("visible_on", vis_on);
      store.put("visible_free", vis_free);

      char name[64];
      std::snprintf(name, sizeof(name), "record_%05d.bin", file_no++);
      save_store(dir / name, store);
      records.push_back({{"file", name}, {"identity", id}, {"view", view}, {"holdout", holdout}});
    }
  }
  index["records"] = records;

  auto trajectories = nlohmann::json::array();
  for (int k = 0; k < cfg.data.n_trajectories; ++k) {
    auto w = gen->sample_latent(1, traj_rng);
    const std::string tdir = "trajectory_" + std::to_string(k);
    std::filesystem::create_directories(dir / tdir);

    nlohmann::json tj;
    tj["dir"] = tdir;
    tj["frames"] = cfg.data.trajectory_frames;
    auto poses_json = nlohmann::json::array();

    std::ofstream csv(dir / tdir / "poses.csv");
    csv << "frame,azimuth,elevation\n";
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
      RenderSettings settings;
      settings.stratified = false;
      auto render = gen->render(w, pose, settings);
      char fname[64];
      std::snprintf(fname, sizeof(fname), "frame_%03d.png", f);
      write_png(dir / tdir / fname, render.image_hi.squeeze(0));

      char line[128];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", f, pose.azimuth, pose.elevation);
      csv << line;
      poses_json.push_back({pose.azimuth, pose.elevation, pose.fov, pose.radius});
    }
    tj["poses"] = poses_json;
    trajectories.push_back(tj);
  }
  index["trajectories"] = trajectories;

  {
    std::ofstream out(dir / "index.json");
    out << index.dump(2) << "\n";
  }

  DatasetCache cache;
  cache.dir_ = dir;
  cache.index_ = index;
  cache.parse_index();
  return cache;
}

DatasetCache DatasetCache::open_or_build(const RunConfig& cfg, Generator& gen,
                                         const std::filesystem::path& dir) {
  const auto index_file = dir / "index.json";
  if (std::filesystem::exists(index_file)) {
    try {
      auto cache = open(dir);
      if (cache.index_.value("version", -1) == kCacheVersion &&
          cache.index_.value("config_hash", "") == cache_config_hash(cfg)) {
        return cache;
      }
    } catch (const std::exception&) {
      // fall through to rebuild
    }
  }
  return build(cfg, gen, dir);
}

DatasetCache DatasetCache::open(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) {
    throw CheckpointError("dataset cache index not found in " + dir.string());
  }
  DatasetCache cache;
  cache.dir_ = dir;
  try {
    in >> cache.index_;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt cache index: ") + e.what());
  }
  if (cache.index_.value("version", -1) != kCacheVersion) {
    throw CheckpointError("cache version mismatch in " + dir.string());
  }
  cache.parse_index();
  return cache;
}

void DatasetCache::parse_index() {
  records_.clear();
  for (const auto& r : index_.at("records")) {
    records_.push_back({r.at("file").get<std::string>(), r.at("holdout").get<bool>()});
  }
  trajectories_.clear();
  for (const auto& t : index_.value("trajectories", nlohmann::json::array())) {
    TrajectoryMeta meta;
    meta.dir = t.at("dir").get<std::string>();
    meta.frames = t.at("frames").get<int>();
    for (const auto& p : t.at("poses")) {
      CameraPose pose;
      pose.azimuth = p[0].get<double>();
      pose.elevation = p[1].get<double>();
      if (p.size() > 3) {
        pose.fov = p[2].get<double>();
        pose.radius = p[3].get<double>();
      }
      meta.poses.push_back(pose);
    }
    trajectories_.push_back(std::move(meta));
  }
}

std::int64_t DatasetCache::train_size() const {
  return static_cast<std::int64_t>(train_indices().size());
}

std::vector<std::int64_t> DatasetCache::train_indices() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!records_[i].holdout) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

std::vector<std::int64_t> DatasetCache::holdout_indices() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].holdout) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

SampleRecord DatasetCache::load(std::int64_t index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("DatasetCache::load: index out of range");
  }
  auto store = load_store(dir_ / records_[static_cast<std::size_t>(index)].file);
  SampleRecord rec;
  rec.identity = store.meta.value("identity", 0);
  rec.view = store.meta.value("view", 0);
  rec.holdout = store.meta.value("holdout", false);
  rec.n_dropped = store.meta.value("n_dropped", 0);
  rec.latent = store.at("latent");
  rec.pose = pose_from_tensor(store.at("pose"));
  rec.image_lo = store.at("image_lo");
  rec.image_hi = store.at("image_hi");
  rec.depth = store.at("depth");
  rec.shape.points_on = store.at("points_on");
  rec.shape.normals_on = store.at("normals_on");
  rec.shape.normals_valid = store.at("normals_valid");
  rec.shape.points_free = store.at("points_free");
  rec.shape.sdf_free = store.at("sdf_free");
  rec.visible_on = store.at("visible_on");
  rec.visible_free = store.at("visible_free");
  return rec;
}

torch::Tensor DatasetCache::trajectory_frame(const TrajectoryMeta& meta, int frame) const {
  char fname[64];
  std::snprintf(fname, sizeof(fname), "frame_%03d.png", frame);
  return read_png(dir_ / meta.dir / fname);
}

}  // namespace inv3d
