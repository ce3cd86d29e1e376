// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/evaluation.hpp"

#include <fstream>
#include <iostream>

namespace inv3d {
namespace {

torch::Tensor gaussian_window(int size, double sigma) {
  auto coords = torch::arange(size, f64()) - (size - 1) / 2.0;
  auto g = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

double metric_field(const MetricRow& r, int i) {
  switch (i) {
    case 0: return r.mae;
    case 1: return r.mse;
    case 2: return r.psnr;
    case 3: return r.ssim;
    case 4: return r.perceptual;
    default: return r.similarity;
  }
}

void set_metric_field(MetricRow& r, int i, double v) {
  switch (i) {
    case 0: r.mae = v; break;
    case 1: r.mse = v; break;
    case 2: r.psnr = v; break;
    case 3: r.ssim = v; break;
    case 4: r.perceptual = v; break;
    default: r.similarity = v; break;
  }
}

std::string row_csv(const MetricRow& r) {
  char line[256];
  std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.mae, r.mse, r.psnr, r.ssim,
                r.perceptual, r.similarity);
  return line;
}

}  // namespace

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  namespace F = torch::nn::functional;
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  auto x = (a.dim() == 3 ? a.unsqueeze(0) : a).to(torch::kFloat64);
  auto y = (b.dim() == 3 ? b.unsqueeze(0) : b).to(torch::kFloat64);
  const auto channels = x.size(1);

  auto window = gaussian_window(11, 1.5).reshape({1, 1, 11, 11}).repeat({channels, 1, 1, 1});
  auto conv = [&](const torch::Tensor& t) {
    return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels));
  };

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  auto mu_x = conv(x);
  auto mu_y = conv(y);
  auto sigma_x = conv(x * x) - mu_x * mu_x;
  auto sigma_y = conv(y * y) - mu_y * mu_y;
  auto sigma_xy = conv(x * y) - mu_x * mu_y;
  auto num = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2);
  auto den = (mu_x.pow(2) + mu_y.pow(2) + c1) * (sigma_x + sigma_y + c2);
  return (num / den).mean().item<double>();
}

MetricRow compute_2d_metrics(const torch::Tensor& pred, const torch::Tensor& target,
                             PerceptualProxy& perceptual, SimilarityProxy& similarity) {
  if (pred.sizes() != target.sizes()) {
    throw std::invalid_argument("compute_2d_metrics: shape mismatch");
  }
  torch::NoGradGuard guard;
  auto p = pred.dim() == 3 ? pred.unsqueeze(0) : pred;
  auto t = target.dim() == 3 ? target.unsqueeze(0) : target;

  MetricRow row;
  auto diff = p - t;
  row.mae = diff.abs().mean().item<double>();
  row.mse = diff.pow(2).mean().item<double>();
  row.psnr = row.mse > 0 ? 10.0 * std::log10(1.0 / row.mse) : 99.0;
  row.ssim = ssim(p, t);
  row.perceptual = perceptual->distance(p, t).item<double>();
  row.similarity = similarity->score(p, t).item<double>();
  return row;
}

MetricAggregate aggregate_rows(const std::vector<MetricRow>& rows) {
  MetricAggregate agg;
  agg.count = static_cast<std::int64_t>(rows.size());
  if (rows.empty()) {
    return agg;
  }
  for (int f = 0; f < 6; ++f) {
    double sum = 0;
    for (const auto& r : rows) sum += metric_field(r, f);
    const double mean = sum / rows.size();
    double var = 0;
    for (const auto& r : rows) var += (metric_field(r, f) - mean) * (metric_field(r, f) - mean);
    set_metric_field(agg.mean, f, mean);
    set_metric_field(agg.stddev, f, rows.size() > 1 ? std::sqrt(var / (rows.size() - 1)) : 0.0);
  }
  return agg;
}

TrajectoryReport evaluate_trajectory(const DatasetCache& cache, const TrajectoryModel& model,
                                     Rng& rng, const std::filesystem::path& csv_path) {
  PerceptualProxy perceptual;
  SimilarityProxy similarity;
  TrajectoryReport report;

  std::ofstream csv;
  if (!csv_path.empty()) {
    if (csv_path.has_parent_path()) {
      std::filesystem::create_directories(csv_path.parent_path());
    }
    csv.open(csv_path, std::ios::trunc);
    csv << "trajectory,frame,is_source,mae,mse,psnr,ssim,perceptual,similarity\n";
  }

  int traj_idx = 0;
  for (const auto& meta : cache.trajectories()) {
    const int source = static_cast<int>(rng.randint(meta.frames));
    auto source_image = cache.trajectory_frame(meta, source);
    const auto& source_pose = meta.poses[static_cast<std::size_t>(source)];

    for (int f = 0; f < meta.frames; ++f) {
      auto target = cache.trajectory_frame(meta, f);
      torch::Tensor pred;
      {
        torch::NoGradGuard guard;
        pred = model(source_image, source_pose, meta.poses[static_cast<std::size_t>(f)], f);
      }
      auto row = compute_2d_metrics(pred, target, perceptual, similarity);
      const bool is_source = (f == source);
      (is_source ? report.source_rows : report.novel_rows).push_back(row);
      if (csv.is_open()) {
        csv << traj_idx << "," << f << "," << (is_source ? 1 : 0) << "," << row_csv(row) << "\n";
      }
    }
    ++traj_idx;
  }
  report.source = aggregate_rows(report.source_rows);
  report.novel = aggregate_rows(report.novel_rows);
  return report;
}

TrajectoryModel trajectory_model_for(Pipeline& pipeline, const std::string& mode) {
  if (mode == "global") {
    pipeline.require_stage1();
    return [&pipeline](const torch::Tensor& img, const CameraPose& src, const CameraPose& query,
                       int) { return pipeline.reconstruct_global(img, src, query).image_hi.squeeze(0); };
  }
  if (mode == "local") {
    pipeline.require_stage2();
    return [&pipeline](const torch::Tensor& img, const CameraPose& src, const CameraPose& query,
                       int) { return pipeline.reconstruct_local(img, src, query).image_hi.squeeze(0); };
  }
  if (mode == "hybrid") {
    pipeline.require_stage3();
    return [&pipeline](const torch::Tensor& img, const CameraPose& src, const CameraPose& query,
                       int) { return pipeline.reconstruct_hybrid(img, src, query).image_hi.squeeze(0); };
  }
  throw std::invalid_argument("unknown reconstruction mode: " + mode +
                              " (expected global|local|hybrid)");
}

RigidTransform rigid_align(const torch::Tensor& source, const torch::Tensor& target,
                           bool with_scale) {
  if (source.dim() != 2 || source.size(1) != 3 || source.sizes() != target.sizes()) {
    throw std::invalid_argument("rigid_align: expected matching [K,3] point sets");
  }
  if (source.size(0) < 3) {
    throw std::invalid_argument("rigid_align: need at least 3 correspondences");
  }
  auto src_mean = source.mean(0);
  auto tgt_mean = target.mean(0);
  auto src_c = source - src_mean;
  auto tgt_c = target - tgt_mean;

  auto cov = torch::matmul(tgt_c.t(), src_c) / source.size(0);
  auto [u, s, vh] = torch::linalg_svd(cov, /*full_matrices=*/false, c10::nullopt);

  // Degenerate (collinear) sets leave the second singular value at zero.
  const double smax = s[0].item<double>();
  if (smax <= 0 || s[1].item<double>() / smax < 1e-9) {
    throw std::invalid_argument("rigid_align: degenerate (collinear) keypoints");
  }

  auto d = torch::eye(3, f64());
  if (torch::linalg_det(torch::matmul(u, vh)).item<double>() < 0) {
    d[2][2] = -1.0;  // keep det(R) = +1 (no reflections)
  }
  auto rotation = torch::matmul(u, torch::matmul(d, vh));

  double scale = 1.0;
  if (with_scale) {
    const double var = src_c.pow(2).sum().item<double>() / source.size(0);
    scale = (s * d.diagonal()).sum().item<double>() / var;
  }

  RigidTransform out;
  out.rotation = rotation;
  out.scale = scale;
  out.translation = tgt_mean - scale * torch::matmul(rotation, src_mean);
  return out;
}

torch::Tensor apply_rigid(const torch::Tensor& points, const RigidTransform& transform) {
  return transform.scale * torch::matmul(points, transform.rotation.t()) + transform.translation;
}

DistanceStats point_to_surface_distance(const torch::Tensor& predicted,
                                        const torch::Tensor& ground_truth) {
  if (predicted.size(0) == 0 || ground_truth.size(0) == 0) {
    throw std::invalid_argument("point_to_surface_distance: empty point set");
  }
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> mins;
  constexpr std::int64_t chunk = 2048;
  for (std::int64_t start = 0; start < ground_truth.size(0); start += chunk) {
    auto rows = ground_truth.slice(0, start, std::min(start + chunk, ground_truth.size(0)));
    auto d = torch::cdist(rows, predicted);
    mins.push_back(std::get<0>(d.min(1)));
  }
  DistanceStats stats;
  stats.distances = torch::cat(mins);
  stats.median = stats.distances.median().item<double>();
  stats.mean = stats.distances.mean().item<double>();
  stats.stddev = stats.distances.numel() > 1 ? stats.distances.std().item<double>() : 0.0;
  return stats;
}

torch::Tensor surface_points_along_rays(const SdfFn& sdf, const torch::Tensor& directions,
                                        double r_max) {
  torch::NoGradGuard guard;
  const auto k = directions.size(0);
  auto dirs = directions / directions.norm(2, -1, true);

  constexpr int coarse_steps = 96;
  auto radii = torch::linspace(0.0, r_max, coarse_steps, f64());
  auto pts = dirs.unsqueeze(1) * radii.reshape({1, coarse_steps, 1});  // [K, S, 3]
  auto vals = sdf(pts.reshape({-1, 3})).reshape({k, coarse_steps});

  // First sign change along each ray, then bisection.
  auto lo = torch::zeros({k}, f64());
  auto hi = torch::full({k}, r_max, f64());
  auto found = torch::zeros({k}, torch::kBool);
  auto vals_a = vals.accessor<double, 2>();
  auto lo_a = lo.accessor<double, 1>();
  auto hi_a = hi.accessor<double, 1>();
  auto found_a = found.accessor<bool, 1>();
  auto radii_a = radii.accessor<double, 1>();
  for (std::int64_t r = 0; r < k; ++r) {
    for (int s = 0; s + 1 < coarse_steps; ++s) {
      if (vals_a[r][s] < 0.0 && vals_a[r][s + 1] >= 0.0) {
        lo_a[r] = radii_a[s];
        hi_a[r] = radii_a[s + 1];
        found_a[r] = true;
        break;
      }
    }
  }
  if (!found.all().item<bool>()) {
    throw std::runtime_error("surface_points_along_rays: some rays never cross the surface");
  }
  for (int iter = 0; iter < 48; ++iter) {
    auto mid = 0.5 * (lo + hi);
    auto v = sdf(dirs * mid.unsqueeze(-1)).squeeze(-1);
    auto inside = v < 0.0;
    lo = torch::where(inside, mid, lo);
    hi = torch::where(inside, hi, mid);
  }
  return dirs * (0.5 * (lo + hi)).unsqueeze(-1);
}

torch::Tensor fibonacci_directions(int n) {
  auto i = torch::arange(n, f64()) + 0.5;
  auto z = 1.0 - 2.0 * i / n;
  auto r = (1.0 - z * z).clamp_min(0.0).sqrt();
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  auto phi = golden * i;
  return torch::stack({r * torch::cos(phi), z, r * torch::sin(phi)}, -1);
}

torch::Tensor keypoint_directions() {
  // Seven fixed, non-coplanar rays biased toward the frontal hemisphere.
  return torch::tensor({{0.0, 0.0, 1.0},
                        {0.55, 0.1, 0.83},
                        {-0.55, 0.1, 0.83},
                        {0.3, 0.62, 0.72},
                        {-0.3, -0.62, 0.72},
                        {0.8, -0.3, 0.52},
                        {0.0, 0.95, 0.31}},
                       f64());
}

GeometryReport evaluate_geometry(Pipeline& pipeline, const std::vector<torch::Tensor>& latents,
                                 const CameraPose& view, int surface_samples,
                                 const std::filesystem::path& csv_path) {
  pipeline.require_stage1();
  auto gen = pipeline.generator();
  const double r_max = 2.0 * gen->scene.radius;

  std::ofstream csv;
  if (!csv_path.empty()) {
    if (csv_path.has_parent_path()) {
      std::filesystem::create_directories(csv_path.parent_path());
    }
    csv.open(csv_path, std::ios::trunc);
    csv << "identity,median,mean,std\n";
  }

  auto sdf_for = [&](const torch::Tensor& codes) {
    return [&gen, codes](const torch::Tensor& pts) {
      return gen->sdf(codes, pts.unsqueeze(0)).squeeze(0);
    };
  };

  GeometryReport report;
  auto dense_dirs = fibonacci_directions(surface_samples);
  auto kp_dirs = keypoint_directions();

  int id = 0;
  for (const auto& latent : latents) {
    torch::NoGradGuard guard;
    auto gt_codes = gen->expand_codes(latent.dim() == 1 ? latent.unsqueeze(0) : latent);
    RenderSettings settings;
    settings.stratified = false;
    auto render = gen->render(gt_codes, view, settings);
    auto pred_codes = pipeline.invert(render.image_hi.squeeze(0)).unsqueeze(0);

    auto gt_sdf = sdf_for(gt_codes);
    auto pred_sdf = sdf_for(pred_codes);
    auto gt_kp = surface_points_along_rays(gt_sdf, kp_dirs, r_max);
    auto pred_kp = surface_points_along_rays(pred_sdf, kp_dirs, r_max);
    auto gt_surface = surface_points_along_rays(gt_sdf, dense_dirs, r_max);
    auto pred_surface = surface_points_along_rays(pred_sdf, dense_dirs, r_max);

    auto transform = rigid_align(pred_kp, gt_kp);
    auto aligned_pred = apply_rigid(pred_surface, transform);
    auto stats = point_to_surface_distance(aligned_pred, gt_surface);

    GeometryRow row{id, stats.median, stats.mean, stats.stddev};
    report.rows.push_back(row);
    if (csv.is_open()) {
      char line[160];
      std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", id, row.median, row.mean,
                    row.stddev);
      csv << line;
    }
    ++id;
  }

  for (const auto& row : report.rows) {
    report.median += row.median;
    report.mean += row.mean;
    report.stddev += row.stddev;
  }
  if (!report.rows.empty()) {
    const double n = static_cast<double>(report.rows.size());
    report.median /= n;
    report.mean /= n;
    report.stddev /= n;
  }
  return report;
}

Mesh export_mesh(Generator& gen, const torch::Tensor& codes, int resolution, double extent) {
  if (resolution < 1) {
    throw std::invalid_argument("export_mesh: grid resolution must be >= 1");
  }
  torch::NoGradGuard guard;
  const std::int64_t n = resolution + 1;
  auto axis = torch::linspace(-extent, extent, n, f64());
  auto mesh_grid = torch::meshgrid({axis, axis, axis}, "ij");
  auto pts = torch::stack({mesh_grid[0].flatten(), mesh_grid[1].flatten(), mesh_grid[2].flatten()}, -1);

  std::vector<torch::Tensor> chunks;
  constexpr std::int64_t chunk = 65536;
  auto c = gen->expand_codes(codes.dim() == 1 ? codes.unsqueeze(0) : codes);
  for (std::int64_t start = 0; start < pts.size(0); start += chunk) {
    auto part = pts.slice(0, start, std::min(start + chunk, pts.size(0)));
    chunks.push_back(gen->sdf(c, part.unsqueeze(0)).squeeze(0).squeeze(-1));
  }
  auto grid = torch::cat(chunks).reshape({n, n, n});
  auto mesh = extract_isosurface(grid, 0.0, extent);
  if (mesh.empty()) {
    std::cerr << "[evaluation] export_mesh: no zero crossing inside the grid, mesh is empty\n";
  }
  return mesh;
}

void write_metric_rows_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricRow>>& rows) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream csv(path, std::ios::trunc);
  csv << "name,mae,mse,psnr,ssim,perceptual,similarity\n";
  for (const auto& [name, row] : rows) {
    csv << name << "," << row_csv(row) << "\n";
  }
}

}  // namespace inv3d
