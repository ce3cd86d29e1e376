// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "inv3d/dataset.hpp"
#include "inv3d/losses.hpp"
#include "inv3d/marching_cubes.hpp"
#include "inv3d/pipeline.hpp"

namespace inv3d {

struct MetricRow {
  double mae = 0, mse = 0, psnr = 0, ssim = 0, perceptual = 0, similarity = 0;
};

struct MetricAggregate {
  MetricRow mean, stddev;
  std::int64_t count = 0;
};

double ssim(const torch::Tensor& a, const torch::Tensor& b);  // 11x11 Gaussian window

MetricRow compute_2d_metrics(const torch::Tensor& pred, const torch::Tensor& target,
                             PerceptualProxy& perceptual, SimilarityProxy& similarity);

MetricAggregate aggregate_rows(const std::vector<MetricRow>& rows);

struct TrajectoryReport {
  std::vector<MetricRow> source_rows;
  std::vector<MetricRow> novel_rows;
  MetricAggregate source, novel;
};

// Renders a query frame given the chosen source frame of a sequence.
using TrajectoryModel =
    std::function<torch::Tensor(const torch::Tensor& source_image, const CameraPose& source_pose,
                                const CameraPose& query_pose, int query_index)>;

// One source frame per sequence (seeded pick); every other frame is scored as
// a novel view against its ground truth. Rows stream to `csv_path` when set;
// the CSV is byte-stable across repeated runs.
TrajectoryReport evaluate_trajectory(const DatasetCache& cache, const TrajectoryModel& model,
                                     Rng& rng, const std::filesystem::path& csv_path = {});

TrajectoryModel trajectory_model_for(Pipeline& pipeline, const std::string& mode);

struct RigidTransform {
  torch::Tensor rotation;     // [3,3], det +1
  torch::Tensor translation;  // [3]
  double scale = 1.0;
};

// Least-squares orthogonal Procrustes (optionally with scale) aligning
// `source` onto `target`; throws on degenerate (collinear) keypoint sets.
RigidTransform rigid_align(const torch::Tensor& source, const torch::Tensor& target,
                           bool with_scale = false);
torch::Tensor apply_rigid(const torch::Tensor& points, const RigidTransform& transform);

struct DistanceStats {
  double median = 0, mean = 0, stddev = 0;
  torch::Tensor distances;  // per ground-truth sample
};

// Scan-to-mesh style distance: for every ground-truth sample, the distance to
// the nearest predicted point.
DistanceStats point_to_surface_distance(const torch::Tensor& predicted,
                                        const torch::Tensor& ground_truth);

// Surface points of an SDF along rays from the origin (bisection on the
// first sign change); used for keypoints and dense evaluation sets.
torch::Tensor surface_points_along_rays(const SdfFn& sdf, const torch::Tensor& directions,
                                        double r_max);
torch::Tensor fibonacci_directions(int n);
torch::Tensor keypoint_directions();  // the 7 fixed keypoint rays

struct GeometryRow {
  int identity = 0;
  double median = 0, mean = 0, stddev = 0;
};

struct GeometryReport {
  std::vector<GeometryRow> rows;
  double median = 0, mean = 0, stddev = 0;  // averaged over identities
};

// Synthetic single-view shape evaluation: invert a render of a held-out
// latent, extract both surfaces by ray casting, rigid-align predicted onto
// ground truth via the 7 keypoints, then report scan-to-mesh statistics.
GeometryReport evaluate_geometry(Pipeline& pipeline, const std::vector<torch::Tensor>& latents,
                                 const CameraPose& view, int surface_samples,
                                 const std::filesystem::path& csv_path = {});

// Zero level set of the generator's SDF for the given codes.
Mesh export_mesh(Generator& gen, const torch::Tensor& codes, int resolution, double extent);

void write_metric_rows_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, MetricRow>>& rows);

}  // namespace inv3d
