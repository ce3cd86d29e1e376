// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "inv3d/dataset.hpp"
#include "inv3d/pipeline.hpp"

namespace inv3d {

// Pose-difficulty ramp: 0 at step 0, 1 at ramp_steps, linear in between.
struct CurriculumSchedule {
  std::int64_t ramp_steps = 1;
  double at(std::int64_t step) const;
};

struct StageResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  std::map<std::string, double> final_metrics;
};

// Stage I: global inversion encoder with 3D supervision
// (L = L_geo + L_code + L_rec at both resolutions). Leaves the trained
// encoder attached to the pipeline. `resume_from` continues from a stage-1
// checkpoint with optimizer and RNG state restored.
StageResult train_stage1(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path& resume_from = {});

// Stage II: pixel-aligned local encoder + source-view FiLM, high-resolution
// reconstruction and adversarial terms; generator and global encoder frozen.
StageResult train_stage2(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const std::filesystem::path& out_dir);

// Stage III: hybrid alignment with novel-view paired-pose training and
// curriculum pose sampling; trains the ADA module and both hybrid FiLM
// layers (plus optionally the local encoder copy).
StageResult train_stage3(Pipeline& pipeline, const DatasetCache& cache, const StageConfig& stage,
                         const std::filesystem::path& out_dir);

struct Stage1Holdout {
  double code_loss = 0;
  double mse_hi = 0;
};
Stage1Holdout evaluate_holdout_stage1(Pipeline& pipeline, const DatasetCache& cache,
                                      int max_samples = 0);

// Mean source-view MSE over held-out samples for a reconstruction mode.
double holdout_source_mse(Pipeline& pipeline, const DatasetCache& cache, const std::string& mode,
                          int max_samples = 0);

}  // namespace inv3d
