// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace inv3d {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // numeric cells; NaN where non-numeric
};

CsvTable read_csv(const std::filesystem::path& path);

// One deterministic PNG per metrics CSV found in the run directory (same
// basename): line charts over the first column. Returns the figures written.
std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& run_dir);

// Line chart of `table` columns (first column is the x axis).
void plot_csv(const CsvTable& table, const std::string& title,
              const std::filesystem::path& out_png);

}  // namespace inv3d
