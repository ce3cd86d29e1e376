// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace inv3d {
namespace {

const std::vector<cv::Scalar> kPalette = {
    {180, 119, 31},  {14, 127, 255},  {44, 160, 44},  {40, 39, 214},
    {189, 103, 148}, {75, 86, 140},   {194, 119, 227}, {127, 127, 127},
};

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("read_csv: cannot open " + path.string());
  }
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("read_csv: empty file " + path.string());
  }
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) {
    table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        row.push_back(std::nan(""));
      }
    }
    row.resize(table.columns.size(), std::nan(""));
    table.rows.push_back(row);
  }
  return table;
}

void plot_csv(const CsvTable& table, const std::string& title,
              const std::filesystem::path& out_png) {
  const int width = 900, height = 540;
  const int left = 70, right = 40, top = 50, bottom = 50;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  cv::putText(canvas, title, {left, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.7, {30, 30, 30}, 1,
              cv::LINE_AA);
  cv::rectangle(canvas, {left, top}, {width - right, height - bottom}, cv::Scalar(120, 120, 120));

  if (table.rows.empty() || table.columns.size() < 2) {
    cv::putText(canvas, "(no data)", {width / 2 - 50, height / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                {120, 120, 120}, 1, cv::LINE_AA);
    cv::imwrite(out_png.string(), canvas);
    return;
  }

  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& row : table.rows) {
    if (std::isnan(row[0])) continue;
    x_min = std::min(x_min, row[0]);
    x_max = std::max(x_max, row[0]);
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (std::isnan(row[c])) continue;
      y_min = std::min(y_min, row[c]);
      y_max = std::max(y_max, row[c]);
    }
  }
  if (!std::isfinite(x_min) || !std::isfinite(y_min)) {
    cv::putText(canvas, "(no numeric data)", {width / 2 - 70, height / 2},
                cv::FONT_HERSHEY_SIMPLEX, 0.6, {120, 120, 120}, 1, cv::LINE_AA);
    cv::imwrite(out_png.string(), canvas);
    return;
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  auto to_px = [&](double x, double y) {
    const double fx = (x - x_min) / (x_max - x_min);
    const double fy = (y - y_min) / (y_max - y_min);
    return cv::Point(static_cast<int>(left + fx * (width - left - right)),
                     static_cast<int>(height - bottom - fy * (height - top - bottom)));
  };

  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", y_max);
  cv::putText(canvas, buf, {5, top + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {90, 90, 90}, 1,
              cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.4g", y_min);
  cv::putText(canvas, buf, {5, height - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {90, 90, 90}, 1,
              cv::LINE_AA);

  for (std::size_t c = 1; c < table.columns.size(); ++c) {
    const auto color = kPalette[(c - 1) % kPalette.size()];
    cv::Point prev;
    bool has_prev = false;
    for (const auto& row : table.rows) {
      if (std::isnan(row[0]) || std::isnan(row[c])) {
        has_prev = false;
        continue;
      }
      auto p = to_px(row[0], row[c]);
      if (has_prev) {
        cv::line(canvas, prev, p, color, 1, cv::LINE_AA);
      }
      prev = p;
      has_prev = true;
    }
    cv::putText(canvas, table.columns[c],
                {width - right - 160, top + 20 + 18 * static_cast<int>(c - 1)},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color, 1, cv::LINE_AA);
  }
  if (out_png.has_parent_path()) {
    std::filesystem::create_directories(out_png.parent_path());
  }
  cv::imwrite(out_png.string(), canvas);
}

std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& run_dir) {
  std::vector<std::filesystem::path> csvs;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      csvs.push_back(entry.path());
    }
  }
  if (csvs.empty()) {
    throw std::runtime_error("plot_metrics: no CSV files in " + run_dir.string() +
                             " (expected *_metrics.csv / *_eval.csv / eval CSVs)");
  }
  std::sort(csvs.begin(), csvs.end());
  std::vector<std::filesystem::path> figures;
  for (const auto& csv : csvs) {
    auto out = csv;
    out.replace_extension(".png");
    plot_csv(read_csv(csv), csv.stem().string(), out);
    figures.push_back(out);
  }
  return figures;
}

}  // namespace inv3d
