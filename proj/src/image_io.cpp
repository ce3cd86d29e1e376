// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "inv3d/common.hpp"

namespace inv3d {

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  torch::NoGradGuard guard;
  auto img = image.detach().to(torch::kFloat64);
  if (img.dim() == 2) {
    img = img.unsqueeze(0).expand({3, img.size(0), img.size(1)});
  }
  if (img.dim() != 3 || img.size(0) != 3) {
    throw std::invalid_argument("write_png: expected [3,H,W] or [H,W] image");
  }
  auto u8 = (img.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8);
  auto hwc = u8.permute({1, 2, 0}).contiguous();  // RGB
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw std::runtime_error("write_png: failed to write " + path.string());
  }
}

torch::Tensor read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw std::runtime_error("read_png: cannot read " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat64) / 255.0;
}

torch::Tensor make_grid(const std::vector<torch::Tensor>& images, int columns) {
  if (images.empty()) {
    throw std::invalid_argument("make_grid: no images");
  }
  const auto h = images[0].size(1);
  const auto w = images[0].size(2);
  const int rows = static_cast<int>((images.size() + columns - 1) / columns);
  auto grid = torch::ones({3, rows * h, static_cast<std::int64_t>(columns) * w}, f64());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto r = static_cast<std::int64_t>(i) / columns;
    const auto c = static_cast<std::int64_t>(i) % columns;
    grid.index_put_({torch::indexing::Slice(),
                     torch::indexing::Slice(r * h, (r + 1) * h),
                     torch::indexing::Slice(c * w, (c + 1) * w)},
                    images[i].to(torch::kFloat64));
  }
  return grid;
}

}  // namespace inv3d
