#pragma once

// Small synthetic floor-plan dataset written to disk: white pages with
// colored glyphs at the ground-truth boxes.

#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>

#include "generators.hpp"
#include "skeyspot/dataset.hpp"

namespace fixture {

inline skeyspot::DatasetManifest write_plans(const std::filesystem::path& dir, int count, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  gen::Source s(seed);
  skeyspot::DatasetManifest m;
  for (int i = 0; i < count; ++i) {
    skeyspot::ImageRecord r;
    r.image_id = "plan_" + std::to_string(i);
    r.path = "images/" + r.image_id + ".png";
    r.width = s.integer(160, 400);
    r.height = s.integer(120, 300);
    r.split = i % 4 == 3 ? skeyspot::Split::test : skeyspot::Split::train;
    cv::Mat img(r.height, r.width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int n = s.integer(1, 6);
    for (int b = 0; b < n; ++b) {
      const int cls = std::vector<int>{6, 15, 16, 23}[static_cast<std::size_t>(s.integer(0, 3))];
      const double x = 8 * s.integer(0, r.width / 8 - 4), y = 8 * s.integer(0, r.height / 8 - 4);
      skeyspot::BoundingBox box{x, y, x + 8 * s.integer(2, 4), y + 8 * s.integer(2, 4)};
      r.ground_truth.push_back({cls, box});
      cv::rectangle(img, cv::Point(int(box.x_min), int(box.y_min)), cv::Point(int(box.x_max) - 1, int(box.y_max) - 1),
                    cv::Scalar(40 * (cls % 6), 0, 200), cv::FILLED);
    }
    cv::imwrite((dir / r.path).string(), img);
    m.images.push_back(std::move(r));
  }
  skeyspot::save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace fixture
