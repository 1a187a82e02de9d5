#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "json.hpp"

#include "dig/image.hpp"

namespace dig::test {

struct MetricCase {
  Image a, b;
  double psnr = 0.0, ssim = 0.0;
  std::string name;
};

/// uint8 PNG -> RGB floats as float(v) / 255.0f, matching the fixture generator.
inline Image load_fixture_png(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot read fixture " + path.string());
  Image out(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(px[2 - c]) / 255.0f;
    }
  return out;
}

inline std::vector<MetricCase> metric_cases() {
  const std::filesystem::path dir = std::filesystem::path(DIG_TEST_DATA_DIR) / "metrics";
  std::ifstream in(dir / "reference.json");
  if (!in) throw std::runtime_error("missing " + (dir / "reference.json").string());
  const auto j = nlohmann::json::parse(in);
  std::vector<MetricCase> out;
  for (const auto& c : j.at("cases")) {
    out.push_back({load_fixture_png(dir / c.at("a").get<std::string>()),
                   load_fixture_png(dir / c.at("b").get<std::string>()), c.at("psnr").get<double>(),
                   c.at("ssim").get<double>(), c.at("a").get<std::string>()});
  }
  return out;
}

}  // namespace dig::test
