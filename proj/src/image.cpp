#include "dig/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dig/errors.hpp"

namespace dig {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels <= 0) throw InvalidArgument("invalid image shape");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool Image::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

void Image::clamp_unit() {
  for (auto& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

cv::Mat to_mat(const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_32FC(image.channels()));
  std::memcpy(mat.data, image.values().data(), image.size() * sizeof(float));
  return mat;
}

Image from_mat(const cv::Mat& mat) {
  cv::Mat src = mat;
  if (src.depth() != CV_32F) src.convertTo(src, CV_32F);
  if (!src.isContinuous()) src = src.clone();
  Image out(src.rows, src.cols, src.channels());
  std::memcpy(out.values().data(), src.data, out.size() * sizeof(float));
  return out;
}

Image standardize(const Image& image) {
  if (image.empty()) throw InvalidArgument("cannot standardize an empty image");
  Image out;
  if (image.height() == kImageHeight && image.width() == kImageWidth) {
    out = image;
  } else {
    cv::Mat resized;
    cv::resize(to_mat(image), resized, cv::Size(kImageWidth, kImageHeight), 0, 0,
               cv::INTER_CUBIC);
    out = from_mat(resized);
  }
  if (out.channels() == 1) {
    Image rgb(out.height(), out.width(), kChannels);
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        for (int c = 0; c < kChannels; ++c) rgb.at(y, x, c) = out.at(y, x);
    out = std::move(rgb);
  }
  out.clamp_unit();
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  cv::Mat bytes(image.height(), image.width(), CV_8UC(image.channels()));
  auto values = image.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    bytes.data[i] = static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
  }
  if (image.channels() == 3) cv::cvtColor(bytes, bytes, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bytes);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw IoError("failed to write image: " + path.string());
}

Image read_png(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::exists(path)) throw IoError("missing image file: " + path.string());
  cv::Mat bytes;
  try {
    bytes = cv::imread(path.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    bytes.release();
  }
  if (bytes.empty()) throw CorruptData("unreadable or corrupt image file: " + path.string());
  if (channels == 3) cv::cvtColor(bytes, bytes, cv::COLOR_BGR2RGB);
  Image out(bytes.rows, bytes.cols, channels);
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = bytes.data[i] / 255.0f;
  return out;
}

Image luminance(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  Image out(rgb.height(), rgb.width(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out.at(y, x) = 0.299f * rgb.at(y, x, 0) + 0.587f * rgb.at(y, x, 1) + 0.114f * rgb.at(y, x, 2);
  return out;
}

}  // namespace dig
