#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cv {
class Mat;
}

namespace dig {

inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 128;
inline constexpr int kChannels = 3;

/// Dense float image, row-major HWC. RGB for colour images.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  /// True when every value is finite and inside [0, 1].
  bool in_unit_range() const;
  void clamp_unit();

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// A standardized 32x128 RGB word image, optionally carrying its transcript.
struct TextImage {
  Image pixels;
  std::optional<std::string> label;
};

/// Copies into a CV_32FC{channels} matrix (RGB order preserved).
cv::Mat to_mat(const Image& image);
/// Accepts CV_32FC1 or CV_32FC3.
Image from_mat(const cv::Mat& mat);

/// Resizes to 32x128 with bicubic interpolation when the shape differs; clamps to [0,1].
Image standardize(const Image& image);

/// 8-bit PNG I/O. Values are quantized with round-half-up on write and divided by 255 on read.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path, int channels = kChannels);

/// ITU-R BT.601 luma; returns a single-channel image.
Image luminance(const Image& rgb);

}  // namespace dig
