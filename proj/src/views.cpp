#include "dig/views.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <opencv2/imgproc.hpp>

#include "dig/errors.hpp"
#include "dig/rng.hpp"

namespace dig {

void to_json(nlohmann::json& j, const AugmentationParams& p) {
  j = nlohmann::json{{"blur_p", p.blur_p},
                     {"blur_sigma_max", p.blur_sigma_max},
                     {"noise_p", p.noise_p},
                     {"noise_sigma_max", p.noise_sigma_max},
                     {"perspective_p", p.perspective_p},
                     {"perspective_max", p.perspective_max},
                     {"crop_p", p.crop_p},
                     {"crop_min_area", p.crop_min_area},
                     {"jitter_p", p.jitter_p},
                     {"brightness", p.brightness},
                     {"contrast", p.contrast},
                     {"saturation", p.saturation},
                     {"grayscale_p", p.grayscale_p}};
}

void from_json(const nlohmann::json& j, AugmentationParams& p) {
  p.blur_p = j.value("blur_p", p.blur_p);
  p.blur_sigma_max = j.value("blur_sigma_max", p.blur_sigma_max);
  p.noise_p = j.value("noise_p", p.noise_p);
  p.noise_sigma_max = j.value("noise_sigma_max", p.noise_sigma_max);
  p.perspective_p = j.value("perspective_p", p.perspective_p);
  p.perspective_max = j.value("perspective_max", p.perspective_max);
  p.crop_p = j.value("crop_p", p.crop_p);
  p.crop_min_area = j.value("crop_min_area", p.crop_min_area);
  p.jitter_p = j.value("jitter_p", p.jitter_p);
  p.brightness = j.value("brightness", p.brightness);
  p.contrast = j.value("contrast", p.contrast);
  p.saturation = j.value("saturation", p.saturation);
  p.grayscale_p = j.value("grayscale_p", p.grayscale_p);
}

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0,1]");
}

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) {
    throw InvalidArgument(std::string(name) + " must lie in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
  }
}

}  // namespace

AugmentationPolicy::AugmentationPolicy(const AugmentationParams& params) : params_(params) {
  check_probability(params.blur_p, "blur_p");
  check_probability(params.noise_p, "noise_p");
  check_probability(params.perspective_p, "perspective_p");
  check_probability(params.crop_p, "crop_p");
  check_probability(params.jitter_p, "jitter_p");
  check_probability(params.grayscale_p, "grayscale_p");
  check_range(params.blur_sigma_max, 0.0, 1.5, "blur_sigma_max");
  check_range(params.noise_sigma_max, 0.0, 0.05, "noise_sigma_max");
  check_range(params.perspective_max, 0.0, 0.10, "perspective_max");
  check_range(params.crop_min_area, 0.80, 1.0, "crop_min_area");
  check_range(params.brightness, 0.0, 0.2, "brightness");
  check_range(params.contrast, 0.0, 0.2, "contrast");
  check_range(params.saturation, 0.0, 0.2, "saturation");
}

AugmentationPolicy AugmentationPolicy::pretrain_default() {
  AugmentationParams p;
  p.blur_p = 0.5;
  p.noise_p = 0.5;
  p.perspective_p = 0.5;
  p.crop_p = 0.5;
  p.jitter_p = 0.8;
  p.grayscale_p = 0.2;
  return AugmentationPolicy(p);
}

AugmentationPolicy AugmentationPolicy::light() {
  AugmentationParams p;
  p.noise_p = 0.5;
  p.noise_sigma_max = 0.02;
  p.jitter_p = 0.8;
  p.brightness = 0.1;
  p.contrast = 0.1;
  p.saturation = 0.1;
  return AugmentationPolicy(p);
}

AugmentationPolicy AugmentationPolicy::grayscale_only() {
  AugmentationParams p;
  p.grayscale_p = 1.0;
  return AugmentationPolicy(p);
}

AugmentationPolicy AugmentationPolicy::finetune() {
  AugmentationParams p;
  p.noise_p = 0.5;
  p.perspective_p = 0.5;
  p.perspective_max = 0.05;
  p.jitter_p = 0.5;
  p.contrast = 0.0;
  p.saturation = 0.0;
  return AugmentationPolicy(p);
}

bool AugmentationPolicy::is_identity() const {
  const auto& p = params_;
  return p.blur_p == 0 && p.noise_p == 0 && p.perspective_p == 0 && p.crop_p == 0 && p.jitter_p == 0 &&
         p.grayscale_p == 0;
}

// ---------------------------------------------------------------------------

namespace {

void gaussian_blur(Image& img, double sigma) {
  cv::Mat m = to_mat(img);
  cv::GaussianBlur(m, m, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
  img = from_mat(m);
}

void perspective(Image& img, double max_jitter, Rng& rng) {
  const float w = static_cast<float>(img.width() - 1);
  const float h = static_cast<float>(img.height() - 1);
  const cv::Point2f src[4] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  cv::Point2f dst[4];
  for (int k = 0; k < 4; ++k) {
    dst[k] = {src[k].x + static_cast<float>(rng.uniform(-max_jitter, max_jitter) * w),
              src[k].y + static_cast<float>(rng.uniform(-max_jitter, max_jitter) * h)};
  }
  cv::Mat out;
  cv::warpPerspective(to_mat(img), out, cv::getPerspectiveTransform(src, dst),
                      cv::Size(img.width(), img.height()), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
  img = from_mat(out);
}

void crop_and_resize(Image& img, double min_area, Rng& rng) {
  const double area = rng.uniform(min_area, 1.0);
  // Split the area loss between the axes; the aspect ratio stays close to the original.
  const double share = rng.uniform(0.0, 1.0);
  const double sx = std::pow(area, share);
  const double sy = area / sx;
  const int cw = std::max(1, static_cast<int>(std::lround(sx * img.width())));
  const int ch = std::max(1, static_cast<int>(std::lround(sy * img.height())));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - cw + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - ch + 1)));
  cv::Mat out;
  cv::resize(to_mat(img)(cv::Rect(x0, y0, cw, ch)), out, cv::Size(img.width(), img.height()), 0, 0,
             cv::INTER_LINEAR);
  img = from_mat(out);
}

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void colour_jitter(Image& img, const AugmentationParams& p, Rng& rng) {
  const float b = static_cast<float>(1.0 + rng.uniform(-p.brightness, p.brightness));
  const float c = static_cast<float>(1.0 + rng.uniform(-p.contrast, p.contrast));
  const float s = static_cast<float>(1.0 + rng.uniform(-p.saturation, p.saturation));
  auto v = img.values();
  for (auto& x : v) x *= b;
  if (img.channels() == 3) {
    double mean = 0.0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) mean += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    const float m = static_cast<float>(mean / (img.height() * img.width()));
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const float g = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
        for (int k = 0; k < 3; ++k) {
          float val = g + (img.at(y, x, k) - g) * s;
          img.at(y, x, k) = (val - m) * c + m;
        }
      }
    }
  }
}

void grayscale(Image& img) {
  if (img.channels() != 3) return;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float g = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = g;
    }
  }
}

}  // namespace

Image augment(const Image& image, std::uint64_t seed, const AugmentationPolicy& policy) {
  if (policy.is_identity()) return image;
  const auto& p = policy.params();
  Rng rng(seed);
  Image out = image;
  // Decisions are drawn up front so each op's randomness does not shift the others.
  const bool do_crop = rng.bernoulli(p.crop_p);
  const bool do_persp = rng.bernoulli(p.perspective_p);
  const bool do_jitter = rng.bernoulli(p.jitter_p);
  const bool do_gray = rng.bernoulli(p.grayscale_p);
  const bool do_blur = rng.bernoulli(p.blur_p);
  const bool do_noise = rng.bernoulli(p.noise_p);
  Rng op_rng(splitmix64(seed ^ 0xA5A5A5A5ULL));

  if (do_crop) crop_and_resize(out, p.crop_min_area, op_rng);
  if (do_persp) perspective(out, p.perspective_max, op_rng);
  if (do_jitter) colour_jitter(out, p, op_rng);
  if (do_gray) grayscale(out);
  if (do_blur) {
    const double sigma = op_rng.uniform(0.1, std::max(0.1, p.blur_sigma_max));
    gaussian_blur(out, sigma);
  }
  if (do_noise) {
    const double sigma = op_rng.uniform(0.0, p.noise_sigma_max);
    const bool mono = do_gray && out.channels() == 3;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (mono) {
          const float n = static_cast<float>(sigma * op_rng.normal());
          for (int c = 0; c < out.channels(); ++c) out.at(y, x, c) += n;
        } else {
          for (int c = 0; c < out.channels(); ++c) out.at(y, x, c) += static_cast<float>(sigma * op_rng.normal());
        }
      }
    }
  }
  out.clamp_unit();
  return out;
}

// ---------------------------------------------------------------------------

PatchMask::PatchMask(int grid_h, int grid_w, double ratio)
    : grid_h_(grid_h), grid_w_(grid_w), ratio_(ratio), cells_(static_cast<std::size_t>(grid_h) * grid_w, 0) {
  if (grid_h <= 0 || grid_w <= 0) throw InvalidArgument("mask grid must be non-empty");
}

std::size_t PatchMask::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::size_t masked_cell_count(int grid_h, int grid_w, double ratio) {
  // std::round rounds halfway cases away from zero.
  return static_cast<std::size_t>(std::round(ratio * grid_h * grid_w));
}

PatchMask sample_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("mask ratio must lie in [0,1]");
  PatchMask mask(grid_h, grid_w, ratio);
  const std::size_t cells = static_cast<std::size_t>(grid_h) * grid_w;
  const std::size_t k = masked_cell_count(grid_h, grid_w, ratio);
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(cells - i);
    std::swap(order[i], order[j]);
    mask.set(static_cast<int>(order[i] / grid_w), static_cast<int>(order[i] % grid_w), true);
  }
  return mask;
}

void to_json(nlohmann::json& j, const ViewConfig& v) {
  j = nlohmann::json{{"mask_ratio", v.mask_ratio},
                     {"light_masked_augment", v.light_masked_augment},
                     {"augmented_policy", v.augmented_policy.params()},
                     {"masked_policy", v.masked_policy.params()}};
}

void from_json(const nlohmann::json& j, ViewConfig& v) {
  v.mask_ratio = j.value("mask_ratio", v.mask_ratio);
  v.light_masked_augment = j.value("light_masked_augment", v.light_masked_augment);
  if (j.contains("augmented_policy")) {
    AugmentationParams p = v.augmented_policy.params();
    from_json(j.at("augmented_policy"), p);
    v.augmented_policy = AugmentationPolicy(p);
  }
  if (j.contains("masked_policy")) {
    AugmentationParams p = v.masked_policy.params();
    from_json(j.at("masked_policy"), p);
    v.masked_policy = AugmentationPolicy(p);
  }
}

ViewPair make_view_pair(const Image& image, std::uint64_t seed, const ViewConfig& config) {
  if (image.height() != kImageHeight || image.width() != kImageWidth || image.channels() != kChannels)
    throw InvalidArgument("view pairs require a standardized 32x128x3 image");
  const std::uint64_t seed_augmented = derive_seed(seed, {1});
  const std::uint64_t seed_masked = derive_seed(seed, {2});
  const std::uint64_t seed_mask = derive_seed(seed, {3});

  ViewPair pair;
  pair.augmented_view = augment(image, seed_augmented, config.augmented_policy);
  pair.reconstruction_target =
      config.light_masked_augment ? augment(image, seed_masked, config.masked_policy) : image;
  pair.masked_view = pair.reconstruction_target;
  pair.mask = sample_mask(kGridHeight, kGridWidth, config.mask_ratio, seed_mask);
  return pair;
}

ViewPair make_view_pair(const Image& image, std::uint64_t seed, double mask_ratio) {
  ViewConfig config;
  config.mask_ratio = mask_ratio;
  return make_view_pair(image, seed, config);
}

}  // namespace dig
