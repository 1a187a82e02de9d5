#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "dig/image.hpp"

namespace dig {

inline constexpr int kPatchSize = 4;
inline constexpr int kGridHeight = kImageHeight / kPatchSize;  // 8
inline constexpr int kGridWidth = kImageWidth / kPatchSize;    // 32
inline constexpr int kTokenCount = kGridHeight * kGridWidth;   // 256

/// Probabilities and magnitude bounds of the photometric/geometric ops.
/// A probability of 0 disables an op.
struct AugmentationParams {
  double blur_p = 0.0, blur_sigma_max = 1.5;
  double noise_p = 0.0, noise_sigma_max = 0.05;
  double perspective_p = 0.0, perspective_max = 0.10;  // corner jitter / side
  double crop_p = 0.0, crop_min_area = 0.80;
  double jitter_p = 0.0, brightness = 0.2, contrast = 0.2, saturation = 0.2;
  double grayscale_p = 0.0;
};

void to_json(nlohmann::json& j, const AugmentationParams& p);
void from_json(const nlohmann::json& j, AugmentationParams& p);

/// Validated augmentation policy. Construction rejects out-of-range values.
class AugmentationPolicy {
 public:
  AugmentationPolicy() = default;  // identity
  explicit AugmentationPolicy(const AugmentationParams& params);

  static AugmentationPolicy identity() { return {}; }
  /// Augmented-view policy used during pre-training.
  static AugmentationPolicy pretrain_default();
  /// Photometric-only policy applied to the masked view before masking.
  static AugmentationPolicy light();
  static AugmentationPolicy grayscale_only();
  /// Brightness, noise and perspective, used while fine-tuning.
  static AugmentationPolicy finetune();

  const AugmentationParams& params() const { return params_; }
  bool is_identity() const;

 private:
  AugmentationParams params_;
};

/// Applies a seeded random subset of the policy's ops. Output is clamped to
/// [0,1] and keeps the input shape; the identity policy returns the input as is.
Image augment(const Image& image, std::uint64_t seed, const AugmentationPolicy& policy);

/// Patch-aligned mask over the token grid; true means the patch is masked.
class PatchMask {
 public:
  PatchMask() = default;
  PatchMask(int grid_h, int grid_w, double ratio);

  int grid_h() const { return grid_h_; }
  int grid_w() const { return grid_w_; }
  double ratio() const { return ratio_; }
  bool at(int r, int c) const { return cells_[static_cast<std::size_t>(r) * grid_w_ + c] != 0; }
  void set(int r, int c, bool v) { cells_[static_cast<std::size_t>(r) * grid_w_ + c] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::size_t count() const;

  bool operator==(const PatchMask&) const = default;

 private:
  int grid_h_ = 0;
  int grid_w_ = 0;
  double ratio_ = 0.0;
  std::vector<std::uint8_t> cells_;
};

/// round(ratio * cells) with halves rounded away from zero.
std::size_t masked_cell_count(int grid_h, int grid_w, double ratio);

/// Uniformly chooses masked_cell_count(...) cells without replacement.
PatchMask sample_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed);

struct ViewConfig {
  double mask_ratio = 0.6;
  /// Apply `masked_policy` to the masked view before masking.
  bool light_masked_augment = true;
  AugmentationPolicy augmented_policy = AugmentationPolicy::pretrain_default();
  AugmentationPolicy masked_policy = AugmentationPolicy::light();
};

void to_json(nlohmann::json& j, const ViewConfig& v);
void from_json(const nlohmann::json& j, ViewConfig& v);

/// The two encoder inputs for one source image. The mask is applied in token
/// space by the model, so `masked_view` holds unmasked pixels and equals
/// `reconstruction_target`.
struct ViewPair {
  Image masked_view;
  PatchMask mask;
  Image augmented_view;
  Image reconstruction_target;
};

ViewPair make_view_pair(const Image& image, std::uint64_t seed, const ViewConfig& config);
ViewPair make_view_pair(const Image& image, std::uint64_t seed, double mask_ratio);

}  // namespace dig
