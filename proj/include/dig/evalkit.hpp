#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "dig/config.hpp"
#include "dig/image.hpp"

namespace dig {

struct EvalProtocol {
  bool case_fold = true;
  bool strip_non_alphanumeric = true;
};

/// ASCII case folding and removal of non-alphanumeric bytes, per the protocol.
std::string normalize(std::string_view text, const EvalProtocol& protocol = {});

/// Fraction of exact matches after normalization.
double word_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& truths,
                     const EvalProtocol& protocol = {});

/// |pred >= threshold AND gt| / |pred >= threshold OR gt|; an empty union scores 1.
/// Both tensors share one shape; `gt` is binary (nonzero = foreground).
double iou(const torch::Tensor& pred, const torch::Tensor& gt, double threshold = 0.5);
double iou(const Image& pred, const Image& gt, double threshold = 0.5);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse), capped at 99 dB.
double psnr_from_mse(double mse);
/// PSNR in dB with the MSE taken over all pixels and channels.
double psnr(const Image& a, const Image& b);
/// Mean SSIM of the BT.601 luminance of both images (computed in double),
/// 11x11 Gaussian window with sigma 1.5, K1 0.01, K2 0.03, data range 1,
/// averaged over the positions where the window fits inside the image.
double ssim(const Image& a, const Image& b);

struct ProbeReport {
  std::string checkpoint;  // empty for a randomly initialized encoder
  std::string decoder;
  double accuracy = 0.0;        // held-out split
  double train_accuracy = 0.0;  // training split
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Frozen-encoder probe: trains `config.probe.decoder` on features of the
/// training split of `config.probe.manifest` and scores word accuracy on the
/// held-out split.
ProbeReport run_probe(const RunConfig& config);

}  // namespace dig
