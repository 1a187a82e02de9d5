#include "dig/objectives.hpp"

#include <cmath>
#include "dig/log.hpp"
#include <limits>

#include "dig/errors.hpp"

namespace dig {

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " is not finite");
}

}  // namespace

torch::Tensor info_nce_direction(const torch::Tensor& queries, const torch::Tensor& keys,
                                 const ContrastiveOptions& options) {
  if (!(options.temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (queries.dim() != 3 || !queries.sizes().equals(keys.sizes()))
    throw InvalidArgument("queries and keys must both be [B,I,D] with equal shapes");
  const int64_t b = queries.size(0), instances = queries.size(1), d = queries.size(2);
  if (b < 1 || instances < 1) throw InvalidArgument("contrastive batch is empty");
  const int64_t n = b * instances;

  auto logits = torch::matmul(queries.reshape({n, d}), keys.reshape({n, d}).t()) / options.temperature;
  if (!options.negatives_include_same_image && instances > 1) {
    auto image = torch::arange(n, torch::kLong).div(instances, "floor");
    auto same = image.unsqueeze(1).eq(image.unsqueeze(0));
    auto off_diagonal = torch::eye(n, torch::kBool).logical_not();
    logits = logits.masked_fill(same.logical_and(off_diagonal), -std::numeric_limits<double>::infinity());
  }
  return torch::nn::functional::cross_entropy(logits, torch::arange(n, torch::kLong));
}

torch::Tensor info_nce(const torch::Tensor& q_m, const torch::Tensor& q_a, const torch::Tensor& k_m,
                       const torch::Tensor& k_a, const ContrastiveOptions& options) {
  if (!q_m.sizes().equals(q_a.sizes()) || !q_m.sizes().equals(k_m.sizes()) || !q_m.sizes().equals(k_a.sizes()))
    throw InvalidArgument("query and key tensors must share one shape");
  return info_nce_direction(q_m, k_a, options) + info_nce_direction(q_a, k_m, options);
}

torch::Tensor masked_l2(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask) {
  if (pred.dim() != 4 || !pred.sizes().equals(target.sizes()))
    throw InvalidArgument("prediction and target must both be [B,H,W,C] with equal shapes");
  if (mask.dim() != 3 || mask.size(0) != pred.size(0) || mask.size(1) != pred.size(1) ||
      mask.size(2) != pred.size(2))
    throw InvalidArgument("mask must be [B,H,W] matching the prediction");
  auto m = mask.to(torch::kBool);
  const int64_t count = m.sum().item<int64_t>();
  if (count == 0) {
    log_warning("masked_l2 called with an empty mask; returning 0");
    return (pred * 0.0).sum();
  }
  auto per_pixel = (pred - target).square().mean(-1);
  return torch::where(m, per_pixel, torch::zeros_like(per_pixel)).sum() / static_cast<double>(count);
}

double combined_loss(double loss_c, double loss_m, const LossWeights& weights) {
  check_finite(loss_c, "contrastive loss");
  check_finite(loss_m, "reconstruction loss");
  if (!(weights.alpha >= 0.0) || !std::isfinite(weights.alpha)) throw InvalidArgument("alpha must be >= 0");
  return loss_c + weights.alpha * loss_m;
}

torch::Tensor combined_loss(const torch::Tensor& loss_c, const torch::Tensor& loss_m, const LossWeights& weights) {
  combined_loss(loss_c.item<double>(), loss_m.item<double>(), weights);
  return loss_c + weights.alpha * loss_m;
}

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (!pred.sizes().equals(target.sizes())) throw InvalidArgument("L1 loss shape mismatch");
  return (pred - target).abs().mean();
}

torch::Tensor l2_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (!pred.sizes().equals(target.sizes())) throw InvalidArgument("L2 loss shape mismatch");
  return (pred - target).square().mean();
}

}  // namespace dig
