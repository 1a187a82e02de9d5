#pragma once

#include <torch/torch.h>

#include "json.hpp"

namespace dig {

struct ContrastiveOptions {
  double temperature = 0.2;
  /// Count non-corresponding instances of the same image as negatives.
  bool negatives_include_same_image = true;
};

/// One direction of the contrastive loss. `queries` and `keys` are [B,I,D];
/// query (b,i) has key (b,i) as its positive and every other key as a negative
/// (same-image keys only when the option is set). Averaged over the B*I queries.
torch::Tensor info_nce_direction(const torch::Tensor& queries, const torch::Tensor& keys,
                                 const ContrastiveOptions& options = {});

/// Symmetric loss: L(q_m, k_a) + L(q_a, k_m).
torch::Tensor info_nce(const torch::Tensor& q_m, const torch::Tensor& q_a, const torch::Tensor& k_m,
                       const torch::Tensor& k_a, const ContrastiveOptions& options = {});

/// Mean over channels of the squared error, summed over masked pixels and
/// divided by their count. `pred`/`target` are [B,H,W,C], `mask` is [B,H,W].
/// An empty mask yields 0 and a warning on stderr.
torch::Tensor masked_l2(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask);

struct LossWeights {
  double alpha = 0.1;
};

/// L_c + alpha * L_m; rejects non-finite inputs and negative alpha.
double combined_loss(double loss_c, double loss_m, const LossWeights& weights);
torch::Tensor combined_loss(const torch::Tensor& loss_c, const torch::Tensor& loss_m, const LossWeights& weights);

/// Mean absolute error.
torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target);
/// Mean squared error.
torch::Tensor l2_loss(const torch::Tensor& pred, const torch::Tensor& target);

}  // namespace dig
