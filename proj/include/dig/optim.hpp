#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace dig {

/// Linear warm-up from 0 to `base` over `warmup` steps, then cosine decay to 0
/// at `total`. Rejects steps outside [0, total].
double lr_at(int64_t step, int64_t warmup, int64_t total, double base);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// True for parameters that receive weight decay: matrices, except positional
/// embeddings and the mask token. Biases and norm scales are 1-d and skip it.
bool decays(const std::string& name, const torch::Tensor& param);

/// Adam with decoupled weight decay over named parameters. State is keyed by
/// parameter name so it can be checkpointed and restored.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, torch::Tensor>> params, AdamWOptions options);

  /// One update with learning rate `lr`. Parameters without a gradient are skipped.
  void step(double lr);
  void zero_grad();

  int64_t step_count() const { return step_count_; }
  const std::vector<std::pair<std::string, torch::Tensor>>& params() const { return params_; }
  const AdamWOptions& options() const { return options_; }

  /// exp_avg.<name> and exp_avg_sq.<name> tensors.
  std::vector<std::pair<std::string, torch::Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, torch::Tensor>>& state, int64_t step_count);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  AdamWOptions options_;
  std::map<std::string, std::pair<torch::Tensor, torch::Tensor>> moments_;
  int64_t step_count_ = 0;
};

/// Scales gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(const std::vector<std::pair<std::string, torch::Tensor>>& params, double max_norm);

}  // namespace dig
