#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dig/checkpoint.hpp"
#include "dig/config.hpp"
#include "dig/corpus.hpp"
#include "dig/model.hpp"
#include "dig/optim.hpp"

namespace dig {

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;
  double loss_c = 0.0;
  double loss_m = 0.0;
  double lr = 0.0;
};

/// Encoder inputs for one step, stacked over the batch.
struct PretrainBatch {
  torch::Tensor masked_view;     // [B,32,128,3]
  torch::Tensor mask;            // [B,8,32] bool
  torch::Tensor augmented_view;  // [B,32,128,3]
  torch::Tensor target;          // [B,32,128,3]
  std::vector<std::size_t> indices;

  PretrainBatch to(torch::ScalarType dtype) const;
};

/// Builds one view pair per image with the matching seed.
PretrainBatch make_pretrain_batch(const std::vector<Image>& images, const std::vector<std::uint64_t>& seeds,
                                  const ViewConfig& views, std::vector<std::size_t> indices = {});

/// The view settings actually used for `objectives`: contrastive-only runs
/// leave the masked view unmasked.
ViewConfig effective_views(const ViewConfig& views, const ObjectiveConfig& objectives);

struct PretrainLosses {
  torch::Tensor loss, loss_c, loss_m;
};

/// Forward pass of the pre-training objective (no parameter update).
PretrainLosses pretrain_losses(DiGModel& model, const PretrainBatch& batch, const ObjectiveConfig& objectives);

/// Forward, backward, one AdamW update at `lr`, then the EMA update.
/// Throws NumericalError naming the batch indices when the loss is not finite.
StepMetrics pretrain_step(DiGModel& model, AdamW& optimizer, const PretrainBatch& batch,
                          const ObjectiveConfig& objectives, double lr, double grad_clip = 0.0);

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int64_t epoch);
/// Dataset indices of 1-based `step`; incomplete trailing batches are dropped.
std::vector<std::size_t> batch_indices(std::size_t n, int64_t batch_size, std::uint64_t seed, int64_t step);
int64_t epoch_of(std::size_t n, int64_t batch_size, int64_t step);
std::uint64_t view_seed(std::uint64_t seed, int64_t epoch, std::size_t index);

/// Model with its parameters drawn from the run seed.
DiGModel make_model(const RunConfig& config);
AdamW make_optimizer(const std::vector<std::pair<std::string, torch::Tensor>>& params, const OptimConfig& optim);

Checkpoint make_pretrain_checkpoint(const DiGModel& model, const AdamW* optimizer, int64_t step,
                                    const RunConfig& config);
/// Loads model (and optimizer, when given) state; checks the encoder fingerprint.
void restore_pretrain(DiGModel& model, AdamW* optimizer, const Checkpoint& checkpoint);

/// runs/<name>/{config.json, metrics.csv, checkpoints/, reports/, panels/}
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path panels() const { return root / "panels"; }

  /// Creates the directory tree.
  static RunPaths create(const std::filesystem::path& root);
};

inline constexpr const char* kMetricsHeader = "step,loss,loss_c,loss_m,lr";

struct PretrainResult {
  std::filesystem::path checkpoint;
  StepMetrics last;
  int64_t steps_run = 0;
  int64_t total_steps = 0;
};

/// Full pre-training loop over `config.pretrain.manifest`. Metrics are logged
/// every `log_every` steps and at the last step; checkpoints every
/// `checkpoint_every` steps plus checkpoints/last.ckpt at the end. Resumes from
/// `config.pretrain.resume` when set.
PretrainResult run_pretrain(const RunConfig& config, const std::filesystem::path& run_dir);

}  // namespace dig
