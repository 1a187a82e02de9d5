#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "dig/checkpoint.hpp"
#include "dig/config.hpp"
#include "dig/corpus.hpp"
#include "dig/decoders.hpp"
#include "dig/model.hpp"

namespace dig {

/// Sub-seed for a named random stream ("split", "encoder", "head", "augment").
std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};

/// Seeded shuffle of [0, n) cut at round(n * train_fraction); both parts non-empty.
Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed);

/// Encoder drawn from `seed`, or loaded from the "encoder." tensors of a
/// pretrain or finetune checkpoint (fingerprint checked).
VitEncoder make_encoder(const EncoderConfig& config, const std::string& checkpoint, std::uint64_t seed);

/// Sets requires_grad on encoder parameters: "none" trains all, "encoder"
/// freezes all, "all-but-self-attention" trains only names containing ".attn.".
void apply_freeze(VitEncoder& encoder, const std::string& policy);

/// recognition-ctc -> ctc, recognition-attn -> attention, recognition-transformer -> transformer.
std::string decoder_for_task(const std::string& task);
bool is_recognition(const std::string& task);

/// Encoder plus one task head, registered as "encoder" and "head".
class TaskModelImpl : public torch::nn::Module {
 public:
  TaskModelImpl(VitEncoder encoder, const std::string& task, const TokenVocabulary& vocab = TokenVocabulary{});

  torch::Tensor loss(const torch::Tensor& images, const torch::Tensor& targets,
                     const std::vector<std::string>& labels);

  const std::string& task() const { return task_; }

  VitEncoder encoder{nullptr};
  std::shared_ptr<RecognitionHead> recognizer;
  SegmentationHead segmenter{nullptr};
  SuperResolutionHead upscaler{nullptr};

 private:
  std::string task_;
};
TORCH_MODULE(TaskModel);

/// Inputs and targets of one fine-tuning batch for a task.
struct TaskBatch {
  torch::Tensor images;   // encoder input [B,32,128,3]
  torch::Tensor targets;  // [B,32,128] masks or [B,32,128,3] images; undefined for recognition
  std::vector<std::string> labels;
  std::vector<std::filesystem::path> paths;
};

/// Loads the entries of `indices`; `augment_seed` != 0 applies the fine-tune augmentation.
TaskBatch load_task_batch(const CorpusManifest& manifest, const std::vector<std::size_t>& indices,
                          const std::string& task, int sr_scale, std::uint64_t augment_seed);

/// Low-resolution input for super-resolution: area downsample by `scale`, then bicubic back to 32x128.
Image degrade(const Image& image, int scale);

/// Scores a task model on `indices`: word accuracy, mean IoU or mean PSNR/SSIM.
/// Recognition predictions are written as "<image-path>\t<prediction>" lines;
/// dense tasks write a per-image CSV.
nlohmann::json evaluate_task(TaskModel& model, const CorpusManifest& manifest,
                             const std::vector<std::size_t>& indices, int sr_scale, std::ostream* dump = nullptr);

Checkpoint make_task_checkpoint(const TaskModel& model, int64_t step, const RunConfig& config);
/// Rebuilds the encoder and head recorded in a finetune checkpoint.
TaskModel load_task_model(const Checkpoint& checkpoint);

struct FinetuneResult {
  std::filesystem::path checkpoint;
  nlohmann::json report;
};

/// Trains the configured task on the training split of `config.finetune.manifest`
/// and evaluates on the held-out split. Writes checkpoints/finetune.ckpt and
/// reports/finetune.json.
FinetuneResult run_finetune(const RunConfig& config, const std::filesystem::path& run_dir);

/// Evaluates a finetune checkpoint (`config.eval`) on every manifest entry.
nlohmann::json run_eval(const RunConfig& config, const std::filesystem::path& run_dir);

}  // namespace dig
