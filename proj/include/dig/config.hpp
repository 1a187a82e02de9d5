#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dig/corpus.hpp"
#include "dig/model.hpp"
#include "dig/objectives.hpp"
#include "dig/views.hpp"

namespace dig {

/// Shared optimizer/schedule block. A positive `steps` wins over `epochs`;
/// likewise `warmup_steps` over `warmup_epochs`.
struct OptimConfig {
  int64_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  int64_t steps = 0;
  double epochs = 0.0;
  int64_t warmup_steps = 0;
  double warmup_epochs = 0.0;
  /// Global-norm clip; 0 disables.
  double grad_clip = 0.0;

  int64_t total_steps(std::size_t dataset_size) const;
  int64_t warmup(std::size_t dataset_size) const;
  int64_t steps_per_epoch(std::size_t dataset_size) const;
  void validate() const;
};

struct ObjectiveConfig {
  /// joint | contrastive | reconstruction
  std::string mode = "joint";
  double alpha = 0.1;
  double temperature = 0.2;
  bool negatives_include_same_image = true;
  double momentum = 0.996;
  bool normalize = true;

  ContrastiveOptions contrastive() const { return {temperature, negatives_include_same_image}; }
  LossWeights weights() const { return {mode == "contrastive" ? 0.0 : alpha}; }
  bool uses_contrastive() const { return mode != "reconstruction"; }
  bool uses_reconstruction() const { return mode != "contrastive"; }
  void validate() const;
};

struct CorpusSection {
  CorpusSpec spec;
  std::string out_dir = "data/corpus";
};

struct PretrainConfig {
  OptimConfig optim;
  std::string manifest;
  int64_t log_every = 10;
  int64_t checkpoint_every = 1000;
  /// Single-threaded, strictly ordered data loading.
  bool exact = true;
  /// Resume from this checkpoint when non-empty.
  std::string resume;
};

struct FinetuneConfig {
  OptimConfig optim;
  /// recognition-ctc | recognition-attn | recognition-transformer | segmentation | super-resolution
  std::string task = "recognition-ctc";
  /// none | encoder | all-but-self-attention
  std::string freeze = "none";
  /// Pre-trained checkpoint; empty trains from a random encoder.
  std::string checkpoint;
  std::string manifest;
  bool augment = true;
  double train_fraction = 0.9;
  /// Low-resolution factor for super-resolution pairs.
  int sr_scale = 2;
  int64_t log_every = 10;
};

struct ProbeConfig {
  OptimConfig optim;
  std::string decoder = "ctc";
  /// Empty probes a randomly initialized encoder.
  std::string checkpoint;
  std::string manifest;
  double train_fraction = 0.9;
};

struct EvalConfig {
  /// Fine-tuned checkpoint (encoder + task head).
  std::string checkpoint;
  std::string manifest;
};

struct ReconstructConfig {
  std::string checkpoint;
  std::string manifest;
  std::size_t panels = 16;
  /// Images scored for masked-pixel MSE; taken from the end of the manifest.
  std::size_t eval_count = 200;
};

struct RunConfig {
  std::string name = "run";
  std::string preset = "desk";
  std::uint64_t seed = 1;
  EncoderConfig model;
  CorpusSection corpus;
  ViewConfig views;
  ObjectiveConfig objectives;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  ProbeConfig probe;
  EvalConfig eval;
  ReconstructConfig reconstruct;

  /// "desk" (single machine) or "full" (ViT-Small with full-scale optimisation settings).
  static RunConfig from_preset(const std::string& name);
  void validate() const;
  /// Stable hash of the canonical JSON; identifies cached artifacts.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);
void to_json(nlohmann::json& j, const ObjectiveConfig& c);
void from_json(const nlohmann::json& j, ObjectiveConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses a config file. Keys absent from the file keep the values of the
/// preset named in it (default desk); unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const nlohmann::json& j);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides. Values parse as JSON when possible and
/// fall back to plain strings. Unknown keys are rejected; the result is
/// validated once after all overrides when `validate` is set.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides, bool validate = true);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace dig
