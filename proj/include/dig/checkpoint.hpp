#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace dig {

inline constexpr int kCheckpointFormatVersion = 1;

/// Named arrays plus metadata. Tensor order is preserved on disk.
struct Checkpoint {
  /// "pretrain" or "finetune".
  std::string kind;
  int64_t step = 0;
  /// Encoder architecture fingerprint (EncoderConfig::fingerprint).
  std::string fingerprint;
  nlohmann::json config = nlohmann::json::object();
  /// Task-specific metadata (task, decoder kind, ...).
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  /// nullptr when absent.
  const torch::Tensor* find(const std::string& name) const;
  const torch::Tensor& at(const std::string& name) const;
  /// Entries whose name starts with `prefix`, with the prefix stripped.
  std::vector<std::pair<std::string, torch::Tensor>> with_prefix(const std::string& prefix) const;
};

/// Layout: 8-byte magic, little-endian u64 metadata length, UTF-8 JSON
/// metadata, then the raw little-endian array bytes. Written atomically via a
/// temporary file.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws IoError, CorruptData (truncated, bad checksum) or Mismatch (format version).
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `module`, names prefixed with `prefix`.
std::vector<std::pair<std::string, torch::Tensor>> module_state(const torch::nn::Module& module,
                                                                const std::string& prefix = "");
/// Copies matching entries (`prefix` + name) into the module. Every module
/// tensor must be present with the same shape and dtype.
void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint, const std::string& prefix = "");

/// Throws Mismatch naming both fingerprints when they differ.
void require_fingerprint(const Checkpoint& checkpoint, const std::string& expected);

}  // namespace dig
