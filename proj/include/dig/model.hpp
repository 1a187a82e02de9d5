#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "dig/views.hpp"

namespace dig {

inline constexpr int64_t kPatchDim = kPatchSize * kPatchSize * kChannels;  // 48
inline constexpr int64_t kInstanceCount = 4;                              // patch-head windows
inline constexpr int64_t kEmbeddingDim = 256;                              // projection output

/// ViT size plus contrastive-head widths. Presets: tiny/small/base (standard ViT
/// widths, depth 12) and desk (96-d, depth 4) for single-machine runs.
struct EncoderConfig {
  std::string preset = "desk";
  int64_t embed_dim = 96;
  int64_t depth = 4;
  int64_t heads = 4;
  int64_t mlp_ratio = 4;
  int64_t projection_hidden = 512;
  int64_t projection_dim = kEmbeddingDim;

  static EncoderConfig from_preset(const std::string& name);
  void validate() const;
  /// Architecture identity; checkpoints from another fingerprint cannot be loaded.
  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// Fills with a normal distribution truncated to [-2 std, 2 std].
void trunc_normal_(torch::Tensor& t, double std = 0.02);

/// [B,32,128,3] -> [B,256,48]; patch vectors are (row, col, channel) ordered.
torch::Tensor patchify(const torch::Tensor& images);
/// Inverse of patchify: [B,256,48] -> [B,32,128,3]. Also accepts [B,256,16*C].
torch::Tensor unpatchify(const torch::Tensor& patches, int64_t channels = kChannels);
/// [B,8,32] bool patch mask -> [B,32,128] bool pixel mask.
torch::Tensor pixel_mask(const torch::Tensor& patch_mask);
/// Stacks PatchMasks into a [B,8,32] bool tensor.
torch::Tensor mask_tensor(const std::vector<PatchMask>& masks);
/// Stacks images into a [B,32,128,3] float tensor.
torch::Tensor image_tensor(const std::vector<Image>& images);

// ---------------------------------------------------------------------------
// Building blocks

/// Multi-head self-attention with a fused qkv projection.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  SelfAttentionImpl(int64_t dim, int64_t heads);
  /// `causal` masks every key after the query position.
  torch::Tensor forward(const torch::Tensor& x, bool causal = false);

  torch::nn::Linear qkv{nullptr}, proj{nullptr};
  int64_t heads;
};
TORCH_MODULE(SelfAttention);

/// Multi-head attention from queries `x` to a separate `context` sequence.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int64_t dim, int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context);

  torch::nn::Linear q{nullptr}, kv{nullptr}, proj{nullptr};
  int64_t heads;
};
TORCH_MODULE(CrossAttention);

class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int64_t dim, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

/// Pre-norm Transformer block: x + attn(norm(x)), then x + mlp(norm(x)).
class BlockImpl : public torch::nn::Module {
 public:
  BlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  SelfAttention attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(Block);

/// Linear layer initialized with truncated normal weights and zero bias.
torch::nn::Linear make_linear(int64_t in, int64_t out);
torch::nn::LayerNorm make_layer_norm(int64_t dim);

// ---------------------------------------------------------------------------
// Encoder F

class VitEncoderImpl : public torch::nn::Module {
 public:
  explicit VitEncoderImpl(const EncoderConfig& config);

  /// Patch embeddings with mask substitution, before positional embeddings.
  /// `mask` is [B,8,32] bool or undefined.
  torch::Tensor embed_patches(const torch::Tensor& images, const torch::Tensor& mask = {});
  /// Full token embedding: embed_patches + positional embeddings, [B,256,D].
  torch::Tensor embed_tokens(const torch::Tensor& images, const torch::Tensor& mask = {});
  /// Transformer stack over tokens; returns the feature map [B,8,32,D].
  torch::Tensor encode(const torch::Tensor& tokens);
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& mask = {});

  const EncoderConfig& config() const { return config_; }

  torch::nn::Linear patch_embed{nullptr};
  torch::Tensor mask_token;
  torch::Tensor pos_embed;
  std::vector<Block> blocks;

 private:
  EncoderConfig config_;
};
TORCH_MODULE(VitEncoder);

/// Splits the 32 feature columns into 4 windows of 8 and mean-pools each:
/// [B,8,32,D] -> [B,4,D], left to right.
torch::Tensor patch_head(const torch::Tensor& feature, int64_t instances = kInstanceCount);

/// fc + LayerNorm per layer, GELU after every layer but the last.
class MlpHeadImpl : public torch::nn::Module {
 public:
  explicit MlpHeadImpl(const std::vector<int64_t>& widths);
  torch::Tensor forward(torch::Tensor x);

  std::vector<torch::nn::Linear> fcs;
  std::vector<torch::nn::LayerNorm> norms;
};
TORCH_MODULE(MlpHead);

/// Projection head K: 3 layers, D -> hidden -> hidden -> 256.
MlpHead make_projection_head(const EncoderConfig& config);
/// Prediction head Q: 2 layers, 256 -> hidden -> 256.
MlpHead make_prediction_head(const EncoderConfig& config);

/// Linear per-token map to a 4x4 pixel block: [B,8,32,D] -> [B,32,128,C].
class PixelHeadImpl : public torch::nn::Module {
 public:
  PixelHeadImpl(int64_t dim, int64_t channels);
  torch::Tensor forward(const torch::Tensor& feature);

  torch::nn::Linear fc{nullptr};
  int64_t channels;
};
TORCH_MODULE(PixelHead);

// ---------------------------------------------------------------------------
// Pre-training model

struct MomentumBranchImpl : public torch::nn::Module {
  explicit MomentumBranchImpl(const EncoderConfig& config);
  VitEncoder encoder{nullptr};
  MlpHead projector{nullptr};
};
TORCH_MODULE(MomentumBranch);

struct QueryOutput {
  torch::Tensor feature;  // [B,8,32,D]
  torch::Tensor queries;  // [B,4,256], L2-normalized when enabled
};

/// All learnable state: online F, K, Q, reconstruction head, mask token and
/// positional embeddings, plus the EMA copies F_t, K_t. P has no parameters.
class DiGModelImpl : public torch::nn::Module {
 public:
  explicit DiGModelImpl(const EncoderConfig& config, bool normalize = true);

  /// Online branch: F -> P -> K -> Q.
  QueryOutput queries(const torch::Tensor& images, const torch::Tensor& mask = {});
  /// project(patch_head(feature)) without the predictor; normalized when enabled.
  torch::Tensor project(const torch::Tensor& feature);
  torch::Tensor predict(const torch::Tensor& projected);
  /// Momentum branch F_t -> P_t -> K_t under no-grad; [B,4,256].
  torch::Tensor momentum_keys(const torch::Tensor& images, const torch::Tensor& mask = {});
  /// Reconstruction head over a feature map: [B,32,128,3].
  torch::Tensor reconstruct(const torch::Tensor& feature);

  /// theta_t <- m * theta_t + (1 - m) * theta for every momentum parameter.
  void ema_update(double m);
  /// Sets every momentum parameter equal to its online counterpart.
  void sync_momentum();

  /// Online parameters (trainable), excluding the momentum branch.
  std::vector<std::pair<std::string, torch::Tensor>> online_parameters() const;
  /// (momentum, online) pairs; shapes checked.
  std::vector<std::pair<torch::Tensor, torch::Tensor>> momentum_pairs() const;

  const EncoderConfig& config() const { return config_; }
  bool normalize() const { return normalize_; }

  VitEncoder encoder{nullptr};
  MlpHead projector{nullptr};
  MlpHead predictor{nullptr};
  PixelHead recon_head{nullptr};
  MomentumBranch momentum{nullptr};

 private:
  EncoderConfig config_;
  bool normalize_;
};
TORCH_MODULE(DiGModel);

/// Throws InvalidArgument when a tensor holds NaN or Inf.
void require_finite(const torch::Tensor& t, const char* what);

}  // namespace dig
