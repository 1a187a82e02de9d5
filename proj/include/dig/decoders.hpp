#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dig/corpus.hpp"
#include "dig/model.hpp"

namespace dig {

inline constexpr int64_t kMaxDecodeLength = static_cast<int64_t>(kMaxLabelLength);

/// Class indices shared by every recognition head: blank 0, charset symbols
/// 1..n, then end, start and pad. CTC heads use the first n+1 classes only.
class TokenVocabulary {
 public:
  TokenVocabulary() = default;
  explicit TokenVocabulary(Charset charset);

  const Charset& charset() const { return charset_; }
  int64_t blank() const { return 0; }
  int64_t end() const { return static_cast<int64_t>(charset_.size()) + 1; }
  int64_t start() const { return end() + 1; }
  int64_t pad() const { return end() + 2; }
  int64_t ctc_classes() const { return end(); }
  int64_t size() const { return end() + 3; }
  bool is_symbol(int64_t id) const { return id >= 1 && id < end(); }

  /// Charset ids of `text`; rejects out-of-vocabulary symbols.
  std::vector<int64_t> encode(const std::string& text) const;
  /// Concatenates symbol ids; specials are skipped.
  std::string decode(const std::vector<int64_t>& ids) const;

 private:
  Charset charset_;
};

struct RecognitionOutput {
  torch::Tensor logits;             // [B,T,classes]
  std::vector<std::string> texts;   // decoded strings
  torch::Tensor attention;          // [B,T,256] for the attention decoder, else undefined
};

/// Argmax per step, collapse adjacent repeats, drop blanks. `logits` is [T,C].
std::string ctc_greedy_decode(const torch::Tensor& logits, const TokenVocabulary& vocab);
std::vector<std::string> ctc_greedy_decode_batch(const torch::Tensor& logits, const TokenVocabulary& vocab);

/// Standard CTC loss over [B,T,C] logits, averaged over the batch (each
/// sample's loss divided by its label length).
torch::Tensor ctc_loss(const torch::Tensor& logits, const std::vector<std::string>& labels,
                       const TokenVocabulary& vocab);

/// Common interface of the recognition heads used by fine-tuning and probes.
class RecognitionHead : public torch::nn::Module {
 public:
  virtual ~RecognitionHead() = default;
  /// Task loss with teacher forcing where applicable.
  virtual torch::Tensor loss(const torch::Tensor& feature, const std::vector<std::string>& labels) = 0;
  /// Greedy inference.
  virtual RecognitionOutput infer(const torch::Tensor& feature) = 0;
  virtual std::string kind() const = 0;
  const TokenVocabulary& vocabulary() const { return vocab_; }

 protected:
  explicit RecognitionHead(TokenVocabulary vocab) : vocab_(std::move(vocab)) {}
  TokenVocabulary vocab_;
};

/// Rows averaged away, then a linear map per column: [B,8,32,D] -> [B,32,n+1].
class CtcHead : public RecognitionHead {
 public:
  CtcHead(int64_t dim, TokenVocabulary vocab = {});
  torch::Tensor forward(const torch::Tensor& feature);
  torch::Tensor loss(const torch::Tensor& feature, const std::vector<std::string>& labels) override;
  RecognitionOutput infer(const torch::Tensor& feature) override;
  std::string kind() const override { return "ctc"; }

  torch::nn::Linear fc{nullptr};
};

/// GRU cell with additive attention over the 256 encoder tokens.
class AttentionDecoder : public RecognitionHead {
 public:
  AttentionDecoder(int64_t dim, TokenVocabulary vocab = {}, int64_t hidden = 256);
  /// Teacher-forced logits for `labels`: [B, max_len + 1, classes].
  RecognitionOutput forward(const torch::Tensor& feature, const std::vector<std::string>& labels);
  torch::Tensor loss(const torch::Tensor& feature, const std::vector<std::string>& labels) override;
  RecognitionOutput infer(const torch::Tensor& feature) override;
  std::string kind() const override { return "attention"; }

  torch::nn::Embedding embed{nullptr};
  torch::nn::GRUCell cell{nullptr};
  torch::nn::Linear init{nullptr}, att_hidden{nullptr}, att_feature{nullptr}, att_score{nullptr}, out{nullptr};
  int64_t hidden_size;

 private:
  struct StepResult {
    torch::Tensor hidden, logits, weights;
  };
  StepResult step(const torch::Tensor& tokens, const torch::Tensor& hidden, const torch::Tensor& memory,
                  const torch::Tensor& memory_proj);
};

struct TransformerDecoderConfig {
  int64_t dim = 128;
  int64_t layers = 2;
  int64_t heads = 4;
  int64_t mlp_ratio = 4;

  static TransformerDecoderConfig desk() { return {}; }
  static TransformerDecoderConfig full() { return {512, 6, 8, 4}; }
};

class TransformerDecoderLayerImpl : public torch::nn::Module {
 public:
  TransformerDecoderLayerImpl(int64_t dim, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& memory);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
  SelfAttention self_attn{nullptr};
  CrossAttention cross_attn{nullptr};
  Mlp mlp{nullptr};
};
TORCH_MODULE(TransformerDecoderLayer);

/// Autoregressive decoder with causal self-attention and cross-attention.
class TransformerDecoder : public RecognitionHead {
 public:
  TransformerDecoder(int64_t dim, TokenVocabulary vocab = {},
                     TransformerDecoderConfig config = TransformerDecoderConfig::desk());
  /// Logits for the given input ids [B,T] (start token first): [B,T,classes].
  torch::Tensor forward_ids(const torch::Tensor& feature, const torch::Tensor& ids);
  /// Teacher-forced logits: [B, max_len + 1, classes].
  RecognitionOutput forward(const torch::Tensor& feature, const std::vector<std::string>& labels);
  torch::Tensor loss(const torch::Tensor& feature, const std::vector<std::string>& labels) override;
  RecognitionOutput infer(const torch::Tensor& feature) override;
  std::string kind() const override { return "transformer"; }

  torch::nn::Linear memory_proj{nullptr}, out{nullptr};
  torch::nn::Embedding embed{nullptr};
  torch::Tensor pos_embed;
  std::vector<TransformerDecoderLayer> layers;
  torch::nn::LayerNorm norm{nullptr};
};

/// Builds "ctc", "attention" or "transformer".
std::shared_ptr<RecognitionHead> make_recognition_head(const std::string& kind, int64_t dim,
                                                       const TokenVocabulary& vocab = TokenVocabulary{});

/// Three self-attention blocks then a per-token linear map to a 4x4 block of
/// `channels` values, unfolded to [B,32,128,channels].
class DenseHeadImpl : public torch::nn::Module {
 public:
  DenseHeadImpl(int64_t dim, int64_t channels, int64_t blocks = 3, int64_t heads = 2);
  torch::Tensor forward(const torch::Tensor& feature);

  std::vector<Block> blocks;
  torch::nn::LayerNorm norm{nullptr};
  PixelHead pixel{nullptr};
};
TORCH_MODULE(DenseHead);

/// Text segmentation: per-pixel foreground probability [B,32,128].
class SegmentationHeadImpl : public torch::nn::Module {
 public:
  explicit SegmentationHeadImpl(int64_t dim);
  torch::Tensor forward(const torch::Tensor& feature);
  /// L1 loss against a [B,32,128] target in [0,1].
  torch::Tensor loss(const torch::Tensor& feature, const torch::Tensor& target);

  DenseHead head{nullptr};
};
TORCH_MODULE(SegmentationHead);

/// Super-resolution: RGB image [B,32,128,3].
class SuperResolutionHeadImpl : public torch::nn::Module {
 public:
  explicit SuperResolutionHeadImpl(int64_t dim);
  /// Unclamped output, used for the training loss.
  torch::Tensor forward_raw(const torch::Tensor& feature);
  /// Output clamped to [0,1].
  torch::Tensor forward(const torch::Tensor& feature);
  /// L2 loss against the high-resolution target.
  torch::Tensor loss(const torch::Tensor& feature, const torch::Tensor& target);

  DenseHead head{nullptr};
};
TORCH_MODULE(SuperResolutionHead);

}  // namespace dig
