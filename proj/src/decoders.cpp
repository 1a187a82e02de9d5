#include "dig/decoders.hpp"

#include <limits>

#include "dig/errors.hpp"
#include "dig/objectives.hpp"

namespace dig {

namespace F = torch::nn::functional;

TokenVocabulary::TokenVocabulary(Charset charset) : charset_(std::move(charset)) {}

std::vector<int64_t> TokenVocabulary::encode(const std::string& text) const {
  charset_.validate(text);
  std::vector<int64_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(charset_.index_of(c) + 1);
  return ids;
}

std::string TokenVocabulary::decode(const std::vector<int64_t>& ids) const {
  std::string out;
  for (int64_t id : ids)
    if (is_symbol(id)) out.push_back(charset_.symbols()[static_cast<std::size_t>(id - 1)]);
  return out;
}

// ---------------------------------------------------------------------------
// CTC

std::string ctc_greedy_decode(const torch::Tensor& logits, const TokenVocabulary& vocab) {
  if (logits.dim() != 2) throw InvalidArgument("ctc_greedy_decode expects [T,C] logits");
  auto best = logits.argmax(-1).to(torch::kLong).contiguous();
  const int64_t* p = best.data_ptr<int64_t>();
  std::vector<int64_t> kept;
  int64_t previous = -1;
  for (int64_t t = 0; t < best.size(0); ++t) {
    if (p[t] != previous && p[t] != vocab.blank()) kept.push_back(p[t]);
    previous = p[t];
  }
  return vocab.decode(kept);
}

std::vector<std::string> ctc_greedy_decode_batch(const torch::Tensor& logits, const TokenVocabulary& vocab) {
  if (logits.dim() != 3) throw InvalidArgument("ctc_greedy_decode_batch expects [B,T,C] logits");
  std::vector<std::string> out;
  for (int64_t b = 0; b < logits.size(0); ++b) out.push_back(ctc_greedy_decode(logits[b], vocab));
  return out;
}

torch::Tensor ctc_loss(const torch::Tensor& logits, const std::vector<std::string>& labels,
                       const TokenVocabulary& vocab) {
  if (logits.dim() != 3 || logits.size(0) != static_cast<int64_t>(labels.size()))
    throw InvalidArgument("ctc_loss expects [B,T,C] logits and one label per sample");
  const int64_t b = logits.size(0), t = logits.size(1);
  std::vector<int64_t> flat, lengths;
  for (const auto& label : labels) {
    auto ids = vocab.encode(label);
    if (static_cast<int64_t>(ids.size()) > t) throw InvalidArgument("label '" + label + "' is longer than the sequence");
    flat.insert(flat.end(), ids.begin(), ids.end());
    lengths.push_back(static_cast<int64_t>(ids.size()));
  }
  auto log_probs = logits.log_softmax(-1).transpose(0, 1);
  auto targets = torch::tensor(flat, torch::kLong);
  auto input_lengths = torch::full({b}, t, torch::kLong);
  auto target_lengths = torch::tensor(lengths, torch::kLong);
  return torch::ctc_loss(log_probs, targets, input_lengths, target_lengths, vocab.blank(), at::Reduction::Mean,
                         true);
}

CtcHead::CtcHead(int64_t dim, TokenVocabulary vocab) : RecognitionHead(std::move(vocab)) {
  fc = register_module("fc", make_linear(dim, vocab_.ctc_classes()));
}

torch::Tensor CtcHead::forward(const torch::Tensor& feature) {
  if (feature.dim() != 4) throw InvalidArgument("CTC head expects a [B,H,W,D] feature map");
  return fc(feature.mean(1));
}

torch::Tensor CtcHead::loss(const torch::Tensor& feature, const std::vector<std::string>& labels) {
  return ctc_loss(forward(feature), labels, vocab_);
}

RecognitionOutput CtcHead::infer(const torch::Tensor& feature) {
  RecognitionOutput out;
  out.logits = forward(feature);
  out.texts = ctc_greedy_decode_batch(out.logits, vocab_);
  return out;
}

// ---------------------------------------------------------------------------
// Autoregressive helpers

namespace {

/// Decoder inputs [start, y...] and targets [y..., end], padded to max_len + 1.
std::pair<torch::Tensor, torch::Tensor> teacher_forcing(const std::vector<std::string>& labels,
                                                        const TokenVocabulary& vocab) {
  std::vector<std::vector<int64_t>> encoded;
  std::size_t longest = 0;
  for (const auto& label : labels) {
    encoded.push_back(vocab.encode(label));
    longest = std::max(longest, encoded.back().size());
  }
  const int64_t b = static_cast<int64_t>(labels.size()), t = static_cast<int64_t>(longest) + 1;
  auto inputs = torch::full({b, t}, vocab.pad(), torch::kLong);
  auto targets = torch::full({b, t}, vocab.pad(), torch::kLong);
  auto in = inputs.accessor<int64_t, 2>();
  auto tg = targets.accessor<int64_t, 2>();
  for (int64_t i = 0; i < b; ++i) {
    const auto& ids = encoded[static_cast<std::size_t>(i)];
    in[i][0] = vocab.start();
    for (std::size_t j = 0; j < ids.size(); ++j) {
      in[i][static_cast<int64_t>(j) + 1] = ids[j];
      tg[i][static_cast<int64_t>(j)] = ids[j];
    }
    tg[i][static_cast<int64_t>(ids.size())] = vocab.end();
  }
  return {inputs, targets};
}

torch::Tensor sequence_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets,
                                     const TokenVocabulary& vocab) {
  return F::cross_entropy(logits.reshape({-1, logits.size(-1)}), targets.reshape({-1}),
                          F::CrossEntropyFuncOptions().ignore_index(vocab.pad()));
}

/// Suppresses classes an autoregressive decoder must never emit.
torch::Tensor mask_specials(const torch::Tensor& logits, const TokenVocabulary& vocab) {
  auto masked = logits.clone();
  const double ninf = -std::numeric_limits<double>::infinity();
  masked.index_fill_(-1, torch::tensor({vocab.blank(), vocab.start(), vocab.pad()}, torch::kLong), ninf);
  return masked;
}

/// Collects symbol ids per sample up to the first end token.
std::vector<std::string> collect(const std::vector<std::vector<int64_t>>& ids, const TokenVocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& seq : ids) out.push_back(vocab.decode(seq));
  return out;
}

torch::Tensor flatten_tokens(const torch::Tensor& feature) {
  if (feature.dim() != 4) throw InvalidArgument("decoder expects a [B,H,W,D] feature map");
  return feature.reshape({feature.size(0), feature.size(1) * feature.size(2), feature.size(3)});
}

}  // namespace

// ---------------------------------------------------------------------------
// Attention decoder

AttentionDecoder::AttentionDecoder(int64_t dim, TokenVocabulary vocab, int64_t hidden)
    : RecognitionHead(std::move(vocab)), hidden_size(hidden) {
  embed = register_module("embed", torch::nn::Embedding(vocab_.size(), hidden));
  cell = register_module("cell", torch::nn::GRUCell(hidden + dim, hidden));
  init = register_module("init", make_linear(dim, hidden));
  att_hidden = register_module("att_hidden", make_linear(hidden, hidden));
  att_feature = register_module("att_feature", make_linear(dim, hidden));
  att_score = register_module("att_score", make_linear(hidden, 1));
  out = register_module("out", make_linear(hidden + dim, vocab_.size()));
}

AttentionDecoder::StepResult AttentionDecoder::step(const torch::Tensor& tokens, const torch::Tensor& hidden,
                                                    const torch::Tensor& memory, const torch::Tensor& memory_proj) {
  auto energy = att_score(torch::tanh(memory_proj + att_hidden(hidden).unsqueeze(1))).squeeze(-1);
  auto weights = energy.softmax(-1);
  auto context = torch::bmm(weights.unsqueeze(1), memory).squeeze(1);
  auto next = cell(torch::cat({embed(tokens), context}, -1), hidden);
  return {next, out(torch::cat({next, context}, -1)), weights};
}

RecognitionOutput AttentionDecoder::forward(const torch::Tensor& feature, const std::vector<std::string>& labels) {
  auto memory = flatten_tokens(feature);
  auto memory_proj = att_feature(memory);
  auto [inputs, targets] = teacher_forcing(labels, vocab_);
  auto hidden = torch::tanh(init(memory.mean(1)));
  std::vector<torch::Tensor> logits, weights;
  for (int64_t t = 0; t < inputs.size(1); ++t) {
    auto r = step(inputs.select(1, t), hidden, memory, memory_proj);
    hidden = r.hidden;
    logits.push_back(r.logits);
    weights.push_back(r.weights);
  }
  RecognitionOutput result;
  result.logits = torch::stack(logits, 1);
  result.attention = torch::stack(weights, 1);
  return result;
}

torch::Tensor AttentionDecoder::loss(const torch::Tensor& feature, const std::vector<std::string>& labels) {
  auto targets = teacher_forcing(labels, vocab_).second;
  return sequence_cross_entropy(forward(feature, labels).logits, targets, vocab_);
}

RecognitionOutput AttentionDecoder::infer(const torch::Tensor& feature) {
  auto memory = flatten_tokens(feature);
  auto memory_proj = att_feature(memory);
  const int64_t b = memory.size(0);
  auto hidden = torch::tanh(init(memory.mean(1)));
  auto tokens = torch::full({b}, vocab_.start(), torch::kLong);
  std::vector<std::vector<int64_t>> ids(static_cast<std::size_t>(b));
  std::vector<bool> done(static_cast<std::size_t>(b), false);
  std::vector<torch::Tensor> logits, weights;
  for (int64_t t = 0; t <= kMaxDecodeLength; ++t) {
    auto r = step(tokens, hidden, memory, memory_proj);
    hidden = r.hidden;
    auto masked = mask_specials(r.logits, vocab_);
    if (t == kMaxDecodeLength) masked.index_fill_(-1, torch::arange(1, vocab_.end(), torch::kLong),
                                                  -std::numeric_limits<double>::infinity());
    logits.push_back(masked);
    weights.push_back(r.weights);
    tokens = masked.argmax(-1);
    auto acc = tokens.accessor<int64_t, 1>();
    bool all_done = true;
    for (int64_t i = 0; i < b; ++i) {
      auto&& finished = done[static_cast<std::size_t>(i)];
      if (!finished) {
        if (acc[i] == vocab_.end()) finished = true;
        else ids[static_cast<std::size_t>(i)].push_back(acc[i]);
      }
      all_done = all_done && finished;
    }
    if (all_done) break;
  }
  RecognitionOutput result;
  result.logits = torch::stack(logits, 1);
  result.attention = torch::stack(weights, 1);
  result.texts = collect(ids, vocab_);
  return result;
}

// ---------------------------------------------------------------------------
// Transformer decoder

TransformerDecoderLayerImpl::TransformerDecoderLayerImpl(int64_t dim, int64_t heads, int64_t mlp_ratio) {
  norm1 = register_module("norm1", make_layer_norm(dim));
  self_attn = register_module("self_attn", SelfAttention(dim, heads));
  norm2 = register_module("norm2", make_layer_norm(dim));
  cross_attn = register_module("cross_attn", CrossAttention(dim, heads));
  norm3 = register_module("norm3", make_layer_norm(dim));
  mlp = register_module("mlp", Mlp(dim, dim * mlp_ratio));
}

torch::Tensor TransformerDecoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& memory) {
  auto h = x + self_attn(norm1(x), true);
  h = h + cross_attn(norm2(h), memory);
  return h + mlp(norm3(h));
}

TransformerDecoder::TransformerDecoder(int64_t dim, TokenVocabulary vocab, TransformerDecoderConfig config)
    : RecognitionHead(std::move(vocab)) {
  memory_proj = register_module("memory_proj", make_linear(dim, config.dim));
  embed = register_module("embed", torch::nn::Embedding(vocab_.size(), config.dim));
  pos_embed = register_parameter("pos_embed", torch::empty({kMaxDecodeLength + 1, config.dim}));
  trunc_normal_(pos_embed);
  for (int64_t i = 0; i < config.layers; ++i)
    layers.push_back(register_module("layer" + std::to_string(i),
                                     TransformerDecoderLayer(config.dim, config.heads, config.mlp_ratio)));
  norm = register_module("norm", make_layer_norm(config.dim));
  out = register_module("out", make_linear(config.dim, vocab_.size()));
}

torch::Tensor TransformerDecoder::forward_ids(const torch::Tensor& feature, const torch::Tensor& ids) {
  if (ids.dim() != 2 || ids.size(1) > kMaxDecodeLength + 1)
    throw InvalidArgument("decoder input ids must be [B,T] with T <= 26");
  auto memory = memory_proj(flatten_tokens(feature));
  auto x = embed(ids) + pos_embed.slice(0, 0, ids.size(1));
  for (auto& layer : layers) x = layer(x, memory);
  return out(norm(x));
}

RecognitionOutput TransformerDecoder::forward(const torch::Tensor& feature, const std::vector<std::string>& labels) {
  RecognitionOutput result;
  result.logits = forward_ids(feature, teacher_forcing(labels, vocab_).first);
  return result;
}

torch::Tensor TransformerDecoder::loss(const torch::Tensor& feature, const std::vector<std::string>& labels) {
  auto [inputs, targets] = teacher_forcing(labels, vocab_);
  return sequence_cross_entropy(forward_ids(feature, inputs), targets, vocab_);
}

RecognitionOutput TransformerDecoder::infer(const torch::Tensor& feature) {
  const int64_t b = feature.size(0);
  auto memory = memory_proj(flatten_tokens(feature));
  auto seq = torch::full({b, 1}, vocab_.start(), torch::kLong);
  std::vector<std::vector<int64_t>> ids(static_cast<std::size_t>(b));
  std::vector<bool> done(static_cast<std::size_t>(b), false);
  std::vector<torch::Tensor> logits;
  for (int64_t t = 0; t <= kMaxDecodeLength; ++t) {
    auto x = embed(seq) + pos_embed.slice(0, 0, seq.size(1));
    for (auto& layer : layers) x = layer(x, memory);
    auto masked = mask_specials(out(norm(x.select(1, t))), vocab_);
    if (t == kMaxDecodeLength) masked.index_fill_(-1, torch::arange(1, vocab_.end(), torch::kLong),
                                                  -std::numeric_limits<double>::infinity());
    logits.push_back(masked);
    auto next = masked.argmax(-1);
    auto acc = next.accessor<int64_t, 1>();
    bool all_done = true;
    for (int64_t i = 0; i < b; ++i) {
      auto&& finished = done[static_cast<std::size_t>(i)];
      if (!finished) {
        if (acc[i] == vocab_.end()) finished = true;
        else ids[static_cast<std::size_t>(i)].push_back(acc[i]);
      }
      all_done = all_done && finished;
    }
    if (all_done) break;
    seq = torch::cat({seq, next.unsqueeze(1)}, 1);
  }
  RecognitionOutput result;
  result.logits = torch::stack(logits, 1);
  result.texts = collect(ids, vocab_);
  return result;
}

std::shared_ptr<RecognitionHead> make_recognition_head(const std::string& kind, int64_t dim,
                                                       const TokenVocabulary& vocab) {
  if (kind == "ctc") return std::make_shared<CtcHead>(dim, vocab);
  if (kind == "attention") return std::make_shared<AttentionDecoder>(dim, vocab);
  if (kind == "transformer") return std::make_shared<TransformerDecoder>(dim, vocab);
  throw InvalidArgument("unknown decoder '" + kind + "' (expected ctc|attention|transformer)");
}

// ---------------------------------------------------------------------------
// Dense heads

DenseHeadImpl::DenseHeadImpl(int64_t dim, int64_t channels, int64_t count, int64_t heads) {
  for (int64_t i = 0; i < count; ++i)
    blocks.push_back(register_module("block" + std::to_string(i), Block(dim, heads, 4)));
  norm = register_module("norm", make_layer_norm(dim));
  pixel = register_module("pixel", PixelHead(dim, channels));
}

torch::Tensor DenseHeadImpl::forward(const torch::Tensor& feature) {
  auto x = flatten_tokens(feature);
  for (auto& block : blocks) x = block(x);
  return pixel(norm(x).reshape(feature.sizes()));
}

SegmentationHeadImpl::SegmentationHeadImpl(int64_t dim) { head = register_module("head", DenseHead(dim, 1)); }

torch::Tensor SegmentationHeadImpl::forward(const torch::Tensor& feature) {
  return torch::sigmoid(head(feature)).squeeze(-1);
}

torch::Tensor SegmentationHeadImpl::loss(const torch::Tensor& feature, const torch::Tensor& target) {
  return dig::l1_loss(forward(feature), target);
}

SuperResolutionHeadImpl::SuperResolutionHeadImpl(int64_t dim) {
  head = register_module("head", DenseHead(dim, kChannels));
}

torch::Tensor SuperResolutionHeadImpl::forward_raw(const torch::Tensor& feature) { return head(feature); }

torch::Tensor SuperResolutionHeadImpl::forward(const torch::Tensor& feature) {
  return forward_raw(feature).clamp(0.0, 1.0);
}

torch::Tensor SuperResolutionHeadImpl::loss(const torch::Tensor& feature, const torch::Tensor& target) {
  return dig::l2_loss(forward_raw(feature), target);
}

}  // namespace dig
