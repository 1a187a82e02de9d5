#include "dig/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dig/errors.hpp"

namespace dig {

// ---------------------------------------------------------------------------
// Config

EncoderConfig EncoderConfig::from_preset(const std::string& name) {
  EncoderConfig c;
  c.preset = name;
  if (name == "desk") {
    c.embed_dim = 96, c.depth = 4, c.heads = 4, c.projection_hidden = 512;
  } else if (name == "tiny") {
    c.embed_dim = 192, c.depth = 12, c.heads = 3, c.projection_hidden = 4096;
  } else if (name == "small") {
    c.embed_dim = 384, c.depth = 12, c.heads = 6, c.projection_hidden = 4096;
  } else if (name == "base") {
    c.embed_dim = 512, c.depth = 12, c.heads = 8, c.projection_hidden = 4096;
  } else {
    throw InvalidArgument("unknown encoder preset '" + name + "' (expected desk|tiny|small|base)");
  }
  return c;
}

void EncoderConfig::validate() const {
  if (embed_dim <= 0 || heads <= 0 || depth < 0 || mlp_ratio <= 0)
    throw InvalidArgument("encoder dimensions must be positive");
  if (embed_dim % heads != 0)
    throw InvalidArgument("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                          std::to_string(heads));
  if (projection_hidden <= 0 || projection_dim <= 0) throw InvalidArgument("projection widths must be positive");
}

std::string EncoderConfig::fingerprint() const {
  std::ostringstream os;
  os << "vit-p" << kPatchSize << '-' << kImageHeight << 'x' << kImageWidth << ":d" << embed_dim << ":L" << depth
     << ":h" << heads << ":mlp" << mlp_ratio << ":proj" << projection_hidden << 'x' << projection_dim;
  return os.str();
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"embed_dim", c.embed_dim},
                     {"depth", c.depth},
                     {"heads", c.heads},
                     {"mlp_ratio", c.mlp_ratio},
                     {"projection_hidden", c.projection_hidden},
                     {"projection_dim", c.projection_dim}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  if (j.contains("preset")) c = EncoderConfig::from_preset(j.at("preset").get<std::string>());
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.projection_hidden = j.value("projection_hidden", c.projection_hidden);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
}

// ---------------------------------------------------------------------------
// Tensor helpers

void trunc_normal_(torch::Tensor& t, double std) {
  torch::NoGradGuard guard;
  auto cdf = [](double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); };
  const double lo = cdf(-2.0), hi = cdf(2.0);
  t.uniform_(2.0 * lo - 1.0, 2.0 * hi - 1.0);
  t.erfinv_();
  t.mul_(std * std::numbers::sqrt2);
  t.clamp_(-2.0 * std, 2.0 * std);
}

torch::Tensor patchify(const torch::Tensor& images) {
  TORCH_CHECK(images.dim() == 4 && images.size(1) == kImageHeight && images.size(2) == kImageWidth,
              "expected images of shape [B,32,128,C], got ", images.sizes());
  const int64_t b = images.size(0), c = images.size(3);
  return images.reshape({b, kGridHeight, kPatchSize, kGridWidth, kPatchSize, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, kTokenCount, kPatchSize * kPatchSize * c});
}

torch::Tensor unpatchify(const torch::Tensor& patches, int64_t channels) {
  TORCH_CHECK(patches.dim() == 3 && patches.size(1) == kTokenCount &&
                  patches.size(2) == kPatchSize * kPatchSize * channels,
              "expected patches of shape [B,256,", kPatchSize * kPatchSize * channels, "], got ", patches.sizes());
  const int64_t b = patches.size(0);
  return patches.reshape({b, kGridHeight, kGridWidth, kPatchSize, kPatchSize, channels})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, kImageHeight, kImageWidth, channels});
}

torch::Tensor pixel_mask(const torch::Tensor& patch_mask) {
  TORCH_CHECK(patch_mask.dim() == 3 && patch_mask.size(1) == kGridHeight && patch_mask.size(2) == kGridWidth,
              "expected a [B,8,32] patch mask, got ", patch_mask.sizes());
  return patch_mask.repeat_interleave(kPatchSize, 1).repeat_interleave(kPatchSize, 2);
}

torch::Tensor mask_tensor(const std::vector<PatchMask>& masks) {
  auto out = torch::zeros({static_cast<int64_t>(masks.size()), kGridHeight, kGridWidth}, torch::kBool);
  auto acc = out.accessor<bool, 3>();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& m = masks[i];
    if (m.grid_h() != kGridHeight || m.grid_w() != kGridWidth) throw InvalidArgument("patch mask must be 8x32");
    for (int r = 0; r < kGridHeight; ++r)
      for (int c = 0; c < kGridWidth; ++c) acc[i][r][c] = m.at(r, c);
  }
  return out;
}

torch::Tensor image_tensor(const std::vector<Image>& images) {
  if (images.empty()) return torch::zeros({0, kImageHeight, kImageWidth, kChannels});
  const int64_t c = images.front().channels();
  auto out = torch::empty({static_cast<int64_t>(images.size()), kImageHeight, kImageWidth, c});
  float* dst = out.data_ptr<float>();
  for (const auto& img : images) {
    if (img.height() != kImageHeight || img.width() != kImageWidth || img.channels() != c)
      throw InvalidArgument("all images in a batch must be 32x128 with the same channel count");
    std::copy(img.values().begin(), img.values().end(), dst);
    dst += img.size();
  }
  return out;
}

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw InvalidArgument(std::string(what) + " contains NaN or Inf");
}

torch::nn::Linear make_linear(int64_t in, int64_t out) {
  torch::nn::Linear fc(torch::nn::LinearOptions(in, out));
  trunc_normal_(fc->weight);
  torch::NoGradGuard guard;
  fc->bias.zero_();
  return fc;
}

torch::nn::LayerNorm make_layer_norm(int64_t dim) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6));
}

// ---------------------------------------------------------------------------
// Blocks

namespace {

// [B,T,D] -> [B,H,T,D/H]
torch::Tensor split_heads(const torch::Tensor& x, int64_t heads) {
  const int64_t b = x.size(0), t = x.size(1), d = x.size(2);
  return x.reshape({b, t, heads, d / heads}).transpose(1, 2);
}

torch::Tensor merge_heads(const torch::Tensor& x) {
  const int64_t b = x.size(0), h = x.size(1), t = x.size(2), dh = x.size(3);
  return x.transpose(1, 2).reshape({b, t, h * dh});
}

}  // namespace

SelfAttentionImpl::SelfAttentionImpl(int64_t dim, int64_t heads_) : heads(heads_) {
  TORCH_CHECK(dim % heads == 0, "attention dim ", dim, " not divisible by ", heads, " heads");
  qkv = register_module("qkv", make_linear(dim, 3 * dim));
  proj = register_module("proj", make_linear(dim, dim));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x, bool causal) {
  auto parts = qkv(x).chunk(3, -1);
  auto y = at::scaled_dot_product_attention(split_heads(parts[0], heads), split_heads(parts[1], heads),
                                            split_heads(parts[2], heads), {}, 0.0, causal);
  return proj(merge_heads(y));
}

CrossAttentionImpl::CrossAttentionImpl(int64_t dim, int64_t heads_) : heads(heads_) {
  TORCH_CHECK(dim % heads == 0, "attention dim ", dim, " not divisible by ", heads, " heads");
  q = register_module("q", make_linear(dim, dim));
  kv = register_module("kv", make_linear(dim, 2 * dim));
  proj = register_module("proj", make_linear(dim, dim));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context) {
  auto parts = kv(context).chunk(2, -1);
  auto y = at::scaled_dot_product_attention(split_heads(q(x), heads), split_heads(parts[0], heads),
                                            split_heads(parts[1], heads));
  return proj(merge_heads(y));
}

MlpImpl::MlpImpl(int64_t dim, int64_t hidden) {
  fc1 = register_module("fc1", make_linear(dim, hidden));
  fc2 = register_module("fc2", make_linear(hidden, dim));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

BlockImpl::BlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio) {
  norm1 = register_module("norm1", make_layer_norm(dim));
  attn = register_module("attn", SelfAttention(dim, heads));
  norm2 = register_module("norm2", make_layer_norm(dim));
  mlp = register_module("mlp", Mlp(dim, dim * mlp_ratio));
}

torch::Tensor BlockImpl::forward(const torch::Tensor& x) {
  auto h = x + attn(norm1(x));
  return h + mlp(norm2(h));
}

// ---------------------------------------------------------------------------
// Encoder

VitEncoderImpl::VitEncoderImpl(const EncoderConfig& config) : config_(config) {
  config.validate();
  patch_embed = register_module("patch_embed", make_linear(kPatchDim, config.embed_dim));
  mask_token = register_parameter("mask_token", torch::empty({config.embed_dim}));
  pos_embed = register_parameter("pos_embed", torch::empty({kTokenCount, config.embed_dim}));
  trunc_normal_(mask_token);
  trunc_normal_(pos_embed);
  for (int64_t i = 0; i < config.depth; ++i) {
    blocks.push_back(register_module("block" + std::to_string(i),
                                     Block(config.embed_dim, config.heads, config.mlp_ratio)));
  }
}

torch::Tensor VitEncoderImpl::embed_patches(const torch::Tensor& images, const torch::Tensor& mask) {
  if (images.dim() != 4 || images.size(1) != kImageHeight || images.size(2) != kImageWidth ||
      images.size(3) != kChannels) {
    std::ostringstream os;
    os << "encoder input must have shape [B,32,128,3], got " << images.sizes();
    throw InvalidArgument(os.str());
  }
  require_finite(images, "encoder input");
  auto x = patch_embed(patchify(images));
  if (mask.defined()) {
    if (mask.dim() != 3 || mask.size(0) != images.size(0) || mask.size(1) != kGridHeight ||
        mask.size(2) != kGridWidth)
      throw InvalidArgument("patch mask must have shape [B,8,32]");
    auto m = mask.to(torch::kBool).reshape({images.size(0), kTokenCount, 1});
    x = torch::where(m, mask_token.to(x.dtype()).expand_as(x), x);
  }
  return x;
}

torch::Tensor VitEncoderImpl::embed_tokens(const torch::Tensor& images, const torch::Tensor& mask) {
  return embed_patches(images, mask) + pos_embed;
}

torch::Tensor VitEncoderImpl::encode(const torch::Tensor& tokens) {
  if (tokens.dim() != 3 || tokens.size(1) != kTokenCount || tokens.size(2) != config_.embed_dim)
    throw InvalidArgument("encoder expects [B,256,embed_dim] tokens");
  auto x = tokens;
  for (auto& block : blocks) x = block(x);
  return x.reshape({tokens.size(0), kGridHeight, kGridWidth, config_.embed_dim});
}

torch::Tensor VitEncoderImpl::forward(const torch::Tensor& images, const torch::Tensor& mask) {
  return encode(embed_tokens(images, mask));
}

torch::Tensor patch_head(const torch::Tensor& feature, int64_t instances) {
  if (feature.dim() != 4) throw InvalidArgument("patch head expects a [B,H,W,D] feature map");
  const int64_t b = feature.size(0), h = feature.size(1), w = feature.size(2), d = feature.size(3);
  if (instances <= 0 || w % instances != 0)
    throw InvalidArgument("feature width " + std::to_string(w) + " is not divisible by " +
                          std::to_string(instances) + " instances");
  return feature.reshape({b, h, instances, w / instances, d}).mean({1, 3});
}

// ---------------------------------------------------------------------------
// Heads

MlpHeadImpl::MlpHeadImpl(const std::vector<int64_t>& widths) {
  TORCH_CHECK(widths.size() >= 2, "an MLP head needs at least one layer");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    fcs.push_back(register_module("fc" + std::to_string(i), make_linear(widths[i], widths[i + 1])));
    norms.push_back(register_module("norm" + std::to_string(i), make_layer_norm(widths[i + 1])));
  }
}

torch::Tensor MlpHeadImpl::forward(torch::Tensor x) {
  for (std::size_t i = 0; i < fcs.size(); ++i) {
    x = norms[i](fcs[i](x));
    if (i + 1 < fcs.size()) x = torch::gelu(x);
  }
  return x;
}

MlpHead make_projection_head(const EncoderConfig& c) {
  return MlpHead(std::vector<int64_t>{c.embed_dim, c.projection_hidden, c.projection_hidden, c.projection_dim});
}

MlpHead make_prediction_head(const EncoderConfig& c) {
  return MlpHead(std::vector<int64_t>{c.projection_dim, c.projection_hidden, c.projection_dim});
}

PixelHeadImpl::PixelHeadImpl(int64_t dim, int64_t channels_) : channels(channels_) {
  fc = register_module("fc", make_linear(dim, kPatchSize * kPatchSize * channels));
}

torch::Tensor PixelHeadImpl::forward(const torch::Tensor& feature) {
  TORCH_CHECK(feature.dim() == 4 && feature.size(1) == kGridHeight && feature.size(2) == kGridWidth,
              "pixel head expects a [B,8,32,D] feature map, got ", feature.sizes());
  auto y = fc(feature).reshape({feature.size(0), kTokenCount, kPatchSize * kPatchSize * channels});
  return unpatchify(y, channels);
}

// ---------------------------------------------------------------------------
// Pre-training model

MomentumBranchImpl::MomentumBranchImpl(const EncoderConfig& config) {
  encoder = register_module("encoder", VitEncoder(config));
  projector = register_module("projector", make_projection_head(config));
}

DiGModelImpl::DiGModelImpl(const EncoderConfig& config, bool normalize) : config_(config), normalize_(normalize) {
  config.validate();
  encoder = register_module("encoder", VitEncoder(config));
  projector = register_module("projector", make_projection_head(config));
  predictor = register_module("predictor", make_prediction_head(config));
  recon_head = register_module("recon_head", PixelHead(config.embed_dim, kChannels));
  momentum = register_module("momentum", MomentumBranch(config));
  for (auto& p : momentum->parameters()) p.set_requires_grad(false);
  sync_momentum();
}

torch::Tensor DiGModelImpl::project(const torch::Tensor& feature) {
  auto z = projector(patch_head(feature));
  return normalize_ ? torch::nn::functional::normalize(z, torch::nn::functional::NormalizeFuncOptions().dim(-1))
                    : z;
}

torch::Tensor DiGModelImpl::predict(const torch::Tensor& projected) {
  auto q = predictor(projected);
  return normalize_ ? torch::nn::functional::normalize(q, torch::nn::functional::NormalizeFuncOptions().dim(-1))
                    : q;
}

QueryOutput DiGModelImpl::queries(const torch::Tensor& images, const torch::Tensor& mask) {
  QueryOutput out;
  out.feature = encoder(images, mask);
  out.queries = predict(projector(patch_head(out.feature)));
  return out;
}

torch::Tensor DiGModelImpl::momentum_keys(const torch::Tensor& images, const torch::Tensor& mask) {
  torch::NoGradGuard guard;
  auto k = momentum->projector(patch_head(momentum->encoder(images, mask)));
  if (normalize_) k = torch::nn::functional::normalize(k, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  return k.detach();
}

torch::Tensor DiGModelImpl::reconstruct(const torch::Tensor& feature) { return recon_head(feature); }

std::vector<std::pair<torch::Tensor, torch::Tensor>> DiGModelImpl::momentum_pairs() const {
  std::vector<std::pair<torch::Tensor, torch::Tensor>> pairs;
  const auto online = named_parameters(true);
  for (const auto& item : momentum->named_parameters(true)) {
    const torch::Tensor* p = online.find(item.key());
    if (p == nullptr) throw InvalidArgument("momentum parameter " + item.key() + " has no online counterpart");
    if (!p->sizes().equals(item.value().sizes()))
      throw InvalidArgument("momentum parameter " + item.key() + " shape differs from its online counterpart");
    pairs.emplace_back(item.value(), *p);
  }
  return pairs;
}

void DiGModelImpl::ema_update(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("EMA coefficient must lie in [0,1]");
  torch::NoGradGuard guard;
  for (auto& [target, source] : momentum_pairs()) target.mul_(m).add_(source, 1.0 - m);
}

void DiGModelImpl::sync_momentum() {
  torch::NoGradGuard guard;
  for (auto& [target, source] : momentum_pairs()) target.copy_(source);
}

std::vector<std::pair<std::string, torch::Tensor>> DiGModelImpl::online_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : named_parameters(true)) {
    if (item.key().rfind("momentum.", 0) == 0) continue;
    out.emplace_back(item.key(), item.value());
  }
  return out;
}

}  // namespace dig
