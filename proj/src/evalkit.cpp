#include "dig/evalkit.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "dig/corpus.hpp"
#include "dig/decoders.hpp"
#include "dig/errors.hpp"
#include "dig/finetune.hpp"
#include "dig/log.hpp"
#include "dig/optim.hpp"
#include "dig/trainer.hpp"

namespace dig {

std::string normalize(std::string_view text, const EvalProtocol& protocol) {
  std::string out;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (protocol.strip_non_alphanumeric && !std::isalnum(u)) continue;
    out.push_back(protocol.case_fold ? static_cast<char>(std::tolower(u)) : c);
  }
  return out;
}

double word_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& truths,
                     const EvalProtocol& protocol) {
  if (predictions.size() != truths.size())
    throw InvalidArgument("word_accuracy got " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(truths.size()) + " ground truths");
  if (truths.empty()) throw InvalidArgument("word_accuracy needs at least one sample");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i)
    hits += normalize(predictions[i], protocol) == normalize(truths[i], protocol);
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double iou(const torch::Tensor& pred, const torch::Tensor& gt, double threshold) {
  if (!pred.sizes().equals(gt.sizes())) throw InvalidArgument("iou shape mismatch");
  auto p = pred.ge(threshold);
  auto g = gt.ne(0);
  const double inter = p.logical_and(g).sum().item<double>();
  const double uni = p.logical_or(g).sum().item<double>();
  return uni == 0.0 ? 1.0 : inter / uni;
}

double iou(const Image& pred, const Image& gt, double threshold) {
  if (!pred.same_shape(gt)) throw InvalidArgument("iou shape mismatch");
  std::size_t inter = 0, uni = 0;
  const auto a = pred.values();
  const auto b = gt.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool p = a[i] >= threshold, g = b[i] != 0.0f;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double psnr_from_mse(double mse) {
  if (!(mse >= 0.0)) throw InvalidArgument("MSE must be >= 0");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.empty()) throw InvalidArgument("psnr needs two non-empty images of equal shape");
  const auto x = a.values();
  const auto y = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(x.size()));
}

namespace {

constexpr int kSsimRadius = 5;

std::vector<double> luma(const Image& img) {
  std::vector<double> out(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.width() + x;
      if (img.channels() == 1) {
        out[i] = img.at(y, x, 0);
      } else {
        out[i] = 0.299 * static_cast<double>(img.at(y, x, 0)) + 0.587 * static_cast<double>(img.at(y, x, 1)) +
                 0.114 * static_cast<double>(img.at(y, x, 2));
      }
    }
  return out;
}

std::array<double, 2 * kSsimRadius + 1> gaussian_window() {
  std::array<double, 2 * kSsimRadius + 1> w{};
  double total = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    w[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-0.5 * (i / 1.5) * (i / 1.5));
    total += w[static_cast<std::size_t>(i + kSsimRadius)];
  }
  for (auto& v : w) v /= total;
  return w;
}

/// Separable Gaussian filter evaluated only where the window fits; output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w) {
  static const auto win = gaussian_window();
  const int oh = h - 2 * kSsimRadius, ow = w - 2 * kSsimRadius;
  std::vector<double> rows(static_cast<std::size_t>(oh) * w);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = 0; k <= 2 * kSsimRadius; ++k) s += win[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y + k) * w + x];
      rows[static_cast<std::size_t>(y) * w + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k <= 2 * kSsimRadius; ++k) s += win[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y) * w + x + k];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("ssim shape mismatch");
  const int h = a.height(), w = a.width();
  if (h < 2 * kSsimRadius + 1 || w < 2 * kSsimRadius + 1)
    throw InvalidArgument("ssim needs images of at least 11x11 pixels");
  const auto x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto ux = filter_valid(x, h, w), uy = filter_valid(y, h, w);
  const auto uxx = filter_valid(xx, h, w), uyy = filter_valid(yy, h, w), uxy = filter_valid(xy, h, w);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    const double vx = uxx[i] - ux[i] * ux[i];
    const double vy = uyy[i] - uy[i] * uy[i];
    const double vxy = uxy[i] - ux[i] * uy[i];
    const double num = (2.0 * ux[i] * uy[i] + c1) * (2.0 * vxy + c2);
    const double den = (ux[i] * ux[i] + uy[i] * uy[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(ux.size());
}

// ---------------------------------------------------------------------------
// Probe

nlohmann::json ProbeReport::to_json() const {
  return {{"checkpoint", checkpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(checkpoint)},
          {"decoder", decoder},
          {"accuracy", accuracy},
          {"train_accuracy", train_accuracy},
          {"split_sizes", {{"train", train_size}, {"heldout", heldout_size}}},
          {"seed", seed}};
}

namespace {

std::vector<std::string> infer_all(RecognitionHead& head, const torch::Tensor& features) {
  torch::NoGradGuard guard;
  std::vector<std::string> out;
  for (int64_t start = 0; start < features.size(0); start += 256) {
    auto texts = head.infer(features.slice(0, start, std::min<int64_t>(start + 256, features.size(0)))).texts;
    out.insert(out.end(), texts.begin(), texts.end());
  }
  return out;
}

}  // namespace

ProbeReport run_probe(const RunConfig& config) {
  config.validate();
  const auto& pc = config.probe;
  if (pc.manifest.empty()) throw InvalidArgument("probe.manifest is not set");
  const auto manifest = read_manifest(pc.manifest);
  if (!manifest.labeled()) throw InvalidArgument("probe manifest " + pc.manifest + " has unlabeled entries");
  const auto split = split_dataset(manifest.size(), pc.train_fraction, stream_seed(config.seed, "split"));

  auto encoder = make_encoder(config.model, pc.checkpoint, config.seed);
  apply_freeze(encoder, "encoder");
  encoder->eval();

  // The encoder is frozen and probe inputs are not augmented, so its features
  // are computed once.
  auto encode = [&](const std::vector<std::size_t>& indices, std::vector<std::string>& labels) {
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> chunks;
    for (std::size_t start = 0; start < indices.size(); start += 64) {
      std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                    indices.begin() + static_cast<std::ptrdiff_t>(std::min(start + 64, indices.size())));
      auto batch = load_batch(manifest, part);
      std::vector<Image> images;
      for (auto& item : batch.images) {
        images.push_back(std::move(item.pixels));
        labels.push_back(*item.label);
      }
      chunks.push_back(encoder(image_tensor(images)));
    }
    return torch::cat(chunks);
  };
  std::vector<std::string> train_labels, heldout_labels;
  const auto train_features = encode(split.train, train_labels);
  const auto heldout_features = encode(split.heldout, heldout_labels);

  torch::manual_seed(stream_seed(config.seed, "head"));
  const TokenVocabulary vocab{Charset(manifest.charset)};
  auto head = make_recognition_head(pc.decoder, config.model.embed_dim, vocab);
  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (const auto& item : head->named_parameters(true)) params.emplace_back(item.key(), item.value());
  auto optimizer = make_optimizer(params, pc.optim);

  const std::size_t n = split.train.size();
  const int64_t batch = std::min<int64_t>(pc.optim.batch_size, static_cast<int64_t>(n));
  OptimConfig optim = pc.optim;
  optim.batch_size = batch;
  const int64_t total = optim.total_steps(n), warmup = std::min(optim.warmup(n), total);
  for (int64_t step = 1; step <= total; ++step) {
    auto local = batch_indices(n, batch, stream_seed(config.seed, "probe-order"), step);
    std::vector<std::string> labels;
    for (auto i : local) labels.push_back(train_labels[i]);
    auto rows = torch::tensor(std::vector<int64_t>(local.begin(), local.end()), torch::kLong);
    optimizer.zero_grad();
    auto loss = head->loss(train_features.index_select(0, rows), labels);
    if (!std::isfinite(loss.item<double>())) throw NumericalError("probe loss diverged at step " + std::to_string(step));
    loss.backward();
    if (optim.grad_clip > 0.0) clip_grad_norm(params, optim.grad_clip);
    optimizer.step(lr_at(step, warmup, total, optim.lr));
    if (step % 500 == 0 || step == total)
      log_info("probe step " + std::to_string(step) + "/" + std::to_string(total) + " loss " +
               std::to_string(loss.item<double>()));
  }

  ProbeReport report;
  report.checkpoint = pc.checkpoint;
  report.decoder = pc.decoder;
  report.accuracy = word_accuracy(infer_all(*head, heldout_features), heldout_labels);
  report.train_accuracy = word_accuracy(infer_all(*head, train_features), train_labels);
  report.train_size = split.train.size();
  report.heldout_size = split.heldout.size();
  report.seed = config.seed;
  return report;
}

}  // namespace dig
