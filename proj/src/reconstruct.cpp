#include "dig/reconstruct.hpp"

#include <cstdio>
#include <fstream>

#include "dig/checkpoint.hpp"
#include "dig/errors.hpp"
#include "dig/finetune.hpp"
#include "dig/log.hpp"
#include "dig/rng.hpp"
#include "dig/trainer.hpp"

namespace dig {

namespace {

constexpr int kGap = 4;

Image to_image(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  Image img(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), static_cast<int>(c.size(2)));
  std::copy(c.data_ptr<float>(), c.data_ptr<float>() + c.numel(), img.values().begin());
  return img;
}

PatchMask eval_mask(std::uint64_t seed, std::size_t index, double ratio) {
  return sample_mask(kGridHeight, kGridWidth, ratio, derive_seed(seed, {0x7265636fULL, index}));
}

}  // namespace

Image make_panel(const Image& original, const PatchMask& mask, const Image& prediction) {
  if (!original.same_shape(prediction)) throw InvalidArgument("panel images must share a shape");
  const int h = original.height(), w = original.width(), c = original.channels();
  Image panel(h, 3 * w + 2 * kGap, c, 1.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool masked = mask.at(y / kPatchSize, x / kPatchSize);
      for (int k = 0; k < c; ++k) {
        const float v = original.at(y, x, k);
        panel.at(y, x, k) = v;
        panel.at(y, w + kGap + x, k) = masked ? 0.5f : v;
        panel.at(y, 2 * (w + kGap) + x, k) = masked ? std::clamp(prediction.at(y, x, k), 0.0f, 1.0f) : v;
      }
    }
  return panel;
}

nlohmann::json ReconstructionReport::to_json() const {
  return {{"count", count}, {"mse", mse}, {"baseline_mse", baseline_mse}, {"ratio", ratio()}, {"panels", panels}};
}

ReconstructionReport evaluate_reconstruction(DiGModel& model, const CorpusManifest& manifest,
                                             const std::vector<std::size_t>& indices, double mask_ratio,
                                             std::uint64_t seed) {
  if (indices.empty()) throw InvalidArgument("no images to evaluate");
  torch::NoGradGuard guard;
  model->eval();
  double err = 0.0, base = 0.0, pixels = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += 64) {
    std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                  indices.begin() + static_cast<std::ptrdiff_t>(std::min(start + 64, indices.size())));
    auto batch = load_batch(manifest, part);
    std::vector<Image> images;
    std::vector<PatchMask> masks;
    for (std::size_t i = 0; i < part.size(); ++i) {
      images.push_back(std::move(batch.images[i].pixels));
      masks.push_back(eval_mask(seed, part[i], mask_ratio));
    }
    auto x = image_tensor(images).to(torch::kFloat64);
    auto m = mask_tensor(masks);
    auto pred = model->reconstruct(model->encoder(x.to(torch::kFloat32), m)).to(torch::kFloat64);
    auto pm = pixel_mask(m).unsqueeze(-1).to(torch::kFloat64);
    auto mean = x.mean({1, 2}, true);
    err += ((pred - x).square().mean(-1, true) * pm).sum().item<double>();
    base += ((mean - x).square().mean(-1, true) * pm).sum().item<double>();
    pixels += pm.sum().item<double>();
  }
  if (pixels == 0.0) throw InvalidArgument("mask ratio leaves no masked pixels to score");
  ReconstructionReport report;
  report.count = indices.size();
  report.mse = err / pixels;
  report.baseline_mse = base / pixels;
  return report;
}

ReconstructionReport run_reconstruct(const RunConfig& config, const std::filesystem::path& run_dir) {
  const auto& rc = config.reconstruct;
  if (rc.checkpoint.empty() || rc.manifest.empty())
    throw InvalidArgument("reconstruct.checkpoint and reconstruct.manifest must both be set");
  const auto ck = load_checkpoint(rc.checkpoint);
  RunConfig trained = parse_config(ck.config);
  DiGModel model(trained.model, trained.objectives.normalize);
  restore_pretrain(model, nullptr, ck);
  const auto manifest = read_manifest(rc.manifest);
  const auto paths = RunPaths::create(run_dir);
  const double ratio = config.views.mask_ratio;

  const std::size_t n = manifest.size();
  const std::size_t eval_count = std::min(rc.eval_count, n);
  std::vector<std::size_t> scored;
  for (std::size_t i = n - eval_count; i < n; ++i) scored.push_back(i);
  auto report = evaluate_reconstruction(model, manifest, scored, ratio, config.seed);

  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < std::min(rc.panels, n); ++i) {
    std::vector<std::size_t> one{i};
    auto batch = load_batch(manifest, one);
    const auto mask = eval_mask(config.seed, i, ratio);
    auto x = image_tensor({batch.images[0].pixels});
    auto pred = model->reconstruct(model->encoder(x, mask_tensor({mask})));
    char name[32];
    std::snprintf(name, sizeof name, "panel_%03zu.png", i);
    const auto path = paths.panels() / name;
    write_png(make_panel(batch.images[0].pixels, mask, to_image(pred[0])), path);
    report.panels.push_back(path.string());
  }
  std::ofstream(paths.reports() / "reconstruct.json") << report.to_json().dump(2) << '\n';
  log_info("masked-pixel MSE " + std::to_string(report.mse) + " vs mean-pixel baseline " +
           std::to_string(report.baseline_mse));
  return report;
}

}  // namespace dig
