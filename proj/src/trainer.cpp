#include "dig/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "dig/errors.hpp"
#include "dig/log.hpp"
#include "dig/objectives.hpp"
#include "dig/rng.hpp"

namespace dig {

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;   // parameter initialization
constexpr std::uint64_t kOrderTag = 0x6f726472;  // epoch permutation
constexpr std::uint64_t kViewTag = 0x76696577;   // view pair sampling

std::string format_metrics(const StepMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(m.step), m.loss, m.loss_c,
                m.loss_m, m.lr);
  return buf;
}

std::string join_indices(const std::vector<std::size_t>& indices) {
  std::ostringstream os;
  for (std::size_t i = 0; i < indices.size(); ++i) os << (i ? "," : "") << indices[i];
  return os.str();
}

/// Drops metric rows after `step` so a resumed run continues the same file.
void truncate_metrics(const std::filesystem::path& path, int64_t step) {
  std::ifstream in(path);
  if (!in) {
    std::ofstream(path) << kMetricsHeader << '\n';
    return;
  }
  std::vector<std::string> kept;
  std::string line;
  while (std::getline(in, line)) {
    if (kept.empty()) {
      kept.push_back(line);
      continue;
    }
    if (std::stoll(line.substr(0, line.find(','))) <= step) kept.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

PretrainBatch PretrainBatch::to(torch::ScalarType dtype) const {
  return {masked_view.to(dtype), mask, augmented_view.to(dtype), target.to(dtype), indices};
}

ViewConfig effective_views(const ViewConfig& views, const ObjectiveConfig& objectives) {
  ViewConfig out = views;
  if (!objectives.uses_reconstruction()) out.mask_ratio = 0.0;
  return out;
}

PretrainBatch make_pretrain_batch(const std::vector<Image>& images, const std::vector<std::uint64_t>& seeds,
                                  const ViewConfig& views, std::vector<std::size_t> indices) {
  if (images.empty() || images.size() != seeds.size()) throw InvalidArgument("need one seed per image in a batch");
  std::vector<Image> masked, augmented, targets;
  std::vector<PatchMask> masks;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto pair = make_view_pair(images[i], seeds[i], views);
    masked.push_back(std::move(pair.masked_view));
    masks.push_back(std::move(pair.mask));
    augmented.push_back(std::move(pair.augmented_view));
    targets.push_back(std::move(pair.reconstruction_target));
  }
  return {image_tensor(masked), mask_tensor(masks), image_tensor(augmented), image_tensor(targets),
          std::move(indices)};
}

PretrainLosses pretrain_losses(DiGModel& model, const PretrainBatch& batch, const ObjectiveConfig& objectives) {
  PretrainLosses out;
  auto zero = torch::zeros({}, batch.target.options());
  if (!objectives.uses_contrastive()) {
    auto feature = model->encoder(batch.masked_view, batch.mask);
    out.loss_m = masked_l2(model->reconstruct(feature), batch.target, pixel_mask(batch.mask));
    out.loss_c = zero;
    out.loss = out.loss_m;
    return out;
  }
  auto online_m = model->queries(batch.masked_view, batch.mask);
  auto online_a = model->queries(batch.augmented_view);
  auto keys_m = model->momentum_keys(batch.masked_view, batch.mask);
  auto keys_a = model->momentum_keys(batch.augmented_view);
  out.loss_c = info_nce(online_m.queries, online_a.queries, keys_m, keys_a, objectives.contrastive());
  if (objectives.uses_reconstruction()) {
    out.loss_m = masked_l2(model->reconstruct(online_m.feature), batch.target, pixel_mask(batch.mask));
    out.loss = out.loss_c + objectives.weights().alpha * out.loss_m;
  } else {
    out.loss_m = zero;
    out.loss = out.loss_c;
  }
  return out;
}

StepMetrics pretrain_step(DiGModel& model, AdamW& optimizer, const PretrainBatch& batch,
                          const ObjectiveConfig& objectives, double lr, double grad_clip) {
  optimizer.zero_grad();
  auto losses = pretrain_losses(model, batch, objectives);
  StepMetrics m;
  m.loss = losses.loss.item<double>();
  m.loss_c = losses.loss_c.item<double>();
  m.loss_m = losses.loss_m.item<double>();
  m.lr = lr;
  if (!std::isfinite(m.loss))
    throw NumericalError("non-finite loss (L=" + std::to_string(m.loss) + ", L_c=" + std::to_string(m.loss_c) +
                         ", L_m=" + std::to_string(m.loss_m) + ") on batch indices [" + join_indices(batch.indices) +
                         "]");
  losses.loss.backward();
  if (grad_clip > 0.0) clip_grad_norm(optimizer.params(), grad_clip);
  optimizer.step(lr);
  if (objectives.uses_contrastive()) model->ema_update(objectives.momentum);
  return m;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {kOrderTag, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

int64_t epoch_of(std::size_t n, int64_t batch_size, int64_t step) {
  if (step < 1) throw InvalidArgument("steps are 1-based");
  if (batch_size <= 0 || static_cast<int64_t>(n) < batch_size)
    throw InvalidArgument("dataset of " + std::to_string(n) + " items is smaller than one batch of " +
                          std::to_string(batch_size));
  return (step - 1) / (static_cast<int64_t>(n) / batch_size);
}

std::vector<std::size_t> batch_indices(std::size_t n, int64_t batch_size, std::uint64_t seed, int64_t step) {
  const int64_t epoch = epoch_of(n, batch_size, step);
  const int64_t per_epoch = static_cast<int64_t>(n) / batch_size;
  const int64_t position = (step - 1) % per_epoch;
  const auto order = epoch_order(n, seed, epoch);
  const auto first = order.begin() + position * batch_size;
  return {first, first + batch_size};
}

std::uint64_t view_seed(std::uint64_t seed, int64_t epoch, std::size_t index) {
  return derive_seed(seed, {kViewTag, static_cast<std::uint64_t>(epoch), index});
}

DiGModel make_model(const RunConfig& config) {
  torch::manual_seed(derive_seed(config.seed, {kInitTag}));
  return DiGModel(config.model, config.objectives.normalize);
}

AdamW make_optimizer(const std::vector<std::pair<std::string, torch::Tensor>>& params, const OptimConfig& optim) {
  return AdamW(params, {optim.beta1, optim.beta2, optim.eps, optim.weight_decay});
}

Checkpoint make_pretrain_checkpoint(const DiGModel& model, const AdamW* optimizer, int64_t step,
                                    const RunConfig& config) {
  Checkpoint ck;
  ck.kind = "pretrain";
  ck.step = step;
  ck.fingerprint = model->config().fingerprint();
  ck.config = config;
  ck.extra = {{"normalize", model->normalize()}};
  ck.tensors = module_state(*model);
  if (optimizer != nullptr) {
    ck.extra["optimizer_steps"] = optimizer->step_count();
    for (auto& [name, t] : optimizer->state()) ck.tensors.emplace_back("optim." + name, t);
  }
  return ck;
}

void restore_pretrain(DiGModel& model, AdamW* optimizer, const Checkpoint& checkpoint) {
  if (checkpoint.kind != "pretrain") throw Mismatch("expected a pretrain checkpoint, got '" + checkpoint.kind + "'");
  require_fingerprint(checkpoint, model->config().fingerprint());
  load_module_state(*model, checkpoint);
  if (optimizer != nullptr) {
    if (!checkpoint.extra.contains("optimizer_steps")) throw Mismatch("checkpoint carries no optimizer state");
    optimizer->load_state(checkpoint.with_prefix("optim."), checkpoint.extra.at("optimizer_steps").get<int64_t>());
  }
}

RunPaths RunPaths::create(const std::filesystem::path& root) {
  RunPaths p{root};
  for (const auto& dir : {p.root, p.checkpoints(), p.reports(), p.panels()}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
  return p;
}

PretrainResult run_pretrain(const RunConfig& config, const std::filesystem::path& run_dir) {
  config.validate();
  if (config.pretrain.manifest.empty()) throw InvalidArgument("pretrain.manifest is not set");
  const auto manifest = read_manifest(config.pretrain.manifest);
  if (manifest.size() == 0) throw InvalidArgument("manifest " + config.pretrain.manifest + " is empty");

  const auto paths = RunPaths::create(run_dir);
  save_config(config, paths.config());
  if (config.pretrain.exact) torch::set_num_threads(1);

  const auto& optim = config.pretrain.optim;
  const std::size_t n = manifest.size();
  const int64_t total = optim.total_steps(n), warmup = optim.warmup(n);
  const ViewConfig views = effective_views(config.views, config.objectives);

  auto model = make_model(config);
  auto optimizer = make_optimizer(model->online_parameters(), optim);
  int64_t start = 0;
  if (!config.pretrain.resume.empty()) {
    const auto ck = load_checkpoint(config.pretrain.resume);
    restore_pretrain(model, &optimizer, ck);
    start = ck.step;
    if (start > total) throw InvalidArgument("checkpoint step exceeds the configured total");
    truncate_metrics(paths.metrics(), start);
    log_info("resuming from step " + std::to_string(start));
  }
  if (start == 0) {
    std::ofstream header(paths.metrics(), std::ios::trunc);
    header << kMetricsHeader << '\n';
    if (!header) throw IoError("cannot write " + paths.metrics().string());
  }
  std::ofstream metrics(paths.metrics(), std::ios::app);
  if (!metrics) throw IoError("cannot append to " + paths.metrics().string());

  auto load = [&](int64_t step) {
    auto indices = batch_indices(n, optim.batch_size, config.seed, step);
    const int64_t epoch = epoch_of(n, optim.batch_size, step);
    auto loaded = load_batch(manifest, indices);
    std::vector<Image> images;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      images.push_back(std::move(loaded.images[i].pixels));
      seeds.push_back(view_seed(config.seed, epoch, indices[i]));
    }
    return make_pretrain_batch(images, seeds, views, std::move(indices));
  };

  PretrainResult result;
  result.total_steps = total;
  std::future<PretrainBatch> next;
  if (!config.pretrain.exact && start < total) next = std::async(std::launch::async, load, start + 1);
  for (int64_t step = start + 1; step <= total; ++step) {
    PretrainBatch batch = config.pretrain.exact ? load(step) : next.get();
    if (!config.pretrain.exact && step < total) next = std::async(std::launch::async, load, step + 1);
    const double lr = lr_at(step, warmup, total, optim.lr);
    StepMetrics m;
    try {
      m = pretrain_step(model, optimizer, batch, config.objectives, lr, optim.grad_clip);
    } catch (const NumericalError& e) {
      std::ofstream dump(paths.reports() / "divergence.json");
      dump << nlohmann::json{{"step", step}, {"lr", lr}, {"batch_indices", batch.indices}, {"error", e.what()}}.dump(2)
           << '\n';
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step) + "; details in " +
                           (paths.reports() / "divergence.json").string());
    }
    m.step = step;
    result.last = m;
    ++result.steps_run;
    if (step % config.pretrain.log_every == 0 || step == total) {
      metrics << format_metrics(m) << '\n';
      metrics.flush();
      log_info("step " + std::to_string(step) + "/" + std::to_string(total) + " loss " + std::to_string(m.loss) +
               " (c " + std::to_string(m.loss_c) + ", m " + std::to_string(m.loss_m) + ") lr " + std::to_string(lr));
    }
    if (config.pretrain.checkpoint_every > 0 && step % config.pretrain.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06lld.ckpt", static_cast<long long>(step));
      save_checkpoint(make_pretrain_checkpoint(model, &optimizer, step, config), paths.checkpoints() / name);
    }
  }
  if (!metrics) throw IoError("failed writing " + paths.metrics().string());
  result.checkpoint = paths.checkpoints() / "last.ckpt";
  save_checkpoint(make_pretrain_checkpoint(model, &optimizer, total, config), result.checkpoint);
  return result;
}

}  // namespace dig
