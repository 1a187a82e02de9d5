#include "dig/finetune.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <opencv2/imgproc.hpp>

#include "dig/errors.hpp"
#include "dig/evalkit.hpp"
#include "dig/log.hpp"
#include "dig/objectives.hpp"
#include "dig/optim.hpp"
#include "dig/rng.hpp"
#include "dig/trainer.hpp"

namespace dig {

std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) {
  return derive_seed(seed, {fnv1a(stream.data(), stream.size())});
}

Split split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("need at least 2 items to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0,1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto cut = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);
  return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)},
          {order.begin() + static_cast<std::ptrdiff_t>(cut), order.end()}};
}

VitEncoder make_encoder(const EncoderConfig& config, const std::string& checkpoint, std::uint64_t seed) {
  torch::manual_seed(stream_seed(seed, "encoder"));
  VitEncoder encoder(config);
  if (!checkpoint.empty()) {
    const auto ck = load_checkpoint(checkpoint);
    require_fingerprint(ck, config.fingerprint());
    load_module_state(*encoder, ck, "encoder.");
  }
  return encoder;
}

void apply_freeze(VitEncoder& encoder, const std::string& policy) {
  if (policy != "none" && policy != "encoder" && policy != "all-but-self-attention")
    throw InvalidArgument("unknown freeze policy '" + policy + "'");
  for (auto& item : encoder->named_parameters(true)) {
    bool trainable = policy == "none" || (policy == "all-but-self-attention" &&
                                          item.key().find(".attn.") != std::string::npos);
    item.value().set_requires_grad(trainable);
  }
}

std::string decoder_for_task(const std::string& task) {
  if (task == "recognition-ctc") return "ctc";
  if (task == "recognition-attn") return "attention";
  if (task == "recognition-transformer") return "transformer";
  throw InvalidArgument("task '" + task + "' has no recognition decoder");
}

bool is_recognition(const std::string& task) { return task.rfind("recognition-", 0) == 0; }

TaskModelImpl::TaskModelImpl(VitEncoder enc, const std::string& task, const TokenVocabulary& vocab) : task_(task) {
  encoder = register_module("encoder", std::move(enc));
  const int64_t dim = encoder->config().embed_dim;
  if (is_recognition(task)) {
    recognizer = register_module("head", make_recognition_head(decoder_for_task(task), dim, vocab));
  } else if (task == "segmentation") {
    segmenter = register_module("head", SegmentationHead(dim));
  } else if (task == "super-resolution") {
    upscaler = register_module("head", SuperResolutionHead(dim));
  } else {
    throw InvalidArgument("unknown task '" + task +
                          "' (expected recognition-ctc|recognition-attn|recognition-transformer|segmentation|"
                          "super-resolution)");
  }
}

torch::Tensor TaskModelImpl::loss(const torch::Tensor& images, const torch::Tensor& targets,
                                  const std::vector<std::string>& labels) {
  auto feature = encoder(images);
  if (recognizer) return recognizer->loss(feature, labels);
  if (segmenter) return segmenter->loss(feature, targets);
  return upscaler->loss(feature, targets);
}

Image degrade(const Image& image, int scale) {
  if (scale < 1) throw InvalidArgument("degrade scale must be >= 1");
  cv::Mat small;
  cv::resize(to_mat(image), small, cv::Size(image.width() / scale, image.height() / scale), 0, 0, cv::INTER_AREA);
  return standardize(from_mat(small));
}

TaskBatch load_task_batch(const CorpusManifest& manifest, const std::vector<std::size_t>& indices,
                          const std::string& task, int sr_scale, std::uint64_t augment_seed) {
  auto loaded = load_batch(manifest, indices);
  TaskBatch batch;
  std::vector<Image> inputs, targets;
  const auto policy = AugmentationPolicy::finetune();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto& item = loaded.images[i];
    batch.paths.push_back(manifest.image_path(indices[i]));
    if (is_recognition(task)) {
      if (!item.label) throw InvalidArgument("entry " + manifest.image_path(indices[i]).string() + " has no label");
      batch.labels.push_back(*item.label);
      inputs.push_back(augment_seed != 0 ? augment(item.pixels, derive_seed(augment_seed, {indices[i]}), policy)
                                         : item.pixels);
    } else if (task == "segmentation") {
      inputs.push_back(item.pixels);
      targets.push_back(load_mask(manifest, indices[i]));
    } else if (task == "super-resolution") {
      inputs.push_back(degrade(item.pixels, sr_scale));
      targets.push_back(item.pixels);
    } else {
      throw InvalidArgument("unknown task '" + task + "'");
    }
  }
  batch.images = image_tensor(inputs);
  if (!targets.empty()) {
    batch.targets = image_tensor(targets);
    if (task == "segmentation") batch.targets = batch.targets.squeeze(-1);
  }
  return batch;
}

namespace {

Image tensor_image(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  const int channels = c.dim() == 3 ? static_cast<int>(c.size(2)) : 1;
  Image img(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), channels);
  std::copy(c.data_ptr<float>(), c.data_ptr<float>() + c.numel(), img.values().begin());
  return img;
}

}  // namespace

nlohmann::json evaluate_task(TaskModel& model, const CorpusManifest& manifest,
                             const std::vector<std::size_t>& indices, int sr_scale, std::ostream* dump) {
  torch::NoGradGuard guard;
  model->eval();
  const auto& task = model->task();
  std::vector<std::string> predictions, truths;
  double iou_sum = 0.0, psnr_sum = 0.0, ssim_sum = 0.0;
  if (dump != nullptr && !is_recognition(task)) *dump << (task == "segmentation" ? "path,iou\n" : "path,psnr,ssim\n");
  for (std::size_t start = 0; start < indices.size(); start += 64) {
    std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                  indices.begin() + static_cast<std::ptrdiff_t>(std::min(start + 64, indices.size())));
    auto batch = load_task_batch(manifest, part, task, sr_scale, 0);
    auto feature = model->encoder(batch.images);
    if (model->recognizer) {
      auto texts = model->recognizer->infer(feature).texts;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        if (dump != nullptr) *dump << batch.paths[i].string() << '\t' << texts[i] << '\n';
        predictions.push_back(texts[i]);
        truths.push_back(batch.labels[i]);
      }
    } else if (model->segmenter) {
      auto pred = model->segmenter(feature);
      for (int64_t i = 0; i < pred.size(0); ++i) {
        const double v = iou(pred[i], batch.targets[i]);
        iou_sum += v;
        if (dump != nullptr) *dump << batch.paths[static_cast<std::size_t>(i)].string() << ',' << v << '\n';
      }
    } else {
      auto pred = model->upscaler(feature);
      for (int64_t i = 0; i < pred.size(0); ++i) {
        const auto a = tensor_image(pred[i]), b = tensor_image(batch.targets[i]);
        const double p = psnr(a, b), s = ssim(a, b);
        psnr_sum += p;
        ssim_sum += s;
        if (dump != nullptr) *dump << batch.paths[static_cast<std::size_t>(i)].string() << ',' << p << ',' << s << '\n';
      }
    }
  }
  const double count = static_cast<double>(indices.size());
  nlohmann::json report = {{"task", task}, {"count", indices.size()}};
  if (model->recognizer) report["word_accuracy"] = word_accuracy(predictions, truths);
  else if (model->segmenter) report["mean_iou"] = iou_sum / count;
  else {
    report["mean_psnr"] = psnr_sum / count;
    report["mean_ssim"] = ssim_sum / count;
  }
  return report;
}

Checkpoint make_task_checkpoint(const TaskModel& model, int64_t step, const RunConfig& config) {
  Checkpoint ck;
  ck.kind = "finetune";
  ck.step = step;
  ck.fingerprint = model->encoder->config().fingerprint();
  ck.config = config;
  ck.extra = {{"task", model->task()}, {"sr_scale", config.finetune.sr_scale}};
  if (model->recognizer) ck.extra["charset"] = model->recognizer->vocabulary().charset().symbols();
  ck.tensors = module_state(*model);
  return ck;
}

TaskModel load_task_model(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "finetune") throw Mismatch("expected a finetune checkpoint, got '" + checkpoint.kind + "'");
  const RunConfig config = parse_config(checkpoint.config);
  require_fingerprint(checkpoint, config.model.fingerprint());
  const auto task = checkpoint.extra.at("task").get<std::string>();
  TokenVocabulary vocab;
  if (checkpoint.extra.contains("charset")) vocab = TokenVocabulary(Charset(checkpoint.extra.at("charset").get<std::string>()));
  TaskModel model(VitEncoder(config.model), task, vocab);
  load_module_state(*model, checkpoint);
  return model;
}

FinetuneResult run_finetune(const RunConfig& config, const std::filesystem::path& run_dir) {
  config.validate();
  const auto& fc = config.finetune;
  if (fc.manifest.empty()) throw InvalidArgument("finetune.manifest is not set");
  const auto manifest = read_manifest(fc.manifest);
  if (is_recognition(fc.task) && !manifest.labeled())
    throw InvalidArgument("recognition fine-tuning needs a labeled manifest; " + fc.manifest + " is not");
  const auto paths = RunPaths::create(run_dir);
  save_config(config, paths.config());

  const auto split = split_dataset(manifest.size(), fc.train_fraction, stream_seed(config.seed, "split"));
  auto encoder = make_encoder(config.model, fc.checkpoint, config.seed);
  apply_freeze(encoder, fc.freeze);
  torch::manual_seed(stream_seed(config.seed, "head"));
  TaskModel model(encoder, fc.task, TokenVocabulary{Charset(manifest.charset)});

  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (const auto& item : model->named_parameters(true))
    if (item.value().requires_grad()) params.emplace_back(item.key(), item.value());
  auto optimizer = make_optimizer(params, fc.optim);

  const std::size_t n = split.train.size();
  OptimConfig optim = fc.optim;
  optim.batch_size = std::min<int64_t>(optim.batch_size, static_cast<int64_t>(n));
  const int64_t total = optim.total_steps(n), warmup = std::min(optim.warmup(n), total);
  std::ofstream metrics(paths.root / "finetune_metrics.csv", std::ios::trunc);
  metrics << "step,loss,lr\n";
  for (int64_t step = 1; step <= total; ++step) {
    auto local = batch_indices(n, optim.batch_size, stream_seed(config.seed, "finetune-order"), step);
    std::vector<std::size_t> indices;
    for (auto i : local) indices.push_back(split.train[i]);
    const std::uint64_t aug =
        fc.augment ? derive_seed(stream_seed(config.seed, "augment"), {static_cast<std::uint64_t>(step)}) : 0;
    auto batch = load_task_batch(manifest, indices, fc.task, fc.sr_scale, aug);
    model->train();
    optimizer.zero_grad();
    auto loss = model->loss(batch.images, batch.targets, batch.labels);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) throw NumericalError("fine-tuning loss diverged at step " + std::to_string(step));
    loss.backward();
    if (optim.grad_clip > 0.0) clip_grad_norm(params, optim.grad_clip);
    const double lr = lr_at(step, warmup, total, optim.lr);
    optimizer.step(lr);
    if (step % fc.log_every == 0 || step == total) {
      metrics << step << ',' << value << ',' << lr << '\n';
      log_info("finetune step " + std::to_string(step) + "/" + std::to_string(total) + " loss " +
               std::to_string(value));
    }
  }

  FinetuneResult result;
  result.checkpoint = paths.checkpoints() / "finetune.ckpt";
  save_checkpoint(make_task_checkpoint(model, total, config), result.checkpoint);
  std::ofstream predictions(paths.reports() / (is_recognition(fc.task) ? "heldout_predictions.tsv" : "heldout_metrics.csv"));
  result.report = evaluate_task(model, manifest, split.heldout, fc.sr_scale, &predictions);
  result.report["checkpoint"] = fc.checkpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(fc.checkpoint);
  result.report["freeze"] = fc.freeze;
  result.report["split_sizes"] = {{"train", split.train.size()}, {"heldout", split.heldout.size()}};
  result.report["seed"] = config.seed;
  std::ofstream(paths.reports() / "finetune.json") << result.report.dump(2) << '\n';
  return result;
}

nlohmann::json run_eval(const RunConfig& config, const std::filesystem::path& run_dir) {
  if (config.eval.checkpoint.empty() || config.eval.manifest.empty())
    throw InvalidArgument("eval.checkpoint and eval.manifest must both be set");
  const auto ck = load_checkpoint(config.eval.checkpoint);
  auto model = load_task_model(ck);
  const auto manifest = read_manifest(config.eval.manifest);
  std::vector<std::size_t> indices(manifest.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  const auto paths = RunPaths::create(run_dir);
  std::ofstream dump(paths.reports() / (is_recognition(model->task()) ? "predictions.tsv" : "metrics.csv"));
  auto report = evaluate_task(model, manifest, indices, ck.extra.value("sr_scale", 2), &dump);
  report["checkpoint"] = config.eval.checkpoint;
  report["manifest"] = config.eval.manifest;
  std::ofstream(paths.reports() / "eval.json") << report.dump(2) << '\n';
  return report;
}

}  // namespace dig
