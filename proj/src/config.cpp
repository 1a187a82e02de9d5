#include "dig/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dig/errors.hpp"

namespace dig {

using nlohmann::json;

// ---------------------------------------------------------------------------
// OptimConfig

int64_t OptimConfig::steps_per_epoch(std::size_t dataset_size) const {
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  const auto n = static_cast<int64_t>(dataset_size) / batch_size;
  if (n == 0)
    throw InvalidArgument("dataset of " + std::to_string(dataset_size) + " items is smaller than one batch of " +
                          std::to_string(batch_size));
  return n;
}

int64_t OptimConfig::total_steps(std::size_t dataset_size) const {
  if (steps > 0) return steps;
  if (epochs > 0.0) return static_cast<int64_t>(std::llround(epochs * static_cast<double>(steps_per_epoch(dataset_size))));
  throw InvalidArgument("either steps or epochs must be positive");
}

int64_t OptimConfig::warmup(std::size_t dataset_size) const {
  if (warmup_steps > 0) return warmup_steps;
  if (warmup_epochs > 0.0)
    return static_cast<int64_t>(std::llround(warmup_epochs * static_cast<double>(steps_per_epoch(dataset_size))));
  return 0;
}

void OptimConfig::validate() const {
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (weight_decay < 0.0) throw InvalidArgument("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("betas must lie in [0,1)");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (steps < 0 || epochs < 0.0 || warmup_steps < 0 || warmup_epochs < 0.0)
    throw InvalidArgument("step and epoch counts must be >= 0");
  if (steps <= 0 && epochs <= 0.0) throw InvalidArgument("either steps or epochs must be positive");
  if (steps > 0 && warmup_steps > steps) throw InvalidArgument("warm-up exceeds the total step count");
  if (epochs > 0.0 && steps <= 0 && warmup_epochs > epochs) throw InvalidArgument("warm-up exceeds the total epochs");
  if (grad_clip < 0.0) throw InvalidArgument("grad_clip must be >= 0");
}

void to_json(json& j, const OptimConfig& c) {
  j = json{{"batch_size", c.batch_size},     {"lr", c.lr},         {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},               {"beta2", c.beta2},   {"eps", c.eps},
           {"steps", c.steps},               {"epochs", c.epochs}, {"warmup_steps", c.warmup_steps},
           {"warmup_epochs", c.warmup_epochs}, {"grad_clip", c.grad_clip}};
}

void from_json(const json& j, OptimConfig& c) {
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.steps = j.at("steps").get<int64_t>();
  c.epochs = j.at("epochs").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int64_t>();
  c.warmup_epochs = j.at("warmup_epochs").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
}

// ---------------------------------------------------------------------------
// ObjectiveConfig

void ObjectiveConfig::validate() const {
  if (mode != "joint" && mode != "contrastive" && mode != "reconstruction")
    throw InvalidArgument("objectives.mode must be joint, contrastive or reconstruction (got '" + mode + "')");
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be >= 0");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidArgument("momentum must lie in [0,1]");
}

void to_json(json& j, const ObjectiveConfig& c) {
  j = json{{"mode", c.mode},
           {"alpha", c.alpha},
           {"temperature", c.temperature},
           {"negatives_include_same_image", c.negatives_include_same_image},
           {"momentum", c.momentum},
           {"normalize", c.normalize}};
}

void from_json(const json& j, ObjectiveConfig& c) {
  c.mode = j.at("mode").get<std::string>();
  c.alpha = j.at("alpha").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.negatives_include_same_image = j.at("negatives_include_same_image").get<bool>();
  c.momentum = j.at("momentum").get<double>();
  c.normalize = j.at("normalize").get<bool>();
}

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.model = EncoderConfig::from_preset("desk");
    c.pretrain.optim = {.batch_size = 16, .lr = 1e-3, .weight_decay = 0.05, .beta1 = 0.9, .beta2 = 0.95,
                        .steps = 3000, .warmup_steps = 300};
    c.finetune.optim = {.batch_size = 32, .lr = 1e-3, .weight_decay = 0.05, .beta1 = 0.9, .beta2 = 0.999,
                        .steps = 1500, .warmup_steps = 100};
    c.probe.optim = {.batch_size = 64, .lr = 3e-3, .weight_decay = 0.0, .beta1 = 0.9, .beta2 = 0.999,
                     .steps = 2000, .warmup_steps = 100};
  } else if (name == "full") {
    c.model = EncoderConfig::from_preset("small");
    c.pretrain.optim = {.batch_size = 1024, .lr = 1.5e-4, .weight_decay = 0.05, .beta1 = 0.9, .beta2 = 0.95,
                        .epochs = 3.0, .warmup_steps = 5000};
    c.finetune.optim = {.batch_size = 2048, .lr = 1e-4, .weight_decay = 0.05, .beta1 = 0.9, .beta2 = 0.999,
                        .epochs = 10.0, .warmup_epochs = 1.0};
    c.probe.optim = c.finetune.optim;
  } else {
    throw InvalidArgument("unknown run preset '" + name + "' (expected desk|full)");
  }
  return c;
}

void RunConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw InvalidArgument("run name must be a plain directory name");
  model.validate();
  objectives.validate();
  pretrain.optim.validate();
  finetune.optim.validate();
  probe.optim.validate();
  if (views.mask_ratio < 0.0 || views.mask_ratio > 1.0) throw InvalidArgument("views.mask_ratio must lie in [0,1]");
  if (pretrain.log_every <= 0 || pretrain.checkpoint_every < 0)
    throw InvalidArgument("log_every must be positive and checkpoint_every >= 0");
  for (double f : {finetune.train_fraction, probe.train_fraction})
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("train_fraction must lie in (0,1)");
  if (finetune.freeze != "none" && finetune.freeze != "encoder" && finetune.freeze != "all-but-self-attention")
    throw InvalidArgument("finetune.freeze must be none, encoder or all-but-self-attention");
  if (finetune.sr_scale < 2) throw InvalidArgument("finetune.sr_scale must be >= 2");
}

std::string RunConfig::hash() const {
  const std::string text = json(*this).dump();
  return hex64(fnv1a(text.data(), text.size()));
}

void to_json(json& j, const RunConfig& c) {
  json corpus = c.corpus.spec;
  corpus["out_dir"] = c.corpus.out_dir;
  j = json{{"name", c.name},
           {"preset", c.preset},
           {"seed", c.seed},
           {"model", c.model},
           {"corpus", corpus},
           {"views", c.views},
           {"objectives", c.objectives},
           {"pretrain",
            {{"optim", c.pretrain.optim},
             {"manifest", c.pretrain.manifest},
             {"log_every", c.pretrain.log_every},
             {"checkpoint_every", c.pretrain.checkpoint_every},
             {"exact", c.pretrain.exact},
             {"resume", c.pretrain.resume}}},
           {"finetune",
            {{"optim", c.finetune.optim},
             {"task", c.finetune.task},
             {"freeze", c.finetune.freeze},
             {"checkpoint", c.finetune.checkpoint},
             {"manifest", c.finetune.manifest},
             {"augment", c.finetune.augment},
             {"train_fraction", c.finetune.train_fraction},
             {"sr_scale", c.finetune.sr_scale},
             {"log_every", c.finetune.log_every}}},
           {"probe",
            {{"optim", c.probe.optim},
             {"decoder", c.probe.decoder},
             {"checkpoint", c.probe.checkpoint},
             {"manifest", c.probe.manifest},
             {"train_fraction", c.probe.train_fraction}}},
           {"eval", {{"checkpoint", c.eval.checkpoint}, {"manifest", c.eval.manifest}}},
           {"reconstruct",
            {{"checkpoint", c.reconstruct.checkpoint},
             {"manifest", c.reconstruct.manifest},
             {"panels", c.reconstruct.panels},
             {"eval_count", c.reconstruct.eval_count}}}};
}

void from_json(const json& j, RunConfig& c) {
  c.name = j.at("name").get<std::string>();
  c.preset = j.at("preset").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model = j.at("model").get<EncoderConfig>();
  c.corpus.spec = j.at("corpus").get<CorpusSpec>();
  c.corpus.out_dir = j.at("corpus").at("out_dir").get<std::string>();
  c.views = j.at("views").get<ViewConfig>();
  c.objectives = j.at("objectives").get<ObjectiveConfig>();
  const auto& p = j.at("pretrain");
  c.pretrain.optim = p.at("optim").get<OptimConfig>();
  c.pretrain.manifest = p.at("manifest").get<std::string>();
  c.pretrain.log_every = p.at("log_every").get<int64_t>();
  c.pretrain.checkpoint_every = p.at("checkpoint_every").get<int64_t>();
  c.pretrain.exact = p.at("exact").get<bool>();
  c.pretrain.resume = p.at("resume").get<std::string>();
  const auto& f = j.at("finetune");
  c.finetune.optim = f.at("optim").get<OptimConfig>();
  c.finetune.task = f.at("task").get<std::string>();
  c.finetune.freeze = f.at("freeze").get<std::string>();
  c.finetune.checkpoint = f.at("checkpoint").get<std::string>();
  c.finetune.manifest = f.at("manifest").get<std::string>();
  c.finetune.augment = f.at("augment").get<bool>();
  c.finetune.train_fraction = f.at("train_fraction").get<double>();
  c.finetune.sr_scale = f.at("sr_scale").get<int>();
  c.finetune.log_every = f.at("log_every").get<int64_t>();
  const auto& pr = j.at("probe");
  c.probe.optim = pr.at("optim").get<OptimConfig>();
  c.probe.decoder = pr.at("decoder").get<std::string>();
  c.probe.checkpoint = pr.at("checkpoint").get<std::string>();
  c.probe.manifest = pr.at("manifest").get<std::string>();
  c.probe.train_fraction = pr.at("train_fraction").get<double>();
  c.eval.checkpoint = j.at("eval").at("checkpoint").get<std::string>();
  c.eval.manifest = j.at("eval").at("manifest").get<std::string>();
  const auto& r = j.at("reconstruct");
  c.reconstruct.checkpoint = r.at("checkpoint").get<std::string>();
  c.reconstruct.manifest = r.at("manifest").get<std::string>();
  c.reconstruct.panels = r.at("panels").get<std::size_t>();
  c.reconstruct.eval_count = r.at("eval_count").get<std::size_t>();
}

namespace {

void check_known_keys(const json& patch, const json& reference, const std::string& prefix) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key())) throw InvalidArgument("unknown config key '" + key + "'");
    const auto& ref = reference.at(it.key());
    if (ref.is_object()) {
      if (!it.value().is_object()) throw InvalidArgument("config key '" + key + "' must be an object");
      check_known_keys(it.value(), ref, key);
    }
  }
}

/// Merges a partial JSON document into `base`. A "preset" key resets the run
/// (top level) or the encoder (model section) before the rest is applied.
RunConfig merge(const RunConfig& base, const json& patch) {
  if (!patch.is_object()) throw InvalidArgument("config must be a JSON object");
  RunConfig start = patch.contains("preset") ? RunConfig::from_preset(patch.at("preset").get<std::string>()) : base;
  json merged = start;
  check_known_keys(patch, merged, "");
  if (patch.contains("model") && patch.at("model").contains("preset"))
    merged["model"] = EncoderConfig::from_preset(patch.at("model").at("preset").get<std::string>());
  merged.merge_patch(patch);
  RunConfig out;
  try {
    out = merged.get<RunConfig>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid config value: ") + e.what());
  }
  return out;
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig out = merge(RunConfig::from_preset("desk"), j);
  out.validate();
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file " + path.string());
  out << json(config).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides, bool validate) {
  RunConfig updated = config;
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq), text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    const json current = updated;
    const json::json_pointer pointer("/" + [&] {
      std::string path = key;
      for (auto& ch : path)
        if (ch == '.') ch = '/';
      return path;
    }());
    if (current.contains(pointer) && current.at(pointer).is_string()) value = text;
    json patch = value;
    std::size_t end = key.size();
    while (true) {
      const auto dot = key.rfind('.', end - 1);
      const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                          end - (dot == std::string::npos ? 0 : dot + 1));
      if (part.empty()) throw InvalidArgument("override key '" + key + "' has an empty component");
      patch = json{{part, patch}};
      if (dot == std::string::npos) break;
      end = dot;
    }
    updated = merge(updated, patch);
  }
  if (validate) updated.validate();
  config = std::move(updated);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dig
