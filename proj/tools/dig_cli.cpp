// Command-line front end. Talks to the library only through dig/dig.h.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dig/dig.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct ConfigDeleter {
  void operator()(dig_config* c) const { dig_config_free(c); }
};
using ConfigPtr = std::unique_ptr<dig_config, ConfigDeleter>;

/// Options every subcommand accepts, plus flag-to-config-key mappings.
struct Invocation {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<unsigned long long> seed;
  std::string name;
  bool quiet = false;
  std::vector<std::pair<std::string, std::string>> flags;  // config key, raw value
};

struct CliError {
  int code;
  std::string message;
};

std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  dig_string_free(s);
  return out;
}

void check(dig_status status, int code) {
  if (status != DIG_OK) throw CliError{code, std::string(dig_status_name(status)) + ": " + dig_last_error()};
}

void add_common(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("-c,--config", inv.config_path, "JSON config file (defaults to the desk preset)");
  cmd->add_option("--set", inv.overrides, "Override a config key, e.g. --set pretrain.optim.lr=5e-4")
      ->type_name("KEY=VALUE")
      ->take_all();
  cmd->add_option("--seed", inv.seed, "Run seed (config key: seed)");
  cmd->add_option("--name", inv.name, "Run name under the run root (config key: name)");
  cmd->add_flag("-q,--quiet", inv.quiet, "Suppress progress output");
}

/// Registers an option whose value is written to `key` when given.
void add_mapped(CLI::App* cmd, Invocation& inv, const std::string& flag, const std::string& key,
                const std::string& help) {
  cmd->add_option_function<std::string>(
         flag, [&inv, key](const std::string& v) { inv.flags.emplace_back(key, v); },
         help + " (config key: " + key + ")");
}

ConfigPtr resolve(const Invocation& inv) {
  dig_config* raw = nullptr;
  if (inv.config_path.empty()) check(dig_config_new("desk", &raw), kExitUsage);
  else check(dig_config_load(inv.config_path.c_str(), &raw), kExitUsage);
  ConfigPtr config(raw);
  for (const auto& o : inv.overrides) check(dig_config_set(config.get(), o.c_str()), kExitUsage);
  for (const auto& [key, value] : inv.flags)
    check(dig_config_set(config.get(), (key + "=" + value).c_str()), kExitUsage);
  if (inv.seed) check(dig_config_set(config.get(), ("seed=" + std::to_string(*inv.seed)).c_str()), kExitUsage);
  if (!inv.name.empty()) check(dig_config_set(config.get(), ("name=" + inv.name).c_str()), kExitUsage);
  check(dig_config_validate(config.get()), kExitUsage);
  return config;
}

std::string run_dir(const dig_config* config) {
  const char* env = std::getenv("DIG_RUN_DIR");
  const std::filesystem::path root = env != nullptr && *env != '\0' ? env : "runs";
  char* name = nullptr;
  check(dig_config_get(config, "name", &name), kExitRuntime);
  std::string quoted = take(name);
  return (root / quoted.substr(1, quoted.size() - 2)).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised text-image pre-training: corpus rendering, pre-training, probing, fine-tuning, "
               "evaluation and reconstruction panels."};
  app.require_subcommand(1);
  app.set_version_flag("--version", dig_version());

  Invocation inv;
  auto* render = app.add_subcommand("render-corpus", "Render a synthetic word-image corpus and its manifest");
  auto* pretrain = app.add_subcommand("pretrain", "Pre-train the encoder on an unlabeled manifest");
  auto* probe = app.add_subcommand("probe", "Frozen-encoder recognition probe on a labeled manifest");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a task head (and optionally the encoder)");
  auto* eval = app.add_subcommand("eval", "Evaluate a fine-tuned checkpoint on a manifest");
  auto* reconstruct = app.add_subcommand("reconstruct", "Write reconstruction panels and masked-pixel MSE");
  for (auto* cmd : {render, pretrain, probe, finetune, eval, reconstruct}) add_common(cmd, inv);

  add_mapped(render, inv, "-o,--out", "corpus.out_dir", "Output directory");
  add_mapped(render, inv, "-n,--count", "corpus.word_count", "Number of images");
  add_mapped(render, inv, "--corpus-seed", "corpus.seed", "Corpus seed");
  add_mapped(render, inv, "--vocabulary", "corpus.vocabulary", "builtin, random or a word-list path");
  add_mapped(render, inv, "--labeled", "corpus.labeled", "true or false");

  add_mapped(pretrain, inv, "-m,--manifest", "pretrain.manifest", "Unlabeled manifest");
  add_mapped(pretrain, inv, "--steps", "pretrain.optim.steps", "Step budget");
  add_mapped(pretrain, inv, "--mode", "objectives.mode", "joint, contrastive or reconstruction");
  add_mapped(pretrain, inv, "--resume", "pretrain.resume", "Checkpoint to resume from");

  add_mapped(probe, inv, "-m,--manifest", "probe.manifest", "Labeled manifest");
  add_mapped(probe, inv, "--checkpoint", "probe.checkpoint", "Pre-trained checkpoint (omit for a random encoder)");
  add_mapped(probe, inv, "--decoder", "probe.decoder", "ctc, attention or transformer");

  add_mapped(finetune, inv, "-m,--manifest", "finetune.manifest", "Training manifest");
  add_mapped(finetune, inv, "--checkpoint", "finetune.checkpoint", "Pre-trained checkpoint (omit for scratch)");
  add_mapped(finetune, inv, "--task", "finetune.task",
             "recognition-ctc, recognition-attn, recognition-transformer, segmentation or super-resolution");
  add_mapped(finetune, inv, "--freeze", "finetune.freeze", "none, encoder or all-but-self-attention");

  add_mapped(eval, inv, "-m,--manifest", "eval.manifest", "Manifest to score");
  add_mapped(eval, inv, "--checkpoint", "eval.checkpoint", "Fine-tuned checkpoint");

  add_mapped(reconstruct, inv, "-m,--manifest", "reconstruct.manifest", "Manifest of images");
  add_mapped(reconstruct, inv, "--checkpoint", "reconstruct.checkpoint", "Pre-trained checkpoint");
  add_mapped(reconstruct, inv, "--panels", "reconstruct.panels", "Number of panels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    dig_set_verbosity(inv.quiet ? 0 : 1);
    ConfigPtr config = resolve(inv);
    char* report = nullptr;
    dig_status status = DIG_OK;
    if (render->parsed()) {
      status = dig_render_corpus(config.get(), &report);
    } else {
      const std::string dir = run_dir(config.get());
      if (pretrain->parsed()) status = dig_pretrain(config.get(), dir.c_str(), &report);
      else if (probe->parsed()) status = dig_probe(config.get(), dir.c_str(), &report);
      else if (finetune->parsed()) status = dig_finetune(config.get(), dir.c_str(), &report);
      else if (eval->parsed()) status = dig_eval(config.get(), dir.c_str(), &report);
      else status = dig_reconstruct(config.get(), dir.c_str(), &report);
    }
    check(status, kExitRuntime);
    std::cout << take(report) << std::endl;
    return 0;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    if (e.code == kExitUsage) std::cerr << "run '" << argv[0] << " --help' for usage\n";
    return e.code;
  }
}
