#include "dig/dig.h"

#include <cstring>
#include <fstream>
#include <string>

#include "dig/config.hpp"
#include "dig/corpus.hpp"
#include "dig/errors.hpp"
#include "dig/evalkit.hpp"
#include "dig/finetune.hpp"
#include "dig/log.hpp"
#include "dig/reconstruct.hpp"
#include "dig/trainer.hpp"

struct dig_config {
  dig::RunConfig value;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
dig_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return DIG_OK;
  } catch (const dig::InvalidArgument& e) {
    g_last_error = e.what();
    return DIG_ERR_INVALID_ARGUMENT;
  } catch (const dig::IoError& e) {
    g_last_error = e.what();
    return DIG_ERR_IO;
  } catch (const dig::CorruptData& e) {
    g_last_error = e.what();
    return DIG_ERR_CORRUPT;
  } catch (const dig::Mismatch& e) {
    g_last_error = e.what();
    return DIG_ERR_MISMATCH;
  } catch (const dig::NumericalError& e) {
    g_last_error = e.what();
    return DIG_ERR_NUMERICAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DIG_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DIG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DIG_ERR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw dig::InvalidArgument(std::string(what) + " must not be NULL");
}

void emit(char** out, const nlohmann::json& report) {
  if (out != nullptr) *out = copy_string(report.dump(2));
}

dig::Image wrap(const float* data, int h, int w, int c) {
  if (h <= 0 || w <= 0 || c <= 0) throw dig::InvalidArgument("image dimensions must be positive");
  dig::Image img(h, w, c);
  std::memcpy(img.values().data(), data, img.size() * sizeof(float));
  return img;
}

}  // namespace

extern "C" {

const char* dig_version(void) { return "1.0.0"; }

const char* dig_last_error(void) { return g_last_error.c_str(); }

const char* dig_status_name(dig_status status) {
  switch (status) {
    case DIG_OK: return "ok";
    case DIG_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DIG_ERR_IO: return "i/o error";
    case DIG_ERR_CORRUPT: return "corrupt data";
    case DIG_ERR_MISMATCH: return "mismatch";
    case DIG_ERR_NUMERICAL: return "numerical error";
    case DIG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void dig_string_free(char* s) { std::free(s); }

void dig_set_verbosity(int level) { dig::set_verbosity(level); }

dig_status dig_config_new(const char* preset, dig_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<dig_config>();
    cfg->value = dig::RunConfig::from_preset(preset != nullptr ? preset : "desk");
    *out = cfg.release();
  });
}

dig_status dig_config_load(const char* path, dig_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<dig_config>();
    cfg->value = dig::load_config(path);
    *out = cfg.release();
  });
}

dig_status dig_config_set(dig_config* config, const char* assignment) {
  return guarded([&] {
    require(config, "config");
    require(assignment, "assignment");
    dig::RunConfig updated = config->value;
    dig::apply_overrides(updated, {assignment}, false);
    config->value = std::move(updated);
  });
}

dig_status dig_config_validate(const dig_config* config) {
  return guarded([&] {
    require(config, "config");
    config->value.validate();
  });
}

dig_status dig_config_to_json(const dig_config* config, char** out_json) {
  return guarded([&] {
    require(config, "config");
    require(out_json, "out_json");
    *out_json = copy_string(nlohmann::json(config->value).dump(2));
  });
}

dig_status dig_config_get(const dig_config* config, const char* key, char** out_json) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(out_json, "out_json");
    std::string pointer = "/" + std::string(key);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const nlohmann::json j = config->value;
    const nlohmann::json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw dig::InvalidArgument(std::string("unknown config key '") + key + "'");
    *out_json = copy_string(j.at(ptr).dump());
  });
}

void dig_config_free(dig_config* config) { delete config; }

dig_status dig_render_corpus(const dig_config* config, char** out_report) {
  return guarded([&] {
    require(config, "config");
    const auto& c = config->value;
    const auto manifest = dig::build_corpus(c.corpus.spec, c.corpus.out_dir);
    emit(out_report, {{"manifest", (std::filesystem::path(c.corpus.out_dir) / dig::kManifestFileName).string()},
                      {"images", manifest.size()},
                      {"labeled", c.corpus.spec.labeled}});
  });
}

dig_status dig_pretrain(const dig_config* config, const char* run_dir, char** out_report) {
  return guarded([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    const auto r = dig::run_pretrain(config->value, run_dir);
    emit(out_report, {{"checkpoint", r.checkpoint.string()},
                      {"steps_run", r.steps_run},
                      {"total_steps", r.total_steps},
                      {"final", {{"step", r.last.step}, {"loss", r.last.loss}, {"loss_c", r.last.loss_c},
                                 {"loss_m", r.last.loss_m}, {"lr", r.last.lr}}}});
  });
}

dig_status dig_probe(const dig_config* config, const char* run_dir, char** out_report) {
  return guarded([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    const auto report = dig::run_probe(config->value).to_json();
    const auto paths = dig::RunPaths::create(run_dir);
    dig::save_config(config->value, paths.config());
    std::ofstream out(paths.reports() / "probe.json");
    out << report.dump(2) << '\n';
    if (!out) throw dig::IoError("cannot write " + (paths.reports() / "probe.json").string());
    emit(out_report, report);
  });
}

dig_status dig_finetune(const dig_config* config, const char* run_dir, char** out_report) {
  return guarded([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    auto r = dig::run_finetune(config->value, run_dir);
    r.report["output_checkpoint"] = r.checkpoint.string();
    emit(out_report, r.report);
  });
}

dig_status dig_eval(const dig_config* config, const char* run_dir, char** out_report) {
  return guarded([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    emit(out_report, dig::run_eval(config->value, run_dir));
  });
}

dig_status dig_reconstruct(const dig_config* config, const char* run_dir, char** out_report) {
  return guarded([&] {
    require(config, "config");
    require(run_dir, "run_dir");
    emit(out_report, dig::run_reconstruct(config->value, run_dir).to_json());
  });
}

dig_status dig_psnr(const float* a, const float* b, int height, int width, int channels, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = dig::psnr(wrap(a, height, width, channels), wrap(b, height, width, channels));
  });
}

dig_status dig_ssim(const float* a, const float* b, int height, int width, int channels, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = dig::ssim(wrap(a, height, width, channels), wrap(b, height, width, channels));
  });
}

dig_status dig_iou(const float* pred, const float* truth, size_t count, double threshold, double* out) {
  return guarded([&] {
    require(pred, "pred");
    require(truth, "truth");
    require(out, "out");
    if (count == 0) throw dig::InvalidArgument("count must be positive");
    *out = dig::iou(wrap(pred, 1, static_cast<int>(count), 1), wrap(truth, 1, static_cast<int>(count), 1), threshold);
  });
}

}  // extern "C"
