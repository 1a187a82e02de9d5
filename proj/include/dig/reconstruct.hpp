#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dig/config.hpp"
#include "dig/corpus.hpp"
#include "dig/model.hpp"

namespace dig {

/// original | masked (masked patches grey) | reconstruction, separated by
/// 4-pixel white gaps. The reconstruction keeps visible pixels and shows the
/// clamped prediction inside masked patches.
Image make_panel(const Image& original, const PatchMask& mask, const Image& prediction);

struct ReconstructionReport {
  std::size_t count = 0;
  double mse = 0.0;           // masked-pixel MSE of the reconstruction head
  double baseline_mse = 0.0;  // same pixels, per-image per-channel mean predictor
  std::vector<std::string> panels;

  double ratio() const { return baseline_mse > 0.0 ? mse / baseline_mse : 0.0; }
  nlohmann::json to_json() const;
};

/// Masked-pixel MSE of `model` on the given manifest entries. Masks are drawn
/// at `mask_ratio` from `seed`; images are not augmented.
ReconstructionReport evaluate_reconstruction(DiGModel& model, const CorpusManifest& manifest,
                                             const std::vector<std::size_t>& indices, double mask_ratio,
                                             std::uint64_t seed);

/// Loads `config.reconstruct.checkpoint`, writes panels for the first
/// `panels` entries to run_dir/panels and scores the last `eval_count` entries.
ReconstructionReport run_reconstruct(const RunConfig& config, const std::filesystem::path& run_dir);

}  // namespace dig
