#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dig/image.hpp"

namespace dig {

inline constexpr std::size_t kMaxLabelLength = 25;
inline constexpr std::string_view kDefaultCharset = "abcdefghijklmnopqrstuvwxyz0123456789";

/// Ordered symbol set; index order is the class order used by the decoders.
class Charset {
 public:
  Charset() : symbols_(kDefaultCharset) {}
  explicit Charset(std::string symbols);

  const std::string& symbols() const { return symbols_; }
  std::size_t size() const { return symbols_.size(); }
  bool contains(char c) const { return symbols_.find(c) != std::string::npos; }
  /// Position in the charset, or -1.
  int index_of(char c) const;

  /// Throws InvalidArgument naming the first offending character (UTF-8 aware)
  /// or when the text is empty or longer than kMaxLabelLength.
  void validate(std::string_view text) const;

 private:
  std::string symbols_;
};

/// Knobs of the procedural word renderer. Every field is a bound; the actual
/// value per image is drawn from the style seed.
struct RenderConfig {
  double min_contrast = 0.35;      // luminance gap between ink and background
  double max_perspective = 0.05;   // corner jitter as a fraction of the side
  double max_blur_sigma = 0.8;     // pixels, at output resolution
  double max_noise_sigma = 0.03;
  double min_fill = 0.55;          // fraction of the canvas width the word spans
  double max_fill = 0.95;
  bool colour = true;              // false renders grey-level ink and background
};

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);

/// A rendered word with the binary ink mask used as a segmentation target.
struct RenderedWord {
  TextImage image;
  Image mask;  // 32x128x1, values in {0, 1}
};

/// Renders `text` into a standardized RGB image. Same (text, seed, config)
/// gives bitwise identical pixels.
RenderedWord render_word(std::string_view text, std::uint64_t style_seed,
                         const RenderConfig& config = {}, const Charset& charset = {});

struct CorpusSpec {
  std::size_t word_count = 1000;
  /// "builtin" (embedded English word list), "random" (random charset strings),
  /// or a path to a newline-separated word file.
  std::string vocabulary = "builtin";
  std::uint64_t seed = 1;
  bool labeled = true;
  std::size_t random_min_length = 3;
  std::size_t random_max_length = 8;
  RenderConfig render;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
void from_json(const nlohmann::json& j, CorpusSpec& s);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  std::optional<std::string> label;
  std::uint64_t seed = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  int version = 1;
  std::string charset{kDefaultCharset};
  std::vector<ManifestEntry> entries;
  /// Directory that entry paths are relative to (not serialized).
  std::filesystem::path root;

  std::size_t size() const { return entries.size(); }
  std::filesystem::path image_path(std::size_t index) const;
  /// Ink mask stored next to each image as <stem>.mask.png.
  std::filesystem::path mask_path(std::size_t index) const;
  bool labeled() const;
};

inline constexpr const char* kManifestFileName = "manifest.jsonl";

/// Words available for `spec.vocabulary`.
std::vector<std::string> load_vocabulary(const CorpusSpec& spec, const Charset& charset);
/// Embedded list of common English words (lowercase, <= 10 letters).
std::span<const std::string_view> builtin_words();

/// Renders `spec.word_count` images under `out_dir/images/` and writes
/// `out_dir/manifest.jsonl`. Deterministic in `spec`.
CorpusManifest build_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

struct LabeledBatch {
  std::vector<TextImage> images;
  std::vector<std::optional<std::string>> labels;
  std::vector<std::size_t> indices;

  std::size_t size() const { return images.size(); }
};

/// Decodes, standardizes to 32x128 and normalizes to [0,1]. Errors name the path.
LabeledBatch load_batch(const CorpusManifest& manifest, std::span<const std::size_t> indices);
/// Loads the ink mask for one entry (32x128x1).
Image load_mask(const CorpusManifest& manifest, std::size_t index);

}  // namespace dig
