#include "dig/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "dig/errors.hpp"
#include "dig/rng.hpp"

namespace dig {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Charset

Charset::Charset(std::string symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty()) throw InvalidArgument("charset must not be empty");
  std::string sorted = symbols_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("charset contains duplicate symbols");
}

int Charset::index_of(char c) const {
  const auto pos = symbols_.find(c);
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

namespace {

// Length of the UTF-8 sequence starting with lead byte `b` (1 for invalid bytes).
std::size_t utf8_length(unsigned char b) {
  if (b < 0x80) return 1;
  if ((b >> 5) == 0x6) return 2;
  if ((b >> 4) == 0xE) return 3;
  if ((b >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

void Charset::validate(std::string_view text) const {
  if (text.empty()) throw InvalidArgument("text must not be empty");
  std::size_t chars = 0;
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    if (n != 1 || !contains(text[i])) {
      throw InvalidArgument("character '" + std::string(text.substr(i, n)) +
                            "' is not in the charset \"" + symbols_ + "\"");
    }
    i += n;
    ++chars;
  }
  if (chars > kMaxLabelLength) {
    throw InvalidArgument("text \"" + std::string(text) + "\" has " + std::to_string(chars) +
                          " characters; the maximum is " + std::to_string(kMaxLabelLength));
  }
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const RenderConfig& c) {
  j = nlohmann::json{{"min_contrast", c.min_contrast},   {"max_perspective", c.max_perspective},
                     {"max_blur_sigma", c.max_blur_sigma}, {"max_noise_sigma", c.max_noise_sigma},
                     {"min_fill", c.min_fill},             {"max_fill", c.max_fill},
                     {"colour", c.colour}};
}

void from_json(const nlohmann::json& j, RenderConfig& c) {
  c.min_contrast = j.value("min_contrast", c.min_contrast);
  c.max_perspective = j.value("max_perspective", c.max_perspective);
  c.max_blur_sigma = j.value("max_blur_sigma", c.max_blur_sigma);
  c.max_noise_sigma = j.value("max_noise_sigma", c.max_noise_sigma);
  c.min_fill = j.value("min_fill", c.min_fill);
  c.max_fill = j.value("max_fill", c.max_fill);
  c.colour = j.value("colour", c.colour);
}

void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = nlohmann::json{{"word_count", s.word_count},
                     {"vocabulary", s.vocabulary},
                     {"seed", s.seed},
                     {"labeled", s.labeled},
                     {"random_min_length", s.random_min_length},
                     {"random_max_length", s.random_max_length},
                     {"render", s.render}};
}

void from_json(const nlohmann::json& j, CorpusSpec& s) {
  s.word_count = j.value("word_count", s.word_count);
  s.vocabulary = j.value("vocabulary", s.vocabulary);
  s.seed = j.value("seed", s.seed);
  s.labeled = j.value("labeled", s.labeled);
  s.random_min_length = j.value("random_min_length", s.random_min_length);
  s.random_max_length = j.value("random_max_length", s.random_max_length);
  if (j.contains("render")) s.render = j.at("render").get<RenderConfig>();
}

// ---------------------------------------------------------------------------
// Renderer

namespace {

constexpr int kSupersample = 2;

constexpr std::array kFonts = {
    cv::FONT_HERSHEY_SIMPLEX, cv::FONT_HERSHEY_DUPLEX,  cv::FONT_HERSHEY_COMPLEX,
    cv::FONT_HERSHEY_TRIPLEX, cv::FONT_HERSHEY_PLAIN,   cv::FONT_HERSHEY_COMPLEX_SMALL,
};

struct Colour {
  float r, g, b;
};

Colour tinted_grey(double level, double chroma, Rng& rng) {
  auto channel = [&] {
    return static_cast<float>(std::clamp(level + rng.uniform(-chroma, chroma), 0.0, 1.0));
  };
  const float r = channel();
  const float g = channel();
  const float b = channel();
  return {r, g, b};
}

}  // namespace

RenderedWord render_word(std::string_view text, std::uint64_t style_seed, const RenderConfig& config,
                         const Charset& charset) {
  charset.validate(text);
  Rng rng(style_seed);

  const int cw = kImageWidth * kSupersample;
  const int ch = kImageHeight * kSupersample;

  // Ink and background grey levels separated by at least min_contrast.
  const double contrast = rng.uniform(config.min_contrast, 1.0);
  double bg_level = rng.uniform(0.0, 1.0 - contrast);
  double fg_level = bg_level + contrast;
  if (rng.bernoulli(0.5)) std::swap(bg_level, fg_level);
  const double chroma = config.colour ? 0.15 : 0.0;
  const Colour bg = tinted_grey(bg_level, chroma, rng);
  const Colour fg = tinted_grey(fg_level, chroma, rng);
  const double gradient = rng.uniform(-0.08, 0.08);

  const int font = kFonts[rng.below(kFonts.size())] | (rng.bernoulli(0.2) ? cv::FONT_ITALIC : 0);
  const int thickness = 1 + static_cast<int>(rng.below(3));
  const std::string word(text);

  int baseline = 0;
  const cv::Size unit = cv::getTextSize(word, font, 1.0, thickness, &baseline);
  const double fill = rng.uniform(config.min_fill, config.max_fill);
  double scale = fill * cw / std::max(unit.width, 1);
  scale = std::min(scale, 0.8 * ch / std::max(unit.height + baseline, 1));
  const cv::Size size = cv::getTextSize(word, font, scale, thickness, &baseline);
  const double slack_x = std::max(0.0, static_cast<double>(cw - size.width));
  const double slack_y = std::max(0.0, static_cast<double>(ch - size.height - baseline));
  const int x0 = static_cast<int>(rng.uniform(0.1, 0.9) * slack_x);
  const int y0 = size.height + static_cast<int>(rng.uniform(0.2, 0.8) * slack_y);

  cv::Mat alpha = cv::Mat::zeros(ch, cw, CV_8UC1);
  cv::putText(alpha, word, cv::Point(x0, y0), font, scale, cv::Scalar(255), thickness, cv::LINE_AA);

  if (config.max_perspective > 0.0) {
    const float jx = static_cast<float>(config.max_perspective * cw);
    const float jy = static_cast<float>(config.max_perspective * ch);
    const cv::Point2f src[4] = {{0, 0}, {float(cw - 1), 0}, {float(cw - 1), float(ch - 1)}, {0, float(ch - 1)}};
    cv::Point2f dst[4];
    for (int k = 0; k < 4; ++k) {
      dst[k] = {src[k].x + static_cast<float>(rng.uniform(-jx, jx)),
                src[k].y + static_cast<float>(rng.uniform(-jy, jy))};
    }
    cv::Mat warped;
    cv::warpPerspective(alpha, warped, cv::getPerspectiveTransform(src, dst), alpha.size(),
                        cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
    alpha = warped;
  }

  cv::Mat alpha_f;
  alpha.convertTo(alpha_f, CV_32F, 1.0 / 255.0);
  cv::Mat small_alpha;
  cv::resize(alpha_f, small_alpha, cv::Size(kImageWidth, kImageHeight), 0, 0, cv::INTER_AREA);

  Image pixels(kImageHeight, kImageWidth, kChannels);
  Image mask(kImageHeight, kImageWidth, 1);
  for (int y = 0; y < kImageHeight; ++y) {
    for (int x = 0; x < kImageWidth; ++x) {
      const float a = small_alpha.at<float>(y, x);
      const float shade = static_cast<float>(gradient * (2.0 * x / (kImageWidth - 1) - 1.0));
      const float bgc[3] = {bg.r + shade, bg.g + shade, bg.b + shade};
      const float fgc[3] = {fg.r, fg.g, fg.b};
      for (int c = 0; c < kChannels; ++c) pixels.at(y, x, c) = bgc[c] * (1.0f - a) + fgc[c] * a;
      mask.at(y, x) = a > 0.5f ? 1.0f : 0.0f;
    }
  }

  const double sigma = rng.uniform(0.0, config.max_blur_sigma);
  if (sigma >= 0.2) {
    cv::Mat m = to_mat(pixels);
    cv::GaussianBlur(m, m, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
    pixels = from_mat(m);
  }
  const double noise = rng.uniform(0.0, config.max_noise_sigma);
  if (noise > 0.0) {
    for (auto& v : pixels.values()) v += static_cast<float>(noise * rng.normal());
  }
  pixels.clamp_unit();

  return RenderedWord{TextImage{std::move(pixels), word}, std::move(mask)};
}

// ---------------------------------------------------------------------------
// Corpus

fs::path CorpusManifest::image_path(std::size_t index) const {
  if (index >= entries.size()) {
    throw InvalidArgument("index " + std::to_string(index) + " out of range (manifest has " +
                          std::to_string(entries.size()) + " entries)");
  }
  return root / entries[index].path;
}

fs::path CorpusManifest::mask_path(std::size_t index) const {
  fs::path p = image_path(index);
  return p.replace_extension(".mask.png");
}

bool CorpusManifest::labeled() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.label.has_value(); });
}

std::vector<std::string> load_vocabulary(const CorpusSpec& spec, const Charset& charset) {
  std::vector<std::string> words;
  if (spec.vocabulary == "builtin") {
    for (auto w : builtin_words()) words.emplace_back(w);
  } else if (spec.vocabulary == "random") {
    return {};
  } else {
    std::ifstream in(spec.vocabulary);
    if (!in) throw IoError("cannot open vocabulary file: " + spec.vocabulary);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      charset.validate(line);
      words.push_back(line);
    }
    if (words.empty()) throw InvalidArgument("vocabulary file is empty: " + spec.vocabulary);
  }
  for (const auto& w : words) charset.validate(w);
  return words;
}

namespace {

std::string pick_word(const CorpusSpec& spec, const std::vector<std::string>& words,
                      const Charset& charset, std::size_t index) {
  Rng rng(derive_seed(spec.seed, {0, index}));
  if (!words.empty()) return words[rng.below(words.size())];
  const std::size_t lo = std::max<std::size_t>(1, spec.random_min_length);
  const std::size_t hi = std::min(kMaxLabelLength, std::max(lo, spec.random_max_length));
  const std::size_t n = lo + rng.below(hi - lo + 1);
  std::string s;
  for (std::size_t k = 0; k < n; ++k) s.push_back(charset.symbols()[rng.below(charset.size())]);
  return s;
}

}  // namespace

CorpusManifest build_corpus(const CorpusSpec& spec, const fs::path& out_dir) {
  if (spec.word_count < 1) throw InvalidArgument("corpus word count must be >= 1");
  const Charset charset;
  const auto words = load_vocabulary(spec, charset);

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create corpus directory " + (out_dir / "images").string() + ": " + ec.message());

  CorpusManifest manifest;
  manifest.charset = charset.symbols();
  manifest.root = out_dir;
  manifest.entries.reserve(spec.word_count);
  for (std::size_t i = 0; i < spec.word_count; ++i) {
    const std::string word = pick_word(spec, words, charset, i);
    const std::uint64_t seed = derive_seed(spec.seed, {1, i});
    const RenderedWord rendered = render_word(word, seed, spec.render, charset);

    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu", i);
    const std::string stem(name);
    write_png(rendered.image.pixels, out_dir / (stem + ".png"));
    write_png(rendered.mask, out_dir / (stem + ".mask.png"));
    manifest.entries.push_back(
        ManifestEntry{stem + ".png", spec.labeled ? std::optional<std::string>(word) : std::nullopt, seed});
  }
  write_manifest(manifest, out_dir / kManifestFileName);
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  nlohmann::ordered_json header;
  header["version"] = manifest.version;
  header["charset"] = manifest.charset;
  out << header.dump() << '\n';
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["path"] = e.path;
    j["label"] = e.label ? nlohmann::ordered_json(*e.label) : nlohmann::ordered_json(nullptr);
    j["seed"] = e.seed;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed while writing manifest: " + path.string());
}

CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  CorpusManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        manifest.version = j.at("version").get<int>();
        if (manifest.version != 1)
          throw Mismatch("unsupported manifest version " + std::to_string(manifest.version) + " in " + path.string());
        manifest.charset = j.at("charset").get<std::string>();
        have_header = true;
        continue;
      }
      ManifestEntry e;
      e.path = j.at("path").get<std::string>();
      if (j.contains("label") && !j.at("label").is_null()) e.label = j.at("label").get<std::string>();
      e.seed = j.at("seed").get<std::uint64_t>();
      manifest.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw CorruptData("malformed manifest " + path.string() + " at line " + std::to_string(line_no) + ": " + ex.what());
  }
  if (!have_header) throw CorruptData("manifest has no header line: " + path.string());
  const Charset charset(manifest.charset);
  for (const auto& e : manifest.entries) {
    if (!e.label) continue;
    try {
      charset.validate(*e.label);
    } catch (const InvalidArgument& ex) {
      throw CorruptData("manifest " + path.string() + " entry " + e.path + ": " + ex.what());
    }
  }
  return manifest;
}

LabeledBatch load_batch(const CorpusManifest& manifest, std::span<const std::size_t> indices) {
  LabeledBatch batch;
  batch.images.reserve(indices.size());
  for (const std::size_t index : indices) {
    const fs::path path = manifest.image_path(index);
    TextImage image{standardize(read_png(path)), manifest.entries[index].label};
    batch.labels.push_back(image.label);
    batch.images.push_back(std::move(image));
    batch.indices.push_back(index);
  }
  return batch;
}

Image load_mask(const CorpusManifest& manifest, std::size_t index) {
  Image m = read_png(manifest.mask_path(index), 1);
  if (m.height() != kImageHeight || m.width() != kImageWidth) {
    cv::Mat resized;
    cv::resize(to_mat(m), resized, cv::Size(kImageWidth, kImageHeight), 0, 0, cv::INTER_NEAREST);
    m = from_mat(resized);
  }
  for (auto& v : m.values()) v = v > 0.5f ? 1.0f : 0.0f;
  return m;
}

}  // namespace dig
