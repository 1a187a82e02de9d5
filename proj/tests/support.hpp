#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "dig/corpus.hpp"
#include "dig/image.hpp"
#include "dig/model.hpp"
#include "dig/rng.hpp"

namespace dig::test {

/// Fresh directory removed when the object goes out of scope.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dig-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(std::uint64_t seed, int h = kImageHeight, int w = kImageWidth, int c = kChannels) {
  Rng rng(seed);
  Image img(h, w, c);
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

inline CorpusManifest small_corpus(const std::filesystem::path& dir, std::size_t count, bool labeled = true,
                                   std::uint64_t seed = 7) {
  CorpusSpec spec;
  spec.word_count = count;
  spec.seed = seed;
  spec.labeled = labeled;
  return build_corpus(spec, dir);
}

/// Small encoder that keeps model tests fast.
inline EncoderConfig tiny_config() {
  EncoderConfig c;
  c.preset = "desk";
  c.embed_dim = 32;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.projection_hidden = 64;
  c.projection_dim = 256;
  return c;
}

inline torch::Tensor random_images(int64_t batch, std::uint64_t seed) {
  auto g = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({batch, kImageHeight, kImageWidth, kChannels}, g);
}

}  // namespace dig::test
