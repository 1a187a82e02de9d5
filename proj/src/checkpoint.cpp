#include "dig/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dig/config.hpp"
#include "dig/errors.hpp"

namespace dig {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'I', 'G', 'C', 'K', 'P', 'T', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kInt32: return "i32";
    case torch::kBool: return "bool";
    case torch::kUInt8: return "u8";
    default: throw InvalidArgument("unsupported checkpoint dtype " + std::string(c10::toString(t)));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  if (name == "i32") return torch::kInt32;
  if (name == "bool") return torch::kBool;
  if (name == "u8") return torch::kUInt8;
  throw CorruptData("unknown dtype '" + name + "' in checkpoint");
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, t] : tensors)
    if (key == name) return &t;
  return nullptr;
}

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  const auto* t = find(name);
  if (t == nullptr) throw Mismatch("checkpoint has no tensor named " + name);
  return *t;
}

std::vector<std::pair<std::string, torch::Tensor>> Checkpoint::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& [key, t] : tensors)
    if (key.rfind(prefix, 0) == 0) out.emplace_back(key.substr(prefix.size()), t);
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::vector<torch::Tensor> blobs;
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    entries.push_back({{"name", name},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"shape", t.sizes().vec()},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(t);
  }
  std::uint64_t checksum = 0xcbf29ce484222325ULL;
  for (const auto& t : blobs)
    checksum = fnv1a(t.data_ptr(), static_cast<std::size_t>(t.numel()) * t.element_size(), checksum);

  nlohmann::json meta = {{"format_version", kCheckpointFormatVersion},
                         {"kind", checkpoint.kind},
                         {"step", checkpoint.step},
                         {"fingerprint", checkpoint.fingerprint},
                         {"config", checkpoint.config},
                         {"extra", checkpoint.extra},
                         {"entries", entries},
                         {"data_bytes", offset},
                         {"checksum", hex64(checksum)}};
  const std::string text = meta.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : blobs)
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  char magic[sizeof kMagic];
  std::uint64_t length = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CorruptData(path.string() + " is not a checkpoint (bad magic)");
  if (!in.read(reinterpret_cast<char*>(&length), sizeof length) || length > file_size)
    throw CorruptData(path.string() + " is truncated (metadata header)");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length)))
    throw CorruptData(path.string() + " is truncated (metadata)");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData(path.string() + " has unreadable metadata: " + e.what());
  }

  Checkpoint ck;
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw Mismatch(path.string() + " has format version " + std::to_string(version) + ", expected " +
                     std::to_string(kCheckpointFormatVersion));
    const auto data_bytes = meta.at("data_bytes").get<std::uint64_t>();
    if (sizeof kMagic + sizeof length + length + data_bytes != file_size)
      throw CorruptData(path.string() + " is truncated or has trailing bytes (expected " +
                        std::to_string(sizeof kMagic + sizeof length + length + data_bytes) + " bytes, found " +
                        std::to_string(file_size) + ")");
    ck.kind = meta.at("kind").get<std::string>();
    ck.step = meta.at("step").get<int64_t>();
    ck.fingerprint = meta.at("fingerprint").get<std::string>();
    ck.config = meta.at("config");
    ck.extra = meta.at("extra");

    std::uint64_t checksum = 0xcbf29ce484222325ULL;
    std::uint64_t expected_offset = 0;
    for (const auto& e : meta.at("entries")) {
      const auto dtype = dtype_from(e.at("dtype").get<std::string>());
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (offset != expected_offset || nbytes != static_cast<std::uint64_t>(t.numel()) * t.element_size() ||
          offset + nbytes > data_bytes)
        throw CorruptData(path.string() + " has an inconsistent entry table at " + e.at("name").get<std::string>());
      if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes)))
        throw CorruptData(path.string() + " is truncated (array data)");
      checksum = fnv1a(t.data_ptr(), nbytes, checksum);
      expected_offset += nbytes;
      ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    if (hex64(checksum) != meta.at("checksum").get<std::string>())
      throw CorruptData(path.string() + " failed its checksum");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptData(path.string() + " has malformed metadata: " + e.what());
  }
  return ck;
}

std::vector<std::pair<std::string, torch::Tensor>> module_state(const torch::nn::Module& module,
                                                                const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(prefix + item.key(), item.value());
  return out;
}

void load_module_state(torch::nn::Module& module, const Checkpoint& checkpoint, const std::string& prefix) {
  torch::NoGradGuard guard;
  for (auto& [name, dst] : module_state(module, prefix)) {
    const auto* src = checkpoint.find(name);
    if (src == nullptr) throw Mismatch("checkpoint is missing " + name);
    if (!src->sizes().equals(dst.sizes()) || src->scalar_type() != dst.scalar_type())
      throw Mismatch("checkpoint tensor " + name + " has a different shape or dtype");
    dst.copy_(*src);
  }
}

void require_fingerprint(const Checkpoint& checkpoint, const std::string& expected) {
  if (checkpoint.fingerprint != expected)
    throw Mismatch("checkpoint encoder '" + checkpoint.fingerprint + "' does not match configured encoder '" +
                   expected + "'");
}

}  // namespace dig
