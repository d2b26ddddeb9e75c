#include "cspcn/persistence.hpp"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "cspcn/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace cspcn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string role_name(EntryRole role) {
  switch (role) {
    case EntryRole::parameter:
      return "parameter";
    case EntryRole::buffer:
      return "buffer";
    case EntryRole::first_moment:
      return "first_moment";
    case EntryRole::second_moment:
      return "second_moment";
  }
  return "parameter";
}

EntryRole parse_role(const std::string& name) {
  if (name == "parameter") return EntryRole::parameter;
  if (name == "buffer") return EntryRole::buffer;
  if (name == "first_moment") return EntryRole::first_moment;
  if (name == "second_moment") return EntryRole::second_moment;
  throw CheckpointError("unknown entry role '" + name + "'");
}

std::string dtype_name(const torch::Tensor& t) {
  if (t.scalar_type() == torch::kFloat32) return "f32";
  if (t.scalar_type() == torch::kFloat64) return "f64";
  throw CheckpointError("only f32 and f64 arrays can be stored");
}

torch::Dtype dtype_from_name(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  throw CheckpointError("unknown dtype '" + name + "'");
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (auto b : bytes) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

std::vector<std::uint8_t> from_hex(const std::string& text) {
  if (text.size() % 2) throw CheckpointError("malformed rng_state");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw CheckpointError("malformed rng_state");
  };
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(nibble(text[i]) * 16 + nibble(text[i + 1])));
  }
  return out;
}

struct PendingArray {
  ManifestEntry entry;
  torch::Tensor data;
};

std::vector<PendingArray> plan_arrays(const ParameterStore& parameters,
                                      const OptimizerState& optimizer) {
  std::vector<PendingArray> arrays;
  std::uint64_t offset = 0;
  auto push = [&](const std::string& name, EntryRole role, const torch::Tensor& value) {
    ManifestEntry entry;
    entry.name = name;
    entry.role = role;
    entry.shape.assign(value.sizes().begin(), value.sizes().end());
    entry.dtype = dtype_name(value);
    entry.byte_offset = offset;
    offset += entry.byte_size();
    arrays.push_back({std::move(entry), value.detach().cpu().contiguous()});
  };
  for (const auto& e : parameters.entries()) {
    push(e.name, e.learnable ? EntryRole::parameter : EntryRole::buffer, e.value);
  }
  for (const auto& slot : optimizer.slots) push(slot.name, EntryRole::first_moment, slot.first_moment);
  for (const auto& slot : optimizer.slots) {
    push(slot.name, EntryRole::second_moment, slot.second_moment);
  }
  return arrays;
}

CheckpointManifest parse_manifest(std::istream& in, std::uint64_t file_size) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("not a .cspcn checkpoint (bad magic)");
  }
  std::uint64_t length = 0;
  if (!in.read(reinterpret_cast<char*>(&length), sizeof length)) {
    throw CheckpointError("truncated checkpoint: missing manifest length");
  }
  const std::uint64_t header = sizeof kCheckpointMagic + sizeof length;
  if (length > file_size - header) throw CheckpointError("truncated checkpoint: manifest cut short");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw CheckpointError("truncated checkpoint: manifest cut short");
  }

  CheckpointManifest manifest;
  try {
    const auto doc = json::parse(text);
    manifest.format_version = doc.at("format_version").get<int>();
    if (manifest.format_version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint format_version " +
                            std::to_string(manifest.format_version) + " (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    manifest.step = doc.at("step").get<std::int64_t>();
    manifest.lr = doc.at("lr").get<double>();
    manifest.config_snapshot = doc.at("config_snapshot").get<std::string>();
    manifest.rng_state = from_hex(doc.at("rng_state").get<std::string>());
    for (const auto& item : doc.at("entries")) {
      ManifestEntry entry;
      entry.name = item.at("name").get<std::string>();
      entry.role = parse_role(item.at("role").get<std::string>());
      entry.shape = item.at("shape").get<std::vector<std::int64_t>>();
      entry.dtype = item.at("dtype").get<std::string>();
      dtype_from_name(entry.dtype);
      entry.byte_offset = item.at("byte_offset").get<std::uint64_t>();
      manifest.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  manifest.header_bytes = header + length;

  std::uint64_t expected_offset = 0;
  for (const auto& entry : manifest.entries) {
    if (entry.byte_offset != expected_offset) {
      throw CheckpointError("entry '" + entry.name + "' is not at its contiguous offset");
    }
    expected_offset += entry.byte_size();
  }
  if (manifest.header_bytes + expected_offset > file_size) {
    throw CheckpointError("truncated checkpoint: array data ends at byte " +
                          std::to_string(manifest.header_bytes + expected_offset) +
                          " but the file has " + std::to_string(file_size));
  }
  return manifest;
}

void validate_layout(const CheckpointManifest& manifest, const ModelConfig& expected) {
  CSPCN reference(expected);
  const auto layout = ParameterStore::from_module(*reference);
  std::map<std::string, std::vector<std::int64_t>> wanted;
  for (const auto& e : layout.entries()) {
    wanted.emplace(e.name, std::vector<std::int64_t>(e.value.sizes().begin(), e.value.sizes().end()));
  }
  std::set<std::string> seen;
  for (const auto& entry : manifest.entries) {
    if (entry.role != EntryRole::parameter && entry.role != EntryRole::buffer) continue;
    const auto it = wanted.find(entry.name);
    if (it == wanted.end()) throw CheckpointError("unexpected parameter '" + entry.name + "'");
    if (it->second != entry.shape) {
      throw CheckpointError("shape mismatch for '" + entry.name + "': checkpoint has " +
                            shape_string(entry.shape) + ", config expects " +
                            shape_string(it->second));
    }
    if (!seen.insert(entry.name).second) {
      throw CheckpointError("duplicate parameter '" + entry.name + "'");
    }
  }
  for (const auto& e : layout.entries()) {
    if (!seen.contains(e.name)) throw CheckpointError("missing parameter '" + e.name + "'");
  }
}

Checkpoint read_arrays(std::istream& in, const CheckpointManifest& manifest) {
  Checkpoint result;
  result.meta.step = manifest.step;
  result.meta.config_snapshot = manifest.config_snapshot;
  result.meta.rng_state = manifest.rng_state;
  result.optimizer.step = manifest.step;
  result.optimizer.lr = manifest.lr;

  std::map<std::string, std::size_t> slot_of;
  for (const auto& entry : manifest.entries) {
    auto tensor = torch::empty(entry.shape, torch::TensorOptions().dtype(dtype_from_name(entry.dtype)));
    in.seekg(static_cast<std::streamoff>(manifest.header_bytes + entry.byte_offset));
    if (!in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(entry.byte_size()))) {
      throw CheckpointError("truncated checkpoint while reading '" + entry.name + "'");
    }
    switch (entry.role) {
      case EntryRole::parameter:
      case EntryRole::buffer:
        result.parameters.add(entry.name, tensor, entry.role == EntryRole::parameter);
        break;
      case EntryRole::first_moment:
        slot_of[entry.name] = result.optimizer.slots.size();
        result.optimizer.slots.push_back({entry.name, tensor, torch::Tensor{}});
        break;
      case EntryRole::second_moment: {
        const auto it = slot_of.find(entry.name);
        if (it == slot_of.end()) {
          throw CheckpointError("second moment without first moment for '" + entry.name + "'");
        }
        result.optimizer.slots[it->second].second_moment = tensor;
        break;
      }
    }
  }
  for (const auto& slot : result.optimizer.slots) {
    if (!slot.second_moment.defined()) {
      throw CheckpointError("missing second moment for '" + slot.name + "'");
    }
  }
  return result;
}

Checkpoint load_impl(const fs::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  const auto size = fs::file_size(path);
  const auto manifest = parse_manifest(in, size);
  if (expected) validate_layout(manifest, *expected);
  return read_arrays(in, manifest);
}

}  // namespace

std::uint64_t ManifestEntry::byte_size() const {
  std::uint64_t count = 1;
  for (auto d : shape) count *= static_cast<std::uint64_t>(d);
  return count * (dtype == "f64" ? 8 : 4);
}

void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  const auto tmp = path.parent_path() /
                   (path.filename().string() + ".tmp." + std::to_string(::getpid()));
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
      writer(out);
      out.flush();
      if (!out) throw CheckpointError("write failed for " + path.string());
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

void save_checkpoint(const fs::path& path, const ParameterStore& parameters,
                     const OptimizerState& optimizer, const CheckpointMeta& meta) {
  const auto arrays = plan_arrays(parameters, optimizer);
  json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["step"] = meta.step;
  doc["lr"] = optimizer.lr;
  doc["config_snapshot"] = meta.config_snapshot;
  doc["rng_state"] = to_hex(meta.rng_state);
  doc["entries"] = json::array();
  for (const auto& a : arrays) {
    doc["entries"].push_back({{"name", a.entry.name},
                              {"role", role_name(a.entry.role)},
                              {"shape", a.entry.shape},
                              {"dtype", a.entry.dtype},
                              {"byte_offset", a.entry.byte_offset}});
  }
  const std::string manifest = doc.dump();

  atomic_write(path, [&](std::ostream& out) {
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint64_t length = manifest.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& a : arrays) {
      out.write(static_cast<const char*>(a.data.data_ptr()),
                static_cast<std::streamsize>(a.entry.byte_size()));
    }
  });
}

CheckpointManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  return parse_manifest(in, fs::file_size(path));
}

Checkpoint load_checkpoint(const fs::path& path, const ModelConfig& expected) {
  return load_impl(path, &expected);
}

Checkpoint load_checkpoint(const fs::path& path) { return load_impl(path, nullptr); }

}  // namespace cspcn
