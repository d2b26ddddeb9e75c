#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cspcn/config.hpp"
#include "cspcn/optimizer.hpp"
#include "cspcn/parameter_store.hpp"

namespace cspcn {

// On-disk layout of a .cspcn file:
//   magic "CSPCN\0" (6 bytes)
//   manifest length, uint64 little-endian
//   manifest, UTF-8 JSON
//   raw little-endian arrays; entry offsets are relative to the first byte
//   after the manifest.
inline constexpr char kCheckpointMagic[6] = {'C', 'S', 'P', 'C', 'N', '\0'};
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EntryRole { parameter, buffer, first_moment, second_moment };

struct ManifestEntry {
  std::string name;
  EntryRole role = EntryRole::parameter;
  std::vector<std::int64_t> shape;
  std::string dtype;  // "f32" or "f64"
  std::uint64_t byte_offset = 0;

  std::uint64_t byte_size() const;
};

struct CheckpointManifest {
  int format_version = kCheckpointVersion;
  std::vector<ManifestEntry> entries;
  std::string config_snapshot;
  std::int64_t step = 0;
  double lr = 0.0;
  std::vector<std::uint8_t> rng_state;
  std::uint64_t header_bytes = 0;  // magic + length prefix + manifest
};

struct CheckpointMeta {
  std::int64_t step = 0;
  std::string config_snapshot;
  std::vector<std::uint8_t> rng_state;
};

struct Checkpoint {
  ParameterStore parameters;
  OptimizerState optimizer;
  CheckpointMeta meta;
};

/// Writes through `writer` into a sibling temporary file and renames it over
/// `path` on success. On any failure the temporary is removed and `path` is
/// left untouched.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& parameters,
                     const OptimizerState& optimizer, const CheckpointMeta& meta);

/// Reads only the manifest.
CheckpointManifest read_manifest(const std::filesystem::path& path);

/// Loads and validates names and shapes against the layout of `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Loads without layout validation; used when the config comes from the file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cspcn
