#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cspcn {

/// Body of one network stage. `cm2s` is MLFP -> AED (-> MCAC), `s3` is the
/// parallel MLFP + cascading block. The remaining kinds exist to rebuild the
/// module-combination ablations.
enum class StageKind { cm2s, aed, mlfp, s3, s3_aed_gap, s3_aed_cascade };

enum class Schedule { step_halving, cosine };

enum class LaplacianKernel { four_neighbor, eight_neighbor };

std::string_view to_string(StageKind kind);
std::string_view to_string(Schedule schedule);
bool stage_has_aed(StageKind kind);

inline std::ostream& operator<<(std::ostream& out, StageKind kind) { return out << to_string(kind); }
inline std::ostream& operator<<(std::ostream& out, Schedule schedule) {
  return out << to_string(schedule);
}

struct ModelConfig {
  int image_channels = 3;
  int base_width = 64;
  int aed_scales = 3;
  std::vector<int> mlfp_dilations{1, 2, 3, 2, 1};
  std::vector<int> mcac_dilations{1, 2, 3};
  int cascade_dabs = 4;
  int dab_reduction = 8;
  int stages = 3;
  // Empty means the canonical layout: CM2S for the first two stages, 3S third.
  std::vector<StageKind> stage_kinds;
  bool use_mcac = true;
  bool mlfp_batch_norm = true;
  bool mcac_temperature = false;
  int sab_kernel = 7;

  std::vector<StageKind> layout() const;
  /// Spatial dims fed to the network must be multiples of this.
  int divisibility() const { return 1 << (aed_scales - 1); }

  bool operator==(const ModelConfig&) const = default;
};

struct LossConfig {
  double epsilon = 1e-3;
  double lambda1 = 0.05;
  double lambda2 = 0.1;
  LaplacianKernel laplacian = LaplacianKernel::four_neighbor;

  bool operator==(const LossConfig&) const = default;
};

struct TrainConfig {
  int batch_size = 16;
  int patch_size = 64;
  std::int64_t iterations = 400000;
  Schedule schedule = Schedule::step_halving;
  double lr_init = 1e-4;
  double lr_floor = 1e-6;
  std::int64_t step_interval = 100000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Global-norm gradient clipping; 0 disables it.
  double grad_clip = 0.0;
  std::int64_t checkpoint_interval = 5000;
  std::int64_t validation_interval = 5000;
  double validation_fraction = 0.05;
  // AWGN level on the 0-255 scale. sigma_max > sigma turns on blind training
  // with a per-patch level drawn uniformly from [sigma, sigma_max].
  double sigma = 25.0;
  double sigma_max = 0.0;

  bool operator==(const TrainConfig&) const = default;
};

struct Config {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;

  bool operator==(const Config&) const = default;
};

/// Raised for any unreadable or invalid configuration. `key()` names the
/// offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

Config parse_config(std::string_view document);
Config load_config(const std::filesystem::path& path);
std::string to_document(const Config& config);

void validate(const ModelConfig& model);
void validate(const LossConfig& loss);
void validate(const Config& config);

}  // namespace cspcn
