#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cspcn/config.hpp"
#include "cspcn/data.hpp"
#include "cspcn/losses.hpp"
#include "cspcn/metrics.hpp"
#include "cspcn/model.hpp"
#include "cspcn/optimizer.hpp"
#include "cspcn/persistence.hpp"

namespace cspcn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learning rate for the 0-based update index `step`.
///   step_halving: lr_init * 0.5^floor(step / step_interval)
///   cosine:       lr_floor + (lr_init - lr_floor) (1 + cos(pi step / iterations)) / 2
double lr_at(std::int64_t step, const TrainConfig& config);

struct TrainingBatch {
  ImageBatch noisy;
  ImageBatch clean;
};

/// One optimization step: forward in training mode, composite loss, backward,
/// optional global-norm clipping, Adam at lr_at(optimizer.step) (or at
/// `lr_override`). Throws TrainingError naming the first non-finite loss term.
LossReport train_step(CSPCN& model, OptimizerState& optimizer, const TrainingBatch& batch,
                      const Config& config, std::optional<double> lr_override = std::nullopt);

/// An image pair held in memory. `noisy` is undefined for synthetic data.
struct LoadedPair {
  std::string name;
  ImageBatch clean;
  ImageBatch noisy;
};

/// Reads every indexed image as float64 with `channels` channels. Paired
/// entries must agree in size.
std::vector<LoadedPair> load_dataset(const DatasetIndex& index, int channels);

/// The training batch for update `step`: random image, crop, flips and (for
/// synthetic data) AWGN, all a pure function of (seed, step).
TrainingBatch sample_batch(const std::vector<LoadedPair>& pool, const TrainConfig& config,
                           std::int64_t step, torch::Dtype dtype = torch::kFloat32);

/// Noisy input for a whole evaluation image: the stored noisy image in paired
/// mode, otherwise seeded AWGN at `sigma`.
ImageBatch evaluation_input(const LoadedPair& pair, double sigma, std::uint64_t seed,
                            std::size_t image_index);

/// Denoises every pair and reports PSNR/SSIM against the clean images.
MetricReport evaluate(CSPCN& model, const std::vector<LoadedPair>& pairs, double sigma,
                      std::uint64_t seed, const MetricOptions& options = {});

struct StepRecord {
  std::int64_t step = 0;  // 0-based update index
  double lr = 0.0;
  LossReport loss;
};

struct ValidationRecord {
  std::int64_t step = 0;  // updates completed
  MetricReport metrics;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
};

struct FitOptions {
  std::optional<std::filesystem::path> resume;
  torch::Dtype dtype = torch::kFloat32;
  std::function<void(const StepRecord&)> on_step;
};

/// Full training run. Writes checkpoint_<k>.cspcn every checkpoint_interval
/// updates, best.cspcn on validation improvement, final.cspcn at the end, and
/// train_log.csv (`step,lr,char,edge,recon,total`) plus validation CSVs.
TrainLog fit(const DatasetIndex& index, const Config& config, const std::filesystem::path& out_dir,
             const FitOptions& options = {});

std::string format_train_log(const std::vector<StepRecord>& steps);

}  // namespace cspcn
