#include "cspcn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "cspcn/image_io.hpp"

namespace cspcn {

namespace fs = std::filesystem;

namespace {

void check_finite(const LossReport& report) {
  for (std::size_t k = 0; k < report.charbonnier_per_stage.size(); ++k) {
    if (!std::isfinite(report.charbonnier_per_stage[k])) {
      throw TrainingError("non-finite loss term: charbonnier[stage " + std::to_string(k + 1) + "]");
    }
    if (!std::isfinite(report.edge_per_stage[k])) {
      throw TrainingError("non-finite loss term: edge[stage " + std::to_string(k + 1) + "]");
    }
  }
  if (!std::isfinite(report.recon)) throw TrainingError("non-finite loss term: recon");
  if (!std::isfinite(report.total)) throw TrainingError("non-finite loss term: total");
}

void clip_gradients(torch::nn::Module& module, double max_norm) {
  double total = 0.0;
  for (const auto& p : module.parameters()) {
    if (p.grad().defined()) total += p.grad().pow(2).sum().item<double>();
  }
  const double norm = std::sqrt(total);
  if (norm <= max_norm) return;
  const double scale = max_norm / (norm + 1e-12);
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) {
    if (p.grad().defined()) p.mutable_grad().mul_(scale);
  }
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::uint8_t> encode_sampler_state(std::uint64_t seed, std::int64_t next_step) {
  std::vector<std::uint8_t> bytes(16);
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    bytes[8 + i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(next_step) >> (8 * i));
  }
  return bytes;
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.9g", v);
  return buffer;
}

void save_state(const fs::path& path, CSPCN& model, const OptimizerState& optimizer,
                const Config& config) {
  CheckpointMeta meta;
  meta.step = optimizer.step;
  meta.config_snapshot = to_document(config);
  meta.rng_state = encode_sampler_state(config.train.seed, optimizer.step);
  save_checkpoint(path, ParameterStore::from_module(*model), optimizer, meta);
}

void write_text(const fs::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& out) { out << text; });
}

}  // namespace

double lr_at(std::int64_t step, const TrainConfig& config) {
  if (step < 0 || step >= config.iterations) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(config.iterations) + ")");
  }
  if (config.schedule == Schedule::step_halving) {
    return config.lr_init * std::pow(0.5, static_cast<double>(step / config.step_interval));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(config.iterations);
  return config.lr_floor +
         0.5 * (config.lr_init - config.lr_floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

LossReport train_step(CSPCN& model, OptimizerState& optimizer, const TrainingBatch& batch,
                      const Config& config, std::optional<double> lr_override) {
  if (batch.noisy.sizes() != batch.clean.sizes()) {
    throw ShapeError("train_step: noisy and clean batches differ in shape");
  }
  const double lr = lr_override ? *lr_override : lr_at(optimizer.step, config.train);
  model->train();
  model->zero_grad();
  const auto result = model->forward(batch.noisy);
  auto report = total_loss(result, batch.clean, config.loss);
  check_finite(report);
  report.objective.backward();
  if (config.train.grad_clip > 0) clip_gradients(*model, config.train.grad_clip);
  adam_update(*model, optimizer, lr,
              AdamHyper{config.train.adam_beta1, config.train.adam_beta2, config.train.adam_eps});
  report.objective = report.objective.detach();
  return report;
}

std::vector<LoadedPair> load_dataset(const DatasetIndex& index, int channels) {
  std::vector<LoadedPair> pairs;
  pairs.reserve(index.entries.size());
  for (const auto& entry : index.entries) {
    LoadedPair pair;
    pair.name = entry.name;
    pair.clean = convert_channels(read_png(entry.clean).pixels, channels);
    if (entry.noisy) {
      pair.noisy = convert_channels(read_png(*entry.noisy).pixels, channels);
      if (pair.noisy.sizes() != pair.clean.sizes()) {
        throw DataError("clean and noisy images differ in size for '" + entry.name + "'");
      }
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

TrainingBatch sample_batch(const std::vector<LoadedPair>& pool, const TrainConfig& config,
                           std::int64_t step, torch::Dtype dtype) {
  if (pool.empty()) throw DataError("cannot sample from an empty dataset");
  const auto step_key = static_cast<std::uint64_t>(step);
  std::mt19937_64 rng(mix_seed(config.seed, step_key, 1));
  std::vector<torch::Tensor> clean_patches;
  std::vector<torch::Tensor> noisy_patches;
  for (int b = 0; b < config.batch_size; ++b) {
    const auto& pair = pool[rng() % pool.size()];
    const auto item = static_cast<std::uint64_t>(b);
    const auto boxes = sample_crops(pair.clean.size(2), pair.clean.size(3), config.patch_size, 1,
                                    mix_seed(config.seed, step_key, 100 + item));
    auto clean = crop_patches(pair.clean, config.patch_size, boxes);
    torch::Tensor noisy;
    if (pair.noisy.defined()) {
      noisy = crop_patches(pair.noisy, config.patch_size, boxes);
    } else {
      double sigma = config.sigma;
      if (config.sigma_max > config.sigma) {
        sigma += (config.sigma_max - config.sigma) * uniform01(rng);
      }
      noisy = add_awgn(clean, NoiseSpec{sigma, ColorMode::color,
                                        mix_seed(config.seed, step_key, 300 + item)});
    }
    auto [c, n] = augment({clean, noisy}, mix_seed(config.seed, step_key, 200 + item));
    clean_patches.push_back(c);
    noisy_patches.push_back(n);
  }
  return {torch::cat(noisy_patches, 0).to(dtype), torch::cat(clean_patches, 0).to(dtype)};
}

ImageBatch evaluation_input(const LoadedPair& pair, double sigma, std::uint64_t seed,
                            std::size_t image_index) {
  if (pair.noisy.defined()) return pair.noisy;
  return add_awgn(pair.clean,
                  NoiseSpec{sigma, ColorMode::color, mix_seed(seed, image_index, 7)});
}

MetricReport evaluate(CSPCN& model, const std::vector<LoadedPair>& pairs, double sigma,
                      std::uint64_t seed, const MetricOptions& options) {
  std::vector<MetricRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto noisy = evaluation_input(pairs[i], sigma, seed, i);
    const auto restored = denoise(model, noisy).to(torch::kFloat64);
    MetricRow row;
    row.name = pairs[i].name;
    row.psnr_db = psnr(restored, pairs[i].clean, options);
    row.ssim = ssim(restored, pairs[i].clean, options);
    rows.push_back(row);
  }
  return summarize(std::move(rows));
}

std::string format_train_log(const std::vector<StepRecord>& steps) {
  std::ostringstream out;
  out << "step,lr,char,edge,recon,total\n";
  for (const auto& r : steps) {
    out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss.charbonnier_sum())
        << ',' << format_double(r.loss.edge_sum()) << ',' << format_double(r.loss.recon) << ','
        << format_double(r.loss.total) << '\n';
  }
  return out.str();
}

TrainLog fit(const DatasetIndex& index, const Config& config, const fs::path& out_dir,
             const FitOptions& options) {
  if (index.entries.empty()) throw DataError("dataset is empty");
  fs::create_directories(out_dir);

  auto pairs = load_dataset(index, config.model.image_channels);
  for (const auto& p : pairs) {
    if (p.clean.size(2) < config.train.patch_size || p.clean.size(3) < config.train.patch_size) {
      throw DataError("image '" + p.name + "' is smaller than the patch size");
    }
  }
  auto held_out = static_cast<std::size_t>(
      std::floor(static_cast<double>(pairs.size()) * config.train.validation_fraction));
  if (held_out >= pairs.size()) held_out = 0;
  std::vector<LoadedPair> validation(pairs.end() - static_cast<std::ptrdiff_t>(held_out), pairs.end());
  pairs.resize(pairs.size() - held_out);

  auto model = make_model(config.model, config.train.seed, options.dtype);
  auto optimizer = make_optimizer_state(*model);
  TrainLog log;

  if (options.resume) {
    auto checkpoint = load_checkpoint(*options.resume, config.model);
    checkpoint.parameters.load_into(*model);
    if (!checkpoint.optimizer.slots.empty()) {
      for (auto& slot : checkpoint.optimizer.slots) {
        slot.first_moment = slot.first_moment.to(options.dtype);
        slot.second_moment = slot.second_moment.to(options.dtype);
      }
      optimizer = std::move(checkpoint.optimizer);
    }
    optimizer.step = checkpoint.meta.step;
  }

  const auto log_path = out_dir / "train_log.csv";
  // Keep rows from before the resume point so the log reads as one run.
  if (options.resume && fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(row, field, ',')) fields.push_back(field);
      if (fields.size() != 6) continue;
      StepRecord record;
      record.step = std::stoll(fields[0]);
      if (record.step >= optimizer.step) break;
      record.lr = std::stod(fields[1]);
      record.loss.charbonnier_per_stage = {std::stod(fields[2])};
      record.loss.edge_per_stage = {std::stod(fields[3])};
      record.loss.recon = std::stod(fields[4]);
      record.loss.total = std::stod(fields[5]);
      log.steps.push_back(std::move(record));
    }
  }

  double best_psnr = -std::numeric_limits<double>::infinity();
  const auto& t = config.train;
  for (std::int64_t step = optimizer.step; step < t.iterations; ++step) {
    const auto batch = sample_batch(pairs, t, step, options.dtype);
    StepRecord record;
    record.step = step;
    record.lr = lr_at(step, t);
    record.loss = train_step(model, optimizer, batch, config);
    record.loss.objective = torch::Tensor();
    if (options.on_step) options.on_step(record);
    log.steps.push_back(std::move(record));

    const auto done = step + 1;
    if (!validation.empty() && done % t.validation_interval == 0) {
      ValidationRecord v{done, evaluate(model, validation, t.sigma, t.seed)};
      write_csv(out_dir / ("validation_" + std::to_string(done) + ".csv"), v.metrics);
      if (v.metrics.psnr_db > best_psnr) {
        best_psnr = v.metrics.psnr_db;
        save_state(out_dir / "best.cspcn", model, optimizer, config);
      }
      log.validations.push_back(std::move(v));
    }
    if (done % t.checkpoint_interval == 0) {
      save_state(out_dir / ("checkpoint_" + std::to_string(done) + ".cspcn"), model, optimizer,
                 config);
      write_text(log_path, format_train_log(log.steps));
    }
  }
  save_state(out_dir / "final.cspcn", model, optimizer, config);
  write_text(log_path, format_train_log(log.steps));
  return log;
}

}  // namespace cspcn
