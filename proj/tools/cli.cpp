#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "cspcn/image_io.hpp"
#include "cspcn/testing/suites.hpp"
#include "cspcn/training.hpp"

namespace cspcn::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("CSPCN_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::uint64_t value = 0;
  const char* end = raw + std::char_traits<char>::length(raw);
  const auto [ptr, ec] = std::from_chars(raw, end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(std::string("CSPCN_SEED must be a non-negative integer, got '") + raw + "'");
  }
  return value;
}

bool is_png(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::vector<fs::path> list_pngs(const fs::path& input) {
  if (fs::is_regular_file(input)) return {input};
  if (!fs::is_directory(input)) throw std::runtime_error("input not found: " + input.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && is_png(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no PNG files in " + input.string());
  return files;
}

struct LoadedModel {
  Config config;
  CSPCN model{nullptr};
};

LoadedModel load_weights(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  const auto manifest = read_manifest(path);
  LoadedModel loaded;
  loaded.config = parse_config(manifest.config_snapshot);
  const auto checkpoint = load_checkpoint(path, loaded.config.model);
  loaded.model = make_model(loaded.config.model, 0);
  checkpoint.parameters.load_into(*loaded.model);
  return loaded;
}

std::string fixed(double v, int digits = 6) {
  if (std::isinf(v)) return "inf";
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, v);
  return buffer;
}

struct TrainArgs {
  std::string config, data, out;
  std::optional<double> sigma;
  std::optional<std::string> resume;
  std::optional<std::int64_t> iterations;
  bool paired = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto config = load_config(a.config);
  if (a.sigma) config.train.sigma = *a.sigma;
  if (a.iterations) config.train.iterations = *a.iterations;
  if (const auto seed = seed_from_environment()) config.train.seed = *seed;
  validate(config);

  FitOptions options;
  if (a.resume) {
    if (!fs::is_regular_file(*a.resume)) throw std::runtime_error("checkpoint not found: " + *a.resume);
    options.resume = fs::path(*a.resume);
  }
  const auto every = std::max<std::int64_t>(1, config.train.iterations / 20);
  options.on_step = [&](const StepRecord& r) {
    if ((r.step + 1) % every == 0 || r.step + 1 == config.train.iterations) {
      out << "step " << r.step + 1 << "/" << config.train.iterations << "  lr " << r.lr
          << "  loss " << fixed(r.loss.total) << "\n";
    }
  };
  const auto index = index_dataset(a.data, a.paired ? DatasetMode::paired : DatasetMode::synthetic);
  const auto log = fit(index, config, a.out, options);
  out << "trained " << log.steps.size() << " iterations on " << index.entries.size()
      << " images; wrote " << (fs::path(a.out) / "final.cspcn").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string weights, data, csv = "metrics.csv";
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  bool paired = false;
  bool luma = false;
  bool quantize = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.sigma && !a.paired) throw UsageError("eval: one of --sigma or --paired is required");
  auto loaded = load_weights(a.weights);
  const auto index = index_dataset(a.data, a.paired ? DatasetMode::paired : DatasetMode::synthetic);
  const auto pairs = load_dataset(index, loaded.config.model.image_channels);
  std::uint64_t seed = 0;
  if (const auto env = seed_from_environment()) seed = *env;
  if (a.seed) seed = *a.seed;
  const auto report = evaluate(loaded.model, pairs, a.sigma.value_or(0.0), seed,
                               MetricOptions{a.quantize, a.luma});
  write_csv(a.csv, report);
  out << "mean PSNR " << fixed(report.psnr_db) << " dB, mean SSIM " << fixed(report.ssim)
      << " over " << report.per_image.size() << " images; wrote " << a.csv << "\n";
  return kExitOk;
}

struct DenoiseArgs {
  std::string weights, input, output;
};

int cmd_denoise(const DenoiseArgs& a, std::ostream& out) {
  auto loaded = load_weights(a.weights);
  const auto files = list_pngs(a.input);
  // Read everything first so an unreadable file aborts before any output.
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_png(f));
  fs::create_directories(a.output);
  const int channels = loaded.config.model.image_channels;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto restored = denoise(loaded.model, convert_channels(images[i].pixels, channels));
    write_png(fs::path(a.output) / files[i].filename(), restored, images[i].bit_depth);
  }
  out << "denoised " << files.size() << " images into " << a.output << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string input, output;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (!(a.sigma >= 0)) throw UsageError("--sigma must be >= 0");
  const auto files = list_pngs(a.input);
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_png(f));
  fs::create_directories(a.output);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto target = fs::path(a.output) / files[i].filename();
    if (a.sigma == 0.0 && images[i].bit_depth == 8) {
      // Zero noise on an 8-bit image: the output is the input file itself.
      std::ifstream in(files[i], std::ios::binary);
      const std::string bytes{std::istreambuf_iterator<char>(in), {}};
      atomic_write(target, [&](std::ostream& o) { o << bytes; });
      continue;
    }
    const auto noisy =
        add_awgn(images[i].pixels, NoiseSpec{a.sigma, ColorMode::color, mix_seed(a.seed, i)});
    write_png(target, noisy, 8);
  }
  out << "wrote " << files.size() << " noisy images (sigma " << a.sigma << ") into " << a.output
      << "\n";
  return kExitOk;
}

int cmd_selftest(std::ostream& out) {
  auto results = testing::oracle_suite();
  auto gradients = testing::gradient_suite();
  results.insert(results.end(), gradients.begin(), gradients.end());

  std::map<std::string, bool> modules;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.module << ": " << r.name << "  " << r.detail << "\n";
    auto [it, inserted] = modules.emplace(r.module, r.passed);
    if (!inserted) it->second = it->second && r.passed;
  }
  bool all = true;
  for (const auto& [module, passed] : modules) {
    out << "suite " << module << ": " << (passed ? "PASS" : "FAIL") << "\n";
    all = all && passed;
  }
  return all ? kExitOk : kExitRuntime;
}

struct InitArgs {
  std::optional<std::string> config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_init(const InitArgs& a, std::ostream& out) {
  Config config = a.config ? load_config(*a.config) : Config{};
  if (const auto env = seed_from_environment()) config.train.seed = *env;
  if (a.seed) config.train.seed = *a.seed;
  validate(config);
  const auto store = init_parameters(config.model, config.train.seed);
  CheckpointMeta meta;
  meta.config_snapshot = to_document(config);
  save_checkpoint(a.out, store, OptimizerState{}, meta);
  out << "wrote freshly initialized weights (" << store.learnable_elements()
      << " parameters) to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive multi-stage image denoiser", "cspcn"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "Config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--sigma", train.sigma, "Override the AWGN level (0-255 scale)");
  train_cmd->add_option("--resume", train.resume, "Resume from a checkpoint");
  train_cmd->add_option("--iterations", train.iterations, "Override the iteration count");
  train_cmd->add_flag("--paired", train.paired, "Use clean/ and noisy/ pairs instead of AWGN");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model with PSNR and SSIM");
  eval_cmd->add_option("--weights", eval.weights, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  auto* sigma_opt = eval_cmd->add_option("--sigma", eval.sigma, "Synthesize AWGN at this level");
  auto* paired_opt = eval_cmd->add_flag("--paired", eval.paired, "Use clean/ and noisy/ pairs");
  sigma_opt->excludes(paired_opt);
  eval_cmd->add_option("--csv", eval.csv, "Metrics CSV path")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Noise seed");
  eval_cmd->add_flag("--luma", eval.luma, "Measure on BT.601 luma");
  eval_cmd->add_flag("--quantize", eval.quantize, "Round to 8-bit levels before measuring");

  DenoiseArgs den;
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise PNG images");
  denoise_cmd->add_option("--weights", den.weights, "Checkpoint")->required();
  denoise_cmd->add_option("--input", den.input, "PNG file or directory")->required();
  denoise_cmd->add_option("--output", den.output, "Output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-noise", "Write AWGN-corrupted copies of PNG images");
  synth_cmd->add_option("--input", synth.input, "Input directory")->required();
  synth_cmd->add_option("--output", synth.output, "Output directory")->required();
  synth_cmd->add_option("--sigma", synth.sigma, "Noise level (0-255 scale)")->required();
  synth_cmd->add_option("--seed", synth.seed, "Noise seed")->required();

  auto* selftest_cmd = app.add_subcommand("selftest", "Run the gradient and oracle suites");

  InitArgs init;
  auto* init_cmd = app.add_subcommand("init", "Write freshly initialized weights");
  init_cmd->add_option("--config", init.config, "Config file")->check(CLI::ExistingFile);
  init_cmd->add_option("--out", init.out, "Checkpoint path")->required();
  init_cmd->add_option("--seed", init.seed, "Initialization seed");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, out);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*denoise_cmd) return cmd_denoise(den, out);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*selftest_cmd) return cmd_selftest(out);
    if (*init_cmd) return cmd_init(init, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cspcn::cli
