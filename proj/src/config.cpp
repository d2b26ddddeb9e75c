#include "cspcn/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace cspcn {

namespace {

constexpr std::array<std::pair<StageKind, std::string_view>, 6> kStageNames{{
    {StageKind::cm2s, "cm2s"},
    {StageKind::aed, "aed"},
    {StageKind::mlfp, "mlfp"},
    {StageKind::s3, "s3"},
    {StageKind::s3_aed_gap, "s3_aed_gap"},
    {StageKind::s3_aed_cascade, "s3_aed_cascade"},
}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(key, "cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  while (true) {
    const auto comma = text.find(',');
    items.push_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (items.size() == 1 && items.front().empty()) items.clear();
  return items;
}

std::vector<int> parse_int_list(const std::string& key, std::string_view text) {
  std::vector<int> values;
  for (auto item : split_list(text)) values.push_back(parse_number<int>(key, item));
  return values;
}

StageKind parse_stage_kind(const std::string& key, std::string_view text) {
  for (const auto& [kind, name] : kStageNames) {
    if (name == text) return kind;
  }
  throw ConfigError(key, "unknown stage kind '" + std::string(text) + "'");
}

std::string format_double(double value) {
  std::array<char, 64> buffer{};
  auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  return std::string(buffer.data(), ptr);
}

template <typename T>
std::string join(const std::vector<T>& values, auto&& format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format(values[i]);
  }
  return out;
}

using Setter = std::function<void(Config&, const std::string&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto integer = [](auto member) {
      return [member](Config& c, const std::string& k, std::string_view v) {
        auto& field = member(c);
        field = parse_number<std::remove_reference_t<decltype(field)>>(k, v);
      };
    };
    auto real = integer;  // from_chars handles both
    auto boolean = [](auto member) {
      return [member](Config& c, const std::string& k, std::string_view v) {
        member(c) = parse_bool(k, v);
      };
    };
    auto ints = [](auto member) {
      return [member](Config& c, const std::string& k, std::string_view v) {
        member(c) = parse_int_list(k, v);
      };
    };

    t["image_channels"] = integer([](Config& c) -> int& { return c.model.image_channels; });
    t["base_width"] = integer([](Config& c) -> int& { return c.model.base_width; });
    t["aed_scales"] = integer([](Config& c) -> int& { return c.model.aed_scales; });
    t["mlfp_dilations"] = ints([](Config& c) -> auto& { return c.model.mlfp_dilations; });
    t["mcac_dilations"] = ints([](Config& c) -> auto& { return c.model.mcac_dilations; });
    t["cascade_dabs"] = integer([](Config& c) -> int& { return c.model.cascade_dabs; });
    t["dab_reduction"] = integer([](Config& c) -> int& { return c.model.dab_reduction; });
    t["stages"] = integer([](Config& c) -> int& { return c.model.stages; });
    t["stage_kinds"] = [](Config& c, const std::string& k, std::string_view v) {
      c.model.stage_kinds.clear();
      for (auto item : split_list(v)) c.model.stage_kinds.push_back(parse_stage_kind(k, item));
    };
    t["use_mcac"] = boolean([](Config& c) -> bool& { return c.model.use_mcac; });
    t["mlfp_batch_norm"] = boolean([](Config& c) -> bool& { return c.model.mlfp_batch_norm; });
    t["mcac_temperature"] = boolean([](Config& c) -> bool& { return c.model.mcac_temperature; });
    t["sab_kernel"] = integer([](Config& c) -> int& { return c.model.sab_kernel; });

    t["epsilon"] = real([](Config& c) -> double& { return c.loss.epsilon; });
    t["lambda1"] = real([](Config& c) -> double& { return c.loss.lambda1; });
    t["lambda2"] = real([](Config& c) -> double& { return c.loss.lambda2; });
    t["laplacian_kernel"] = [](Config& c, const std::string& k, std::string_view v) {
      if (v == "4") {
        c.loss.laplacian = LaplacianKernel::four_neighbor;
      } else if (v == "8") {
        c.loss.laplacian = LaplacianKernel::eight_neighbor;
      } else {
        throw ConfigError(k, "expected 4 or 8, got '" + std::string(v) + "'");
      }
    };

    t["batch_size"] = integer([](Config& c) -> int& { return c.train.batch_size; });
    t["patch_size"] = integer([](Config& c) -> int& { return c.train.patch_size; });
    t["iterations"] = integer([](Config& c) -> std::int64_t& { return c.train.iterations; });
    t["schedule"] = [](Config& c, const std::string& k, std::string_view v) {
      if (v == "step_halving") {
        c.train.schedule = Schedule::step_halving;
      } else if (v == "cosine") {
        c.train.schedule = Schedule::cosine;
      } else {
        throw ConfigError(k, "expected step_halving or cosine, got '" + std::string(v) + "'");
      }
    };
    t["lr_init"] = real([](Config& c) -> double& { return c.train.lr_init; });
    t["lr_floor"] = real([](Config& c) -> double& { return c.train.lr_floor; });
    t["step_interval"] = integer([](Config& c) -> std::int64_t& { return c.train.step_interval; });
    t["seed"] = integer([](Config& c) -> std::uint64_t& { return c.train.seed; });
    t["adam_beta1"] = real([](Config& c) -> double& { return c.train.adam_beta1; });
    t["adam_beta2"] = real([](Config& c) -> double& { return c.train.adam_beta2; });
    t["adam_eps"] = real([](Config& c) -> double& { return c.train.adam_eps; });
    t["grad_clip"] = real([](Config& c) -> double& { return c.train.grad_clip; });
    t["checkpoint_interval"] =
        integer([](Config& c) -> std::int64_t& { return c.train.checkpoint_interval; });
    t["validation_interval"] =
        integer([](Config& c) -> std::int64_t& { return c.train.validation_interval; });
    t["validation_fraction"] =
        real([](Config& c) -> double& { return c.train.validation_fraction; });
    t["sigma"] = real([](Config& c) -> double& { return c.train.sigma; });
    t["sigma_max"] = real([](Config& c) -> double& { return c.train.sigma_max; });
    return t;
  }();
  return table;
}

}  // namespace

std::string_view to_string(StageKind kind) {
  for (const auto& [k, name] : kStageNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::string_view to_string(Schedule schedule) {
  return schedule == Schedule::cosine ? "cosine" : "step_halving";
}

bool stage_has_aed(StageKind kind) {
  return kind == StageKind::cm2s || kind == StageKind::aed || kind == StageKind::s3_aed_gap ||
         kind == StageKind::s3_aed_cascade;
}

std::vector<StageKind> ModelConfig::layout() const {
  if (!stage_kinds.empty()) return stage_kinds;
  std::vector<StageKind> kinds;
  for (int s = 0; s < stages; ++s) kinds.push_back(s < 2 ? StageKind::cm2s : StageKind::s3);
  return kinds;
}

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

void validate(const ModelConfig& m) {
  if (m.image_channels != 1 && m.image_channels != 3) {
    throw ConfigError("image_channels", "must be 1 or 3");
  }
  if (m.base_width < 1) throw ConfigError("base_width", "must be positive");
  if (m.aed_scales < 2) throw ConfigError("aed_scales", "must be at least 2");
  if (m.aed_scales > 8) throw ConfigError("aed_scales", "must be at most 8");
  if (m.mlfp_dilations.empty()) throw ConfigError("mlfp_dilations", "must not be empty");
  if (m.mcac_dilations.empty()) throw ConfigError("mcac_dilations", "must not be empty");
  for (int d : m.mlfp_dilations) {
    if (d < 1) throw ConfigError("mlfp_dilations", "all dilations must be >= 1");
  }
  for (int d : m.mcac_dilations) {
    if (d < 1) throw ConfigError("mcac_dilations", "all dilations must be >= 1");
  }
  if (m.cascade_dabs < 1) throw ConfigError("cascade_dabs", "must be at least 1");
  if (m.dab_reduction < 1) throw ConfigError("dab_reduction", "must be positive");
  if (m.base_width % m.dab_reduction != 0) {
    throw ConfigError("dab_reduction", "base_width must be divisible by dab_reduction");
  }
  if (m.stages < 1 || m.stages > 3) throw ConfigError("stages", "must be 1, 2 or 3");
  if (!m.stage_kinds.empty() && static_cast<int>(m.stage_kinds.size()) != m.stages) {
    throw ConfigError("stage_kinds", "must list exactly `stages` entries");
  }
  const auto kinds = m.layout();
  if (std::count_if(kinds.begin(), kinds.end(), stage_has_aed) > 2) {
    throw ConfigError("stage_kinds", "at most two stages may contain an encoder-decoder");
  }
  if (m.sab_kernel < 1 || m.sab_kernel % 2 == 0) {
    throw ConfigError("sab_kernel", "must be a positive odd number");
  }
}

void validate(const LossConfig& l) {
  if (!(l.epsilon > 0)) throw ConfigError("epsilon", "must be > 0");
  if (!(l.lambda1 >= 0)) throw ConfigError("lambda1", "must be >= 0");
  if (!(l.lambda2 >= 0)) throw ConfigError("lambda2", "must be >= 0");
}

void validate(const Config& c) {
  validate(c.model);
  validate(c.loss);
  const auto& t = c.train;
  if (t.batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (t.patch_size < 1 || t.patch_size % c.model.divisibility() != 0) {
    throw ConfigError("patch_size", "must be a positive multiple of 2^(aed_scales-1) = " +
                                        std::to_string(c.model.divisibility()));
  }
  if (t.iterations < 0) throw ConfigError("iterations", "must be >= 0");
  if (!(t.lr_floor > 0)) throw ConfigError("lr_floor", "must be > 0");
  if (!(t.lr_init > t.lr_floor)) throw ConfigError("lr_init", "must exceed lr_floor");
  if (t.step_interval < 1) throw ConfigError("step_interval", "must be at least 1");
  if (!(t.adam_beta1 >= 0 && t.adam_beta1 < 1)) throw ConfigError("adam_beta1", "must be in [0,1)");
  if (!(t.adam_beta2 >= 0 && t.adam_beta2 < 1)) throw ConfigError("adam_beta2", "must be in [0,1)");
  if (!(t.adam_eps > 0)) throw ConfigError("adam_eps", "must be > 0");
  if (!(t.grad_clip >= 0)) throw ConfigError("grad_clip", "must be >= 0");
  if (t.checkpoint_interval < 1) throw ConfigError("checkpoint_interval", "must be at least 1");
  if (t.validation_interval < 1) throw ConfigError("validation_interval", "must be at least 1");
  if (!(t.validation_fraction >= 0 && t.validation_fraction < 1)) {
    throw ConfigError("validation_fraction", "must be in [0,1)");
  }
  if (!(t.sigma >= 0)) throw ConfigError("sigma", "must be >= 0");
  if (!(t.sigma_max >= 0)) throw ConfigError("sigma_max", "must be >= 0");
}

Config parse_config(std::string_view document) {
  Config config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!document.empty()) {
    const auto newline = document.find('\n');
    std::string_view line = document.substr(0, newline);
    document.remove_prefix(newline == std::string_view::npos ? document.size() : newline + 1);
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
    it->second(config, key, value);
  }
  // The cosine schedule has its own default starting rate.
  if (config.train.schedule == Schedule::cosine && !seen.contains("lr_init")) {
    config.train.lr_init = 2e-4;
  }
  validate(config);
  return config;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_document(const Config& c) {
  const auto& m = c.model;
  const auto& l = c.loss;
  const auto& t = c.train;
  auto num = [](auto v) { return std::to_string(v); };
  auto kind_name = [](StageKind k) { return std::string(to_string(k)); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };

  std::ostringstream out;
  out << "# model\n"
      << "image_channels = " << m.image_channels << "\n"
      << "base_width = " << m.base_width << "\n"
      << "aed_scales = " << m.aed_scales << "\n"
      << "mlfp_dilations = " << join(m.mlfp_dilations, num) << "\n"
      << "mcac_dilations = " << join(m.mcac_dilations, num) << "\n"
      << "cascade_dabs = " << m.cascade_dabs << "\n"
      << "dab_reduction = " << m.dab_reduction << "\n"
      << "stages = " << m.stages << "\n";
  if (!m.stage_kinds.empty()) out << "stage_kinds = " << join(m.stage_kinds, kind_name) << "\n";
  out << "use_mcac = " << b(m.use_mcac) << "\n"
      << "mlfp_batch_norm = " << b(m.mlfp_batch_norm) << "\n"
      << "mcac_temperature = " << b(m.mcac_temperature) << "\n"
      << "sab_kernel = " << m.sab_kernel << "\n"
      << "# loss\n"
      << "epsilon = " << format_double(l.epsilon) << "\n"
      << "lambda1 = " << format_double(l.lambda1) << "\n"
      << "lambda2 = " << format_double(l.lambda2) << "\n"
      << "laplacian_kernel = " << (l.laplacian == LaplacianKernel::four_neighbor ? 4 : 8) << "\n"
      << "# training\n"
      << "batch_size = " << t.batch_size << "\n"
      << "patch_size = " << t.patch_size << "\n"
      << "iterations = " << t.iterations << "\n"
      << "schedule = " << to_string(t.schedule) << "\n"
      << "lr_init = " << format_double(t.lr_init) << "\n"
      << "lr_floor = " << format_double(t.lr_floor) << "\n"
      << "step_interval = " << t.step_interval << "\n"
      << "seed = " << t.seed << "\n"
      << "adam_beta1 = " << format_double(t.adam_beta1) << "\n"
      << "adam_beta2 = " << format_double(t.adam_beta2) << "\n"
      << "adam_eps = " << format_double(t.adam_eps) << "\n"
      << "grad_clip = " << format_double(t.grad_clip) << "\n"
      << "checkpoint_interval = " << t.checkpoint_interval << "\n"
      << "validation_interval = " << t.validation_interval << "\n"
      << "validation_fraction = " << format_double(t.validation_fraction) << "\n"
      << "sigma = " << format_double(t.sigma) << "\n"
      << "sigma_max = " << format_double(t.sigma_max) << "\n";
  return out.str();
}

}  // namespace cspcn
