#include "lino/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lino/errors.hpp"

namespace lino::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' is out of range: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

template <std::size_t N>
std::array<double, N> fixed_doubles(const std::string& key, const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != N) throw ConfigError("'" + key + "' expects " + std::to_string(N) + " comma-separated values");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_double(key, items[i]);
  return out;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "dataset") dataset = v;
  else if (key == "target") target = split_list(v);
  else if (key == "split") split = v;
  else if (key == "split_ratios") split_ratios = fixed_doubles<3>(key, v);
  else if (key == "split_counts") {
    const auto items = split_list(v);
    if (items.size() != 3) throw ConfigError("'split_counts' expects 3 comma-separated values");
    for (std::size_t i = 0; i < 3; ++i) split_counts[i] = to_uint(key, items[i]);
  }
  else if (key == "synth_levels") synth.levels = to_uint(key, v);
  else if (key == "synth_channels") synth.channels = to_uint(key, v);
  else if (key == "synth_length") synth.length = to_uint(key, v);
  else if (key == "synth_seed") synth.seed = to_uint(key, v);
  else if (key == "synth_noise") synth.noise_sigma = to_double(key, v);
  else if (key == "synth_linear_amplitude") synth.linear_amplitude = to_double(key, v);
  else if (key == "synth_nonlinear_amplitude") synth.nonlinear_amplitude = to_double(key, v);
  else if (key == "lookback") model.lookback = to_uint(key, v);
  else if (key == "horizon") {
    horizons.clear();
    for (const auto& h : split_list(v)) horizons.push_back(to_uint(key, h));
  }
  else if (key == "dim") model.dim = to_uint(key, v);
  else if (key == "blocks") model.blocks = to_uint(key, v);
  else if (key == "mlp_hidden") model.mlp_hidden = to_uint(key, v);
  else if (key == "dropout") model.dropout = to_double(key, v);
  else if (key == "variant") model.variant = parse_variant(v);
  else if (key == "ablate") model.ablation = Ablation::parse(v.empty() ? "full" : v);
  else if (key == "lr") train.lr = to_double(key, v);
  else if (key == "batch") train.batch_size = to_uint(key, v);
  else if (key == "max_epochs") train.max_epochs = to_uint(key, v);
  else if (key == "patience") train.patience = to_uint(key, v);
  else if (key == "max_train_windows") train.max_train_windows = to_uint(key, v);
  else if (key == "seed") {
    seeds.clear();
    for (const auto& s : split_list(v)) seeds.push_back(to_uint(key, s));
  }
  else if (key == "alpha") {
    std::vector<double> a;
    for (const auto& s : split_list(v)) a.push_back(to_double(key, s));
    alphas = a;
  }
  else if (key == "out") out = v;
  else if (key == "name") name = v;
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "window") window = to_uint(key, v);
  else if (key == "channel") channel = to_uint(key, v);
  else if (key == "unsafe_grid") unsafe_grid = to_bool(key, v);
  else throw ConfigError("unknown setting '" + key + "'");
}

bool in_search_grid(const LiNoConfig& m, const training::TrainConfig& t, std::string* why) {
  auto fail = [why](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (m.dim != 256 && m.dim != 512) return fail("dim must be 256 or 512");
  if (m.blocks < 1 || m.blocks > 4) return fail("blocks must lie in 1..4");
  if (!near(m.dropout, 0.0) && !near(m.dropout, 0.2) && !near(m.dropout, 0.5)) {
    return fail("dropout must be 0.0, 0.2 or 0.5");
  }
  if (!near(t.lr, 1e-3) && !near(t.lr, 1e-4) && !near(t.lr, 1e-5)) return fail("lr must be 1e-3, 1e-4 or 1e-5");
  const std::size_t b = t.batch_size;
  if (b != 32 && b != 64 && b != 128 && b != 256) return fail("batch must be 32, 64, 128 or 256");
  return true;
}

void RunConfig::validate() const {
  static const char* known[] = {"train", "evaluate", "ablate", "noise", "decompose", "probe", "synth"};
  if (std::find(std::begin(known), std::end(known), command) == std::end(known)) {
    throw ConfigError("unknown command '" + command + "'");
  }
  if (command != "synth") {
    if (dataset.empty()) throw ConfigError("no dataset given (use --dataset <csv> or --dataset synth)");
    if (dataset != "synth" && !std::filesystem::is_regular_file(dataset)) {
      throw ConfigError("dataset file '" + dataset + "' does not exist");
    }
  }
  if (horizons.empty()) throw ConfigError("at least one horizon is required");
  for (auto h : horizons) {
    if (h == 0) throw ConfigError("horizons must be positive");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (split != "ratios" && split != "counts" && split != "ett_hourly" && split != "ett_minute") {
    throw ConfigError("split must be ratios, counts, ett_hourly or ett_minute");
  }
  if (alphas) {
    if (alphas->empty()) throw ConfigError("alpha list is empty");
    for (double a : *alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha values must lie in [0, 1]");
    }
    if ((command == "train" || command == "ablate") && alphas->size() > 1) {
      throw ConfigError(command + " takes a single --alpha; use the noise command to sweep");
    }
  }
  LiNoConfig probe = model;
  probe.channels = 1;
  probe.horizon = horizons.front();
  probe.validate();
  train.validate();
  // evaluate / decompose / probe take the model from the checkpoint.
  const bool trains = command == "train" || command == "ablate" || command == "noise";
  if (trains && !unsafe_grid) {
    std::string why;
    if (!in_search_grid(model, train, &why)) {
      throw ConfigError("outside the published search grid: " + why + " (pass --unsafe-grid to override)");
    }
  }
  if ((command == "evaluate" || command == "decompose" || command == "probe") &&
      !std::filesystem::is_regular_file(checkpoint_path())) {
    throw ConfigError("checkpoint '" + checkpoint_path() + "' does not exist");
  }
}

std::string RunConfig::run_dir() const {
  return (std::filesystem::path(out) / (name.empty() ? command : name)).string();
}

std::string RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? (std::filesystem::path(run_dir()) / "checkpoint").string() : checkpoint;
}

std::string RunConfig::dataset_label() const {
  if (dataset == "synth" || dataset.empty()) return "synth";
  std::string label = std::filesystem::path(dataset).stem().string();
  if (!target.empty()) {
    label += ":";
    for (std::size_t i = 0; i < target.size(); ++i) label += (i ? "+" : "") + target[i];
  }
  return label;
}

data::SplitSpec RunConfig::split_spec() const {
  if (split == "ett_hourly") return data::SplitSpec::ett_hourly();
  if (split == "ett_minute") return data::SplitSpec::ett_minute();
  if (split == "counts") return data::SplitSpec::from_counts(split_counts[0], split_counts[1], split_counts[2]);
  return data::SplitSpec::from_ratios(split_ratios[0], split_ratios[1], split_ratios[2]);
}

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    out.push_back({key, trim(line.substr(eq + 1)), lineno});
  }
  return out;
}

RunConfig build_run_config(const std::string& command, const std::string& config_path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;
  rc.command = command;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& e : parse_config_text(ss.str(), config_path)) {
      try {
        rc.set(e.key, e.value);
      } catch (const ConfigError& err) {
        throw ConfigError(config_path + ":" + std::to_string(e.line) + ": " + err.what());
      }
    }
  }
  for (const auto& [k, v] : overrides) rc.set(k, v);
  return rc;
}

}  // namespace lino::cli
