#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lino/data.hpp"
#include "lino/model.hpp"
#include "lino/training.hpp"

namespace lino::cli {

/// Everything a command needs. Built from defaults, then a flat `key=value`
/// file, then command-line overrides, in that order.
struct RunConfig {
  std::string command;
  /// CSV path, or "synth" for the built-in generator.
  std::string dataset;
  /// Channels to keep (e.g. {"OT"} for univariate runs); empty keeps all.
  std::vector<std::string> target;
  std::string split = "ratios";  ///< ratios | counts | ett_hourly | ett_minute
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
  std::array<std::size_t, 3> split_counts{0, 0, 0};
  data::SynthSpec synth;

  LiNoConfig model;  ///< channels and horizon are filled in per run
  training::TrainConfig train;
  std::vector<std::size_t> horizons{96};
  std::vector<std::uint64_t> seeds{1};
  /// Noise coefficients. `noise` sweeps them; `train` accepts at most one.
  std::optional<std::vector<double>> alphas;

  std::string out = "runs";
  std::string name;        ///< run directory name; defaults to the command
  std::string checkpoint;  ///< defaults to <out>/<name>/checkpoint
  std::size_t window = 0;  ///< test-split window used by decompose
  std::optional<std::size_t> channel;  ///< channel used by decompose/probe; default last
  bool unsafe_grid = false;

  /// Applies one setting; unknown keys and malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value);

  /// Rejects missing inputs and values outside the published search grid
  /// (unless unsafe_grid). Runs before any compute.
  void validate() const;

  std::string run_dir() const;
  std::string checkpoint_path() const;
  /// Dataset label used in reports: "synth" or the CSV file stem.
  std::string dataset_label() const;
  data::SplitSpec split_spec() const;
};

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key=value` lines ('#' starts a comment). Errors name the source
/// and line number.
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source = "<config>");

/// Defaults, then the file (if any), then overrides in order.
RunConfig build_run_config(const std::string& command, const std::string& config_path,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

/// Grid published for the hyperparameter search.
bool in_search_grid(const LiNoConfig& model, const training::TrainConfig& train, std::string* why = nullptr);

}  // namespace lino::cli
