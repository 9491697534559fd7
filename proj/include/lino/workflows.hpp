#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "lino/data.hpp"
#include "lino/eval.hpp"
#include "lino/run_config.hpp"
#include "lino/training.hpp"

namespace lino::cli {

/// CSV file or generated series named by the config, restricted to `target`.
data::RawSeries load_series(const RunConfig& rc);

/// One trained model and its test-split metrics.
struct TrainedRun {
  LiNoConfig model;
  training::TrainResult result;
  eval::EvalRow row;
};

/// Initialises from `seed`, trains with the config's TrainConfig (plus
/// `noise_alpha`), restores the best epoch and evaluates on the test split.
TrainedRun train_one(const RunConfig& rc, const data::WindowedDataset& ds, LiNoConfig model, std::uint64_t seed,
                     double noise_alpha);

/// Writes checkpoint, history.csv, report.csv (and timing.csv) to run_dir().
/// With several horizons or seeds the checkpoint and history files get a
/// `.h<F>.s<seed>` suffix.
eval::EvalReport cmd_train(const RunConfig& rc, std::ostream& log);

/// Test-split metrics of an existing checkpoint.
eval::EvalReport cmd_evaluate(const RunConfig& rc, std::ostream& log);

/// Relative degradation of each ablation against the full model.
struct AblationRow {
  std::string variant;
  double mse_mean = 0.0, mae_mean = 0.0;
  double mse_degradation_pct = 0.0, mae_degradation_pct = 0.0;
};
/// Labels in report order: full, no_li, no_no, no_te, no_fe, no_cd.
const std::vector<std::string>& ablation_labels();
std::vector<AblationRow> ablation_table(const eval::EvalReport& report);

/// Trains all six ablation settings with shared seeds; writes report.csv and
/// ablation.csv.
eval::EvalReport cmd_ablate(const RunConfig& rc, std::ostream& log);

struct NoiseRow {
  std::string variant;
  double alpha = 0.0;
  double mse_mean = 0.0, mae_mean = 0.0;
};
/// Default noise coefficients.
const std::vector<double>& default_alphas();
/// Mean test metrics per (variant, alpha), in sweep order.
std::vector<NoiseRow> noise_table(const eval::EvalReport& report);

/// Trains LiNo, Mu and RAW at every alpha; writes report.csv and noise.csv.
eval::EvalReport cmd_noise(const RunConfig& rc, std::ostream& log);

/// Per-level prediction components of one test window; writes decomposition.csv.
eval::Decomposition cmd_decompose(const RunConfig& rc, std::ostream& log);

/// Probed affine maps of the Li blocks and of the per-level predictions;
/// writes weights/*.csv and weights/residuals.csv. Returns the residuals.
std::vector<std::pair<std::string, double>> cmd_probe(const RunConfig& rc, std::ostream& log);

/// Writes synth.csv and synth_components.csv.
data::SynthSeries cmd_synth(const RunConfig& rc, std::ostream& log);

/// Dispatches on rc.command after validation.
void run_command(const RunConfig& rc, std::ostream& log);

}  // namespace lino::cli
