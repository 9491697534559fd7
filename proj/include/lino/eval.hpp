#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lino/data.hpp"
#include "lino/model.hpp"
#include "lino/rng.hpp"
#include "lino/tensor.hpp"

namespace lino::eval {

double mse(const Tensor& yhat, const Tensor& y);
double mae(const Tensor& yhat, const Tensor& y);

/// Maps a [B, C, T] batch of inputs to [B, C, F] predictions.
using Predictor = std::function<Tensor(const Tensor&)>;

/// Metrics over every window of a split, on the standardised scale.
struct SplitMetrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t windows = 0;
  std::vector<double> window_mse;  ///< one entry per window, in window order
  std::vector<double> window_mae;
};

SplitMetrics evaluate(const Predictor& predictor, const data::WindowSet& windows, std::size_t batch = 256);
/// Eval-mode (dropout off) pass of the model over every window.
SplitMetrics evaluate(const LiNoParams& params, const LiNoConfig& cfg, const data::WindowSet& windows,
                      std::size_t batch = 256);

Predictor model_predictor(const LiNoParams& params, const LiNoConfig& cfg);

/// One benchmark result.
struct EvalRow {
  std::string dataset;
  std::size_t horizon = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t windows = 0;
  double runtime_s = 0.0;
};

struct AggregateRow {
  std::string dataset;
  std::string variant;
  std::string kind;  ///< "mean_over_horizons" (per seed) or "mean_std_over_seeds" (per horizon)
  std::size_t horizon = 0;  ///< 0 for horizon means
  std::uint64_t seed = 0;   ///< 0 for seed aggregates
  double mse_mean = 0.0, mse_std = 0.0;
  double mae_mean = 0.0, mae_std = 0.0;
  std::size_t count = 0;
};

/// Raw rows plus aggregates recomputable from them. Metrics are always on the
/// standardised scale.
struct EvalReport {
  std::vector<EvalRow> rows;

  std::vector<AggregateRow> aggregates() const;
  /// Comma-separated raw rows followed by aggregate rows. Wall-clock time is
  /// left out so reruns reproduce the file bitwise; see timing_csv.
  std::string to_csv() const;
  std::string timing_csv() const;
  std::string summary() const;
  void write_csv(const std::string& path) const;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Affine map f(x) = A x + b recovered by coordinate probing.
struct ProbedAffineMap {
  Tensor A;  ///< [out, in]
  Tensor b;  ///< [out]
  double residual = 0.0;  ///< max |f(x) - (A x + b)| over random held-out probes
};

using VectorMap = std::function<Tensor(const Tensor&)>;

/// b = f(0); A[:, i] = f(e_i) - b; residual from `probes` N(0,1) inputs.
ProbedAffineMap probe_affine(const VectorMap& f, std::size_t in_dim, Rng& rng, std::size_t probes = 8);

/// Eval-mode Li block of one level as a map on the flattened [C * D] feature.
VectorMap li_block_map(const LiNoParams& params, const LiNoConfig& cfg, std::size_t level);

/// Which prediction a probe reads.
enum class ProbeTarget { linear, nonlinear, total };

/// Normalised lookback of one channel -> that channel's prediction (level
/// component or total). Other channels are held at zero; RevIN is bypassed.
VectorMap prediction_map(const LiNoParams& params, const LiNoConfig& cfg, std::size_t channel, ProbeTarget target,
                         std::size_t level = 0);

/// Per-level prediction components of one input window, on the data scale.
struct Decomposition {
  std::vector<std::string> names;  ///< "LP1", "NP1", ..., "total"
  std::vector<Tensor> series;      ///< each [C, F]
  /// Same components before RevIN inversion (no level offset).
  std::vector<Tensor> normalized;
};

/// Components are scaled by the RevIN std; the RevIN mean is carried by the
/// first linear component so the rows sum to the total.
Decomposition export_decomposition(const LiNoParams& params, const LiNoConfig& cfg, const Tensor& x);

/// Share of squared prediction energy in the summed nonlinear components
/// (normalised scale).
double nonlinear_energy_fraction(const Decomposition& d);

void write_decomposition_csv(const std::string& path, const Decomposition& d, std::size_t channel);
/// Rows of a rank-2 tensor as comma-separated lines.
void write_matrix_csv(const std::string& path, const Tensor& m);

}  // namespace lino::eval
