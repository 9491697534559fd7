#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lino/rng.hpp"
#include "lino/tensor.hpp"

namespace lino::data {

/// A multivariate record: values[time, channel].
struct RawSeries {
  std::vector<std::string> channel_names;
  Tensor values;
  std::vector<std::string> timestamps;  ///< empty when the file had no date column

  std::size_t length() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

/// Parses a rectangular numeric CSV. A header row is detected when its cells
/// are not all numeric; a leading column whose cells do not parse as numbers
/// (or whose header is "date"/"time"/"timestamp") is kept as timestamps.
RawSeries parse_csv(std::istream& in, const std::string& source = "<stream>");
RawSeries load_csv(const std::string& path);
void write_csv(const std::string& path, const RawSeries& series);

/// Keeps only the named channels, in the given order.
RawSeries select_channels(const RawSeries& series, const std::vector<std::string>& names);

/// Half-open range of time indices [begin, end). `context_begin` is where
/// windows may start reading lookback values; it precedes `begin` by the
/// lookback for validation and test spans.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t context_begin = 0;

  std::size_t length() const { return end - begin; }
  std::size_t context_length() const { return end - context_begin; }
};

struct SplitSpec {
  enum class Mode { counts, ratios };
  Mode mode = Mode::ratios;
  std::array<std::size_t, 3> counts{0, 0, 0};
  std::array<double, 3> ratios{0.7, 0.1, 0.2};

  static SplitSpec from_counts(std::size_t train, std::size_t val, std::size_t test);
  static SplitSpec from_ratios(double train, double val, double test);
  /// 12/4/4 months of hourly points (ETTh1, ETTh2).
  static SplitSpec ett_hourly();
  /// 12/4/4 months of 15-minute points (ETTm1, ETTm2).
  static SplitSpec ett_minute();
};

struct SplitSpans {
  Span train, val, test;
};

/// Contiguous chronological spans. With ratios, train and test take
/// floor(ratio * length) and validation receives the remainder.
SplitSpans chrono_split(std::size_t length, const SplitSpec& spec, std::size_t lookback, std::size_t horizon);

/// Number of (lookback, horizon) windows that fit inside `length` points.
std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon);

/// Per-split point counts as listed in benchmark tables: context span minus
/// lookback plus one.
std::array<std::size_t, 3> split_point_counts(const SplitSpans& spans, std::size_t lookback);

/// Per-channel train statistics (population variance).
struct Standardizer {
  Tensor mean;
  Tensor stdev;
  std::vector<std::string> warnings;

  /// Fits on values[span.begin, span.end). Zero-variance channels get std 1
  /// and a warning.
  static Standardizer fit(const Tensor& values, const Span& train);
  Tensor apply(const Tensor& values) const;
  Tensor invert(const Tensor& values) const;
};

/// (lookback, horizon) windows over one split of a standardised series.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::shared_ptr<const Tensor> series, const Span& span, std::size_t lookback, std::size_t horizon);

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  std::size_t start(std::size_t i) const { return starts_[i]; }
  std::size_t channels() const { return series_ ? series_->dim(1) : 0; }
  std::size_t lookback() const { return lookback_; }
  std::size_t horizon() const { return horizon_; }

  /// x[C, T] and y[C, F] of window i.
  Tensor input(std::size_t i) const;
  Tensor target(std::size_t i) const;
  /// Stacked [B, C, T] / [B, C, F] for the given window indices.
  Tensor inputs(const std::vector<std::size_t>& idx) const;
  Tensor targets(const std::vector<std::size_t>& idx) const;

 private:
  std::shared_ptr<const Tensor> series_;
  std::vector<std::size_t> starts_;
  std::size_t lookback_ = 0;
  std::size_t horizon_ = 0;
};

struct WindowedDataset {
  SplitSpans spans;
  Standardizer stats;
  WindowSet train, val, test;
  std::size_t lookback = 0, horizon = 0;
};

/// Split, standardise with train statistics, and window each split.
WindowedDataset make_dataset(const RawSeries& series, const SplitSpec& spec, std::size_t lookback,
                             std::size_t horizon);

/// Generator for series built from S linear and S nonlinear latent patterns
/// plus white noise.
struct SynthSpec {
  std::size_t levels = 2;  ///< S
  std::size_t channels = 3;
  std::size_t length = 2000;
  std::uint64_t seed = 1;
  double noise_sigma = 0.1;
  double linear_amplitude = 1.0;
  double nonlinear_amplitude = 1.0;
  /// AR(2) coefficients per level; empty picks a stable default per level.
  std::vector<std::array<double, 2>> ar;
  double ar_innovation = 0.05;
};

struct SynthSeries {
  RawSeries series;
  /// Named [time, channel] components; they sum to series.values.
  std::vector<std::pair<std::string, Tensor>> components;
};

/// True when both roots of z^2 - a1 z - a2 lie strictly inside the unit circle.
bool ar2_stable(double a1, double a2);

SynthSeries synth_generate(const SynthSpec& spec);

/// x + alpha * g with g ~ N(0, 1) elementwise; alpha must lie in [0, 1].
Tensor add_noise(const Tensor& x, double alpha, Rng& rng);

}  // namespace lino::data
