#include "lino/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "lino/errors.hpp"

namespace lino::data {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool is_number(const std::string& s) {
  double v;
  return parse_number(s, v);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

RawSeries parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_no;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    rows.push_back(split_cells(line));
    line_no.push_back(n);
  }
  if (rows.empty()) throw DataError(source + ": empty file");
  const std::size_t width = rows[0].size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw DataError(source + ": line " + std::to_string(line_no[r]) + " has " + std::to_string(rows[r].size()) +
                      " cells, expected " + std::to_string(width));
    }
  }
  const bool has_header = !std::all_of(rows[0].begin(), rows[0].end(), is_number);
  const std::size_t body = has_header ? 1 : 0;
  if (rows.size() <= body) throw DataError(source + ": no data rows");

  bool date_col = false;
  if (has_header) {
    const std::string h = lower(rows[0][0]);
    date_col = h == "date" || h == "time" || h == "timestamp" || h == "datetime";
  }
  if (!date_col) date_col = width > 1 && !is_number(rows[body][0]);
  const std::size_t first_val = date_col ? 1 : 0;
  if (width <= first_val) throw DataError(source + ": no numeric columns");

  RawSeries out;
  const std::size_t C = width - first_val;
  const std::size_t T = rows.size() - body;
  for (std::size_t c = 0; c < C; ++c) {
    out.channel_names.push_back(has_header ? rows[0][first_val + c] : "c" + std::to_string(c));
  }
  out.values = Tensor({T, C});
  for (std::size_t r = 0; r < T; ++r) {
    const auto& cells = rows[body + r];
    if (date_col) out.timestamps.push_back(cells[0]);
    for (std::size_t c = 0; c < C; ++c) {
      double v;
      if (!parse_number(cells[first_val + c], v)) {
        throw DataError(source + ": non-numeric cell '" + cells[first_val + c] + "' at line " +
                        std::to_string(line_no[body + r]) + ", column " + std::to_string(first_val + c + 1));
      }
      out.values[r * C + c] = v;
    }
  }
  return out;
}

RawSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

void write_csv(const std::string& path, const RawSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const bool dates = !series.timestamps.empty();
  if (dates) out << "date,";
  for (std::size_t c = 0; c < series.channels(); ++c) out << (c ? "," : "") << series.channel_names[c];
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < series.length(); ++t) {
    if (dates) out << series.timestamps[t] << ',';
    for (std::size_t c = 0; c < series.channels(); ++c) {
      out << (c ? "," : "") << series.values[t * series.channels() + c];
    }
    out << '\n';
  }
}

RawSeries select_channels(const RawSeries& series, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  for (const auto& n : names) {
    auto it = std::find(series.channel_names.begin(), series.channel_names.end(), n);
    if (it == series.channel_names.end()) throw DataError("channel '" + n + "' not found");
    cols.push_back(static_cast<std::size_t>(it - series.channel_names.begin()));
  }
  RawSeries out;
  out.channel_names = names;
  out.timestamps = series.timestamps;
  out.values = Tensor({series.length(), cols.size()});
  for (std::size_t t = 0; t < series.length(); ++t)
    for (std::size_t k = 0; k < cols.size(); ++k) out.values[t * cols.size() + k] = series.values[t * series.channels() + cols[k]];
  return out;
}

SplitSpec SplitSpec::from_counts(std::size_t train, std::size_t val, std::size_t test) {
  SplitSpec s;
  s.mode = Mode::counts;
  s.counts = {train, val, test};
  return s;
}

SplitSpec SplitSpec::from_ratios(double train, double val, double test) {
  if (train <= 0 || val <= 0 || test <= 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  SplitSpec s;
  s.mode = Mode::ratios;
  s.ratios = {train, val, test};
  return s;
}

SplitSpec SplitSpec::ett_hourly() { return from_counts(12 * 30 * 24, 4 * 30 * 24, 4 * 30 * 24); }
SplitSpec SplitSpec::ett_minute() { return from_counts(12 * 30 * 24 * 4, 4 * 30 * 24 * 4, 4 * 30 * 24 * 4); }

std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon) {
  return length >= lookback + horizon ? length - lookback - horizon + 1 : 0;
}

SplitSpans chrono_split(std::size_t length, const SplitSpec& spec, std::size_t lookback, std::size_t horizon) {
  std::size_t n_train, n_val, n_test;
  if (spec.mode == SplitSpec::Mode::counts) {
    n_train = spec.counts[0];
    n_val = spec.counts[1];
    n_test = spec.counts[2];
    if (n_train + n_val + n_test > length) {
      throw DataError("split counts sum to " + std::to_string(n_train + n_val + n_test) + " but series has " +
                      std::to_string(length) + " points");
    }
  } else {
    // The small epsilon keeps 0.7 * 10 from flooring to 6.
    n_train = static_cast<std::size_t>(std::floor(spec.ratios[0] * static_cast<double>(length) + 1e-9));
    n_test = static_cast<std::size_t>(std::floor(spec.ratios[2] * static_cast<double>(length) + 1e-9));
    if (n_train + n_test > length) throw DataError("split ratios exceed series length");
    n_val = length - n_train - n_test;
  }
  SplitSpans s;
  s.train = {0, n_train, 0};
  s.val = {n_train, n_train + n_val, n_train >= lookback ? n_train - lookback : 0};
  s.test = {n_train + n_val, n_train + n_val + n_test, n_train + n_val >= lookback ? n_train + n_val - lookback : 0};
  const std::pair<const char*, const Span*> named[] = {{"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (auto [name, span] : named) {
    if (span->length() == 0 || span->context_length() < lookback + horizon) {
      throw DataError(std::string(name) + " span holds " + std::to_string(span->context_length()) +
                      " points with context, needs at least lookback+horizon = " +
                      std::to_string(lookback + horizon));
    }
  }
  return s;
}

std::array<std::size_t, 3> split_point_counts(const SplitSpans& spans, std::size_t lookback) {
  auto count = [&](const Span& s) { return s.context_length() - lookback + 1; };
  return {count(spans.train), count(spans.val), count(spans.test)};
}

Standardizer Standardizer::fit(const Tensor& values, const Span& train) {
  const std::size_t C = values.dim(1);
  if (train.length() == 0 || train.end > values.dim(0)) throw DataError("invalid train span for standardisation");
  Standardizer s{Tensor({C}), Tensor({C}), {}};
  const double n = static_cast<double>(train.length());
  for (std::size_t c = 0; c < C; ++c) {
    double m = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) m += values[t * C + c];
    m /= n;
    double v = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) v += (values[t * C + c] - m) * (values[t * C + c] - m);
    v /= n;
    s.mean[c] = m;
    if (v <= 1e-24) {
      s.stdev[c] = 1.0;
      s.warnings.push_back("channel " + std::to_string(c) + " is constant on the train span; std set to 1");
    } else {
      s.stdev[c] = std::sqrt(v);
    }
  }
  return s;
}

Tensor Standardizer::apply(const Tensor& values) const {
  Tensor out = values;
  const std::size_t C = mean.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - mean[i % C]) / stdev[i % C];
  return out;
}

Tensor Standardizer::invert(const Tensor& values) const {
  Tensor out = values;
  const std::size_t C = mean.numel();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] * stdev[i % C] + mean[i % C];
  return out;
}

WindowSet::WindowSet(std::shared_ptr<const Tensor> series, const Span& span, std::size_t lookback,
                     std::size_t horizon)
    : series_(std::move(series)), lookback_(lookback), horizon_(horizon) {
  const std::size_t n = window_count(span.context_length(), lookback, horizon);
  starts_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) starts_.push_back(span.context_begin + i);
}

Tensor WindowSet::input(std::size_t i) const { return inputs({i}).reshaped({channels(), lookback_}); }
Tensor WindowSet::target(std::size_t i) const { return targets({i}).reshaped({channels(), horizon_}); }

namespace {

// Gathers [B, C, len] slices starting `offset` points after each window start.
Tensor gather(const Tensor& series, const std::vector<std::size_t>& starts, const std::vector<std::size_t>& idx,
              std::size_t offset, std::size_t len) {
  const std::size_t C = series.dim(1);
  Tensor out({idx.size(), C, len});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const std::size_t s = starts.at(idx[b]) + offset;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < len; ++t) out[(b * C + c) * len + t] = series[(s + t) * C + c];
  }
  return out;
}

}  // namespace

Tensor WindowSet::inputs(const std::vector<std::size_t>& idx) const {
  return gather(*series_, starts_, idx, 0, lookback_);
}

Tensor WindowSet::targets(const std::vector<std::size_t>& idx) const {
  return gather(*series_, starts_, idx, lookback_, horizon_);
}

WindowedDataset make_dataset(const RawSeries& series, const SplitSpec& spec, std::size_t lookback,
                             std::size_t horizon) {
  if (series.length() < lookback + horizon) throw DataError("series shorter than lookback + horizon");
  WindowedDataset ds;
  ds.lookback = lookback;
  ds.horizon = horizon;
  ds.spans = chrono_split(series.length(), spec, lookback, horizon);
  ds.stats = Standardizer::fit(series.values, ds.spans.train);
  auto standardized = std::make_shared<const Tensor>(ds.stats.apply(series.values));
  ds.train = WindowSet(standardized, ds.spans.train, lookback, horizon);
  ds.val = WindowSet(standardized, ds.spans.val, lookback, horizon);
  ds.test = WindowSet(standardized, ds.spans.test, lookback, horizon);
  return ds;
}

bool ar2_stable(double a1, double a2) {
  // Roots of z^2 - a1 z - a2.
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 + 4.0 * a2, 0.0));
  const std::complex<double> r1 = (a1 + disc) / 2.0;
  const std::complex<double> r2 = (a1 - disc) / 2.0;
  return std::abs(r1) < 1.0 && std::abs(r2) < 1.0;
}

SynthSeries synth_generate(const SynthSpec& spec) {
  if (spec.levels == 0) throw ConfigError("synthetic spec needs at least one level");
  if (spec.channels == 0 || spec.length < 2) throw ConfigError("synthetic spec needs channels > 0 and length >= 2");
  if (spec.noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (!spec.ar.empty() && spec.ar.size() != spec.levels) {
    throw ConfigError("synthetic spec: expected one AR(2) pair per level");
  }
  const std::size_t S = spec.levels, C = spec.channels, L = spec.length;
  std::vector<std::array<double, 2>> ar = spec.ar;
  if (ar.empty()) {
    for (std::size_t s = 0; s < S; ++s) ar.push_back({1.5 - 0.3 * static_cast<double>(s % 4), -0.7 + 0.1 * static_cast<double>(s % 4)});
  }
  for (const auto& a : ar) {
    if (!ar2_stable(a[0], a[1])) {
      throw ConfigError("unstable AR(2) coefficients (" + std::to_string(a[0]) + ", " + std::to_string(a[1]) + ")");
    }
  }

  Rng root(spec.seed);
  SynthSeries out;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t s = 0; s < S; ++s) {
    const double level = static_cast<double>(s + 1);
    Rng lin_rng = root.split("linear" + std::to_string(s + 1));
    Rng nl_rng = root.split("nonlinear" + std::to_string(s + 1));

    // Linear: continuous piecewise-linear trend plus a stable AR(2) process.
    Tensor lin({L, C});
    const std::size_t segments = 2 + s;
    for (std::size_t c = 0; c < C; ++c) {
      const double scale = lin_rng.uniform(0.5, 1.5);
      std::vector<double> slopes(segments);
      for (auto& sl : slopes) sl = lin_rng.uniform(-3.0, 3.0) / static_cast<double>(L);
      double level_value = lin_rng.uniform(-0.5, 0.5);
      double x1 = 0.0, x2 = 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t seg = std::min(segments - 1, t * segments / L);
        if (t > 0) level_value += slopes[seg];
        const double x = ar[s][0] * x1 + ar[s][1] * x2 + lin_rng.normal(0.0, spec.ar_innovation);
        x2 = x1;
        x1 = x;
        lin[t * C + c] = spec.linear_amplitude * scale * (level_value + x);
      }
    }

    // Nonlinear: amplitude-modulated sinusoid plus regime shifts shared
    // across channels with per-channel loadings.
    Tensor nl({L, C});
    const double period = 24.0 / level;
    const double slow = 7.0 * 24.0 / level;
    std::vector<double> regime(L);
    double state = nl_rng.bernoulli(0.5) ? 0.5 : -0.5;
    for (std::size_t t = 0; t < L; ++t) {
      if (nl_rng.bernoulli(1.0 / 150.0)) state = -state;
      regime[t] = state;
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double phase = nl_rng.uniform(0.0, two_pi);
      const double amp = nl_rng.uniform(0.5, 1.0);
      const double load = nl_rng.uniform(-1.0, 1.0);
      for (std::size_t t = 0; t < L; ++t) {
        const double tt = static_cast<double>(t);
        const double envelope = 1.0 + 0.5 * std::sin(two_pi * tt / slow);
        nl[t * C + c] = spec.nonlinear_amplitude *
                        (amp * envelope * std::sin(two_pi * tt / period + phase) + load * regime[t]) / level;
      }
    }
    out.components.emplace_back("linear" + std::to_string(s + 1), std::move(lin));
    out.components.emplace_back("nonlinear" + std::to_string(s + 1), std::move(nl));
  }
  Tensor noise({L, C});
  Rng noise_rng = root.split("noise");
  if (spec.noise_sigma > 0.0) {
    for (auto& v : noise.data()) v = noise_rng.normal(0.0, spec.noise_sigma);
  }
  out.components.emplace_back("noise", std::move(noise));

  Tensor total({L, C});
  for (const auto& [name, comp] : out.components)
    for (std::size_t i = 0; i < total.numel(); ++i) total[i] += comp[i];
  out.series.values = std::move(total);
  for (std::size_t c = 0; c < C; ++c) out.series.channel_names.push_back("c" + std::to_string(c));
  return out;
}

Tensor add_noise(const Tensor& x, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("noise alpha must lie in [0, 1], got " + std::to_string(alpha));
  Tensor out = x;
  if (alpha == 0.0) return out;
  for (auto& v : out.data()) v += alpha * rng.normal();
  return out;
}

}  // namespace lino::data
