#include "lino/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <tuple>

#include "lino/errors.hpp"

namespace lino::eval {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

double mse(const Tensor& yhat, const Tensor& y) {
  require_same(yhat, y, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += (yhat[i] - y[i]) * (yhat[i] - y[i]);
  return s / static_cast<double>(y.numel());
}

double mae(const Tensor& yhat, const Tensor& y) {
  require_same(yhat, y, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += std::abs(yhat[i] - y[i]);
  return s / static_cast<double>(y.numel());
}

SplitMetrics evaluate(const Predictor& predictor, const data::WindowSet& windows, std::size_t batch) {
  if (windows.empty()) throw DataError("evaluate: split has no windows");
  if (batch == 0) batch = 1;
  SplitMetrics m;
  m.windows = windows.size();
  m.window_mse.reserve(windows.size());
  m.window_mae.reserve(windows.size());
  for (std::size_t first = 0; first < windows.size(); first += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = first; i < std::min(windows.size(), first + batch); ++i) idx.push_back(i);
    const Tensor yhat = predictor(windows.inputs(idx));
    const Tensor y = windows.targets(idx);
    require_same(yhat, y, "evaluate");
    const std::size_t per = y.numel() / idx.size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      double se = 0.0, ae = 0.0;
      for (std::size_t k = 0; k < per; ++k) {
        const double d = yhat[b * per + k] - y[b * per + k];
        se += d * d;
        ae += std::abs(d);
      }
      m.window_mse.push_back(se / static_cast<double>(per));
      m.window_mae.push_back(ae / static_cast<double>(per));
    }
  }
  // Every window holds the same number of elements, so the split metric is
  // the mean of per-window metrics.
  m.mse = std::accumulate(m.window_mse.begin(), m.window_mse.end(), 0.0) / static_cast<double>(m.windows);
  m.mae = std::accumulate(m.window_mae.begin(), m.window_mae.end(), 0.0) / static_cast<double>(m.windows);
  return m;
}

Predictor model_predictor(const LiNoParams& params, const LiNoConfig& cfg) {
  return [&params, cfg](const Tensor& x) { return predict(x, params, cfg); };
}

SplitMetrics evaluate(const LiNoParams& params, const LiNoConfig& cfg, const data::WindowSet& windows,
                      std::size_t batch) {
  if (windows.channels() != cfg.channels || windows.lookback() != cfg.lookback || windows.horizon() != cfg.horizon) {
    throw ConfigError("evaluate: windows (C=" + std::to_string(windows.channels()) + ", T=" +
                      std::to_string(windows.lookback()) + ", F=" + std::to_string(windows.horizon()) +
                      ") do not match the model config");
  }
  return evaluate(model_predictor(params, cfg), windows, batch);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / n)};
}

std::vector<AggregateRow> EvalReport::aggregates() const {
  std::vector<AggregateRow> out;
  // Mean over horizons for each (dataset, variant, seed).
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<const EvalRow*>> by_seed;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<const EvalRow*>> by_horizon;
  for (const auto& r : rows) {
    by_seed[{r.dataset, r.variant, r.seed}].push_back(&r);
    by_horizon[{r.dataset, r.variant, r.horizon}].push_back(&r);
  }
  auto fill = [](AggregateRow& a, const std::vector<const EvalRow*>& group) {
    std::vector<double> m, e;
    for (auto* r : group) {
      m.push_back(r->mse);
      e.push_back(r->mae);
    }
    std::tie(a.mse_mean, a.mse_std) = mean_std(m);
    std::tie(a.mae_mean, a.mae_std) = mean_std(e);
    a.count = group.size();
  };
  for (const auto& [key, group] : by_seed) {
    AggregateRow a;
    std::tie(a.dataset, a.variant, a.seed) = key;
    a.kind = "mean_over_horizons";
    fill(a, group);
    out.push_back(a);
  }
  for (const auto& [key, group] : by_horizon) {
    AggregateRow a;
    std::tie(a.dataset, a.variant, a.horizon) = key;
    a.kind = "mean_std_over_seeds";
    fill(a, group);
    out.push_back(a);
  }
  return out;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "# metrics on the standardised scale\n";
  os << "row,dataset,horizon,variant,seed,mse,mae,windows\n";
  for (const auto& r : rows) {
    os << "raw," << r.dataset << ',' << r.horizon << ',' << r.variant << ',' << r.seed << ',' << r.mse << ',' << r.mae
       << ',' << r.windows << '\n';
  }
  os << "row,dataset,horizon,variant,seed,mse_mean,mse_std,mae_mean,mae_std,count\n";
  for (const auto& a : aggregates()) {
    os << a.kind << ',' << a.dataset << ',' << a.horizon << ',' << a.variant << ',' << a.seed << ',' << a.mse_mean
       << ',' << a.mse_std << ',' << a.mae_mean << ',' << a.mae_std << ',' << a.count << '\n';
  }
  return os.str();
}

std::string EvalReport::timing_csv() const {
  std::ostringstream os;
  os << std::setprecision(4) << "dataset,horizon,variant,seed,runtime_s\n";
  for (const auto& r : rows) {
    os << r.dataset << ',' << r.horizon << ',' << r.variant << ',' << r.seed << ',' << r.runtime_s << '\n';
  }
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "Metrics are on the standardised scale.\n";
  for (const auto& a : aggregates()) {
    if (a.kind != "mean_std_over_seeds") continue;
    os << a.dataset << " F=" << a.horizon << " " << a.variant << ": MSE " << a.mse_mean << " +- " << a.mse_std
       << ", MAE " << a.mae_mean << " +- " << a.mae_std << " (" << a.count << " seeds)\n";
  }
  return os.str();
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << to_csv();
}

ProbedAffineMap probe_affine(const VectorMap& f, std::size_t in_dim, Rng& rng, std::size_t probes) {
  if (in_dim == 0) throw DimensionError("probe_affine: input dimension must be positive");
  ProbedAffineMap m;
  const Tensor zero = Tensor::zeros({in_dim});
  m.b = f(zero);
  const std::size_t out_dim = m.b.numel();
  m.b = m.b.reshaped({out_dim});
  m.A = Tensor::zeros({out_dim, in_dim});
  Tensor e = Tensor::zeros({in_dim});
  for (std::size_t i = 0; i < in_dim; ++i) {
    e[i] = 1.0;
    const Tensor col = f(e);
    e[i] = 0.0;
    if (col.numel() != out_dim) throw DimensionError("probe_affine: map output size changed between probes");
    for (std::size_t o = 0; o < out_dim; ++o) m.A[o * in_dim + i] = col[o] - m.b[o];
  }
  for (std::size_t k = 0; k < probes; ++k) {
    Tensor x({in_dim});
    for (auto& v : x.data()) v = rng.normal();
    const Tensor fx = f(x);
    for (std::size_t o = 0; o < out_dim; ++o) {
      double ax = m.b[o];
      for (std::size_t i = 0; i < in_dim; ++i) ax += m.A[o * in_dim + i] * x[i];
      m.residual = std::max(m.residual, std::abs(fx[o] - ax));
    }
  }
  return m;
}

VectorMap li_block_map(const LiNoParams& params, const LiNoConfig& cfg, std::size_t level) {
  if (level == 0 || level > cfg.blocks) throw ConfigError("li_block_map: level out of range");
  return [&params, cfg, level](const Tensor& v) {
    Tape tape;
    BoundParams bound(tape, params, false);
    Rng unused(0);
    Var h = tape.constant(v.reshaped({cfg.channels, cfg.dim}));
    BlockOutput out = li_block(h, bound, level, cfg, Mode::eval, unused);
    return out.pattern.value().reshaped({cfg.channels * cfg.dim});
  };
}

VectorMap prediction_map(const LiNoParams& params, const LiNoConfig& cfg, std::size_t channel, ProbeTarget target,
                         std::size_t level) {
  if (channel >= cfg.channels) throw ConfigError("prediction_map: channel out of range");
  if (target != ProbeTarget::total && (level == 0 || level > cfg.blocks)) {
    throw ConfigError("prediction_map: level out of range");
  }
  return [&params, cfg, channel, target, level](const Tensor& v) {
    if (v.numel() != cfg.lookback) throw DimensionError("prediction_map: expected a lookback-length vector");
    Tensor x = Tensor::zeros({cfg.channels, cfg.lookback});
    for (std::size_t t = 0; t < cfg.lookback; ++t) x[channel * cfg.lookback + t] = v[t];
    Tape tape;
    BoundParams bound(tape, params, false);
    Rng unused(0);
    ForwardResult res = forward(tape.constant(x), bound, cfg, Mode::eval, unused, /*revin=*/false);
    const Tensor* full = &res.yhat_normalized.value();
    if (target != ProbeTarget::total) {
      const LevelTrace& tr = res.levels[level - 1];
      full = target == ProbeTarget::linear ? &tr.pred_linear : &tr.pred_nonlinear;
    }
    Tensor out({cfg.horizon});
    if (full->numel() == 0) return out;  // component absent (ablated or variant)
    for (std::size_t f = 0; f < cfg.horizon; ++f) out[f] = (*full)[channel * cfg.horizon + f];
    return out;
  };
}

Decomposition export_decomposition(const LiNoParams& params, const LiNoConfig& cfg, const Tensor& x) {
  Tape tape;
  BoundParams bound(tape, params, false);
  Rng unused(0);
  ForwardResult res = forward(tape.constant(x), bound, cfg, Mode::eval, unused);
  const Shape yshape = res.yhat.value().shape();
  const std::size_t F = cfg.horizon;
  const std::size_t rows = res.yhat.value().numel() / F;
  Decomposition d;
  bool first_linear = true;
  auto push = [&](const std::string& name, const Tensor& comp, bool carries_mean) {
    Tensor norm = comp.numel() ? comp : Tensor::zeros(yshape);
    Tensor out(yshape);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < F; ++f) {
        out[r * F + f] = norm[r * F + f] * res.stats.stdev[r] + (carries_mean ? res.stats.mean[r] : 0.0);
      }
    d.names.push_back(name);
    d.series.push_back(std::move(out));
    d.normalized.push_back(std::move(norm));
  };
  for (std::size_t i = 0; i < res.levels.size(); ++i) {
    const auto& tr = res.levels[i];
    push("LP" + std::to_string(i + 1), tr.pred_linear, first_linear);
    first_linear = false;
    push("NP" + std::to_string(i + 1), tr.pred_nonlinear, false);
  }
  d.names.push_back("total");
  d.series.push_back(res.yhat.value());
  d.normalized.push_back(res.yhat_normalized.value());
  return d;
}

double nonlinear_energy_fraction(const Decomposition& d) {
  if (d.normalized.empty()) return 0.0;
  const Shape& s = d.normalized.back().shape();
  Tensor lin(s), non(s);
  for (std::size_t k = 0; k + 1 < d.names.size(); ++k) {
    Tensor& acc = d.names[k].starts_with("LP") ? lin : non;
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += d.normalized[k][i];
  }
  double el = 0.0, en = 0.0;
  for (std::size_t i = 0; i < lin.numel(); ++i) {
    el += lin[i] * lin[i];
    en += non[i] * non[i];
  }
  return el + en > 0.0 ? en / (el + en) : 0.0;
}

void write_decomposition_csv(const std::string& path, const Decomposition& d, std::size_t channel) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const Tensor& total = d.series.back();
  const std::size_t F = total.shape().back();
  if (channel >= total.numel() / F) throw ConfigError("decomposition channel out of range");
  out << "step";
  for (const auto& n : d.names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (std::size_t f = 0; f < F; ++f) {
    out << f;
    for (const auto& s : d.series) out << ',' << s[channel * F + f];
    out << '\n';
  }
}

void write_matrix_csv(const std::string& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const std::size_t cols = m.shape().back();
  const std::size_t rows = m.numel() / cols;
  out << std::setprecision(17);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << m[r * cols + c];
    out << '\n';
  }
}

}  // namespace lino::eval
