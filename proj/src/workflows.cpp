#include "lino/workflows.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "lino/checkpoint.hpp"
#include "lino/errors.hpp"

namespace lino::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path prepare_dir(const RunConfig& rc) {
  fs::path dir = rc.run_dir();
  fs::create_directories(dir);
  return dir;
}

std::string run_suffix(const RunConfig& rc, std::size_t horizon, std::uint64_t seed) {
  if (rc.horizons.size() == 1 && rc.seeds.size() == 1) return "";
  return ".h" + std::to_string(horizon) + ".s" + std::to_string(seed);
}

std::string model_label(const LiNoConfig& m) {
  return m.variant == Variant::lino ? m.ablation.label() == "full" ? "lino" : m.ablation.label()
                                    : variant_name(m.variant);
}

std::string alpha_str(double a) {
  std::ostringstream os;
  os << a;
  return os.str();
}

void write_report(const fs::path& dir, const eval::EvalReport& report) {
  write_text(dir / "report.csv", report.to_csv());
  write_text(dir / "timing.csv", report.timing_csv());
}

struct LoadedModel {
  training::Checkpoint ckpt;
  data::WindowedDataset ds;
};

LoadedModel load_model_and_data(const RunConfig& rc) {
  LoadedModel lm;
  lm.ckpt = training::load_checkpoint(rc.checkpoint_path());
  const data::RawSeries series = load_series(rc);
  if (series.channels() != lm.ckpt.config.channels) {
    throw DimensionError("checkpoint expects " + std::to_string(lm.ckpt.config.channels) + " channels (C), data has " +
                         std::to_string(series.channels()));
  }
  lm.ds = data::make_dataset(series, rc.split_spec(), lm.ckpt.config.lookback, lm.ckpt.config.horizon);
  return lm;
}

std::size_t pick_channel(const RunConfig& rc, std::size_t channels) {
  const std::size_t c = rc.channel.value_or(channels - 1);
  if (c >= channels) throw ConfigError("channel " + std::to_string(c) + " out of range (C=" + std::to_string(channels) + ")");
  return c;
}

}  // namespace

data::RawSeries load_series(const RunConfig& rc) {
  data::RawSeries s = rc.dataset == "synth" ? data::synth_generate(rc.synth).series : data::load_csv(rc.dataset);
  if (!rc.target.empty()) s = data::select_channels(s, rc.target);
  return s;
}

TrainedRun train_one(const RunConfig& rc, const data::WindowedDataset& ds, LiNoConfig model, std::uint64_t seed,
                     double noise_alpha) {
  model.channels = ds.train.channels();
  model.lookback = ds.lookback;
  model.horizon = ds.horizon;
  training::TrainConfig tc = rc.train;
  tc.seed = seed;
  tc.noise_alpha = noise_alpha;
  Rng rng(seed);
  const auto start = std::chrono::steady_clock::now();
  TrainedRun run;
  run.model = model;
  run.result = training::train(model, init_params(model, rng), ds, tc);
  const eval::SplitMetrics m = eval::evaluate(run.result.params, model, ds.test);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.row = {rc.dataset_label(), ds.horizon, model_label(model), seed, m.mse, m.mae, m.windows, secs};
  return run;
}

eval::EvalReport cmd_train(const RunConfig& rc, std::ostream& log) {
  const data::RawSeries series = load_series(rc);
  const fs::path dir = prepare_dir(rc);
  const double alpha = rc.alphas ? rc.alphas->front() : 0.0;
  eval::EvalReport report;
  for (std::size_t h : rc.horizons) {
    const data::WindowedDataset ds = data::make_dataset(series, rc.split_spec(), rc.model.lookback, h);
    for (const auto& w : ds.stats.warnings) log << "warning: " << w << '\n';
    for (std::uint64_t seed : rc.seeds) {
      TrainedRun run = train_one(rc, ds, rc.model, seed, alpha);
      const std::string sfx = run_suffix(rc, h, seed);
      training::save_checkpoint((dir / ("checkpoint" + sfx)).string(), {run.model, run.result.params});
      training::write_history_csv((dir / ("history" + sfx + ".csv")).string(), run.result.history);
      log << run.row.dataset << " F=" << h << " seed=" << seed << ": best epoch " << run.result.best_epoch << " of "
          << run.result.history.size() << ", test MSE " << run.row.mse << ", MAE " << run.row.mae << '\n';
      report.rows.push_back(run.row);
    }
  }
  write_report(dir, report);
  log << report.summary();
  return report;
}

eval::EvalReport cmd_evaluate(const RunConfig& rc, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  LoadedModel lm = load_model_and_data(rc);
  const eval::SplitMetrics m = eval::evaluate(lm.ckpt.params, lm.ckpt.config, lm.ds.test);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  eval::EvalReport report;
  report.rows.push_back({rc.dataset_label(), lm.ckpt.config.horizon, model_label(lm.ckpt.config),
                         rc.seeds.front(), m.mse, m.mae, m.windows, secs});
  const fs::path dir = prepare_dir(rc);
  write_report(dir, report);
  log << report.summary();
  return report;
}

const std::vector<std::string>& ablation_labels() {
  static const std::vector<std::string> labels{"full", "no_li", "no_no", "no_te", "no_fe", "no_cd"};
  return labels;
}

std::vector<AblationRow> ablation_table(const eval::EvalReport& report) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
  for (const auto& r : report.rows) {
    by[r.variant].first.push_back(r.mse);
    by[r.variant].second.push_back(r.mae);
  }
  std::vector<AblationRow> out;
  for (const auto& label : ablation_labels()) {
    const std::string key = label == "full" ? "lino" : label;
    if (!by.count(key)) continue;
    AblationRow row;
    row.variant = label;
    row.mse_mean = eval::mean_std(by[key].first).first;
    row.mae_mean = eval::mean_std(by[key].second).first;
    out.push_back(row);
  }
  if (out.empty() || out.front().variant != "full") return out;
  const double base_mse = out.front().mse_mean, base_mae = out.front().mae_mean;
  for (auto& row : out) {
    row.mse_degradation_pct = 100.0 * (row.mse_mean - base_mse) / base_mse;
    row.mae_degradation_pct = 100.0 * (row.mae_mean - base_mae) / base_mae;
  }
  return out;
}

eval::EvalReport cmd_ablate(const RunConfig& rc, std::ostream& log) {
  const data::RawSeries series = load_series(rc);
  const fs::path dir = prepare_dir(rc);
  const double alpha = rc.alphas ? rc.alphas->front() : 0.0;
  eval::EvalReport report;
  for (std::size_t h : rc.horizons) {
    const data::WindowedDataset ds = data::make_dataset(series, rc.split_spec(), rc.model.lookback, h);
    for (const auto& label : ablation_labels()) {
      LiNoConfig model = rc.model;
      model.variant = Variant::lino;
      model.ablation = Ablation::parse(label);
      for (std::uint64_t seed : rc.seeds) {
        TrainedRun run = train_one(rc, ds, model, seed, alpha);
        log << label << " F=" << h << " seed=" << seed << ": test MSE " << run.row.mse << '\n';
        report.rows.push_back(run.row);
      }
    }
  }
  write_report(dir, report);
  std::ostringstream os;
  os << std::setprecision(10) << "# relative degradation against the full model, percent\n";
  os << "variant,mse_mean,mae_mean,mse_degradation_pct,mae_degradation_pct\n";
  for (const auto& r : ablation_table(report)) {
    os << r.variant << ',' << r.mse_mean << ',' << r.mae_mean << ',' << r.mse_degradation_pct << ','
       << r.mae_degradation_pct << '\n';
  }
  write_text(dir / "ablation.csv", os.str());
  log << os.str();
  return report;
}

const std::vector<double>& default_alphas() {
  static const std::vector<double> a{0.0, 0.25, 0.5, 0.75, 1.0};
  return a;
}

std::vector<NoiseRow> noise_table(const eval::EvalReport& report) {
  std::vector<NoiseRow> out;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : report.rows) {
    const auto at = r.variant.find('@');
    if (at == std::string::npos) continue;
    if (!index.count(r.variant)) {
      index[r.variant] = out.size();
      out.push_back({r.variant.substr(0, at), std::stod(r.variant.substr(at + 1)), 0.0, 0.0});
    }
    NoiseRow& row = out[index[r.variant]];
    row.mse_mean += r.mse;
    row.mae_mean += r.mae;
    ++counts[r.variant];
  }
  for (const auto& [key, i] : index) {
    out[i].mse_mean /= static_cast<double>(counts[key]);
    out[i].mae_mean /= static_cast<double>(counts[key]);
  }
  return out;
}

eval::EvalReport cmd_noise(const RunConfig& rc, std::ostream& log) {
  const data::RawSeries series = load_series(rc);
  const fs::path dir = prepare_dir(rc);
  const std::vector<double> alphas = rc.alphas.value_or(default_alphas());
  eval::EvalReport report;
  for (std::size_t h : rc.horizons) {
    const data::WindowedDataset ds = data::make_dataset(series, rc.split_spec(), rc.model.lookback, h);
    for (Variant v : {Variant::lino, Variant::mu, Variant::raw}) {
      LiNoConfig model = rc.model;
      model.variant = v;
      model.ablation = {};
      for (double a : alphas) {
        for (std::uint64_t seed : rc.seeds) {
          TrainedRun run = train_one(rc, ds, model, seed, a);
          run.row.variant = std::string(variant_name(v)) + "@" + alpha_str(a);
          log << run.row.variant << " F=" << h << " seed=" << seed << ": test MSE " << run.row.mse << '\n';
          report.rows.push_back(run.row);
        }
      }
    }
  }
  write_report(dir, report);

  const auto table = noise_table(report);
  std::ostringstream os;
  os << std::setprecision(10) << "variant,alpha,mse_mean,mae_mean\n";
  for (const auto& r : table) os << r.variant << ',' << r.alpha << ',' << r.mse_mean << ',' << r.mae_mean << '\n';
  // Bookkeeping only: whether MSE grows with alpha for each variant.
  os << "# variant,monotone_degradation\n";
  std::map<std::string, std::vector<double>> per;
  for (const auto& r : table) per[r.variant].push_back(r.mse_mean);
  for (const char* v : {"lino", "mu", "raw"}) {
    const auto& seq = per[v];
    bool mono = true;
    for (std::size_t i = 1; i < seq.size(); ++i) mono = mono && seq[i] >= seq[i - 1];
    os << "# " << v << ',' << (mono ? "yes" : "no") << '\n';
  }
  double lino_top = NAN, raw_top = NAN, top_alpha = -1.0;
  for (const auto& r : table) top_alpha = std::max(top_alpha, r.alpha);
  for (const auto& r : table) {
    if (r.alpha != top_alpha) continue;
    if (r.variant == "lino") lino_top = r.mse_mean;
    if (r.variant == "raw") raw_top = r.mse_mean;
  }
  os << "# lino_minus_raw_mse_at_alpha_" << top_alpha << ',' << (lino_top - raw_top) << '\n';
  write_text(dir / "noise.csv", os.str());
  log << os.str();
  return report;
}

eval::Decomposition cmd_decompose(const RunConfig& rc, std::ostream& log) {
  LoadedModel lm = load_model_and_data(rc);
  if (rc.window >= lm.ds.test.size()) {
    throw ConfigError("window " + std::to_string(rc.window) + " out of range (test split has " +
                      std::to_string(lm.ds.test.size()) + ")");
  }
  const LiNoConfig& cfg = lm.ckpt.config;
  eval::Decomposition d = eval::export_decomposition(lm.ckpt.params, cfg, lm.ds.test.input(rc.window));
  const fs::path dir = prepare_dir(rc);
  std::ostringstream os;
  os << std::setprecision(17) << "channel,step";
  for (const auto& n : d.names) os << ',' << n;
  os << '\n';
  const std::size_t F = cfg.horizon;
  for (std::size_t c = 0; c < cfg.channels; ++c)
    for (std::size_t f = 0; f < F; ++f) {
      os << c << ',' << f;
      for (const auto& s : d.series) os << ',' << s[c * F + f];
      os << '\n';
    }
  write_text(dir / "decomposition.csv", os.str());
  log << "wrote " << d.names.size() << " series for " << cfg.channels << " channels; nonlinear energy fraction "
      << eval::nonlinear_energy_fraction(d) << '\n';
  return d;
}

std::vector<std::pair<std::string, double>> cmd_probe(const RunConfig& rc, std::ostream& log) {
  const training::Checkpoint ck = training::load_checkpoint(rc.checkpoint_path());
  const LiNoConfig& cfg = ck.config;
  const std::size_t ch = pick_channel(rc, cfg.channels);
  const fs::path dir = fs::path(prepare_dir(rc)) / "weights";
  fs::create_directories(dir);
  Rng rng(rc.seeds.front());
  std::vector<std::pair<std::string, double>> residuals;
  auto emit = [&](const std::string& stem, const eval::ProbedAffineMap& m) {
    eval::write_matrix_csv((dir / (stem + "_A.csv")).string(), m.A);
    eval::write_matrix_csv((dir / (stem + "_b.csv")).string(), m.b.reshaped({1, m.b.numel()}));
    residuals.emplace_back(stem, m.residual);
  };
  const std::string cs = "_c" + std::to_string(ch);
  for (std::size_t level = 1; level <= cfg.blocks; ++level) {
    const std::string lv = "level" + std::to_string(level);
    // The Li block acts per channel, so the channel's own D x D block is the full story.
    const eval::VectorMap li = eval::li_block_map(ck.params, cfg, level);
    const eval::VectorMap li_ch = [&](const Tensor& v) {
      Tensor full = Tensor::zeros({cfg.channels * cfg.dim});
      for (std::size_t d = 0; d < cfg.dim; ++d) full[ch * cfg.dim + d] = v[d];
      const Tensor out = li(full);
      Tensor mine({cfg.dim});
      for (std::size_t d = 0; d < cfg.dim; ++d) mine[d] = out[ch * cfg.dim + d];
      return mine;
    };
    if (cfg.variant != Variant::lino || !cfg.ablation.no_li) emit("li_" + lv + cs, eval::probe_affine(li_ch, cfg.dim, rng));
    emit("pred_linear_" + lv + cs,
         eval::probe_affine(eval::prediction_map(ck.params, cfg, ch, eval::ProbeTarget::linear, level), cfg.lookback, rng));
    emit("pred_nonlinear_" + lv + cs,
         eval::probe_affine(eval::prediction_map(ck.params, cfg, ch, eval::ProbeTarget::nonlinear, level), cfg.lookback,
                            rng));
  }
  emit("pred_total" + cs,
       eval::probe_affine(eval::prediction_map(ck.params, cfg, ch, eval::ProbeTarget::total), cfg.lookback, rng));
  std::ostringstream os;
  os << std::setprecision(10) << "map,residual\n";
  for (const auto& [name, r] : residuals) os << name << ',' << r << '\n';
  write_text(dir / "residuals.csv", os.str());
  log << os.str();
  return residuals;
}

data::SynthSeries cmd_synth(const RunConfig& rc, std::ostream& log) {
  const data::SynthSeries s = data::synth_generate(rc.synth);
  const fs::path dir = prepare_dir(rc);
  data::write_csv((dir / "synth.csv").string(), s.series);
  std::ostringstream os;
  os << std::setprecision(17);
  const std::size_t C = s.series.channels(), L = s.series.length();
  bool first = true;
  for (const auto& [name, t] : s.components)
    for (std::size_t c = 0; c < C; ++c) {
      os << (first ? "" : ",") << name << ':' << s.series.channel_names[c];
      first = false;
    }
  os << '\n';
  for (std::size_t t = 0; t < L; ++t) {
    first = true;
    for (const auto& [name, comp] : s.components)
      for (std::size_t c = 0; c < C; ++c) {
        os << (first ? "" : ",") << comp[t * C + c];
        first = false;
      }
    os << '\n';
  }
  write_text(dir / "synth_components.csv", os.str());
  log << "wrote " << L << " x " << C << " series with " << s.components.size() << " components to " << dir.string()
      << '\n';
  return s;
}

void run_command(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  if (rc.command == "train") cmd_train(rc, log);
  else if (rc.command == "evaluate") cmd_evaluate(rc, log);
  else if (rc.command == "ablate") cmd_ablate(rc, log);
  else if (rc.command == "noise") cmd_noise(rc, log);
  else if (rc.command == "decompose") cmd_decompose(rc, log);
  else if (rc.command == "probe") cmd_probe(rc, log);
  else if (rc.command == "synth") cmd_synth(rc, log);
}

}  // namespace lino::cli
