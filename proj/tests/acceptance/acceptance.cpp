// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every selected criterion passes; 77 when the ETT criteria are selected
// but the data directory is missing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "lino/checkpoint.hpp"
#include "lino/data.hpp"
#include "lino/eval.hpp"
#include "lino/model.hpp"
#include "lino/ops.hpp"
#include "lino/spectral.hpp"
#include "lino/training.hpp"
#include "lino/workflows.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace lino;
using lino::testing::gradcheck;
using lino::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool unavailable = false;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

// Random weighted sum so every output element reaches the loss.
Var project(Tape& tape, Var out) {
  Rng rng(77);
  return ops::sum(ops::mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

LiNoConfig tiny_config(std::size_t blocks) {
  LiNoConfig c;
  c.channels = 2;
  c.lookback = 8;
  c.horizon = 4;
  c.dim = 8;
  c.blocks = blocks;
  return c;
}

// Initialised parameters with non-trivial AR kernels and biases.
LiNoParams busy_params(const LiNoConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  LiNoParams p = init_params(cfg, rng);
  Rng extra(seed + 1000);
  for (auto& [name, t] : p.entries()) {
    if (name.ends_with("li.phi") || name.ends_with("li.beta")) {
      for (auto& v : t.data()) v = extra.normal(0.0, 0.3);
    } else if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") || name.ends_with(".beta")) {
      for (auto& v : t.data()) v = extra.normal(0.0, 0.1);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  using V = std::vector<Var>;
  Rng rng(2024);
  std::vector<std::pair<std::string, double>> prim;
  auto check = [&](const std::string& name, std::vector<Tensor> in, const testing::LossBuilder& f) {
    prim.emplace_back(name, gradcheck(in, f));
  };
  auto a34 = [&] { return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}; };
  check("add", a34(), [](Tape& t, const V& l) { return project(t, ops::add(l[0], l[1])); });
  check("sub", a34(), [](Tape& t, const V& l) { return project(t, ops::sub(l[0], l[1])); });
  check("mul", a34(), [](Tape& t, const V& l) { return project(t, ops::mul(l[0], l[1])); });
  check("scale", a34(), [](Tape& t, const V& l) { return project(t, ops::scale(ops::add(l[0], 0.3), -1.7)); });
  const auto v20 = [&] { return std::vector<Tensor>{random_tensor({20}, rng)}; };
  check("tanh", v20(), [](Tape& t, const V& l) { return project(t, ops::tanh(l[0])); });
  check("gelu", v20(), [](Tape& t, const V& l) { return project(t, ops::gelu(l[0])); });
  check("square", v20(), [](Tape& t, const V& l) { return project(t, ops::square(l[0])); });
  check("abs", v20(), [](Tape& t, const V& l) { return project(t, ops::abs(l[0])); });
  check("linear", {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)},
        [](Tape& t, const V& l) { return project(t, ops::linear(l[0], l[1], l[2])); });
  check("causal_depthwise_conv", {random_tensor({2, 3, 6}, rng), random_tensor({3, 6}, rng), random_tensor({3}, rng)},
        [](Tape& t, const V& l) { return project(t, ops::causal_depthwise_conv(l[0], l[1], l[2])); });
  for (int axis : {0, 1, 2}) {
    check("softmax", {random_tensor({2, 3, 4}, rng)},
          [axis](Tape& t, const V& l) { return project(t, ops::softmax(l[0], axis)); });
  }
  check("layer_norm", {random_tensor({3, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)},
        [](Tape& t, const V& l) { return project(t, ops::layer_norm(l[0], l[1], l[2], 1e-5)); });
  check("dropout", v20(), [](Tape& t, const V& l) {
    Rng mask(7);
    return project(t, ops::dropout(l[0], 0.3, ops::Mode::train, mask));
  });
  const auto x234 = [&] { return std::vector<Tensor>{random_tensor({2, 3, 4}, rng)}; };
  check("sum_axis", x234(), [](Tape& t, const V& l) { return project(t, ops::sum_axis(l[0], 1)); });
  check("mean_axis", x234(), [](Tape& t, const V& l) { return project(t, ops::mean_axis(l[0], -1, true)); });
  check("mean", x234(), [](Tape&, const V& l) { return ops::mean(ops::square(l[0])); });
  check("concat", x234(), [](Tape& t, const V& l) {
    const Var parts[] = {l[0], ops::scale(l[0], 2.0)};
    return project(t, ops::concat(parts, 1));
  });
  check("slice", x234(), [](Tape& t, const V& l) { return project(t, ops::slice(l[0], 2, 1, 3)); });
  check("transpose", x234(), [](Tape& t, const V& l) { return project(t, ops::transpose(l[0], 0, 2)); });
  check("reshape", x234(), [](Tape& t, const V& l) { return project(t, ops::reshape(l[0], {6, 4})); });
  check("repeat_axis", x234(), [](Tape& t, const V& l) {
    return project(t, ops::repeat_axis(ops::sum_axis(l[0], 1, true), 1, 5));
  });
  check("row_affine", x234(), [](Tape& t, const V& l) {
    Tensor sc({2, 3}, {1, 2, 3, 4, 5, 6}), sh({2, 3}, {0, 1, 0, 1, 0, 1});
    return project(t, ops::row_affine(l[0], sc, sh));
  });
  for (std::size_t n : {8u, 6u}) {
    check("rfft", {random_tensor({2, n}, rng)}, [](Tape& t, const V& l) {
      auto s = spectral::rfft(l[0]);
      return ops::add(project(t, s.re), project(t, ops::scale(s.im, 0.5)));
    });
  }
  check("irfft", {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)},
        [](Tape& t, const V& l) { return project(t, spectral::irfft({l[0], l[1]}, 8)); });
  check("freq_projection", {random_tensor({2, 8}, rng), random_tensor({5, 5}, rng), random_tensor({5, 5}, rng)},
        [](Tape& t, const V& l) { return project(t, spectral::freq_projection(l[0], l[1], l[2])); });

  double worst_prim = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : prim) {
    if (e > worst_prim) worst_prim = e, worst_name = name;
  }

  // End-to-end: C=2, T=8, D=8, F=4, N=1, every variant, analytic vs central differences.
  double worst_e2e = 0.0;
  for (Variant v : {Variant::lino, Variant::mu, Variant::raw, Variant::ln}) {
    LiNoConfig cfg = tiny_config(1);
    cfg.variant = v;
    LiNoParams p = busy_params(cfg, 60);
    Tensor x = random_tensor({3, 2, 8}, rng), y = random_tensor({3, 2, 4}, rng);
    Rng drop(0);
    const auto lg = training::loss_and_grads(p, cfg, x, y, Mode::eval, drop);
    auto loss_of = [&](const LiNoParams& q) {
      const Tensor yh = predict(x, q, cfg);
      double s = 0.0;
      for (std::size_t i = 0; i < yh.numel(); ++i) s += (yh[i] - y[i]) * (yh[i] - y[i]);
      return s / static_cast<double>(yh.numel());
    };
    for (std::size_t k = 0; k < p.size(); ++k) {
      Tensor num(p.entries()[k].second.shape());
      LiNoParams q = p;
      for (std::size_t i = 0; i < num.numel(); ++i) {
        double& slot = q.entries()[k].second[i];
        const double orig = slot;
        slot = orig + 1e-5;
        const double up = loss_of(q);
        slot = orig - 1e-5;
        const double down = loss_of(q);
        slot = orig;
        num[i] = (up - down) / 2e-5;
      }
      worst_e2e = std::max(worst_e2e, testing::relative_error(lg.grads[k], num));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_prim < 1e-4 && worst_e2e < 1e-3 && secs < 60.0;
  return {pass, std::to_string(prim.size()) + " primitive checks, worst rel err " + fmt(worst_prim) + " (" + worst_name +
                    ") < 1e-4; end-to-end worst " + fmt(worst_e2e) + " < 1e-3; " + fmt(secs) + " s < 60 s"};
}

Outcome decomposition_completeness() {
  double worst = 0.0;
  std::size_t inputs = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    LiNoConfig cfg = tiny_config(n);
    const LiNoParams p = busy_params(cfg, 10 + n);
    Tape tape;
    BoundParams b(tape, p, false);
    Rng rng(100 + n);
    for (int trial = 0; trial < 100; ++trial, ++inputs) {
      Rng drop(0);
      ForwardResult res = forward(tape.constant(random_tensor({2, 8}, rng, 3.0)), b, cfg, Mode::eval, drop);
      // H_1 - sum L_i - sum N_i - R_N, accumulated directly from the traces.
      Tensor gap = res.levels.front().input;
      for (const auto& lv : res.levels)
        for (std::size_t i = 0; i < gap.numel(); ++i) gap[i] -= lv.linear[i] + lv.nonlinear[i];
      for (std::size_t i = 0; i < gap.numel(); ++i) gap[i] -= res.levels.back().resid_nonlinear[i];
      worst = std::max(worst, max_abs(gap));
    }
  }
  return {worst < 1e-9, std::to_string(inputs) + " inputs over N=1..4, max |H1 - sum L - sum N - R_N| = " + fmt(worst) +
                            " < 1e-9"};
}

Outcome affine_probe_oracle() {
  LiNoConfig cfg;
  cfg.channels = 3;
  cfg.lookback = 12;
  cfg.horizon = 6;
  cfg.dim = 8;
  cfg.blocks = 2;
  cfg.dropout = 0.5;  // eval mode must switch it off
  const LiNoParams p = busy_params(cfg, 6);
  Rng rng(6);
  double worst_res = 0.0, worst_struct = 0.0;
  for (std::size_t level = 1; level <= cfg.blocks; ++level) {
    const auto m = eval::probe_affine(eval::li_block_map(p, cfg, level), cfg.channels * cfg.dim, rng, 16);
    worst_res = std::max(worst_res, m.residual);
    const Tensor& phi = p.get("level" + std::to_string(level) + ".li.phi");
    const Tensor& beta = p.get("level" + std::to_string(level) + ".li.beta");
    const std::size_t C = cfg.channels, D = cfg.dim, n = C * D;
    for (std::size_t c1 = 0; c1 < C; ++c1)
      for (std::size_t d1 = 0; d1 < D; ++d1) {
        worst_struct = std::max(worst_struct, std::abs(m.b[c1 * D + d1] - beta[c1]));
        for (std::size_t c2 = 0; c2 < C; ++c2)
          for (std::size_t d2 = 0; d2 < D; ++d2) {
            const double expect = (c1 == c2 && d2 <= d1) ? phi.at({c1, d1 - d2}) : 0.0;
            worst_struct = std::max(worst_struct, std::abs(m.A[(c1 * D + d1) * n + c2 * D + d2] - expect));
          }
      }
  }
  return {worst_res < 1e-8 && worst_struct < 1e-12,
          "probe residual " + fmt(worst_res) + " < 1e-8; max deviation from causal Toeplitz(phi) + beta " +
              fmt(worst_struct)};
}

Outcome spectral_suite() {
  Rng rng(4);
  double roundtrip = 0.0, parseval = 0.0, ident = 0.0;
  for (std::size_t n : {2u, 6u, 8u, 10u, 64u, 256u, 512u}) {
    Tape tape;
    const Tensor x = random_tensor({3, n}, rng);
    auto s = spectral::rfft(tape.constant(x));
    roundtrip = std::max(roundtrip, max_abs_diff(spectral::irfft(s, n).value(), x));
    for (std::size_t r = 0; r < 3; ++r) {
      double te = 0.0, fe = 0.0;
      for (std::size_t t = 0; t < n; ++t) te += x[r * n + t] * x[r * n + t];
      const std::size_t bins = n / 2 + 1;
      for (std::size_t k = 0; k < bins; ++k) {
        const double re = s.re.value()[r * bins + k], im = s.im.value()[r * bins + k];
        fe += (k == 0 || 2 * k == n ? 1.0 : 2.0) * (re * re + im * im);
      }
      parseval = std::max(parseval, std::abs(te - fe / static_cast<double>(n)));
    }
    const auto w = spectral::ComplexLinearLayer::identity(n / 2 + 1);
    ident = std::max(ident, max_abs_diff(spectral::freq_projection(tape.constant(x), tape.constant(w.re),
                                                                   tape.constant(w.im))
                                             .value(),
                                         x));
  }
  return {roundtrip < 1e-10 && parseval < 1e-8 && ident < 1e-9,
          "roundtrip " + fmt(roundtrip) + " < 1e-10; Parseval " + fmt(parseval) + " < 1e-8; identity projection " +
              fmt(ident) + " < 1e-9"};
}

Outcome std_special_case() {
  LiNoConfig cfg = tiny_config(1);
  cfg.dim = 16;
  cfg.lookback = 16;
  std::size_t mismatches = 0, checked = 0;
  for (std::size_t k : {1u, 2u, 3u, 5u, 16u}) {
    LiNoParams p = busy_params(cfg, 20 + k);
    Tensor phi = Tensor::zeros({2, 16});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < k; ++j) phi.at({c, j}) = 1.0 / static_cast<double>(k);
    p.get("level1.li.phi") = phi;
    p.get("level1.li.beta") = Tensor::zeros({2});
    Rng rng(21);
    Tape tape;
    BoundParams b(tape, p, false);
    Rng drop(0);
    ForwardResult res = forward(tape.constant(random_tensor({2, 16}, rng)), b, cfg, Mode::eval, drop);
    const Tensor& h = res.levels[0].input;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t d = 0; d < 16; ++d, ++checked) {
        // Trailing window of length k, zero-padded on the left.
        double mov = 0.0;
        for (std::size_t j = 0; j < k && j <= d; ++j) mov += (1.0 / static_cast<double>(k)) * h.at({c, d - j});
        if (res.levels[0].linear.at({c, d}) != mov) ++mismatches;
      }
  }
  return {mismatches == 0, std::to_string(checked) + " positions for k in {1,2,3,5,16}, " +
                               std::to_string(mismatches) + " differ from the moving-average oracle"};
}

Outcome overfit_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = testing::linear_trend_dataset(2, 16, 8, 8);
  const LiNoConfig cfg = testing::pure_li_config(2, 16, 8, 16);
  training::TrainConfig tc;
  tc.lr = 1e-3;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.full_batch = true;
  Rng rng(1);
  const auto res = training::train(cfg, init_params(cfg, rng), ds, tc);
  const double mse = eval::evaluate(res.params, cfg, ds.train).mse;
  const double secs = seconds_since(t0);
  return {mse < 1e-3 && res.history.size() <= 200 && secs < 60.0,
          "train MSE " + fmt(mse) + " < 1e-3 after " + std::to_string(res.history.size()) + " epochs; " + fmt(secs) +
              " s < 60 s"};
}

// Synthetic mixed dataset and a CPU-sized training setup shared by the
// directional criteria.
struct Experiment {
  data::WindowedDataset ds;
  LiNoConfig model;
  training::TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

Experiment mixed_experiment() {
  data::SynthSpec spec;
  spec.levels = 2;
  spec.channels = 4;
  spec.length = 2400;
  spec.seed = 7;
  spec.noise_sigma = 0.1;
  Experiment e;
  e.ds = data::make_dataset(data::synth_generate(spec).series, data::SplitSpec::from_ratios(0.7, 0.1, 0.2), 96, 48);
  e.model.channels = spec.channels;
  e.model.lookback = 96;
  e.model.horizon = 48;
  e.model.dim = 64;
  e.model.blocks = 2;
  e.train.lr = 1e-3;
  e.train.batch_size = 32;
  e.train.max_epochs = 30;
  e.train.patience = 5;
  return e;
}

training::TrainResult fit(const Experiment& e, const LiNoConfig& model, std::uint64_t seed, double alpha = 0.0) {
  training::TrainConfig tc = e.train;
  tc.seed = seed;
  tc.noise_alpha = alpha;
  Rng rng(seed);
  return training::train(model, init_params(model, rng), e.ds, tc);
}

Outcome ablation_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const Experiment e = mixed_experiment();
  std::map<std::string, double> val;
  for (const char* label : {"full", "no_no", "no_li"}) {
    LiNoConfig m = e.model;
    m.ablation = Ablation::parse(label);
    double sum = 0.0;
    for (auto seed : e.seeds) sum += fit(e, m, seed).best_val_mse;
    val[label] = sum / static_cast<double>(e.seeds.size());
  }
  const bool pass = val["full"] < val["no_no"] && val["full"] < val["no_li"];
  return {pass, "mean val MSE over " + std::to_string(e.seeds.size()) + " seeds: full " + fmt(val["full"]) +
                    ", w/o No " + fmt(val["no_no"]) + ", w/o Li " + fmt(val["no_li"]) + "; " +
                    fmt(seconds_since(t0)) + " s"};
}

Outcome noise_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  Experiment e = mixed_experiment();
  // Fifteen trainings; one seed keeps the sweep within a few CPU minutes.
  e.seeds = {1};
  const std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::map<std::pair<std::string, double>, double> mse;
  for (Variant v : {Variant::lino, Variant::mu, Variant::raw}) {
    LiNoConfig m = e.model;
    m.variant = v;
    for (double a : alphas) {
      double sum = 0.0;
      for (auto seed : e.seeds) sum += eval::evaluate(fit(e, m, seed, a).params, m, e.ds.test).mse;
      mse[{variant_name(v), a}] = sum / static_cast<double>(e.seeds.size());
    }
  }
  std::ostringstream table;
  for (const char* v : {"lino", "mu", "raw"}) {
    table << ' ' << v << '[';
    for (std::size_t i = 0; i < alphas.size(); ++i) table << (i ? " " : "") << fmt(mse[{v, alphas[i]}]);
    table << ']';
  }
  const double lino1 = mse[{"lino", 1.0}], raw1 = mse[{"raw", 1.0}];
  // With the zero AR-kernel init, stacked RAW levels after the first receive a
  // constant input, so nothing upstream of the level-2 Li block gets gradient.
  LiNoConfig raw = e.model;
  raw.variant = Variant::raw;
  Rng init_rng(1), drop(0);
  const LiNoParams p0 = init_params(raw, init_rng);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto lg = training::loss_and_grads(p0, raw, e.ds.train.inputs(idx), e.ds.train.targets(idx), Mode::train, drop);
  double upstream = 0.0;
  for (std::size_t k = 0; k < p0.size(); ++k) {
    const auto& name = p0.entries()[k].first;
    if (name.starts_with("embed") || name.starts_with("level1.")) upstream = std::max(upstream, max_abs(lg.grads[k]));
  }
  return {lino1 <= raw1 && mse.size() == 15, "seed 1, test MSE at alpha=1: LiNo " + fmt(lino1) + " <= RAW " + fmt(raw1) +
                                                 "; alphas 0..1:" + table.str() + "; RAW init gradient upstream of level 2: " +
                                                 fmt(upstream) + "; " + fmt(seconds_since(t0)) + " s"};
}

std::map<std::string, std::string> metric_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().filename() == "timing.csv") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(entry.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const fs::path& scratch) {
  const std::vector<std::string> commands{"synth", "train", "evaluate", "ablate", "noise", "decompose", "probe"};
  auto run_all = [&](const fs::path& out) {
    fs::remove_all(out);
    std::ostringstream log;
    for (const auto& cmd : commands) {
      std::vector<std::pair<std::string, std::string>> o{
          {"dataset", "synth"}, {"synth_length", "500"}, {"lookback", "32"}, {"horizon", "8"},
          {"dim", "16"},        {"blocks", "2"},         {"dropout", "0.2"}, {"max_epochs", "2"},
          {"batch", "32"},      {"lr", "1e-3"},          {"seed", "3"},      {"unsafe_grid", "true"},
          {"out", out.string()}, {"alpha", cmd == "noise" ? "0,0.5,1" : "0.25"}};
      if (cmd == "evaluate" || cmd == "decompose" || cmd == "probe") {
        o.emplace_back("checkpoint", (out / "train" / "checkpoint").string());
      }
      const auto rc = cli::build_run_config(cmd, "", o);
      cli::run_command(rc, log);
    }
    return metric_files(out);
  };
  const auto a = run_all(scratch / "run_a");
  const auto b = run_all(scratch / "run_b");
  std::size_t differ = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differ;
  }
  const bool pass = differ == 0 && a.size() == b.size() && a.size() > 0;
  fs::remove_all(scratch / "run_a");
  fs::remove_all(scratch / "run_b");
  return {pass, std::to_string(commands.size()) + " commands rerun: " + std::to_string(a.size()) +
                    " output files compared bytewise, " + std::to_string(differ) + " differ"};
}

// ---------------------------------------------------------------------------
// Desk-scale ETT runs. Need LINO_ETT_DIR with ETTh1.csv and ETTh2.csv.

struct EttRun {
  double mse = 0.0, mae = 0.0, secs = 0.0;
};

EttRun ett_run(const fs::path& csv, const std::vector<std::string>& target, const std::vector<std::uint64_t>& seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  data::RawSeries s = data::load_csv(csv.string());
  if (!target.empty()) s = data::select_channels(s, target);
  const auto ds = data::make_dataset(s, data::SplitSpec::ett_hourly(), 96, 96);
  LiNoConfig m;
  m.channels = s.channels();
  m.lookback = 96;
  m.horizon = 96;
  m.dim = 256;
  m.blocks = 2;
  training::TrainConfig tc;
  tc.lr = 1e-4;
  tc.batch_size = 32;
  EttRun r;
  for (auto seed : seeds) {
    tc.seed = seed;
    Rng rng(seed);
    const auto res = training::train(m, init_params(m, rng), ds, tc);
    const auto metrics = eval::evaluate(res.params, m, ds.test);
    r.mse += metrics.mse / static_cast<double>(seeds.size());
    r.mae += metrics.mae / static_cast<double>(seeds.size());
  }
  r.secs = seconds_since(t0);
  return r;
}

Outcome ett_multivariate(const fs::path& dir) {
  const fs::path csv = dir / "ETTh2.csv";
  if (dir.empty() || !fs::exists(csv)) return {false, "ETTh2.csv not found (set LINO_ETT_DIR)", true};
  const EttRun r = ett_run(csv, {}, {1, 2, 3});
  return {r.mse <= 0.33 && r.mae <= 0.37 && r.secs <= 45 * 60.0,
          "ETTh2 T=96 F=96 mean over seeds 1,2,3: MSE " + fmt(r.mse) + " <= 0.33, MAE " + fmt(r.mae) +
              " <= 0.37 (reference 0.292 / 0.340); " + fmt(r.secs) + " s <= 2700 s"};
}

Outcome ett_univariate(const fs::path& dir) {
  const fs::path csv = dir / "ETTh1.csv";
  if (dir.empty() || !fs::exists(csv)) return {false, "ETTh1.csv not found (set LINO_ETT_DIR)", true};
  const EttRun r = ett_run(csv, {"OT"}, {1});
  return {r.mse <= 0.075 && r.secs <= 15 * 60.0, "ETTh1 OT T=96 F=96 seed 1: MSE " + fmt(r.mse) +
                                                      " <= 0.075 (reference 0.056); " + fmt(r.secs) + " s <= 900 s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string scratch = (fs::temp_directory_path() / ("lino_acceptance_" + std::to_string(::getpid()))).string();
  app.add_option("--only", only, "criteria to run (default: every criterion except 7 and 8)")->delimiter(',');
  app.add_option("--scratch", scratch, "scratch directory for the determinism reruns");
  bool ett = false;
  app.add_flag("--ett", ett, "run the ETT criteria 7 and 8 (reads LINO_ETT_DIR)");
  CLI11_PARSE(app, argc, argv);

  const char* env = std::getenv("LINO_ETT_DIR");
  const fs::path ett_dir = env ? fs::path(env) : fs::path();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"decomposition completeness", decomposition_completeness},
      {"affine-probe oracle", affine_probe_oracle},
      {"spectral suite", spectral_suite},
      {"STD special case", std_special_case},
      {"overfit sanity", overfit_sanity},
      {"ETTh2 multivariate", [&] { return ett_multivariate(ett_dir); }},
      {"ETTh1 univariate", [&] { return ett_univariate(ett_dir); }},
      {"ablation ordering", ablation_ordering},
      {"noise robustness", noise_robustness},
      {"determinism", [&] { return determinism(scratch); }},
  };
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) {
    if (ett) selected = {7, 8};
    else
      for (int i = 1; i <= 11; ++i)
        if (i != 7 && i != 8) selected.insert(i);
  }

  bool all_pass = true, unavailable = false;
  for (int id : selected) {
    if (id < 1 || id > 11) {
      std::cerr << "no criterion " << id << '\n';
      return 2;
    }
    const auto& [title, run] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* verdict = o.unavailable ? "UNAVAILABLE" : o.pass ? "PASS" : "FAIL";
    std::cout << "criterion " << std::setw(2) << id << ' ' << std::left << std::setw(12) << verdict << std::right
              << title << ": " << o.detail << std::endl;
    if (o.unavailable) unavailable = true;
    else all_pass = all_pass && o.pass;
  }
  fs::remove_all(scratch);
  if (!all_pass) return 1;
  return unavailable ? 77 : 0;
}
