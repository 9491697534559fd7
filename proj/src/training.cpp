#include "lino/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "lino/errors.hpp"
#include "lino/eval.hpp"
#include "lino/ops.hpp"

namespace lino::training {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(noise_alpha >= 0.0 && noise_alpha <= 1.0)) throw ConfigError("noise alpha must lie in [0, 1]");
}

Var mse_loss(Var yhat, Var y) {
  if (yhat.shape() != y.shape()) {
    throw DimensionError("mse_loss: " + shape_str(yhat.shape()) + " vs " + shape_str(y.shape()));
  }
  return ops::mean(ops::square(ops::sub(yhat, y)));
}

AdamState AdamState::like(const LiNoParams& params) {
  AdamState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.push_back(Tensor::zeros(t.shape()));
    s.v.push_back(Tensor::zeros(t.shape()));
  }
  return s;
}

void adam_step(LiNoParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || state.m.size() != entries.size()) {
    throw DimensionError("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (grads[k].shape() != entries[k].second.shape()) {
      throw DimensionError("adam_step: gradient shape mismatch for '" + entries[k].first + "'");
    }
    if (!grads[k].all_finite()) throw NumericalError("non-finite gradient for parameter '" + entries[k].first + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& p = entries[k].second;
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  improved_last_ = val_loss < best_ - min_delta_;
  if (improved_last_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  return bad_epochs_ >= patience_;
}

LossAndGrads loss_and_grads(const LiNoParams& params, const LiNoConfig& cfg, const Tensor& x, const Tensor& y,
                            Mode mode, Rng& rng) {
  Tape tape;
  BoundParams bound(tape, params, true);
  ForwardResult res = forward(tape.constant(x), bound, cfg, mode, rng);
  Var loss = mse_loss(res.yhat, tape.constant(y));
  tape.backward(loss);
  return {loss.value()[0], bound.grads(params)};
}

TrainResult train(const LiNoConfig& cfg, LiNoParams init, const data::WindowedDataset& ds, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  tc.validate();
  check_params(init, cfg);
  if (ds.train.empty() || ds.val.empty()) throw DataError("train: train and validation splits must be non-empty");

  Rng root(tc.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");
  Rng noise_rng = root.split("noise");

  std::vector<std::size_t> pool(ds.train.size());
  std::iota(pool.begin(), pool.end(), 0);
  if (tc.max_train_windows && tc.max_train_windows < pool.size()) {
    std::vector<std::size_t> sub;
    const double stride = static_cast<double>(pool.size()) / static_cast<double>(tc.max_train_windows);
    for (std::size_t k = 0; k < tc.max_train_windows; ++k) sub.push_back(static_cast<std::size_t>(k * stride));
    pool = std::move(sub);
  }
  const std::size_t batch = tc.full_batch ? pool.size() : tc.batch_size;

  TrainResult result;
  LiNoParams params = std::move(init);
  result.params = params;
  AdamState adam = AdamState::like(params);
  EarlyStopping stopper(tc.patience, tc.min_delta);

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::vector<std::size_t> order = pool;
    if (!tc.full_batch) std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double loss_sum = 0.0;
    std::size_t seen = 0;
    // The trailing partial batch is kept.
    for (std::size_t first = 0; first < order.size(); first += batch) {
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(first),
                                   order.begin() + static_cast<long>(std::min(order.size(), first + batch)));
      Tensor x = ds.train.inputs(idx);
      if (tc.noise_alpha > 0.0) x = data::add_noise(x, tc.noise_alpha, noise_rng);
      const Tensor y = ds.train.targets(idx);
      LossAndGrads lg = loss_and_grads(params, cfg, x, y, Mode::train, dropout_rng);
      if (!std::isfinite(lg.loss)) throw NumericalError("training loss diverged at epoch " + std::to_string(epoch));
      adam_step(params, lg.grads, adam, tc.lr);
      loss_sum += lg.loss * static_cast<double>(idx.size());
      seen += idx.size();
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), eval::evaluate(params, cfg, ds.val).mse};
    if (!std::isfinite(rec.val_mse)) throw NumericalError("validation loss is not finite at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    const bool stop = stopper.update(rec.val_mse);
    if (stopper.improved_last()) result.params = params;
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_mse = stopper.best();
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "epoch,train_mse,val_mse\n" << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_mse << ',' << r.val_mse << '\n';
}

}  // namespace lino::training
