#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lino/autograd.hpp"
#include "lino/data.hpp"
#include "lino/model.hpp"

namespace lino::training {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 6;
  std::uint64_t seed = 1;
  /// An epoch improves only if val < best - min_delta.
  double min_delta = 1e-7;
  /// One step per epoch over every train window, no shuffling.
  bool full_batch = false;
  /// Gaussian noise coefficient added to training inputs.
  double noise_alpha = 0.0;
  /// Caps train windows per epoch (evenly strided subset); 0 keeps all.
  std::size_t max_train_windows = 0;

  void validate() const;
};

/// Mean of squared residuals over every element.
Var mse_loss(Var yhat, Var y);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const LiNoParams& params);
};

/// Bias-corrected Adam update of every parameter. A non-finite gradient
/// raises NumericalError naming the tensor; nothing is modified in that case.
void adam_step(LiNoParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

/// Patience counter over a stream of validation losses.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);

  /// Records the loss of the next epoch (numbered from 1). Returns true when
  /// training should stop.
  bool update(double val_loss);
  bool improved_last() const { return improved_last_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epochs_seen() const { return epoch_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double best_;
  bool improved_last_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  LiNoParams params;  ///< parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Called after each epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam on MSE with early stopping on validation MSE; restores the
/// best parameters.
TrainResult train(const LiNoConfig& cfg, LiNoParams init, const data::WindowedDataset& ds, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

/// One forward/backward on a fixed batch; returns loss and gradients.
struct LossAndGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
LossAndGrads loss_and_grads(const LiNoParams& params, const LiNoConfig& cfg, const Tensor& x, const Tensor& y,
                            Mode mode, Rng& rng);

/// `epoch,train_mse,val_mse` lines.
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace lino::training
