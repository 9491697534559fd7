#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lino/autograd.hpp"
#include "lino/ops.hpp"
#include "lino/rng.hpp"
#include "lino/tensor.hpp"

namespace lino {

using ops::Mode;

/// Network topology. `lino` is the recursive residual design; the others are
/// the comparison designs (N-BEATS style refinement, plain stacking, and
/// stacking with per-block heads).
enum class Variant { lino, mu, raw, ln };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

/// Components removed for ablation runs; only valid with Variant::lino.
struct Ablation {
  bool no_li = false;  ///< drop the Li block (zero pattern, zero prediction)
  bool no_no = false;  ///< drop the No block
  bool no_te = false;  ///< drop the temporal projection inside the No block
  bool no_fe = false;  ///< drop the frequency projection
  bool no_cd = false;  ///< drop channel mixing

  bool any() const { return no_li || no_no || no_te || no_fe || no_cd; }
  /// "full", or the flag names joined with '+'.
  std::string label() const;
  static Ablation parse(const std::string& label);
  bool operator==(const Ablation&) const = default;
};

struct LiNoConfig {
  std::size_t channels = 7;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t dim = 256;
  std::size_t blocks = 2;
  std::size_t mlp_hidden = 0;  ///< 0 means "same as dim"
  double dropout = 0.0;
  Variant variant = Variant::lino;
  Ablation ablation;
  double revin_eps = 1e-5;
  double ln_eps = 1e-5;
  /// Test hook: when false the Tanh fusing the temporal and frequency paths
  /// becomes the identity.
  bool fuse_tanh = true;

  std::size_t hidden() const { return mlp_hidden ? mlp_hidden : dim; }
  /// Throws ConfigError on non-positive extents, odd dim, bad dropout or
  /// ablation flags combined with a non-LiNo variant.
  void validate() const;

  /// Flat `key=value` lines; the inverse of from_text.
  std::string to_text() const;
  static LiNoConfig from_text(const std::string& text);
  bool operator==(const LiNoConfig&) const = default;
};

/// Ordered set of named learnable tensors.
class LiNoParams {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  bool operator==(const LiNoParams& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Expected tensor names and shapes for a config, in storage order.
/// Levels are numbered from 1: `level1.li.phi`, `level1.no_head.W`, ...
std::vector<std::pair<std::string, Shape>> param_layout(const LiNoConfig& cfg);

/// Glorot-uniform linear weights, zero biases, zero AR kernel, near-identity
/// complex frequency weights (sigma 0.01), unit layer-norm gains.
LiNoParams init_params(const LiNoConfig& cfg, Rng& rng);

/// Glorot-uniform half-width for a fan_in x fan_out weight.
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

/// Throws DimensionError naming the tensor and the config field when params
/// do not match the layout for cfg.
void check_params(const LiNoParams& params, const LiNoConfig& cfg);

/// Parameters registered as leaves on one tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const LiNoParams& params, bool requires_grad);
  Var operator[](const std::string& name) const;
  /// Gradient of every parameter after Tape::backward, same order as params.
  std::vector<Tensor> grads(const LiNoParams& params) const;

 private:
  std::unordered_map<std::string, Var> vars_;
};

/// Per-row statistics from RevIN, shaped like the input without its time axis.
struct RevinStats {
  Tensor mean;
  Tensor stdev;
};

struct RevinResult {
  Var normalized;
  RevinStats stats;
};

/// Per channel (x - mean) / sqrt(var + eps) over the trailing axis with
/// population variance. Statistics are treated as constants.
RevinResult revin_normalize(Var x, double eps);
Var revin_denormalize(Var yn, const RevinStats& stats);

/// Per-channel shared T -> D projection.
Var embed(Var x, const BoundParams& p);

struct BlockOutput {
  Var pattern;     ///< [..., C, D]
  Var prediction;  ///< [..., C, F]
};

/// Causal AR extraction followed by dropout and the level's linear head.
BlockOutput li_block(Var h, const BoundParams& p, std::size_t level, const LiNoConfig& cfg, Mode mode, Rng& rng);

/// Temporal and frequency paths summed and passed through Tanh (N^TF). This
/// is the only stage of the No block that the no_te / no_fe flags affect.
Var no_fusion(Var r, const BoundParams& p, std::size_t level, const LiNoConfig& cfg);

/// Temporal + frequency projection fused by Tanh, softmax-weighted channel
/// mixing, two layer norms around a feed-forward MLP, then the level's head.
BlockOutput no_block(Var r, const BoundParams& p, std::size_t level, const LiNoConfig& cfg);

/// Values recorded at one level. Fields a variant does not produce stay empty.
struct LevelTrace {
  Tensor input;            ///< H_i
  Tensor linear;           ///< L_i
  Tensor nonlinear;        ///< N_i
  Tensor resid_linear;     ///< H_i - L_i
  Tensor resid_nonlinear;  ///< (H_i - L_i) - N_i
  Tensor pred_linear;      ///< [..., C, F], normalised scale
  Tensor pred_nonlinear;
};

struct ForwardResult {
  Var yhat;             ///< de-normalised prediction
  Var yhat_normalized;  ///< sum of level predictions before RevIN inversion
  RevinStats stats;
  std::vector<LevelTrace> levels;
};

/// Full forward for any variant. x is [C, T] or [B, C, T]. With revin=false
/// the input is taken as already normalised and the output is left on that
/// scale (used for weight probing).
ForwardResult forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng, bool revin = true);

/// Recursive residual forward for Variant::lino (ablation switches honoured).
ForwardResult lino_forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng,
                           bool revin = true);

/// Mu / RAW / LN comparison designs.
ForwardResult variant_forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng,
                              bool revin = true);

/// Convenience: eval-mode prediction on a fresh tape.
Tensor predict(const Tensor& x, const LiNoParams& params, const LiNoConfig& cfg);

/// Names grouped per module ("embed", "level1.li", "level1.no_head", ...).
std::map<std::string, std::size_t> param_count(const LiNoParams& params);
std::size_t param_total(const LiNoParams& params);

}  // namespace lino
