#include "lino/model.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lino/errors.hpp"
#include "lino/spectral.hpp"

namespace lino {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::lino: return "lino";
    case Variant::mu: return "mu";
    case Variant::raw: return "raw";
    case Variant::ln: return "ln";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "lino") return Variant::lino;
  if (l == "mu") return Variant::mu;
  if (l == "raw") return Variant::raw;
  if (l == "ln") return Variant::ln;
  throw ConfigError("unknown variant '" + s + "' (expected lino, mu, raw or ln)");
}

std::string Ablation::label() const {
  std::string out;
  auto push = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  push(no_li, "no_li");
  push(no_no, "no_no");
  push(no_te, "no_te");
  push(no_fe, "no_fe");
  push(no_cd, "no_cd");
  return out.empty() ? "full" : out;
}

Ablation Ablation::parse(const std::string& label) {
  Ablation a;
  if (label.empty() || label == "full" || label == "none") return a;
  std::stringstream ss(label);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    if (tok == "no_li") a.no_li = true;
    else if (tok == "no_no") a.no_no = true;
    else if (tok == "no_te") a.no_te = true;
    else if (tok == "no_fe") a.no_fe = true;
    else if (tok == "no_cd") a.no_cd = true;
    else throw ConfigError("unknown ablation '" + tok + "'");
  }
  return a;
}

void LiNoConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(channels, "channels");
  positive(lookback, "lookback");
  positive(horizon, "horizon");
  positive(dim, "dim");
  positive(blocks, "blocks");
  if (dim % 2 != 0) throw ConfigError("dim must be even for the frequency projection, got " + std::to_string(dim));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(revin_eps > 0.0) || !(ln_eps > 0.0)) throw ConfigError("eps values must be positive");
  if (ablation.any() && variant != Variant::lino) {
    throw ConfigError(std::string("ablation flags are only valid with variant lino, got ") + variant_name(variant));
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string LiNoConfig::to_text() const {
  std::ostringstream os;
  os << "channels=" << channels << '\n'
     << "lookback=" << lookback << '\n'
     << "horizon=" << horizon << '\n'
     << "dim=" << dim << '\n'
     << "blocks=" << blocks << '\n'
     << "mlp_hidden=" << mlp_hidden << '\n'
     << "dropout=" << fmt_double(dropout) << '\n'
     << "variant=" << variant_name(variant) << '\n'
     << "ablation=" << ablation.label() << '\n'
     << "revin_eps=" << fmt_double(revin_eps) << '\n'
     << "ln_eps=" << fmt_double(ln_eps) << '\n'
     << "fuse_tanh=" << (fuse_tanh ? 1 : 0) << '\n';
  return os.str();
}

LiNoConfig LiNoConfig::from_text(const std::string& text) {
  LiNoConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config line without '=': " + line);
    const std::string k = line.substr(0, eq);
    const std::string v = line.substr(eq + 1);
    try {
      if (k == "channels") c.channels = std::stoul(v);
      else if (k == "lookback") c.lookback = std::stoul(v);
      else if (k == "horizon") c.horizon = std::stoul(v);
      else if (k == "dim") c.dim = std::stoul(v);
      else if (k == "blocks") c.blocks = std::stoul(v);
      else if (k == "mlp_hidden") c.mlp_hidden = std::stoul(v);
      else if (k == "dropout") c.dropout = std::stod(v);
      else if (k == "variant") c.variant = parse_variant(v);
      else if (k == "ablation") c.ablation = Ablation::parse(v);
      else if (k == "revin_eps") c.revin_eps = std::stod(v);
      else if (k == "ln_eps") c.ln_eps = std::stod(v);
      else if (k == "fuse_tanh") c.fuse_tanh = v != "0";
      else throw ConfigError("unknown model config key '" + k + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for model config key '" + k + "': " + v);
    }
  }
  return c;
}

void LiNoParams::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& LiNoParams::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DimensionError("missing parameter '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& LiNoParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DimensionError("missing parameter '" + name + "'");
  return entries_[it->second].second;
}

namespace {

std::string lvl(std::size_t level, const char* rest) { return "level" + std::to_string(level) + "." + rest; }

}  // namespace

std::vector<std::pair<std::string, Shape>> param_layout(const LiNoConfig& cfg) {
  const std::size_t C = cfg.channels, T = cfg.lookback, F = cfg.horizon, D = cfg.dim, H = cfg.hidden();
  const std::size_t B = spectral::bin_count(D);
  std::vector<std::pair<std::string, Shape>> out{{"embed.W", {T, D}}, {"embed.b", {D}}};
  for (std::size_t i = 1; i <= cfg.blocks; ++i) {
    out.push_back({lvl(i, "li.phi"), {C, D}});
    out.push_back({lvl(i, "li.beta"), {C}});
    out.push_back({lvl(i, "li_head.W"), {D, F}});
    out.push_back({lvl(i, "li_head.b"), {F}});
    out.push_back({lvl(i, "no.temporal.W"), {D, D}});
    out.push_back({lvl(i, "no.temporal.b"), {D}});
    out.push_back({lvl(i, "no.freq.re"), {B, B}});
    out.push_back({lvl(i, "no.freq.im"), {B, B}});
    out.push_back({lvl(i, "no.mix.W1"), {2 * D, H}});
    out.push_back({lvl(i, "no.mix.b1"), {H}});
    out.push_back({lvl(i, "no.mix.W2"), {H, D}});
    out.push_back({lvl(i, "no.mix.b2"), {D}});
    out.push_back({lvl(i, "no.ln1.gamma"), {D}});
    out.push_back({lvl(i, "no.ln1.beta"), {D}});
    out.push_back({lvl(i, "no.ff.W1"), {D, H}});
    out.push_back({lvl(i, "no.ff.b1"), {H}});
    out.push_back({lvl(i, "no.ff.W2"), {H, D}});
    out.push_back({lvl(i, "no.ff.b2"), {D}});
    out.push_back({lvl(i, "no.ln2.gamma"), {D}});
    out.push_back({lvl(i, "no.ln2.beta"), {D}});
    out.push_back({lvl(i, "no_head.W"), {D, F}});
    out.push_back({lvl(i, "no_head.b"), {F}});
  }
  return out;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

LiNoParams init_params(const LiNoConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng init = rng.split("init");
  LiNoParams p;
  for (auto& [name, shape] : param_layout(cfg)) {
    Tensor t(shape);
    const bool is_weight = shape.size() == 2 && name.find("li.phi") == std::string::npos &&
                           name.find("no.freq") == std::string::npos;
    if (is_weight) {
      const double b = glorot_bound(shape[0], shape[1]);
      for (auto& v : t.data()) v = init.uniform(-b, b);
    } else if (name.ends_with(".gamma")) {
      t = Tensor::full(shape, 1.0);
    } else if (name.ends_with("no.freq.re")) {
      t = spectral::ComplexLinearLayer::identity(shape[0]).re;
      for (auto& v : t.data()) v += init.normal(0.0, 0.01);
    } else if (name.ends_with("no.freq.im")) {
      for (auto& v : t.data()) v = init.normal(0.0, 0.01);
    }
    p.add(name, std::move(t));
  }
  return p;
}

void check_params(const LiNoParams& params, const LiNoConfig& cfg) {
  const auto layout = param_layout(cfg);
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw DimensionError("missing tensor '" + name + "'");
    const Shape& got = params.get(name).shape();
    if (got.size() != shape.size()) {
      throw DimensionError("tensor '" + name + "' has rank " + std::to_string(got.size()) + ", config expects " +
                           shape_str(shape));
    }
    for (std::size_t a = 0; a < shape.size(); ++a) {
      if (got[a] == shape[a]) continue;
      // Name the config field the mismatching extent comes from.
      std::string field = "dim";
      if (got.size() == 2 && name.find("li.phi") != std::string::npos && a == 0) field = "channels (C)";
      else if (name.ends_with("li.beta")) field = "channels (C)";
      else if (name == "embed.W" && a == 0) field = "lookback (T)";
      else if (name.find("_head.") != std::string::npos && (name.ends_with(".b") || a == 1)) field = "horizon (F)";
      else if (name.find(".W1") != std::string::npos || name.find(".W2") != std::string::npos ||
               name.find(".b1") != std::string::npos) field = "dim/mlp_hidden";
      throw DimensionError("tensor '" + name + "' dimension " + std::to_string(a) + " is " + std::to_string(got[a]) +
                           " but config " + field + " expects " + std::to_string(shape[a]));
    }
  }
  if (params.size() != layout.size()) {
    throw DimensionError("parameter set has " + std::to_string(params.size()) + " tensors, config expects " +
                         std::to_string(layout.size()));
  }
}

BoundParams::BoundParams(Tape& tape, const LiNoParams& params, bool requires_grad) {
  for (const auto& [name, t] : params.entries()) vars_.emplace(name, tape.leaf(t, requires_grad));
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw DimensionError("parameter '" + name + "' not bound");
  return it->second;
}

std::vector<Tensor> BoundParams::grads(const LiNoParams& params) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params.entries()) out.push_back((*this)[name].grad());
  return out;
}

RevinResult revin_normalize(Var x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("revin eps must be positive");
  const Tensor& xv = x.value();
  const std::size_t T = xv.shape().back();
  const std::size_t rows = xv.numel() / T;
  Shape rs = xv.shape();
  rs.pop_back();
  if (rs.empty()) rs = {1};
  Tensor mean(rs), stdev(rs), inv(rs), neg_mean(rs);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (std::size_t t = 0; t < T; ++t) m += xv[r * T + t];
    m /= static_cast<double>(T);
    double v = 0.0;
    for (std::size_t t = 0; t < T; ++t) v += (xv[r * T + t] - m) * (xv[r * T + t] - m);
    v /= static_cast<double>(T);
    const double s = std::sqrt(v + eps);
    mean[r] = m;
    stdev[r] = s;
    inv[r] = 1.0 / s;
    neg_mean[r] = -m;
  }
  // Centre first so a constant row maps to exact zeros.
  Var centred = ops::row_affine(x, Tensor::full(rs, 1.0), neg_mean);
  return {ops::row_affine(centred, inv, Tensor::zeros(rs)), {std::move(mean), std::move(stdev)}};
}

Var revin_denormalize(Var yn, const RevinStats& stats) { return ops::row_affine(yn, stats.stdev, stats.mean); }

Var embed(Var x, const BoundParams& p) { return ops::linear(x, p["embed.W"], p["embed.b"]); }

namespace {

Var mlp(Var x, const BoundParams& p, const std::string& prefix) {
  Var h = ops::gelu(ops::linear(x, p[prefix + "W1"], p[prefix + "b1"]));
  return ops::linear(h, p[prefix + "W2"], p[prefix + "b2"]);
}

Var zeros_like(Var v) { return v.tape->constant(Tensor::zeros(v.shape())); }

void check_input(Var x, const LiNoConfig& cfg) {
  const Shape& s = x.shape();
  if (s.size() < 2 || s.back() != cfg.lookback || s[s.size() - 2] != cfg.channels) {
    throw DimensionError("input " + shape_str(s) + " does not match config (channels " + std::to_string(cfg.channels) +
                         ", lookback " + std::to_string(cfg.lookback) + ")");
  }
}

// RevIN on the way in, or identity statistics when the caller already
// supplies normalised values.
Var normalize_input(Var x, const LiNoConfig& cfg, bool revin, RevinStats& stats) {
  check_input(x, cfg);
  if (revin) {
    RevinResult rv = revin_normalize(x, cfg.revin_eps);
    stats = std::move(rv.stats);
    return rv.normalized;
  }
  Shape rs = x.shape();
  rs.pop_back();
  stats = {Tensor::zeros(rs), Tensor::full(rs, 1.0)};
  return x;
}

Shape with_last(Shape s, std::size_t last) {
  s.back() = last;
  return s;
}

}  // namespace

BlockOutput li_block(Var h, const BoundParams& p, std::size_t level, const LiNoConfig& cfg, Mode mode, Rng& rng) {
  Var l = ops::causal_depthwise_conv(h, p[lvl(level, "li.phi")], p[lvl(level, "li.beta")]);
  l = ops::dropout(l, cfg.dropout, mode, rng);
  Var pred = ops::linear(l, p[lvl(level, "li_head.W")], p[lvl(level, "li_head.b")]);
  return {l, pred};
}

Var no_fusion(Var r, const BoundParams& p, std::size_t level, const LiNoConfig& cfg) {
  const Ablation& ab = cfg.ablation;
  std::vector<Var> paths;
  if (!ab.no_te) paths.push_back(ops::linear(r, p[lvl(level, "no.temporal.W")], p[lvl(level, "no.temporal.b")]));
  if (!ab.no_fe) {
    paths.push_back(spectral::freq_projection(r, p[lvl(level, "no.freq.re")], p[lvl(level, "no.freq.im")]));
  }
  Var fused = paths.empty() ? zeros_like(r) : (paths.size() == 1 ? paths[0] : ops::add(paths[0], paths[1]));
  return cfg.fuse_tanh ? ops::tanh(fused) : fused;
}

BlockOutput no_block(Var r, const BoundParams& p, std::size_t level, const LiNoConfig& cfg) {
  const Ablation& ab = cfg.ablation;
  Var ntf = no_fusion(r, p, level, cfg);
  Var mixed_in = ntf;
  if (!ab.no_cd) {
    // Softmax over channels at each feature position, then a weighted mean.
    const std::size_t C = r.shape()[r.shape().size() - 2];
    Var w = ops::softmax(ntf, -2);
    Var m = ops::sum_axis(ops::mul(w, ntf), -2, /*keepdim=*/true);
    const Var parts[] = {ntf, ops::repeat_axis(m, -2, C)};
    Var nc = mlp(ops::concat(parts, -1), p, lvl(level, "no.mix."));
    mixed_in = ops::add(ntf, nc);
  }
  Var ntfc = ops::layer_norm(mixed_in, p[lvl(level, "no.ln1.gamma")], p[lvl(level, "no.ln1.beta")], cfg.ln_eps);
  Var ff = mlp(ntfc, p, lvl(level, "no.ff."));
  Var n = ops::layer_norm(ops::add(ntfc, ff), p[lvl(level, "no.ln2.gamma")], p[lvl(level, "no.ln2.beta")], cfg.ln_eps);
  Var pred = ops::linear(n, p[lvl(level, "no_head.W")], p[lvl(level, "no_head.b")]);
  return {n, pred};
}

ForwardResult lino_forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng, bool revin) {
  if (cfg.variant != Variant::lino) throw ConfigError("lino_forward called with a non-LiNo variant");
  ForwardResult res;
  Var h = embed(normalize_input(x, cfg, revin, res.stats), p);
  std::vector<Var> preds;
  for (std::size_t i = 1; i <= cfg.blocks; ++i) {
    LevelTrace tr;
    tr.input = h.value();
    Var l, rl, n, rn;
    if (cfg.ablation.no_li) {
      l = zeros_like(h);
      rl = h;
    } else {
      BlockOutput li = li_block(h, p, i, cfg, mode, rng);
      l = li.pattern;
      rl = ops::sub(h, l);
      preds.push_back(li.prediction);
      tr.pred_linear = li.prediction.value();
    }
    if (cfg.ablation.no_no) {
      n = zeros_like(rl);
      rn = rl;
    } else {
      BlockOutput no = no_block(rl, p, i, cfg);
      n = no.pattern;
      rn = ops::sub(rl, n);
      preds.push_back(no.prediction);
      tr.pred_nonlinear = no.prediction.value();
    }
    tr.linear = l.value();
    tr.nonlinear = n.value();
    tr.resid_linear = rl.value();
    tr.resid_nonlinear = rn.value();
    res.levels.push_back(std::move(tr));
    h = rn;
  }
  if (preds.empty()) {
    Shape ys = with_last(x.shape(), cfg.horizon);
    preds.push_back(x.tape->constant(Tensor::zeros(ys)));
  }
  Var total = preds[0];
  for (std::size_t k = 1; k < preds.size(); ++k) total = ops::add(total, preds[k]);
  res.yhat_normalized = total;
  res.yhat = revin ? revin_denormalize(total, res.stats) : total;
  return res;
}

ForwardResult variant_forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng, bool revin) {
  if (cfg.variant == Variant::lino) throw ConfigError("variant_forward expects mu, raw or ln");
  ForwardResult res;
  Var h = embed(normalize_input(x, cfg, revin, res.stats), p);
  std::vector<Var> preds;
  for (std::size_t i = 1; i <= cfg.blocks; ++i) {
    LevelTrace tr;
    tr.input = h.value();
    BlockOutput li = li_block(h, p, i, cfg, mode, rng);
    BlockOutput no = no_block(li.pattern, p, i, cfg);
    tr.linear = li.pattern.value();
    tr.nonlinear = no.pattern.value();
    switch (cfg.variant) {
      case Variant::mu:
        // Only the nonlinear output is predicted from and refined away.
        preds.push_back(no.prediction);
        tr.pred_nonlinear = no.prediction.value();
        h = ops::sub(h, no.pattern);
        tr.resid_nonlinear = h.value();
        break;
      case Variant::ln:
        preds.push_back(li.prediction);
        preds.push_back(no.prediction);
        tr.pred_linear = li.prediction.value();
        tr.pred_nonlinear = no.prediction.value();
        h = no.pattern;
        break;
      case Variant::raw:
        h = no.pattern;
        if (i == cfg.blocks) {
          preds.push_back(no.prediction);
          tr.pred_nonlinear = no.prediction.value();
        }
        break;
      case Variant::lino: break;
    }
    res.levels.push_back(std::move(tr));
  }
  Var total = preds[0];
  for (std::size_t k = 1; k < preds.size(); ++k) total = ops::add(total, preds[k]);
  res.yhat_normalized = total;
  res.yhat = revin ? revin_denormalize(total, res.stats) : total;
  return res;
}

ForwardResult forward(Var x, const BoundParams& p, const LiNoConfig& cfg, Mode mode, Rng& rng, bool revin) {
  return cfg.variant == Variant::lino ? lino_forward(x, p, cfg, mode, rng, revin)
                                      : variant_forward(x, p, cfg, mode, rng, revin);
}

Tensor predict(const Tensor& x, const LiNoParams& params, const LiNoConfig& cfg) {
  Tape tape;
  BoundParams bound(tape, params, false);
  Rng unused(0);
  return forward(tape.constant(x), bound, cfg, Mode::eval, unused).yhat.value();
}

std::map<std::string, std::size_t> param_count(const LiNoParams& params) {
  std::map<std::string, std::size_t> out;
  for (const auto& [name, t] : params.entries()) {
    std::string group;
    const auto first = name.find('.');
    if (name.starts_with("level")) {
      const auto second = name.find('.', first + 1);
      group = name.substr(0, second);
    } else {
      group = name.substr(0, first);
    }
    out[group] += t.numel();
  }
  return out;
}

std::size_t param_total(const LiNoParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params.entries()) n += t.numel();
  return n;
}

}  // namespace lino
