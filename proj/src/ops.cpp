#include "lino/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "lino/errors.hpp"

namespace lino::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Tape& tape_of(Var v) {
  if (!v.tape) throw Error("op applied to an unbound Var");
  return *v.tape;
}

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error("op inputs live on different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  long a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void accumulate(Tape& t, std::size_t id, const Tensor& g, double factor = 1.0) {
  if (Tensor* buf = t.grad_buffer(id)) {
    auto dst = buf->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
  }
}

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record("add", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor g = *t.grad_buffer(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record("sub", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor g = *t.grad_buffer(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return tape_of(a).record("mul", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (Tensor* ga = t.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var add(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += s;
  const std::size_t ia = a.id;
  return tape_of(a).record("add_scalar", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor g = *t.grad_buffer(self);
    accumulate(t, ia, g);
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  const std::size_t ia = a.id;
  return tape_of(a).record("scale", std::move(y), {ia}, [ia, s](Tape& t, std::size_t self) {
    const Tensor g = *t.grad_buffer(self);
    accumulate(t, ia, g, s);
  });
}

Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  const std::size_t ia = a.id;
  return tape_of(a).record("tanh", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor* ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  const std::size_t ia = a.id;
  return tape_of(a).record("gelu", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& x = t.value(ia);
    Tensor* ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = x[i];
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      (*ga)[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

Var square(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * x[i];
  const std::size_t ia = a.id;
  return tape_of(a).record("square", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& x = t.value(ia);
    Tensor* ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += 2.0 * x[i] * g[i];
  });
}

Var abs(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::abs(x[i]);
  const std::size_t ia = a.id;
  return tape_of(a).record("abs", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& x = t.value(ia);
    Tensor* ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0)) * g[i];
  });
}

Var matmul(Var x, Var W) {
  same_tape(x, W);
  const Tensor& xv = x.value();
  const Tensor& wv = W.value();
  if (wv.rank() != 2) throw DimensionError("matmul: weight must be rank 2, got " + shape_str(wv.shape()));
  const std::size_t in = wv.dim(0), out = wv.dim(1);
  if (xv.shape().back() != in) {
    throw DimensionError("matmul: inner extent " + std::to_string(xv.shape().back()) + " vs weight " +
                         shape_str(wv.shape()));
  }
  const std::size_t rows = xv.numel() / in;
  Shape ys = xv.shape();
  ys.back() = out;
  Tensor y(ys);
  MatMap(y.data().data(), rows, out).noalias() =
      ConstMatMap(xv.data().data(), rows, in) * ConstMatMap(wv.data().data(), in, out);
  const std::size_t ix = x.id, iw = W.id;
  return tape_of(x).record("matmul", std::move(y), {ix, iw}, [ix, iw, rows, in, out](Tape& t, std::size_t self) {
    ConstMatMap G(t.grad_buffer(self)->data().data(), rows, out);
    if (Tensor* gx = t.grad_buffer(ix)) {
      MatMap(gx->data().data(), rows, in).noalias() += G * ConstMatMap(t.value(iw).data().data(), in, out).transpose();
    }
    if (Tensor* gw = t.grad_buffer(iw)) {
      MatMap(gw->data().data(), in, out).noalias() += ConstMatMap(t.value(ix).data().data(), rows, in).transpose() * G;
    }
  });
}

Var add_bias(Var x, Var b) {
  same_tape(x, b);
  const Tensor& bv = b.value();
  Tensor y = x.value();
  const std::size_t width = y.shape().back();
  if (bv.rank() != 1 || bv.numel() != width) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " vs trailing extent " + std::to_string(width));
  }
  const std::size_t rows = y.numel() / width;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) y[r * width + j] += bv[j];
  const std::size_t ix = x.id, ib = b.id;
  return tape_of(x).record("add_bias", std::move(y), {ix, ib}, [ix, ib, rows, width](Tape& t, std::size_t self) {
    const Tensor g = *t.grad_buffer(self);
    accumulate(t, ix, g);
    if (Tensor* gb = t.grad_buffer(ib)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) (*gb)[j] += g[r * width + j];
    }
  });
}

Var linear(Var x, Var W, Var b) { return add_bias(matmul(x, W), b); }

Var causal_depthwise_conv(Var H, Var phi, Var beta) {
  same_tape(H, phi);
  same_tape(H, beta);
  const Tensor& hv = H.value();
  const Tensor& pv = phi.value();
  const Tensor& bv = beta.value();
  if (hv.rank() < 2 || pv.rank() != 2 || bv.rank() != 1) {
    throw DimensionError("causal_depthwise_conv: expected H[...,C,D], phi[C,D], beta[C]");
  }
  const std::size_t C = hv.shape()[hv.rank() - 2];
  const std::size_t D = hv.shape().back();
  if (pv.dim(0) != C || pv.dim(1) != D || bv.dim(0) != C) {
    throw DimensionError("causal_depthwise_conv: H " + shape_str(hv.shape()) + ", phi " + shape_str(pv.shape()) +
                         ", beta " + shape_str(bv.shape()));
  }
  const std::size_t batch = hv.numel() / (C * D);
  Tensor y(hv.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* h = &hv[(n * C + c) * D];
      const double* k = &pv[c * D];
      double* o = &y[(n * C + c) * D];
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= d; ++j) acc += k[j] * h[d - j];
        o[d] = acc + bv[c];
      }
    }
  }
  const std::size_t ih = H.id, ip = phi.id, ib = beta.id;
  return tape_of(H).record("causal_depthwise_conv", std::move(y), {ih, ip, ib},
                           [ih, ip, ib, batch, C, D](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& hv = t.value(ih);
    const Tensor& pv = t.value(ip);
    Tensor* gh = t.grad_buffer(ih);
    Tensor* gp = t.grad_buffer(ip);
    Tensor* gb = t.grad_buffer(ib);
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t row = (n * C + c) * D;
        const double* gr = &g[row];
        if (gb) {
          double s = 0.0;
          for (std::size_t d = 0; d < D; ++d) s += gr[d];
          (*gb)[c] += s;
        }
        for (std::size_t d = 0; d < D; ++d) {
          const double gd = gr[d];
          if (gd == 0.0) continue;
          for (std::size_t j = 0; j <= d; ++j) {
            if (gp) (*gp)[c * D + j] += gd * hv[row + d - j];
            if (gh) (*gh)[row + d - j] += gd * pv[c * D + j];
          }
        }
      }
    }
  });
}

Var softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  const std::size_t ax = norm_axis(axis, xv.rank(), "softmax");
  const AxisSplit s = split_at(xv.shape(), ax);
  Tensor y(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        y[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) y[base + k * s.inner] /= z;
    }
  }
  const std::size_t ix = x.id;
  return tape_of(x).record("softmax", std::move(y), {ix}, [ix, s](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.n; ++k) {
          const std::size_t i = base + k * s.inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  const std::size_t D = xv.shape().back();
  if (gamma.value().rank() != 1 || gamma.value().numel() != D || beta.value().rank() != 1 ||
      beta.value().numel() != D) {
    throw DimensionError("layer_norm: affine extents must equal trailing extent " + std::to_string(D));
  }
  const std::size_t rows = xv.numel() / D;
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * D];
    double mean = 0.0;
    for (std::size_t d = 0; d < D; ++d) mean += xr[d];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (xr[d] - mean) * (xr[d] - mean);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t d = 0; d < D; ++d) {
      const double h = (xr[d] - mean) * is;
      xhat[r * D + d] = h;
      y[r * D + d] = h * gv[d] + bv[d];
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return tape_of(x).record(
      "layer_norm", std::move(y), {ix, ig, ib},
      [ix, ig, ib, rows, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_buffer(self);
        const Tensor& gv = t.value(ig);
        Tensor* gx = t.grad_buffer(ix);
        Tensor* gg = t.grad_buffer(ig);
        Tensor* gb = t.grad_buffer(ib);
        std::vector<double> gh(D);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * D;
          double mean_gh = 0.0, mean_ghx = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            if (gg) (*gg)[d] += g[off + d] * xhat[off + d];
            if (gb) (*gb)[d] += g[off + d];
            gh[d] = g[off + d] * gv[d];
            mean_gh += gh[d];
            mean_ghx += gh[d] * xhat[off + d];
          }
          if (!gx) continue;
          mean_gh /= static_cast<double>(D);
          mean_ghx /= static_cast<double>(D);
          for (std::size_t d = 0; d < D; ++d) {
            (*gx)[off + d] += inv_std[r] * (gh[d] - mean_gh - xhat[off + d] * mean_ghx);
          }
        }
      });
}

Var dropout(Var x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = xv[i] * mask[i];
  const std::size_t ix = x.id;
  return tape_of(x).record("dropout", std::move(y), {ix}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * mask[i];
  });
}

Var sum_axis(Var x, int axis, bool keepdim) {
  const Tensor& xv = x.value();
  const std::size_t ax = norm_axis(axis, xv.rank(), "sum_axis");
  const AxisSplit s = split_at(xv.shape(), ax);
  Shape ys = xv.shape();
  if (keepdim || ys.size() == 1) {
    ys[ax] = 1;
  } else {
    ys.erase(ys.begin() + static_cast<long>(ax));
  }
  Tensor y(ys);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t in = 0; in < s.inner; ++in) y[o * s.inner + in] += xv[(o * s.n + k) * s.inner + in];
  const std::size_t ix = x.id;
  return tape_of(x).record("sum_axis", std::move(y), {ix}, [ix, s](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t in = 0; in < s.inner; ++in) (*gx)[(o * s.n + k) * s.inner + in] += g[o * s.inner + in];
  });
}

Var mean_axis(Var x, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, x.value().rank(), "mean_axis");
  const double n = static_cast<double>(x.value().shape()[ax]);
  return scale(sum_axis(x, axis, keepdim), 1.0 / n);
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t ix = x.id;
  return tape_of(x).record("sum", Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = (*t.grad_buffer(self))[0];
    Tensor* gx = t.grad_buffer(ix);
    for (auto& v : gx->data()) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var concat(std::span<const Var> xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = xs[0].value();
  const std::size_t ax = norm_axis(axis, first.rank(), "concat");
  Shape ys = first.shape();
  ys[ax] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& v : xs) {
    same_tape(xs[0], v);
    const Shape& s = v.shape();
    if (s.size() != first.rank()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first.shape()[i]) {
        throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(first.shape()));
      }
    }
    ys[ax] += s[ax];
    ids.push_back(v.id);
    widths.push_back(s[ax]);
  }
  const AxisSplit out = split_at(ys, ax);
  Tensor y(ys);
  std::size_t start = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = xs[k].value();
    const std::size_t w = widths[k];
    for (std::size_t o = 0; o < out.outer; ++o) {
      std::copy_n(&v[o * w * out.inner], w * out.inner, &y[(o * out.n + start) * out.inner]);
    }
    start += w;
  }
  return tape_of(xs[0]).record("concat", std::move(y), ids, [ids, widths, out](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    std::size_t start = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (Tensor* gk = t.grad_buffer(ids[k])) {
        for (std::size_t o = 0; o < out.outer; ++o) {
          const double* src = &g[(o * out.n + start) * out.inner];
          double* dst = &(*gk)[o * w * out.inner];
          for (std::size_t i = 0; i < w * out.inner; ++i) dst[i] += src[i];
        }
      }
      start += w;
    }
  });
}

Var slice(Var x, int axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t ax = norm_axis(axis, xv.rank(), "slice");
  if (begin >= end || end > xv.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for extent " +
                         std::to_string(xv.shape()[ax]));
  }
  const AxisSplit s = split_at(xv.shape(), ax);
  Shape ys = xv.shape();
  ys[ax] = end - begin;
  const std::size_t w = end - begin;
  Tensor y(ys);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(&xv[(o * s.n + begin) * s.inner], w * s.inner, &y[o * w * s.inner]);
  }
  const std::size_t ix = x.id;
  return tape_of(x).record("slice", std::move(y), {ix}, [ix, s, begin, w](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = &g[o * w * s.inner];
      double* dst = &(*gx)[(o * s.n + begin) * s.inner];
      for (std::size_t i = 0; i < w * s.inner; ++i) dst[i] += src[i];
    }
  });
}

namespace {

// Maps each flat output index of a transposed tensor to its source index.
std::vector<std::size_t> transpose_index(const Shape& in, std::size_t a, std::size_t b) {
  Shape out = in;
  std::swap(out[a], out[b]);
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  std::vector<std::size_t> perm_stride = in_stride;
  std::swap(perm_stride[a], perm_stride[b]);
  std::vector<std::size_t> map(shape_numel(in));
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * perm_stride[i];
    map[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

Var transpose(Var x, int axis_a, int axis_b) {
  const Tensor& xv = x.value();
  const std::size_t a = norm_axis(axis_a, xv.rank(), "transpose");
  const std::size_t b = norm_axis(axis_b, xv.rank(), "transpose");
  Shape ys = xv.shape();
  std::swap(ys[a], ys[b]);
  auto map = transpose_index(xv.shape(), a, b);
  Tensor y(ys);
  for (std::size_t i = 0; i < map.size(); ++i) y[i] = xv[map[i]];
  const std::size_t ix = x.id;
  return tape_of(x).record("transpose", std::move(y), {ix}, [ix, map = std::move(map)](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < map.size(); ++i) (*gx)[map[i]] += g[i];
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor y = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return tape_of(x).record("reshape", std::move(y), {ix}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
  });
}

Var repeat_axis(Var x, int axis, std::size_t n) {
  const Tensor& xv = x.value();
  const std::size_t ax = norm_axis(axis, xv.rank(), "repeat_axis");
  if (xv.shape()[ax] != 1) throw DimensionError("repeat_axis: axis extent must be 1, got " + shape_str(xv.shape()));
  if (n == 0) throw DimensionError("repeat_axis: repeat count must be positive");
  Shape ys = xv.shape();
  ys[ax] = n;
  const AxisSplit s = split_at(ys, ax);
  Tensor y(ys);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < n; ++k) std::copy_n(&xv[o * s.inner], s.inner, &y[(o * n + k) * s.inner]);
  const std::size_t ix = x.id;
  return tape_of(x).record("repeat_axis", std::move(y), {ix}, [ix, s](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t in = 0; in < s.inner; ++in) (*gx)[o * s.inner + in] += g[(o * s.n + k) * s.inner + in];
  });
}

Var row_affine(Var x, const Tensor& scale_rows, const Tensor& shift_rows) {
  const Tensor& xv = x.value();
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.numel() / width;
  if (scale_rows.numel() != rows || shift_rows.numel() != rows) {
    throw DimensionError("row_affine: expected " + std::to_string(rows) + " row constants for " + shape_str(xv.shape()));
  }
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j) y[r * width + j] = xv[r * width + j] * scale_rows[r] + shift_rows[r];
  const std::size_t ix = x.id;
  return tape_of(x).record("row_affine", std::move(y), {ix},
                           [ix, rows, width, sc = scale_rows](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < width; ++j) (*gx)[r * width + j] += g[r * width + j] * sc[r];
  });
}

}  // namespace lino::ops
