#include "lino/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lino/errors.hpp"
#include "lino/ops.hpp"

namespace lino::spectral {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

void radix2(std::span<cd> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const cd w(std::cos(ang), std::sin(ang));
      for (std::size_t i = 0; i < n; i += len) {
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void direct(std::span<cd> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += a[j] * cd(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

// Weight of bin k when folding a one-sided spectrum back into D real samples.
double fold_weight(std::size_t k, std::size_t d) {
  if (k == 0) return 1.0;
  if (d % 2 == 0 && k == d / 2) return 1.0;
  return 2.0;
}

}  // namespace

void fft(std::span<cd> data, bool inverse) {
  if (data.size() <= 1) return;
  if (is_pow2(data.size())) {
    radix2(data, inverse);
  } else {
    direct(data, inverse);
  }
}

ComplexSpectrum rfft(Var x) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.shape().back();
  if (d < 2) throw DimensionError("rfft: trailing extent must be at least 2");
  const std::size_t bins = bin_count(d);
  const std::size_t rows = xv.numel() / d;
  Shape ps = xv.shape();
  ps.back() = 2 * bins;
  Tensor packed(ps);
  std::vector<cd> buf(d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t n = 0; n < d; ++n) buf[n] = xv[r * d + n];
    fft(buf, false);
    for (std::size_t k = 0; k < bins; ++k) {
      packed[r * 2 * bins + k] = buf[k].real();
      packed[r * 2 * bins + bins + k] = buf[k].imag();
    }
  }
  const std::size_t ix = x.id;
  Var p = x.tape->record("rfft", std::move(packed), {ix}, [ix, rows, d, bins](Tape& t, std::size_t self) {
    // d loss/d x_n = Re( sum_k (g_re[k] + i g_im[k]) e^{+2 pi i k n / D} ).
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(ix);
    std::vector<cd> buf(d);
    for (std::size_t r = 0; r < rows; ++r) {
      std::fill(buf.begin(), buf.end(), cd(0.0, 0.0));
      for (std::size_t k = 0; k < bins; ++k) buf[k] = cd(g[r * 2 * bins + k], g[r * 2 * bins + bins + k]);
      fft(buf, true);
      for (std::size_t n = 0; n < d; ++n) (*gx)[r * d + n] += buf[n].real();
    }
  });
  return {ops::slice(p, -1, 0, bins), ops::slice(p, -1, bins, 2 * bins)};
}

Var irfft(const ComplexSpectrum& s, std::size_t d) {
  const std::size_t bins = bin_count(d);
  if (s.re.shape() != s.im.shape()) throw DimensionError("irfft: re/im shape mismatch");
  if (s.re.shape().back() != bins) {
    throw DimensionError("irfft: " + std::to_string(s.re.shape().back()) + " bins inconsistent with length " +
                         std::to_string(d));
  }
  const Var parts[] = {s.re, s.im};
  Var packed = ops::concat(parts, -1);
  const Tensor& pv = packed.value();
  const std::size_t rows = pv.numel() / (2 * bins);
  Shape ys = pv.shape();
  ys.back() = d;
  Tensor y(ys);
  std::vector<cd> buf(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* re = &pv[r * 2 * bins];
    const double* im = re + bins;
    // Hermitian extension; imag parts of self-conjugate bins are dropped.
    for (std::size_t k = 0; k < bins; ++k) {
      const bool self_conj = k == 0 || (d % 2 == 0 && k == d / 2);
      buf[k] = cd(re[k], self_conj ? 0.0 : im[k]);
    }
    for (std::size_t k = bins; k < d; ++k) buf[k] = std::conj(buf[d - k]);
    fft(buf, true);
    for (std::size_t n = 0; n < d; ++n) y[r * d + n] = buf[n].real() / static_cast<double>(d);
  }
  const std::size_t ip = packed.id;
  return packed.tape->record("irfft", std::move(y), {ip}, [ip, rows, d, bins](Tape& t, std::size_t self) {
    // x_n = (1/D) sum_k w_k (re_k cos - im_k sin); gradients follow from a forward DFT of g.
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gp = t.grad_buffer(ip);
    std::vector<cd> buf(d);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t n = 0; n < d; ++n) buf[n] = g[r * d + n];
      fft(buf, false);
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = fold_weight(k, d) * inv_d;
        const bool self_conj = k == 0 || (d % 2 == 0 && k == d / 2);
        (*gp)[r * 2 * bins + k] += w * buf[k].real();
        if (!self_conj) (*gp)[r * 2 * bins + bins + k] += w * buf[k].imag();
      }
    }
  });
}

ComplexLinearLayer ComplexLinearLayer::identity(std::size_t bins) {
  ComplexLinearLayer l{Tensor::zeros({bins, bins}), Tensor::zeros({bins, bins})};
  for (std::size_t i = 0; i < bins; ++i) l.re.at({i, i}) = 1.0;
  return l;
}

ComplexLinearLayer ComplexLinearLayer::near_identity(std::size_t bins, double sigma, Rng& rng) {
  ComplexLinearLayer l = identity(bins);
  for (auto& v : l.re.data()) v += rng.normal(0.0, sigma);
  for (auto& v : l.im.data()) v += rng.normal(0.0, sigma);
  return l;
}

Var freq_projection(Var x, Var w_re, Var w_im) {
  const std::size_t d = x.shape().back();
  if (d % 2 != 0) throw ConfigError("freq_projection: feature length must be even, got " + std::to_string(d));
  const std::size_t bins = bin_count(d);
  if (w_re.shape() != Shape{bins, bins} || w_im.shape() != Shape{bins, bins}) {
    throw DimensionError("freq_projection: weights must be [" + std::to_string(bins) + "," + std::to_string(bins) +
                         "], got " + shape_str(w_re.shape()) + " / " + shape_str(w_im.shape()));
  }
  const ComplexSpectrum s = rfft(x);
  ComplexSpectrum out{
      ops::sub(ops::matmul(s.re, w_re), ops::matmul(s.im, w_im)),
      ops::add(ops::matmul(s.re, w_im), ops::matmul(s.im, w_re)),
  };
  return irfft(out, d);
}

}  // namespace lino::spectral
