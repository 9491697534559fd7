#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "lino/autograd.hpp"
#include "lino/rng.hpp"
#include "lino/tensor.hpp"

namespace lino::spectral {

/// Number of non-negative frequency bins for a real signal of length d.
constexpr std::size_t bin_count(std::size_t d) { return d / 2 + 1; }

/// In-place unnormalised DFT (sign -1 forward, +1 inverse). Radix-2
/// Cooley-Tukey for power-of-two lengths, direct O(n^2) sum otherwise.
void fft(std::span<std::complex<double>> data, bool inverse);

/// Real and imaginary halves of a one-sided spectrum, each [..., B].
struct ComplexSpectrum {
  Var re;
  Var im;
};

/// Unnormalised forward DFT over the trailing axis, non-negative bins only.
ComplexSpectrum rfft(Var x);

/// 1/D-normalised inverse of rfft. The imaginary parts of the DC bin (and
/// the Nyquist bin for even D) do not contribute.
Var irfft(const ComplexSpectrum& s, std::size_t d);

/// Complex B x B weight shared across channels, stored [in, out] like the
/// real linear layers: out_bin[j] = sum_k (re[k, j] + i im[k, j]) * in_bin[k].
struct ComplexLinearLayer {
  Tensor re;
  Tensor im;

  std::size_t bins() const { return re.dim(0); }
  static ComplexLinearLayer identity(std::size_t bins);
  /// Identity plus N(0, sigma^2) noise on both parts.
  static ComplexLinearLayer near_identity(std::size_t bins, double sigma, Rng& rng);
};

/// irfft(W * rfft(x)) over the trailing axis of x[..., D]; D must be even.
Var freq_projection(Var x, Var w_re, Var w_im);

}  // namespace lino::spectral
