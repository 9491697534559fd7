#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lino/autograd.hpp"
#include "lino/rng.hpp"
#include "lino/tensor.hpp"

/// Differentiable primitives. Every op records onto the tape of its first
/// input; axis arguments accept negative values counted from the end.
namespace lino::ops {

enum class Mode { train, eval };

// Elementwise. Binary ops require equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add(Var a, double s);
Var scale(Var a, double s);
Var tanh(Var a);
/// tanh-approximated GELU.
Var gelu(Var a);
Var square(Var a);
Var abs(Var a);

/// x[..., In] · W[In, Out] over the trailing axis.
Var matmul(Var x, Var W);
/// Adds b[Out] to every trailing row of x.
Var add_bias(Var x, Var b);
/// y = xW + b over the trailing axis.
Var linear(Var x, Var W, Var b);

/// Per channel c: out[c, d] = sum_{k=0..d} phi[c, k] * H[c, d - k] + beta[c].
/// H is [..., C, D]; the kernel spans the full feature axis (left zero padding).
Var causal_depthwise_conv(Var H, Var phi, Var beta);

Var softmax(Var x, int axis);
/// Normalises the trailing axis (population variance) then applies gamma/beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout; identity in eval mode or when p == 0.
Var dropout(Var x, double p, Mode mode, Rng& rng);

Var sum_axis(Var x, int axis, bool keepdim = false);
Var mean_axis(Var x, int axis, bool keepdim = false);
/// Sum / mean of every element as a one-element tensor.
Var sum(Var x);
Var mean(Var x);

Var concat(std::span<const Var> xs, int axis);
Var slice(Var x, int axis, std::size_t begin, std::size_t end);
Var transpose(Var x, int axis_a, int axis_b);
Var reshape(Var x, Shape shape);
/// Tiles an extent-1 axis n times.
Var repeat_axis(Var x, int axis, std::size_t n);

/// y = x * scale + shift where scale/shift are constants indexed by every
/// axis except the trailing one (one value per row).
Var row_affine(Var x, const Tensor& scale, const Tensor& shift);

}  // namespace lino::ops
