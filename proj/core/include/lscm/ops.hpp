#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lscm/autodiff.hpp"

// Differentiable tensor operations. Every op checks its operand shapes and
// throws DimensionError on mismatch; nothing broadcasts implicitly.
namespace lscm {

/// [m x k] * [k x n] -> [m x n]
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise (Hadamard) product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds b [C] to every length-C slice along the last axis of x.
Var add_bias(const Var& x, const Var& b);

Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);

/// Row-wise softmax of x / scale with per-row max subtraction.
Var scaled_row_softmax(const Var& x, double scale);

/// Zero-padded "same" cross-correlation. x [H x W x Cin], w [k x k x Cin x Cout], b [Cout].
Var conv2d_same(const Var& x, const Var& w, const Var& b);

/// Column-wise max over the rows of q [T x C] -> [C]. Ties go to the lowest row.
Var max_pool_over_rows(const Var& q);

/// Concatenates along the last axis; all leading extents must agree.
Var concat_channels(std::span<const Var> parts);
Var concat_channels(std::initializer_list<Var> parts);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);

Var reshape(const Var& x, Shape shape);
/// Row i of a matrix, as a vector.
Var row(const Var& x, std::size_t i);
Var stack_rows(std::span<const Var> rows);

/// Gathers rows of table [V x C] -> [T x C].
Var embedding_lookup(const Var& table, std::span<const std::size_t> indices);

/// Repeats l [C] at every cell of an H x W grid -> [H x W x C].
Var tile_spatial(const Var& l, std::size_t h, std::size_t w);

/// Space-to-depth: [H x W x C] -> [H/f x W/f x f*f*C].
Var pixel_unshuffle(const Var& x, std::size_t factor);

/// Bilinear resize by an integer factor with half-pixel centers and edge clamping.
Var upsample_bilinear(const Var& x, std::size_t factor);

/// Mean binary cross-entropy in the stable logit form; target entries in {0, 1}.
Var bce_with_logits(const Var& logits, const Tensor& target);

Var sum(const Var& x);
Var mean(const Var& x);

// Plain (non-recording) kernels reused by tests and oracles.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

}  // namespace lscm
