// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace streamkv {

using Vec = std::vector<float>;

// Dense row-major float32 matrix. Rows are tokens everywhere in this library.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float* row(std::size_t i) { return data.data() + i * cols; }
  const float* row(std::size_t i) const { return data.data() + i * cols; }
  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const float> row_span(std::size_t i) const { return {row(i), cols}; }

  void append_row(std::span<const float> r);
  void append_rows(const Mat& other); // other.cols must match

  static Mat identity(std::size_t n);
};

// Per-query allowed key rows, half-open [begin, end). Attention masks in this
// library are always contiguous ranges of the gathered key matrix.
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Thread-local operation counters. attention score/value ops count one unit
// per (query, key) pair visited, which makes per-question retrieval cost
// directly comparable across stream lengths.
struct KernelStats {
  std::uint64_t attn_score_ops = 0;
  std::uint64_t attn_value_ops = 0;
  std::uint64_t matmul_cells = 0;
};

KernelStats& kernel_stats();
void reset_kernel_stats();

// ============================================================================
// Kernels. Storage is float32; every reduction (dot products, softmax sums,
// means) accumulates in float64 before rounding once back to float32. All
// kernels are single-threaded and deterministic: same inputs, same bits.
// ============================================================================

// a (m x k) times b (k x n). Throws Shape on inner-dimension mismatch.
Mat matmul(const Mat& a, const Mat& b);

// Numerically stable softmax (max subtraction, float64 exp/sum).
// Throws Shape on empty input or non-finite entries.
Vec softmax_row(std::span<const float> x);

// u.v / (tau * |u| * |v|). Throws Shape on length mismatch, Config on
// tau <= 0, DegenerateInput if either norm is zero.
float cosine_sim(std::span<const float> u, std::span<const float> v, float tau);

// Rotary position encoding, applied independently to each head_dim slice of
// x. Pair i of a head (elements 2i, 2i+1) is rotated by angle
// position * base^(-2i / head_dim). `position` is signed: rotating by -p
// undoes rotating by p, which is how cached keys are re-expressed at new
// positions without a separate inverse routine.
// Throws Config if head_dim is odd or not positive, Shape if x.size() is not
// a positive multiple of head_dim.
Vec rope_apply(std::span<const float> x, std::int64_t position, std::size_t head_dim, float base);

// In-place variant used by hot paths; same math as rope_apply.
void rope_rotate_inplace(float* x, std::size_t dim, std::int64_t position, std::size_t head_dim,
                         float base);

// Single-head scaled dot-product attention: softmax(q k^T / sqrt(d)) v with a
// per-query allowed range into the key/value rows. Output row i is a convex
// combination of v rows mask[i].begin .. mask[i].end-1.
// Throws Shape on dimension mismatch or mask.size() != q.rows, Masking if any
// range is empty or out of bounds.
Mat scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v, std::span<const KeyRange> mask);

} // namespace streamkv
