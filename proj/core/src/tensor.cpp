// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <string>

#include "streamkv/error.hpp"

namespace streamkv {

void Mat::append_row(std::span<const float> r) {
  if (cols == 0) cols = r.size();
  if (r.size() != cols) throw Error::shape("append_row: expected " + std::to_string(cols) +
                                           " columns, got " + std::to_string(r.size()));
  data.insert(data.end(), r.begin(), r.end());
  ++rows;
}

void Mat::append_rows(const Mat& other) {
  if (other.rows == 0) return;
  if (cols == 0) cols = other.cols;
  if (other.cols != cols) throw Error::shape("append_rows: column mismatch");
  data.insert(data.end(), other.data.begin(), other.data.end());
  rows += other.rows;
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0f;
  return m;
}

KernelStats& kernel_stats() {
  thread_local KernelStats stats;
  return stats;
}

void reset_kernel_stats() { kernel_stats() = KernelStats{}; }

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows)
    throw Error::shape("matmul: inner dimensions " + std::to_string(a.cols) + " and " +
                       std::to_string(b.rows) + " do not match");
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const float* arow = a.row(i);
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k)
        acc += static_cast<double>(arow[k]) * static_cast<double>(b.at(k, j));
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  kernel_stats().matmul_cells += a.rows * b.cols;
  return out;
}

Vec softmax_row(std::span<const float> x) {
  if (x.empty()) throw Error::shape("softmax_row: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : x) {
    if (!std::isfinite(v)) throw Error::shape("softmax_row: non-finite entry");
    mx = std::max(mx, static_cast<double>(v));
  }
  std::vector<double> e(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - mx);
    sum += e[i];
  }
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(e[i] / sum);
  return out;
}

float cosine_sim(std::span<const float> u, std::span<const float> v, float tau) {
  if (u.size() != v.size())
    throw Error::shape("cosine_sim: length mismatch " + std::to_string(u.size()) + " vs " +
                       std::to_string(v.size()));
  if (!(tau > 0.0f)) throw Error::config("cosine_sim: tau must be positive");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    nu += static_cast<double>(u[i]) * static_cast<double>(u[i]);
    nv += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  }
  if (nu == 0.0 || nv == 0.0) throw Error::degenerate("cosine_sim: zero-norm vector");
  return static_cast<float>(dot / (static_cast<double>(tau) * std::sqrt(nu) * std::sqrt(nv)));
}

namespace {

// Inverse frequencies base^(-2i/head_dim) for i in [0, head_dim/2).
// Memoised per (head_dim, base); results are identical to recomputing.
const std::vector<double>& rope_inv_freq(std::size_t head_dim, float base) {
  thread_local std::map<std::pair<std::size_t, float>, std::vector<double>> cache;
  auto key = std::make_pair(head_dim, base);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<double> f(head_dim / 2);
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = std::pow(static_cast<double>(base), -2.0 * static_cast<double>(i) /
                                                   static_cast<double>(head_dim));
  return cache.emplace(key, std::move(f)).first->second;
}

} // namespace

void rope_rotate_inplace(float* x, std::size_t dim, std::int64_t position, std::size_t head_dim,
                         float base) {
  if (head_dim == 0 || head_dim % 2 != 0)
    throw Error::config("rope: head_dim must be positive and even");
  if (dim == 0 || dim % head_dim != 0)
    throw Error::shape("rope: vector length must be a positive multiple of head_dim");
  if (position == 0) return;
  const auto& inv_freq = rope_inv_freq(head_dim, base);
  const double p = static_cast<double>(position);
  for (std::size_t h0 = 0; h0 < dim; h0 += head_dim) {
    for (std::size_t i = 0; i < head_dim / 2; ++i) {
      const double ang = p * inv_freq[i];
      const double c = std::cos(ang);
      const double s = std::sin(ang);
      const double a = static_cast<double>(x[h0 + 2 * i]);
      const double b = static_cast<double>(x[h0 + 2 * i + 1]);
      x[h0 + 2 * i] = static_cast<float>(a * c - b * s);
      x[h0 + 2 * i + 1] = static_cast<float>(a * s + b * c);
    }
  }
}

Vec rope_apply(std::span<const float> x, std::int64_t position, std::size_t head_dim, float base) {
  Vec out(x.begin(), x.end());
  rope_rotate_inplace(out.data(), out.size(), position, head_dim, base);
  return out;
}

Mat scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v, std::span<const KeyRange> mask) {
  if (q.cols != k.cols) throw Error::shape("attention: query/key width mismatch");
  if (k.rows != v.rows) throw Error::shape("attention: key/value row count mismatch");
  if (mask.size() != q.rows) throw Error::shape("attention: one key range per query row required");

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Mat out(q.rows, v.cols);
  std::vector<double> logits;
  std::vector<double> acc;
  auto& stats = kernel_stats();

  for (std::size_t i = 0; i < q.rows; ++i) {
    const auto [begin, end] = mask[i];
    if (begin >= end || end > k.rows)
      throw Error::masking("attention: query row " + std::to_string(i) +
                           " has an empty or out-of-range key window");
    const std::size_t n = end - begin;
    logits.resize(n);
    const float* qrow = q.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const float* krow = k.row(begin + t);
      double dot = 0.0;
      for (std::size_t d = 0; d < q.cols; ++d)
        dot += static_cast<double>(qrow[d]) * static_cast<double>(krow[d]);
      logits[t] = dot * inv_sqrt_d;
      mx = std::max(mx, logits[t]);
    }
    acc.assign(v.cols, 0.0);
    double denom = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = std::exp(logits[t] - mx);
      denom += w;
      const float* vrow = v.row(begin + t);
      for (std::size_t d = 0; d < v.cols; ++d) acc[d] += w * static_cast<double>(vrow[d]);
    }
    float* orow = out.row(i);
    for (std::size_t d = 0; d < v.cols; ++d) orow[d] = static_cast<float>(acc[d] / denom);
    stats.attn_score_ops += n;
    stats.attn_value_ops += n;
  }
  return out;
}

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::DegenerateInput: return "degenerate input";
    case ErrorKind::Vocab: return "vocab error";
    case ErrorKind::Masking: return "masking error";
    case ErrorKind::Ordering: return "ordering error";
    case ErrorKind::Storage: return "storage error";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Capacity: return "capacity error";
    case ErrorKind::Backpressure: return "backpressure";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::Index: return "index error";
    case ErrorKind::TraceSpec: return "trace spec error";
  }
  return "error";
}

} // namespace streamkv
