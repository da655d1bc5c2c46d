// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementation used only by tests. Everything here
// is written from scratch against the intended math, in float64 end to end,
// with its own loops: no library kernels, no shared softmax/rotation code.
// Library outputs (float32 storage) are expected to match within 1e-5.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "streamkv/model.hpp"

namespace refmodel {

using DRow = std::vector<double>;
using DMat = std::vector<DRow>;

inline DMat to_dmat(const streamkv::Mat& m) {
  DMat out(m.rows, DRow(m.cols));
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out[i][j] = static_cast<double>(m.at(i, j));
  return out;
}

inline DMat mm(const DMat& a, const DMat& b) {
  DMat out(a.size(), DRow(b.empty() ? 0 : b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline DRow rotate(const DRow& x, double position, int head_dim, double base) {
  DRow out = x;
  for (std::size_t h0 = 0; h0 + head_dim <= x.size(); h0 += static_cast<std::size_t>(head_dim)) {
    for (int i = 0; i < head_dim / 2; ++i) {
      const double angle = position * std::pow(base, -2.0 * i / head_dim);
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = x[h0 + 2 * static_cast<std::size_t>(i)];
      const double b = x[h0 + 2 * static_cast<std::size_t>(i) + 1];
      out[h0 + 2 * static_cast<std::size_t>(i)] = a * c - b * s;
      out[h0 + 2 * static_cast<std::size_t>(i) + 1] = a * s + b * c;
    }
  }
  return out;
}

inline DRow softmax(const DRow& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  DRow out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

struct RefLayerKV {
  DMat keys;   // rotated, one row per token
  DMat values;
};

struct RefOut {
  DMat hidden;                    // final layer output rows
  std::vector<RefLayerKV> kv;     // per layer
};

// Shared core: full forward where token t may attend to the key rows listed
// in allowed(t) (indices into 0..t). Sink keys outside the window can be
// re-expressed at a clamped distance by the caller via the key override.
template <typename AllowedFn, typename KeyFn>
inline RefOut forward_with(const streamkv::ToyModel& model, std::span<const int> ids,
                           AllowedFn allowed, KeyFn key_for) {
  const auto& cfg = model.config();
  const int hd = cfg.head_dim;
  const double base = static_cast<double>(cfg.rope_base);
  const std::size_t dim = static_cast<std::size_t>(cfg.model_dim());
  const std::size_t n = ids.size();

  DMat x(n, DRow(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d)
      x[i][d] = static_cast<double>(model.embedding().at(static_cast<std::size_t>(ids[i]), d));

  RefOut out;
  out.kv.resize(static_cast<std::size_t>(cfg.num_layers));
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    const auto& w = model.layer(layer);
    const DMat wq = to_dmat(w.wq), wk = to_dmat(w.wk), wv = to_dmat(w.wv), wo = to_dmat(w.wo);
    DMat q = mm(x, wq);
    DMat k_raw = mm(x, wk);
    DMat v = mm(x, wv);
    DMat k(n, DRow(dim));
    for (std::size_t t = 0; t < n; ++t) {
      q[t] = rotate(q[t], static_cast<double>(t), hd, base);
      k[t] = rotate(k[t].empty() ? k_raw[t] : k_raw[t], static_cast<double>(t), hd, base);
    }

    DMat attn(n, DRow(dim, 0.0));
    for (std::size_t t = 0; t < n; ++t) {
      const auto keys_allowed = allowed(t); // ascending token indices
      for (int h = 0; h < cfg.num_heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * static_cast<std::size_t>(hd);
        DRow scores(keys_allowed.size());
        for (std::size_t a = 0; a < keys_allowed.size(); ++a) {
          const std::size_t j = keys_allowed[a];
          const DRow kj = key_for(t, j, k, k_raw); // full-width key row
          double dot = 0.0;
          for (int d = 0; d < hd; ++d)
            dot += q[t][c0 + static_cast<std::size_t>(d)] * kj[c0 + static_cast<std::size_t>(d)];
          scores[a] = dot / std::sqrt(static_cast<double>(hd));
        }
        const DRow weights = softmax(scores);
        for (std::size_t a = 0; a < keys_allowed.size(); ++a) {
          const std::size_t j = keys_allowed[a];
          for (int d = 0; d < hd; ++d)
            attn[t][c0 + static_cast<std::size_t>(d)] +=
                weights[a] * v[j][c0 + static_cast<std::size_t>(d)];
        }
      }
    }

    DMat proj = mm(attn, wo);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t d = 0; d < dim; ++d) x[t][d] += proj[t][d];
    if (cfg.use_mlp) {
      const DMat w1 = to_dmat(w.mlp_w1), w2 = to_dmat(w.mlp_w2);
      DMat h1 = mm(x, w1);
      for (auto& row : h1)
        for (auto& vv : row) vv = std::max(vv, 0.0);
      const DMat h2 = mm(h1, w2);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t d = 0; d < dim; ++d) x[t][d] += h2[t][d];
    }
    out.kv[static_cast<std::size_t>(layer)] = RefLayerKV{k, v};
  }
  out.hidden = x;
  return out;
}

// Dense full-causal forward at absolute positions 0..n-1.
inline RefOut full_forward(const streamkv::ToyModel& model, std::span<const int> ids) {
  auto allowed = [](std::size_t t) {
    std::vector<std::size_t> a(t + 1);
    for (std::size_t j = 0; j <= t; ++j) a[j] = j;
    return a;
  };
  auto key_for = [](std::size_t, std::size_t j, const DMat& k, const DMat&) { return k[j]; };
  return forward_with(model, ids, allowed, key_for);
}

// Sliding-window semantics: token t sees [max(0, t-window+1), t] plus the
// sink tokens, with far sinks re-rotated to distance exactly `window` when
// clamp is on.
inline RefOut windowed_forward(const streamkv::ToyModel& model, std::span<const int> ids,
                               bool clamp) {
  const auto& cfg = model.config();
  const std::int64_t window = cfg.local_window;
  const std::int64_t sink_tokens = cfg.sink_tokens();
  const int hd = cfg.head_dim;
  const double base = static_cast<double>(cfg.rope_base);

  auto allowed = [=](std::size_t t64) {
    const auto t = static_cast<std::int64_t>(t64);
    const std::int64_t wstart = std::max<std::int64_t>(0, t - window + 1);
    const std::int64_t nsink = std::min(sink_tokens, wstart);
    std::vector<std::size_t> a;
    for (std::int64_t j = 0; j < nsink; ++j) a.push_back(static_cast<std::size_t>(j));
    for (std::int64_t j = wstart; j <= t; ++j) a.push_back(static_cast<std::size_t>(j));
    return a;
  };
  auto key_for = [=](std::size_t t64, std::size_t j64, const DMat& k, const DMat& k_raw) {
    const auto t = static_cast<std::int64_t>(t64);
    const auto j = static_cast<std::int64_t>(j64);
    if (clamp && j < sink_tokens && t - j > window)
      return rotate(k_raw[j64], static_cast<double>(t - window), hd, base);
    return k[j64];
  };
  return forward_with(model, ids, allowed, key_for);
}

inline DRow ref_logits(const streamkv::ToyModel& model, const DRow& hidden) {
  const auto& head = model.head();
  DRow out(head.cols, 0.0);
  for (std::size_t j = 0; j < head.cols; ++j)
    for (std::size_t d = 0; d < head.rows; ++d)
      out[j] += hidden[d] * static_cast<double>(head.at(d, j));
  return out;
}

inline double max_dev(const DMat& ref, const streamkv::Mat& got) {
  double dev = 0.0;
  for (std::size_t i = 0; i < got.rows; ++i)
    for (std::size_t j = 0; j < got.cols; ++j)
      dev = std::max(dev, std::abs(ref[i][j] - static_cast<double>(got.at(i, j))));
  return dev;
}

} // namespace refmodel
