// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "streamkv/error.hpp"

namespace streamkv {

std::vector<TimedFrame> ingest_rate_control(std::span<const std::vector<int>> source, double fps,
                                            double source_fps) {
  if (!(fps > 0.0)) throw Error::config("rate control: fps must be positive");
  if (source_fps < 0.0) throw Error::config("rate control: source_fps must be >= 0");
  std::int64_t stride = 1;
  if (source_fps > 0.0) stride = std::max<std::int64_t>(1, std::llround(source_fps / fps));
  std::vector<TimedFrame> out;
  out.reserve(source.size() / static_cast<std::size_t>(stride) + 1);
  std::int64_t k = 0;
  for (std::size_t i = 0; i < source.size(); i += static_cast<std::size_t>(stride), ++k)
    out.push_back({k, static_cast<double>(k) / fps, source[i]});
  return out;
}

StreamingEncoder::StreamingEncoder(const ToyModel& model, KVStore& store, EncoderConfig cfg)
    : model_(model), store_(store), cfg_(cfg) {
  const auto& mc = model_.config();
  if (!(cfg_.fps > 0.0)) throw Error::config("encoder: fps must be positive");
  step_tokens_ = cfg_.step_tokens == 0 ? mc.tokens_per_frame : cfg_.step_tokens;
  if (step_tokens_ < 1 || step_tokens_ > mc.chunk_tokens_max)
    throw Error::config("encoder: step_tokens must be in [1, chunk_tokens_max]");

  const std::size_t L = static_cast<std::size_t>(mc.num_layers);
  windows_.resize(L);
  sinks_.resize(L);
  cur_layers_.resize(L);
  const std::size_t dim = static_cast<std::size_t>(mc.model_dim());
  for (auto& s : sinks_) {
    s.raw_keys = Mat(0, dim);
    s.rot_keys = Mat(0, dim);
    s.values = Mat(0, dim);
  }
  for (auto& l : cur_layers_) {
    l.keys = Mat(0, dim);
    l.values = Mat(0, dim);
  }
}

std::vector<std::int64_t> StreamingEncoder::assign_positions(int count) const {
  if (count < 0) throw Error::config("assign_positions: count must be >= 0");
  std::vector<std::int64_t> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = tokens_encoded_ + i;
  return out;
}

std::vector<std::shared_ptr<const FrameKV>> StreamingEncoder::encode_chunk(
    std::span<const std::vector<int>> frames) {
  const auto& mc = model_.config();
  std::size_t total = 0;
  for (const auto& f : frames) {
    if (f.size() != static_cast<std::size_t>(mc.tokens_per_frame))
      throw Error::shape("encode_chunk: frame has " + std::to_string(f.size()) +
                         " tokens, expected " + std::to_string(mc.tokens_per_frame));
    total += f.size();
  }
  if (total == 0) return {};
  if (total > static_cast<std::size_t>(mc.chunk_tokens_max))
    throw Error::shape("encode_chunk: " + std::to_string(total) +
                       " tokens exceed chunk_tokens_max=" + std::to_string(mc.chunk_tokens_max));

  std::vector<int> ids;
  ids.reserve(total);
  for (const auto& f : frames) ids.insert(ids.end(), f.begin(), f.end());

  step_completed_.clear();
  for (std::size_t off = 0; off < ids.size(); off += static_cast<std::size_t>(step_tokens_)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(step_tokens_),
                                                ids.size() - off);
    process_step(std::span<const int>(ids.data() + off, n));
  }
  return std::move(step_completed_);
}

std::vector<std::shared_ptr<const FrameKV>> StreamingEncoder::encode_frames(
    std::span<const std::vector<int>> frames) {
  const auto& mc = model_.config();
  const std::size_t per_chunk =
      std::max<std::size_t>(1, static_cast<std::size_t>(mc.chunk_tokens_max) /
                                   static_cast<std::size_t>(mc.tokens_per_frame));
  std::vector<std::shared_ptr<const FrameKV>> done;
  for (std::size_t off = 0; off < frames.size(); off += per_chunk) {
    const std::size_t n = std::min(per_chunk, frames.size() - off);
    auto part = encode_chunk(frames.subspan(off, n));
    done.insert(done.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  return done;
}

void StreamingEncoder::process_step(std::span<const int> ids) {
  const auto& mc = model_.config();
  const std::size_t dim = static_cast<std::size_t>(mc.model_dim());
  const std::size_t hd = static_cast<std::size_t>(mc.head_dim);
  const std::int64_t window = mc.local_window;
  const std::int64_t sink_tokens = mc.sink_tokens();
  const std::int64_t p0 = tokens_encoded_;
  const std::size_t n = ids.size();

  Mat x = model_.embed_tokens(ids);
  std::vector<Mat> step_keys(static_cast<std::size_t>(mc.num_layers));
  std::vector<Mat> step_values(static_cast<std::size_t>(mc.num_layers));

  std::vector<std::size_t> step_spans(n, 0);
  std::vector<float> clamped_key(dim);
  KeyRange full_range; // mask for the per-query gathered rows

  for (int layer = 0; layer < mc.num_layers; ++layer) {
    const auto& w = model_.layer(layer);
    Mat q = matmul(x, w.wq);
    Mat k = matmul(x, w.wk);
    Mat v = matmul(x, w.wv);

    auto& sinks = sinks_[static_cast<std::size_t>(layer)];
    // Sink rows keep their raw keys so far-away queries can re-rotate them.
    for (std::size_t i = 0; i < n; ++i)
      if (p0 + static_cast<std::int64_t>(i) < sink_tokens)
        sinks.raw_keys.append_row(k.row_span(i));

    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t pos = p0 + static_cast<std::int64_t>(i);
      rope_rotate_inplace(q.row(i), dim, pos, hd, mc.rope_base);
      rope_rotate_inplace(k.row(i), dim, pos, hd, mc.rope_base);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (p0 + static_cast<std::int64_t>(i) < sink_tokens) {
        sinks.rot_keys.append_row(k.row_span(i));
        sinks.values.append_row(v.row_span(i));
      }

    auto& win = windows_[static_cast<std::size_t>(layer)];
    Mat attn(n, dim);

    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t t = p0 + static_cast<std::int64_t>(i);
      const std::int64_t wstart = std::max<std::int64_t>(0, t - window + 1);
      const std::int64_t n_sink = std::min(sink_tokens, wstart);
      const std::size_t rows =
          static_cast<std::size_t>(n_sink) + static_cast<std::size_t>(p0 - wstart) + (i + 1);

      k_gather_.rows = 0;
      k_gather_.cols = dim;
      k_gather_.data.clear();
      v_gather_.rows = 0;
      v_gather_.cols = dim;
      v_gather_.data.clear();
      k_gather_.data.reserve(rows * dim);
      v_gather_.data.reserve(rows * dim);

      for (std::int64_t j = 0; j < n_sink; ++j) {
        if (!cfg_.disable_distance_ceiling && t - j > window) {
          // Re-express this sink at distance exactly `window`.
          std::copy(sinks.raw_keys.row(static_cast<std::size_t>(j)),
                    sinks.raw_keys.row(static_cast<std::size_t>(j)) + dim, clamped_key.data());
          rope_rotate_inplace(clamped_key.data(), dim, t - window, hd, mc.rope_base);
          k_gather_.append_row(clamped_key);
        } else {
          k_gather_.append_row(sinks.rot_keys.row_span(static_cast<std::size_t>(j)));
        }
        v_gather_.append_row(sinks.values.row_span(static_cast<std::size_t>(j)));
      }
      for (std::int64_t pos = wstart; pos < p0; ++pos) {
        const auto off = static_cast<std::size_t>(pos - win.first_pos);
        k_gather_.append_row(win.keys[off]);
        v_gather_.append_row(win.values[off]);
      }
      for (std::size_t jj = 0; jj <= i; ++jj) {
        k_gather_.append_row(k.row_span(jj));
        v_gather_.append_row(v.row_span(jj));
      }
      if (layer == 0) step_spans[i] = k_gather_.rows;

      full_range = {0, k_gather_.rows};
      for (int h = 0; h < mc.num_heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * hd;
        qh_ = Mat(1, hd);
        std::copy(q.row(i) + c0, q.row(i) + c0 + hd, qh_.row(0));
        kh_ = Mat(k_gather_.rows, hd);
        vh_ = Mat(k_gather_.rows, hd);
        for (std::size_t r = 0; r < k_gather_.rows; ++r) {
          std::copy(k_gather_.row(r) + c0, k_gather_.row(r) + c0 + hd, kh_.row(r));
          std::copy(v_gather_.row(r) + c0, v_gather_.row(r) + c0 + hd, vh_.row(r));
        }
        Mat oh = scaled_dot_attention(qh_, kh_, vh_, std::span<const KeyRange>(&full_range, 1));
        std::copy(oh.row(0), oh.row(0) + hd, attn.row(i) + c0);
      }
    }

    // Roll the window forward: append this step's rows, trim to the last
    // local_window - 1 positions.
    for (std::size_t i = 0; i < n; ++i) {
      win.keys.emplace_back(k.row(i), k.row(i) + dim);
      win.values.emplace_back(v.row(i), v.row(i) + dim);
    }
    const std::int64_t keep_from = std::max<std::int64_t>(0, p0 + static_cast<std::int64_t>(n) -
                                                                 (window - 1));
    while (win.first_pos < keep_from && !win.keys.empty()) {
      win.keys.pop_front();
      win.values.pop_front();
      ++win.first_pos;
    }

    step_keys[static_cast<std::size_t>(layer)] = std::move(k);
    step_values[static_cast<std::size_t>(layer)] = std::move(v);
    x = model_.finish_layer(layer, x, attn);
  }

  spans_.insert(spans_.end(), step_spans.begin(), step_spans.end());
  if (record_hidden_) {
    if (hidden_rows_.cols == 0) hidden_rows_ = Mat(0, dim);
    hidden_rows_.append_rows(x);
  }

  // Fold this step's rows into the frame under construction; emit every
  // completed frame.
  for (std::size_t i = 0; i < n; ++i) {
    for (int layer = 0; layer < mc.num_layers; ++layer) {
      cur_layers_[static_cast<std::size_t>(layer)].keys.append_row(
          step_keys[static_cast<std::size_t>(layer)].row_span(i));
      cur_layers_[static_cast<std::size_t>(layer)].values.append_row(
          step_values[static_cast<std::size_t>(layer)].row_span(i));
    }
    cur_tokens_.push_back(ids[i]);
    if (cur_tokens_.size() == static_cast<std::size_t>(mc.tokens_per_frame)) {
      FrameKV frame;
      frame.frame_index = next_frame_index_;
      frame.timestamp = static_cast<double>(next_frame_index_) / cfg_.fps;
      frame.encode_position_start =
          static_cast<std::uint64_t>(next_frame_index_) *
          static_cast<std::uint64_t>(mc.tokens_per_frame);
      frame.layers = std::move(cur_layers_);

      cur_layers_.assign(static_cast<std::size_t>(mc.num_layers), LayerKV{});
      for (auto& l : cur_layers_) {
        l.keys = Mat(0, dim);
        l.values = Mat(0, dim);
      }

      const std::int64_t idx = frame.frame_index;
      // Callback before append: appending publishes the frame to gated
      // readers, so every index keyed off store visibility must be fed
      // first.
      if (on_frame_) on_frame_(frame, cur_tokens_);
      store_.append(std::move(frame));
      step_completed_.push_back(store_.snapshot_at(idx).load_one(idx));
      cur_tokens_.clear();
      ++next_frame_index_;
    }
  }
  tokens_encoded_ = p0 + static_cast<std::int64_t>(n);
}

} // namespace streamkv
