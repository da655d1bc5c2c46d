// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "streamkv/kv_store.hpp"
#include "streamkv/model.hpp"

namespace streamkv {

struct EncoderConfig {
  double fps = 0.5; // frame timestamps are frame_index / fps

  // Internal processing granularity in tokens, 1..chunk_tokens_max.
  // 0 means one frame. Chunking must not change any output bit; tests
  // re-encode the same stream at several granularities and compare.
  int step_tokens = 0;

  // Probe switch for tests: attend to far sinks at their absolute encoded
  // positions instead of clamping their distance to local_window.
  bool disable_distance_ceiling = false;
};

struct TimedFrame {
  std::int64_t frame_index = 0;
  double timestamp = 0.0;
  std::vector<int> tokens;
};

// Subsamples a frame source to the target rate. With source_fps > 0 every
// round(source_fps / fps)-th frame is kept; otherwise the source is assumed
// to be at the target rate already. Output timestamps are index / fps.
std::vector<TimedFrame> ingest_rate_control(std::span<const std::vector<int>> source, double fps,
                                            double source_fps = 0.0);

// Sliding-window streaming encoder. Token t attends to positions
// [max(0, t - local_window + 1), t] plus the pinned sink tokens, so its
// attention span is min(t + 1, local_window + sink_tokens). Working state is
// bounded: a rolling window of local_window - 1 key/value rows per layer
// plus the sink rows, independent of stream length. Completed frames are
// appended to the store and never touched again by the encoder.
//
// Sink keys attended beyond local_window are re-expressed at distance
// exactly local_window (their raw keys are kept and rotated to position
// t - local_window), so rotary phases never exceed what the window trained
// geometry covers.
class StreamingEncoder {
public:
  StreamingEncoder(const ToyModel& model, KVStore& store, EncoderConfig cfg);

  // One encode step: whole frames, total tokens <= chunk_tokens_max.
  // Each frame must have exactly tokens_per_frame tokens (Shape).
  // Returns the frames completed by this step, in order.
  std::vector<std::shared_ptr<const FrameKV>> encode_chunk(
      std::span<const std::vector<int>> frames);

  // Convenience: any number of frames, split into maximal chunks.
  std::vector<std::shared_ptr<const FrameKV>> encode_frames(
      std::span<const std::vector<int>> frames);

  // Absolute rotary positions the next `count` tokens would receive:
  // tokens_encoded() .. tokens_encoded() + count - 1.
  std::vector<std::int64_t> assign_positions(int count) const;

  std::int64_t tokens_encoded() const { return tokens_encoded_; }
  std::int64_t next_frame_index() const { return next_frame_index_; }

  // Called with each completed frame and its token ids, before that frame is
  // appended to the store. Readers woken by the append can rely on the
  // callback's effects, so retrieval indexes fed here are never behind the
  // store.
  void set_frame_callback(std::function<void(const FrameKV&, std::span<const int>)> cb) {
    on_frame_ = std::move(cb);
  }

  // Probe: number of key rows each encoded token attended to, in encode
  // order. Grows with the stream; clear between measurements.
  const std::vector<std::size_t>& attention_spans() const { return spans_; }
  void clear_attention_spans() { spans_.clear(); }

  // Probe: final-layer hidden rows for every encoded token. Off by default;
  // when on, memory grows with the stream, so tests only.
  void record_hidden(bool on) { record_hidden_ = on; }
  const Mat& hidden_rows() const { return hidden_rows_; }

  const EncoderConfig& encoder_config() const { return cfg_; }

private:
  void process_step(std::span<const int> ids);

  struct LayerWindow {
    std::deque<Vec> keys;   // rows for positions [first_pos, tokens_encoded)
    std::deque<Vec> values;
    std::int64_t first_pos = 0;
  };

  struct LayerSinks {
    Mat raw_keys; // pre-rotation, for distance-clamped re-expression
    Mat rot_keys; // rotated at their encode positions
    Mat values;
  };

  const ToyModel& model_;
  KVStore& store_;
  EncoderConfig cfg_;
  int step_tokens_ = 0;

  std::int64_t tokens_encoded_ = 0;
  std::int64_t next_frame_index_ = 0;

  std::vector<LayerWindow> windows_;
  std::vector<LayerSinks> sinks_;

  // Frame under construction.
  std::vector<LayerKV> cur_layers_;
  std::vector<int> cur_tokens_;

  std::vector<std::shared_ptr<const FrameKV>> step_completed_;
  std::function<void(const FrameKV&, std::span<const int>)> on_frame_;
  std::vector<std::size_t> spans_;
  bool record_hidden_ = false;
  Mat hidden_rows_;

  // Scratch reused across queries to keep the hot loop allocation-free.
  Mat k_gather_, v_gather_, qh_, kh_, vh_;
};

} // namespace streamkv
