// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "streamkv/encoder.hpp"
#include "streamkv/kv_store.hpp"
#include "streamkv/qa.hpp"
#include "streamkv/retrieval.hpp"

namespace streamkv {

struct QARequest {
  std::int64_t question_id = 0;
  std::vector<int> tokens;
  double timestamp = 0.0; // only frames with frame_timestamp < timestamp are visible
};

struct WorkerPoolConfig {
  int workers = 2;
  std::size_t queue_capacity = 64;
  RetrievalParams retrieval;
  DecodeOptions decode;
  PositionalMode positions = PositionalMode::Consecutive;

  // Test hook, called at the start of each processing attempt; throwing
  // simulates a worker failure. A failed request is re-queued once, then its
  // future carries the exception.
  std::function<void(const QARequest&, int attempt)> fault_hook;
};

struct ServingMetrics {
  std::int64_t frames_encoded = 0;
  double encode_seconds = 0.0;
  double frames_per_second = 0.0;
  std::int64_t questions_completed = 0;
  std::int64_t questions_failed = 0;
  KVStore::TierBytes tier_bytes;                // peaks are high-water marks
  std::uint64_t offload_bytes_per_hour = 0;     // cache bytes produced per stream hour
  std::vector<std::size_t> queue_depth_samples; // sampled at every push and pop

  struct PerQuestion {
    std::int64_t question_id = 0;
    std::int64_t admitted_frame = -1; // newest frame visible to this answer
    std::int64_t queue_wait_us = 0;
    StageLatencyUs stages;
    std::uint64_t attn_score_ops = 0;
  };
  std::vector<PerQuestion> per_question;
};

// One live stream: a single encoder thread owns the store's write side while
// a pool of workers answers questions against timestamp-gated snapshots.
// A question with timestamp t sees exactly the frames k with k/fps < t;
// workers block until the encoder has produced frame floor-of-admission (or
// the stream ended), so answers are deterministic functions of (request,
// stream prefix) regardless of scheduling.
class ServingSession {
public:
  ServingSession(const ToyModel& model, const StoreConfig& store_cfg,
                 const EncoderConfig& encoder_cfg, WorkerPoolConfig pool_cfg);
  ~ServingSession();

  ServingSession(const ServingSession&) = delete;
  ServingSession& operator=(const ServingSession&) = delete;

  // Starts the encoder thread over `frames` and the worker pool.
  void start(std::vector<std::vector<int>> frames);

  // Enqueues a question. Throws Backpressure when the queue is full and
  // Ordering when the session is not running.
  std::future<QAResult> submit(QARequest request);

  // Waits for the encoder to finish and the queue to drain, then stops the
  // workers. Idempotent.
  void finish();

  ServingMetrics metrics() const; // stable once finish() returned

  KVStore& store() { return *store_; }
  const KVStore& store() const { return *store_; }
  const FrameVectorIndex& index() const { return *index_; }

  // Newest frame visible at time t under strict admission (k/fps < t).
  static std::int64_t admission_frame(double timestamp, double fps);

private:
  struct Job {
    QARequest request;
    std::promise<QAResult> promise;
    int attempt = 0;
    std::chrono::steady_clock::time_point enqueued_at;
  };

  void encoder_main(std::vector<std::vector<int>> frames);
  void worker_main();
  void process(Job job);
  void requeue(Job job);

  const ToyModel& model_;
  EncoderConfig encoder_cfg_;
  WorkerPoolConfig pool_cfg_;
  std::unique_ptr<KVStore> store_;
  std::unique_ptr<FrameVectorIndex> index_;

  std::thread encoder_thread_;
  std::vector<std::thread> workers_;

  mutable std::mutex mu_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool running_ = false;
  bool draining_ = false;

  mutable std::mutex metrics_mu_;
  ServingMetrics metrics_;
};

// Convenience driver: run a whole stream with a batch of questions, submit
// each question as capacity allows, and collect every answer. Results are
// ordered like `questions`. A failed request (fault hook exhausted) rethrows
// its exception.
struct StreamRunResult {
  std::vector<QAResult> answers;
  ServingMetrics metrics;
};

StreamRunResult run_stream(const ToyModel& model, std::vector<std::vector<int>> frames,
                           std::vector<QARequest> questions, const StoreConfig& store_cfg,
                           const EncoderConfig& encoder_cfg, const WorkerPoolConfig& pool_cfg);

} // namespace streamkv
