// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/serving.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "streamkv/error.hpp"

namespace streamkv {

using Clock = std::chrono::steady_clock;

std::int64_t ServingSession::admission_frame(double timestamp, double fps) {
  if (!(fps > 0.0)) throw Error::config("admission: fps must be positive");
  // Largest k with k / fps < timestamp, i.e. k < timestamp * fps.
  const double x = timestamp * fps;
  if (x <= 0.0) return -1;
  const double fl = std::floor(x);
  const auto k = static_cast<std::int64_t>(fl);
  return fl == x ? k - 1 : k;
}

ServingSession::ServingSession(const ToyModel& model, const StoreConfig& store_cfg,
                               const EncoderConfig& encoder_cfg, WorkerPoolConfig pool_cfg)
    : model_(model), encoder_cfg_(encoder_cfg), pool_cfg_(std::move(pool_cfg)) {
  if (pool_cfg_.workers < 1) throw Error::config("serving: need at least one worker");
  if (pool_cfg_.queue_capacity < 1) throw Error::config("serving: queue capacity must be >= 1");
  store_ = std::make_unique<KVStore>(model_.config(), store_cfg);
  std::shared_ptr<const Embedder> embedder;
  if (pool_cfg_.retrieval.mode == RetrievalMode::External)
    embedder = std::make_shared<BagOfTokensEmbedder>(
        model_.config().vocab_size, static_cast<std::size_t>(model_.config().model_dim()),
        model_.seed());
  index_ = std::make_unique<FrameVectorIndex>(model_.config(),
                                              pool_cfg_.retrieval.frame_vector_rope, embedder);
}

ServingSession::~ServingSession() {
  try {
    finish();
  } catch (...) {
    // destructor must not throw; finish() reports errors when called directly
  }
}

void ServingSession::start(std::vector<std::vector<int>> frames) {
  {
    std::lock_guard lk(mu_);
    if (running_) throw Error::ordering("serving: session already started");
    running_ = true;
    draining_ = false;
  }
  encoder_thread_ = std::thread(&ServingSession::encoder_main, this, std::move(frames));
  workers_.reserve(static_cast<std::size_t>(pool_cfg_.workers));
  for (int i = 0; i < pool_cfg_.workers; ++i)
    workers_.emplace_back(&ServingSession::worker_main, this);
}

void ServingSession::encoder_main(std::vector<std::vector<int>> frames) {
  const auto t0 = Clock::now();
  StreamingEncoder encoder(model_, *store_, encoder_cfg_);
  encoder.set_frame_callback(
      [this](const FrameKV& frame, std::span<const int> tokens) { index_->add_frame(frame, tokens); });
  encoder.encode_frames(frames);
  store_->close();
  const double seconds =
      std::chrono::duration_cast<std::chrono::duration<double>>(Clock::now() - t0).count();
  std::lock_guard lk(metrics_mu_);
  metrics_.frames_encoded = store_->frame_count();
  metrics_.encode_seconds = seconds;
  metrics_.frames_per_second =
      seconds > 0.0 ? static_cast<double>(metrics_.frames_encoded) / seconds : 0.0;
}

std::future<QAResult> ServingSession::submit(QARequest request) {
  Job job;
  job.request = std::move(request);
  job.enqueued_at = Clock::now();
  auto future = job.promise.get_future();
  std::size_t depth;
  {
    std::lock_guard lk(mu_);
    if (!running_ || draining_) throw Error::ordering("serving: session is not accepting questions");
    if (queue_.size() >= pool_cfg_.queue_capacity)
      throw Error::backpressure("serving: question queue is full (" +
                                std::to_string(pool_cfg_.queue_capacity) + " pending)");
    queue_.push_back(std::move(job));
    depth = queue_.size();
  }
  queue_cv_.notify_one();
  std::lock_guard lk(metrics_mu_);
  metrics_.queue_depth_samples.push_back(depth);
  return future;
}

void ServingSession::requeue(Job job) {
  std::size_t depth;
  {
    std::lock_guard lk(mu_);
    // Re-queued jobs bypass the capacity check: the slot they occupied was
    // theirs already, and dropping them would lose the promise.
    queue_.push_back(std::move(job));
    depth = queue_.size();
  }
  queue_cv_.notify_one();
  std::lock_guard lk(metrics_mu_);
  metrics_.queue_depth_samples.push_back(depth);
}

void ServingSession::worker_main() {
  for (;;) {
    Job job;
    std::size_t depth;
    {
      std::unique_lock lk(mu_);
      queue_cv_.wait(lk, [&] { return draining_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (draining_) return;
        continue;
      }
      job = std::move(queue_.front());
      queue_.pop_front();
      depth = queue_.size();
    }
    {
      std::lock_guard lk(metrics_mu_);
      metrics_.queue_depth_samples.push_back(depth);
    }
    process(std::move(job));
  }
}

void ServingSession::process(Job job) {
  const std::int64_t wanted = admission_frame(job.request.timestamp, encoder_cfg_.fps);
  try {
    if (pool_cfg_.fault_hook) pool_cfg_.fault_hook(job.request, job.attempt);

    // Wait until the encoder has reached the admission point (or the stream
    // ended short of it), then answer against that fixed snapshot.
    const std::int64_t reached = store_->wait_admitted(wanted);
    const std::int64_t visible = std::min(wanted, reached);
    const StoreSnapshot snapshot = store_->snapshot_at(visible);

    const auto queue_wait_us = std::chrono::duration_cast<std::chrono::microseconds>(
                                   Clock::now() - job.enqueued_at)
                                   .count();
    reset_kernel_stats();
    QAResult result = answer_with_mode(model_, snapshot, *index_, job.request.tokens,
                                       pool_cfg_.retrieval, pool_cfg_.decode,
                                       pool_cfg_.positions);

    {
      std::lock_guard lk(metrics_mu_);
      ++metrics_.questions_completed;
      metrics_.per_question.push_back({job.request.question_id, visible, queue_wait_us,
                                       result.latency, result.attn_score_ops});
    }
    job.promise.set_value(std::move(result));
  } catch (...) {
    if (job.attempt == 0) {
      job.attempt = 1;
      requeue(std::move(job));
      return;
    }
    {
      std::lock_guard lk(metrics_mu_);
      ++metrics_.questions_failed;
    }
    job.promise.set_exception(std::current_exception());
  }
}

void ServingSession::finish() {
  {
    std::lock_guard lk(mu_);
    if (!running_) return;
  }
  if (encoder_thread_.joinable()) encoder_thread_.join();
  {
    std::lock_guard lk(mu_);
    draining_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
  {
    std::lock_guard lk(mu_);
    running_ = false;
  }
  std::lock_guard lk(metrics_mu_);
  metrics_.tier_bytes = store_->tier_bytes();
  metrics_.offload_bytes_per_hour = kv_cache_size_bytes(
      model_.config(), static_cast<std::int64_t>(std::llround(encoder_cfg_.fps * 3600.0)));
}

ServingMetrics ServingSession::metrics() const {
  std::lock_guard lk(metrics_mu_);
  return metrics_;
}

StreamRunResult run_stream(const ToyModel& model, std::vector<std::vector<int>> frames,
                           std::vector<QARequest> questions, const StoreConfig& store_cfg,
                           const EncoderConfig& encoder_cfg, const WorkerPoolConfig& pool_cfg) {
  ServingSession session(model, store_cfg, encoder_cfg, pool_cfg);
  session.start(std::move(frames));

  std::vector<std::future<QAResult>> futures;
  futures.reserve(questions.size());
  for (auto& q : questions) {
    for (;;) {
      try {
        futures.push_back(session.submit(q));
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Backpressure) throw;
        // Queue full: workers are guaranteed to drain it (their admission
        // waits resolve once the encoder advances or closes), so back off.
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
    }
  }

  StreamRunResult out;
  out.answers.reserve(futures.size());
  for (auto& f : futures) out.answers.push_back(f.get());
  session.finish();
  out.metrics = session.metrics();
  return out;
}

} // namespace streamkv
