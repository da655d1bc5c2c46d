// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

// Microbenchmarks for the hot paths: streaming encode, retrieval scoring,
// retrieval-backed answering, and answering while the encoder is busy.
// Run with --benchmark_min_time=... to trade precision for wall time.

#include <atomic>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include <benchmark/benchmark.h>

#include "streamkv/qa.hpp"
#include "streamkv/rng.hpp"
#include "streamkv/serving.hpp"

using namespace streamkv;

namespace {

std::vector<std::vector<int>> random_frames(const ModelConfig& cfg, std::int64_t count,
                                            std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::vector<int>> frames(static_cast<std::size_t>(count));
  for (auto& f : frames) {
    f.resize(static_cast<std::size_t>(cfg.tokens_per_frame));
    for (auto& t : f)
      t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.vocab_size)));
  }
  return frames;
}

std::vector<int> random_question(const ModelConfig& cfg, std::uint64_t seed, int len = 8) {
  SplitMix64 rng(seed);
  std::vector<int> q(static_cast<std::size_t>(len));
  for (auto& t : q)
    t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.vocab_size)));
  return q;
}

// Encoded fixture shared by the answering benchmarks: built once per stream
// length, reused across iterations.
struct Encoded {
  ModelConfig cfg;
  ToyModel model;
  KVStore store;
  FrameVectorIndex index;

  explicit Encoded(std::int64_t frames)
      : model(cfg, 1), store(cfg, {}), index(cfg, FrameVectorRope::Post) {
    StreamingEncoder enc(model, store, {});
    enc.set_frame_callback(
        [&](const FrameKV& f, std::span<const int> toks) { index.add_frame(f, toks); });
    enc.encode_frames(random_frames(cfg, frames, 11));
  }
};

Encoded& encoded_fixture(std::int64_t frames) {
  static std::map<std::int64_t, std::unique_ptr<Encoded>> cache;
  auto& slot = cache[frames];
  if (!slot) slot = std::make_unique<Encoded>(frames);
  return *slot;
}

// Frames per second through the sliding-window encoder.
void BM_EncodeFrames(benchmark::State& state) {
  const ModelConfig cfg;
  const ToyModel model(cfg, 1);
  const auto frames = random_frames(cfg, state.range(0), 22);
  for (auto _ : state) {
    KVStore store(cfg, {});
    StreamingEncoder enc(model, store, {});
    benchmark::DoNotOptimize(enc.encode_frames(frames));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["frames_per_s"] =
      benchmark::Counter(static_cast<double>(state.iterations() * state.range(0)),
                         benchmark::Counter::kIsRate);
}
BENCHMARK(BM_EncodeFrames)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

// Similarity scoring and selection alone, over n candidate frame vectors.
void BM_RetrieveScore(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  SplitMix64 rng(33);
  std::vector<FrameVector> cands(n);
  for (std::size_t i = 0; i < n; ++i) {
    cands[i].frame_index = static_cast<std::int64_t>(i);
    cands[i].vector.resize(32);
    for (auto& v : cands[i].vector) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  }
  Vec q(32);
  for (auto& v : q) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  RetrievalParams params;
  params.r = 64;
  params.b = 4;
  for (auto _ : state) benchmark::DoNotOptimize(retrieve(cands, q, params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RetrieveScore)->Arg(256)->Arg(4096)->Unit(benchmark::kMicrosecond);

// End-to-end answer latency against streams of different lengths. The
// attention work is capped by r regardless of stream length; the residual
// growth is the O(stream) candidate scan in retrieval scoring.
void BM_AnswerByStreamLength(benchmark::State& state) {
  auto& fx = encoded_fixture(state.range(0));
  const auto question = random_question(fx.cfg, 44);
  RetrievalParams params;
  params.r = 16;
  DecodeOptions opts;
  opts.max_new_tokens = 8;
  for (auto _ : state)
    benchmark::DoNotOptimize(answer_internal(fx.model, fx.store.snapshot(), fx.index, question,
                                             params, opts, PositionalMode::Consecutive));
}
BENCHMARK(BM_AnswerByStreamLength)->Arg(64)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

// Answer latency while an encoder thread streams into a separate store.
// Compare against BM_AnswerByStreamLength/512 for the contention cost.
void BM_AnswerUnderEncode(benchmark::State& state) {
  auto& fx = encoded_fixture(512);
  const auto question = random_question(fx.cfg, 44);
  RetrievalParams params;
  params.r = 16;
  DecodeOptions opts;
  opts.max_new_tokens = 8;

  std::atomic<bool> stop{false};
  const auto side_frames = random_frames(fx.cfg, 64, 55);
  std::thread encoder([&] {
    const ToyModel side_model(fx.cfg, 2);
    while (!stop.load(std::memory_order_relaxed)) {
      KVStore side_store(fx.cfg, {});
      StreamingEncoder enc(side_model, side_store, {});
      enc.encode_frames(side_frames);
    }
  });
  for (auto _ : state)
    benchmark::DoNotOptimize(answer_internal(fx.model, fx.store.snapshot(), fx.index, question,
                                             params, opts, PositionalMode::Consecutive));
  stop.store(true);
  encoder.join();
}
BENCHMARK(BM_AnswerUnderEncode)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
