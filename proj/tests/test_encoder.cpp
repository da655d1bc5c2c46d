// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "streamkv/encoder.hpp"
#include "streamkv/rng.hpp"
#include "support/reference_model.hpp"
#include "support/test_util.hpp"

using namespace streamkv;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_dim = 4;
  cfg.tokens_per_frame = 4;
  cfg.vocab_size = 32;
  cfg.local_window = 8;
  cfg.chunk_tokens_max = 8;
  cfg.sink_frames = 1;
  return cfg;
}

std::vector<std::vector<int>> make_frames(const ModelConfig& cfg, int count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::vector<int>> frames(static_cast<std::size_t>(count));
  for (auto& f : frames) {
    f.resize(static_cast<std::size_t>(cfg.tokens_per_frame));
    for (auto& t : f) t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.vocab_size)));
  }
  return frames;
}

std::vector<int> flatten(const std::vector<std::vector<int>>& frames) {
  std::vector<int> ids;
  for (const auto& f : frames) ids.insert(ids.end(), f.begin(), f.end());
  return ids;
}

struct Encoded {
  KVStore store;
  Mat hidden;
  std::vector<std::size_t> spans;

  Encoded(const ModelConfig& cfg) : store(cfg, {}) {}
};

std::unique_ptr<Encoded> encode_all(const ToyModel& model,
                                    const std::vector<std::vector<int>>& frames,
                                    EncoderConfig ecfg) {
  auto out = std::make_unique<Encoded>(model.config());
  StreamingEncoder enc(model, out->store, ecfg);
  enc.record_hidden(true);
  enc.encode_frames(frames);
  out->hidden = enc.hidden_rows();
  out->spans = enc.attention_spans();
  return out;
}

void check_against_reference(const ModelConfig& cfg, const Encoded& got, const refmodel::RefOut& ref,
                             std::size_t total_tokens) {
  REQUIRE(got.hidden.rows == total_tokens);
  double dev = refmodel::max_dev(ref.hidden, got.hidden);
  const auto snap = got.store.snapshot();
  for (std::int64_t fi = 0; fi <= snap.max_frame_index(); ++fi) {
    const auto frame = snap.load_one(fi);
    for (int l = 0; l < cfg.num_layers; ++l) {
      const auto& stored = frame->layers[static_cast<std::size_t>(l)];
      const auto& want = ref.kv[static_cast<std::size_t>(l)];
      for (std::size_t r = 0; r < stored.keys.rows; ++r) {
        const std::size_t tok = static_cast<std::size_t>(fi) * cfg.tokens_per_frame + r;
        for (std::size_t c = 0; c < stored.keys.cols; ++c) {
          dev = std::max(dev, std::abs(want.keys[tok][c] - static_cast<double>(stored.keys.at(r, c))));
          dev = std::max(dev,
                         std::abs(want.values[tok][c] - static_cast<double>(stored.values.at(r, c))));
        }
      }
    }
  }
  CHECK(dev < 1e-5);
}

} // namespace

TEST_CASE("streams shorter than the window match the dense reference") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 3);
  const auto frames = make_frames(cfg, 2, 600); // 8 tokens == window, no eviction
  const auto ids = flatten(frames);

  const auto got = encode_all(model, frames, {});
  const auto ref = refmodel::full_forward(model, ids);
  check_against_reference(cfg, *got, ref, ids.size());
}

TEST_CASE("long streams match the windowed reference with clamped sinks") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 3);
  const auto frames = make_frames(cfg, 12, 601); // 48 tokens, far past the window
  const auto ids = flatten(frames);

  const auto got = encode_all(model, frames, {});
  const auto ref = refmodel::windowed_forward(model, ids, /*clamp=*/true);
  check_against_reference(cfg, *got, ref, ids.size());

  SUBCASE("the distance ceiling changes far-sink attention") {
    EncoderConfig raw;
    raw.disable_distance_ceiling = true;
    const auto unclamped = encode_all(model, frames, raw);
    const auto ref_raw = refmodel::windowed_forward(model, ids, /*clamp=*/false);
    check_against_reference(cfg, *unclamped, ref_raw, ids.size());
    CHECK(unclamped->hidden.data != got->hidden.data);
  }
}

TEST_CASE("attention span is min(t+1, window + sink tokens)") {
  const ModelConfig cfg = tiny_cfg(); // window 8, sink 4
  const ToyModel model(cfg, 5);
  const auto frames = make_frames(cfg, 10, 602);
  const auto got = encode_all(model, frames, {});
  REQUIRE(got->spans.size() == 40);
  for (std::size_t t = 0; t < got->spans.size(); ++t) {
    const std::size_t want =
        std::min<std::size_t>(t + 1, static_cast<std::size_t>(cfg.local_window) +
                                         static_cast<std::size_t>(cfg.sink_tokens()));
    CHECK(got->spans[t] == want);
  }
}

TEST_CASE("chunk granularity does not change a single output bit") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 7);
  const auto frames = make_frames(cfg, 9, 603);

  EncoderConfig by_token;
  by_token.step_tokens = 1;
  EncoderConfig by_frame; // 0 = one frame per step
  EncoderConfig by_max;
  by_max.step_tokens = cfg.chunk_tokens_max;

  const auto a = encode_all(model, frames, by_token);
  const auto b = encode_all(model, frames, by_frame);
  const auto c = encode_all(model, frames, by_max);

  CHECK(a->hidden.data == b->hidden.data);
  CHECK(b->hidden.data == c->hidden.data);

  const auto sa = a->store.snapshot(), sb = b->store.snapshot(), sc = c->store.snapshot();
  REQUIRE(sa.max_frame_index() == 8);
  REQUIRE(sb.max_frame_index() == 8);
  REQUIRE(sc.max_frame_index() == 8);
  for (std::int64_t i = 0; i <= 8; ++i) {
    const auto fa = sa.load_one(i), fb = sb.load_one(i), fc = sc.load_one(i);
    for (int l = 0; l < cfg.num_layers; ++l) {
      CHECK(fa->layers[static_cast<std::size_t>(l)].keys.data ==
            fb->layers[static_cast<std::size_t>(l)].keys.data);
      CHECK(fb->layers[static_cast<std::size_t>(l)].keys.data ==
            fc->layers[static_cast<std::size_t>(l)].keys.data);
      CHECK(fa->layers[static_cast<std::size_t>(l)].values.data ==
            fb->layers[static_cast<std::size_t>(l)].values.data);
      CHECK(fb->layers[static_cast<std::size_t>(l)].values.data ==
            fc->layers[static_cast<std::size_t>(l)].values.data);
    }
  }
}

TEST_CASE("completed frames carry index, timestamp and encode position") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 9);
  KVStore store(cfg, {});
  EncoderConfig ecfg;
  ecfg.fps = 0.5;
  StreamingEncoder enc(model, store, ecfg);

  std::vector<std::pair<std::int64_t, std::vector<int>>> seen;
  enc.set_frame_callback([&](const FrameKV& f, std::span<const int> toks) {
    seen.emplace_back(f.frame_index, std::vector<int>(toks.begin(), toks.end()));
  });

  const auto frames = make_frames(cfg, 5, 604);
  const auto done = enc.encode_frames(frames);
  REQUIRE(done.size() == 5);
  REQUIRE(seen.size() == 5);
  for (std::int64_t i = 0; i < 5; ++i) {
    const auto& f = *done[static_cast<std::size_t>(i)];
    CHECK(f.frame_index == i);
    CHECK(f.timestamp == static_cast<double>(i) / 0.5);
    CHECK(f.encode_position_start == static_cast<std::uint64_t>(i) * 4);
    CHECK(seen[static_cast<std::size_t>(i)].first == i);
    CHECK(seen[static_cast<std::size_t>(i)].second == frames[static_cast<std::size_t>(i)]);
  }
  CHECK(enc.tokens_encoded() == 20);
  CHECK(enc.next_frame_index() == 5);
  const auto pos = enc.assign_positions(3);
  CHECK(pos == std::vector<std::int64_t>{20, 21, 22});
  CHECK(enc.tokens_encoded() == 20); // peek only
}

TEST_CASE("frame callback fires before the frame is visible in the store") {
  // Gated readers wake on the store append; anything the callback feeds
  // (retrieval indexes) must already be in place by then.
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 9);
  KVStore store(cfg, {});
  StreamingEncoder enc(model, store, {});
  int calls = 0;
  enc.set_frame_callback([&](const FrameKV& f, std::span<const int>) {
    CHECK(store.max_frame_index() == f.frame_index - 1);
    ++calls;
  });
  enc.encode_frames(make_frames(cfg, 3, 605));
  CHECK(calls == 3);
  CHECK(store.max_frame_index() == 2);
}

TEST_CASE("partial chunks keep the frame under construction out of the store") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 9);
  KVStore store(cfg, {});
  EncoderConfig ecfg;
  ecfg.step_tokens = 2; // half a frame per step
  StreamingEncoder enc(model, store, ecfg);
  const auto frames = make_frames(cfg, 1, 605);
  const auto done = enc.encode_chunk(std::span(frames.data(), 1));
  CHECK(done.size() == 1);
  CHECK(store.frame_count() == 1);
}

TEST_CASE("encoder rejects malformed inputs") {
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 11);
  KVStore store(cfg, {});
  StreamingEncoder enc(model, store, {});

  std::vector<std::vector<int>> short_frame = {{1, 2, 3}};
  testutil::expect_error(ErrorKind::Shape, [&] { (void)enc.encode_chunk(short_frame); });

  std::vector<std::vector<int>> too_many = make_frames(cfg, 3, 606); // 12 > chunk_tokens_max 8
  testutil::expect_error(ErrorKind::Shape, [&] { (void)enc.encode_chunk(too_many); });

  EncoderConfig bad;
  bad.step_tokens = cfg.chunk_tokens_max + 1;
  testutil::expect_error(ErrorKind::Config, [&] { StreamingEncoder e(model, store, bad); });
  EncoderConfig bad_fps;
  bad_fps.fps = 0.0;
  testutil::expect_error(ErrorKind::Config, [&] { StreamingEncoder e(model, store, bad_fps); });
}

TEST_CASE("rate control subsamples a faster source") {
  // 30 fps source down to 0.5 fps: every 60th frame, 108000 -> 1800.
  std::vector<std::vector<int>> source(108000, std::vector<int>{1});
  for (std::size_t i = 0; i < source.size(); ++i) source[i][0] = static_cast<int>(i % 97);
  const auto kept = ingest_rate_control(source, 0.5, 30.0);
  REQUIRE(kept.size() == 1800);
  CHECK(kept[0].tokens[0] == source[0][0]);
  CHECK(kept[1].tokens[0] == source[60][0]);
  CHECK(kept[0].timestamp == 0.0);
  CHECK(kept[1].timestamp == 2.0);
  CHECK(kept[1799].frame_index == 1799);

  // Source already at the target rate passes through unchanged.
  std::vector<std::vector<int>> slow(10, std::vector<int>{2});
  const auto same = ingest_rate_control(slow, 1.0);
  REQUIRE(same.size() == 10);
  CHECK(same[3].timestamp == 3.0);

  testutil::expect_error(ErrorKind::Config, [&] { (void)ingest_rate_control(slow, 0.0); });
}

TEST_CASE("working state stays bounded while the stream grows") {
  // Encode a long stream and make sure per-token attention work plateaus at
  // window + sink rather than growing with t.
  const ModelConfig cfg = tiny_cfg();
  const ToyModel model(cfg, 13);
  KVStore store(cfg, {});
  StreamingEncoder enc(model, store, {});
  const auto frames = make_frames(cfg, 50, 607);
  enc.encode_frames(frames);
  const auto& spans = enc.attention_spans();
  const std::size_t cap =
      static_cast<std::size_t>(cfg.local_window) + static_cast<std::size_t>(cfg.sink_tokens());
  for (std::size_t t = 20; t < spans.size(); ++t) CHECK(spans[t] == cap);
  reset_kernel_stats();
  enc.encode_frames(make_frames(cfg, 1, 608));
  const auto ops_late = kernel_stats().attn_score_ops;
  CHECK(ops_late == cfg.tokens_per_frame * cap * static_cast<std::size_t>(cfg.num_heads) *
                        static_cast<std::size_t>(cfg.num_layers));
}
