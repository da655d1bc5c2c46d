// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/qa.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "streamkv/error.hpp"

namespace streamkv {

PositionalMode parse_positional_mode(const std::string& name) {
  if (name == "consecutive") return PositionalMode::Consecutive;
  if (name == "static") return PositionalMode::Static;
  throw Error::config("unknown positional mode '" + name + "' (expected consecutive|static)");
}

const char* positional_mode_name(PositionalMode mode) {
  return mode == PositionalMode::Consecutive ? "consecutive" : "static";
}

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t us_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
}

int argmax_token(const Vec& logits) {
  // max_element returns the first maximum, so ties resolve to the lowest id.
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

// Splices one layer's retrieved frames into ctx. `frames` maps frame index
// to its loaded KV; entries must cover result.frame_indices.
void splice_layer(QAContext& ctx, int layer, const RetrievalResult& result,
                  const std::map<std::int64_t, std::shared_ptr<const FrameKV>>& frames,
                  const ModelConfig& cfg) {
  auto& kv = ctx.layers[static_cast<std::size_t>(layer)];
  auto& positions = ctx.video_positions[static_cast<std::size_t>(layer)];
  const std::size_t dim = static_cast<std::size_t>(cfg.model_dim());
  if (kv.keys.cols == 0) {
    kv.keys = Mat(0, dim);
    kv.values = Mat(0, dim);
  }

  std::int64_t prev = std::numeric_limits<std::int64_t>::min();
  Vec row(dim);
  std::int64_t running = 0;
  for (std::int64_t f : result.frame_indices) {
    if (f <= prev) throw Error::ordering("build_context: retrieved frames must be ascending");
    prev = f;
    const auto& frame = *frames.at(f);
    const auto& layer_kv = frame.layers[static_cast<std::size_t>(layer)];
    for (std::size_t j = 0; j < layer_kv.keys.rows; ++j) {
      const auto encoded_pos = static_cast<std::int64_t>(frame.encode_position_start) +
                               static_cast<std::int64_t>(j);
      const std::int64_t target =
          ctx.mode == PositionalMode::Consecutive ? running : 0;
      std::copy(layer_kv.keys.row(j), layer_kv.keys.row(j) + dim, row.data());
      rope_rotate_inplace(row.data(), dim, target - encoded_pos,
                          static_cast<std::size_t>(cfg.head_dim), cfg.rope_base);
      kv.keys.append_row(row);
      kv.values.append_row(layer_kv.values.row_span(j));
      positions.push_back(target);
      ++running;
    }
  }
  ctx.next_position[static_cast<std::size_t>(layer)] =
      ctx.mode == PositionalMode::Consecutive ? running : 1;
}

std::map<std::int64_t, std::shared_ptr<const FrameKV>> load_union(
    const StoreSnapshot& snapshot, std::span<const RetrievalResult> per_layer) {
  std::map<std::int64_t, std::shared_ptr<const FrameKV>> frames;
  for (const auto& result : per_layer)
    for (std::int64_t f : result.frame_indices)
      if (!frames.count(f)) frames.emplace(f, snapshot.load_one(f));
  return frames;
}

// Runs `ids` through every layer on top of ctx, appending their KV rows.
// Returns the last row's hidden state.
Vec prefill_rows(const ToyModel& model, QAContext& ctx, std::span<const int> ids) {
  const auto& cfg = model.config();
  Mat x = model.embed_tokens(ids);
  Vec last;
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    auto& next_pos = ctx.next_position[static_cast<std::size_t>(layer)];
    std::vector<std::int64_t> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
      positions[i] = next_pos + static_cast<std::int64_t>(i);
    auto out = model.layer_forward(layer, x, ctx.layers[static_cast<std::size_t>(layer)],
                                   positions);
    ctx.layers[static_cast<std::size_t>(layer)].keys.append_rows(out.new_kv.keys);
    ctx.layers[static_cast<std::size_t>(layer)].values.append_rows(out.new_kv.values);
    next_pos += static_cast<std::int64_t>(ids.size());
    x = std::move(out.hidden);
  }
  last.assign(x.row(x.rows - 1), x.row(x.rows - 1) + x.cols);
  return last;
}

// Greedy decode starting from the logits of the question's last token.
void decode_greedy(const ToyModel& model, QAContext& ctx, const Vec& first_logits,
                   const DecodeOptions& opts, QAResult& result) {
  if (opts.max_new_tokens < 0) throw Error::config("max_new_tokens must be >= 0");
  result.prefill_logits = first_logits;
  const auto t0 = Clock::now();
  int cur = argmax_token(first_logits);
  while (static_cast<int>(result.answer_tokens.size()) < opts.max_new_tokens) {
    if (opts.eos_token && cur == *opts.eos_token) break;
    result.answer_tokens.push_back(cur);
    if (static_cast<int>(result.answer_tokens.size()) == opts.max_new_tokens) break;
    const int ids[1] = {cur};
    const Vec hidden = prefill_rows(model, ctx, ids);
    cur = argmax_token(model.logits(hidden));
  }
  result.latency.decode = us_since(t0);
}

QAContext empty_context(const ToyModel& model, PositionalMode mode) {
  QAContext ctx;
  ctx.mode = mode;
  const auto L = static_cast<std::size_t>(model.config().num_layers);
  const auto dim = static_cast<std::size_t>(model.config().model_dim());
  ctx.layers.resize(L);
  for (auto& l : ctx.layers) {
    l.keys = Mat(0, dim);
    l.values = Mat(0, dim);
  }
  ctx.video_positions.resize(L);
  ctx.next_position.assign(L, mode == PositionalMode::Static ? 1 : 0);
  return ctx;
}

} // namespace

QAContext build_context(const StoreSnapshot& snapshot,
                        std::span<const RetrievalResult> per_layer, const ToyModel& model,
                        PositionalMode mode) {
  const auto& cfg = model.config();
  const auto L = static_cast<std::size_t>(cfg.num_layers);
  if (per_layer.size() != 1 && per_layer.size() != L)
    throw Error::shape("build_context: expected 1 or num_layers retrieval results");

  QAContext ctx = empty_context(model, mode);
  const auto frames = load_union(snapshot, per_layer);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& result = per_layer.size() == 1 ? per_layer[0] : per_layer[l];
    splice_layer(ctx, static_cast<int>(l), result, frames, cfg);
  }
  // An empty retrieval leaves next_position at the policy's question start.
  for (std::size_t l = 0; l < L; ++l)
    if (ctx.video_positions[l].empty())
      ctx.next_position[l] = mode == PositionalMode::Static ? 1 : 0;
  return ctx;
}

QAResult answer(const ToyModel& model, QAContext ctx, std::span<const int> question_tokens,
                const DecodeOptions& opts) {
  if (question_tokens.empty()) throw Error::degenerate("answer: empty question");
  QAResult result;
  for (const auto& l : ctx.layers) result.context_tokens += static_cast<std::int64_t>(l.tokens());
  const auto ops_before = kernel_stats().attn_score_ops;

  const auto t0 = Clock::now();
  const Vec hidden = prefill_rows(model, ctx, question_tokens);
  const Vec first_logits = model.logits(hidden);
  result.latency.prefill = us_since(t0);

  decode_greedy(model, ctx, first_logits, opts, result);
  result.attn_score_ops = kernel_stats().attn_score_ops - ops_before;
  return result;
}

QAResult answer_internal(const ToyModel& model, const StoreSnapshot& snapshot,
                         const FrameVectorIndex& index, std::span<const int> question_tokens,
                         const RetrievalParams& params, const DecodeOptions& opts,
                         PositionalMode mode) {
  if (question_tokens.empty()) throw Error::degenerate("answer: empty question");
  const auto& cfg = model.config();
  QAResult result;
  const auto ops_before = kernel_stats().attn_score_ops;

  QAContext ctx = empty_context(model, mode);
  std::map<std::int64_t, std::shared_ptr<const FrameKV>> frame_cache;
  Mat x = model.embed_tokens(question_tokens);

  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    RetrievalResult res;
    res.layer = layer;
    res.r = params.r;
    res.b = params.b;
    if (params.r > 0 && !snapshot.empty()) {
      const auto t0 = Clock::now();
      const Mat raw_q = matmul(x, model.layer(layer).wq);
      const Vec qvec = question_vector_internal(raw_q);
      const auto candidates = index.layer_vectors(layer, snapshot);
      res = retrieve(candidates, qvec, params);
      res.layer = layer;
      result.latency.retrieve += us_since(t0);
    }

    const auto t1 = Clock::now();
    for (std::int64_t f : res.frame_indices)
      if (!frame_cache.count(f)) frame_cache.emplace(f, snapshot.load_one(f));
    splice_layer(ctx, layer, res, frame_cache, cfg);
    result.latency.load += us_since(t1);

    const auto t2 = Clock::now();
    auto& next_pos = ctx.next_position[static_cast<std::size_t>(layer)];
    std::vector<std::int64_t> positions(question_tokens.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
      positions[i] = next_pos + static_cast<std::int64_t>(i);
    auto out = model.layer_forward(layer, x, ctx.layers[static_cast<std::size_t>(layer)],
                                   positions);
    ctx.layers[static_cast<std::size_t>(layer)].keys.append_rows(out.new_kv.keys);
    ctx.layers[static_cast<std::size_t>(layer)].values.append_rows(out.new_kv.values);
    next_pos += static_cast<std::int64_t>(question_tokens.size());
    x = std::move(out.hidden);
    result.latency.prefill += us_since(t2);

    result.context_tokens +=
        static_cast<std::int64_t>(ctx.video_positions[static_cast<std::size_t>(layer)].size());
    result.retrieved.push_back(std::move(res));
  }

  const Vec first_logits = model.logits(Vec(x.row(x.rows - 1), x.row(x.rows - 1) + x.cols));
  decode_greedy(model, ctx, first_logits, opts, result);
  result.attn_score_ops = kernel_stats().attn_score_ops - ops_before;
  return result;
}

QAResult oracle_answer(const ToyModel& model, std::span<const std::vector<int>> frames,
                       std::span<const int> question_tokens, const DecodeOptions& opts,
                       std::int64_t dense_capacity) {
  if (question_tokens.empty()) throw Error::degenerate("oracle_answer: empty question");
  std::vector<int> ids;
  for (const auto& f : frames) ids.insert(ids.end(), f.begin(), f.end());
  ids.insert(ids.end(), question_tokens.begin(), question_tokens.end());
  const auto total = static_cast<std::int64_t>(ids.size()) + opts.max_new_tokens;
  if (total > dense_capacity)
    throw Error::capacity("oracle_answer: " + std::to_string(total) +
                          " tokens exceed the dense capacity of " +
                          std::to_string(dense_capacity));

  QAResult result;
  const auto ops_before = kernel_stats().attn_score_ops;
  QAContext ctx = empty_context(model, PositionalMode::Consecutive);
  const auto t0 = Clock::now();
  const Vec hidden = prefill_rows(model, ctx, ids);
  const Vec first_logits = model.logits(hidden);
  result.latency.prefill = us_since(t0);
  decode_greedy(model, ctx, first_logits, opts, result);
  result.attn_score_ops = kernel_stats().attn_score_ops - ops_before;
  result.context_tokens = static_cast<std::int64_t>(ids.size()) -
                          static_cast<std::int64_t>(question_tokens.size());
  return result;
}

std::vector<RetrievalResult> retrieve_internal(const ToyModel& model,
                                               const StoreSnapshot& snapshot,
                                               const FrameVectorIndex& index,
                                               std::span<const int> question_tokens,
                                               const RetrievalParams& params) {
  DecodeOptions no_decode;
  no_decode.max_new_tokens = 0;
  auto result = answer_internal(model, snapshot, index, question_tokens, params, no_decode,
                                PositionalMode::Consecutive);
  return std::move(result.retrieved);
}

QAResult answer_with_mode(const ToyModel& model, const StoreSnapshot& snapshot,
                          const FrameVectorIndex& index, std::span<const int> question_tokens,
                          const RetrievalParams& params, const DecodeOptions& opts,
                          PositionalMode mode, std::span<const std::int64_t> relevant) {
  if (params.mode == RetrievalMode::Internal && params.r > 0)
    return answer_internal(model, snapshot, index, question_tokens, params, opts, mode);

  RetrievalResult res;
  res.r = params.r;
  res.b = params.b;
  const auto t0 = Clock::now();
  if (params.r > 0 && !snapshot.empty()) {
    switch (params.mode) {
      case RetrievalMode::External:
        res = retrieve_external(index, snapshot, question_tokens, params);
        break;
      case RetrievalMode::Uniform:
        res = uniform_baseline(snapshot.max_frame_index() + 1, params.r);
        break;
      case RetrievalMode::OracleLabels:
        if (relevant.empty())
          throw Error::config("oracle retrieval mode requires relevant frame labels");
        res = oracle_baseline(relevant, snapshot.max_frame_index(), params.r);
        break;
      case RetrievalMode::Internal:
        break; // handled above; r == 0 falls through to an empty context
    }
  }
  const std::int64_t retrieve_us = us_since(t0);

  const auto t1 = Clock::now();
  const RetrievalResult shared[1] = {res};
  QAContext ctx = build_context(snapshot, shared, model, mode);
  const std::int64_t load_us = us_since(t1);

  QAResult out = answer(model, std::move(ctx), question_tokens, opts);
  out.latency.retrieve = retrieve_us;
  out.latency.load = load_us;
  out.retrieved.push_back(std::move(res));
  return out;
}

} // namespace streamkv
