// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamkv/kv_store.hpp"
#include "streamkv/model.hpp"
#include "streamkv/retrieval.hpp"

namespace streamkv {

// How retrieved video tokens are positioned for answering:
//   Consecutive: the n retrieved tokens are re-rotated to positions 0..n-1,
//     in stream order, as if they were the only context ever seen. The
//     question then starts at n.
//   Static: every retrieved video token shares position 0; the question
//     starts at 1. Order information inside the video is discarded.
enum class PositionalMode { Consecutive, Static };

PositionalMode parse_positional_mode(const std::string& name);
const char* positional_mode_name(PositionalMode mode);

struct DecodeOptions {
  int max_new_tokens = 16;
  std::optional<int> eos_token; // stops decoding when sampled; never emitted
};

struct StageLatencyUs {
  std::int64_t retrieve = 0; // similarity scoring and selection
  std::int64_t load = 0;     // frame fetch plus context assembly
  std::int64_t prefill = 0;  // question forward pass
  std::int64_t decode = 0;   // answer token generation

  std::int64_t total() const { return retrieve + load + prefill + decode; }
};

struct QAResult {
  std::vector<int> answer_tokens;
  std::vector<RetrievalResult> retrieved; // one per layer, or one shared entry
  Vec prefill_logits; // logits after the question prefill, before decoding
  StageLatencyUs latency;
  std::uint64_t attn_score_ops = 0; // attention (query, key) pairs this answer visited
  std::int64_t context_tokens = 0;  // video tokens summed across layers
};

// Per-layer working context for one question. build_context fills the video
// part; answering appends question and generated rows in place.
struct QAContext {
  PositionalMode mode = PositionalMode::Consecutive;
  std::vector<LayerKV> layers;
  std::vector<std::vector<std::int64_t>> video_positions; // probe: positions given per layer
  std::vector<std::int64_t> next_position;                // per layer
};

// Assembles per-layer contexts from retrieved frames. `per_layer` holds
// either one result per layer or a single result shared by all layers.
// Stored keys are re-rotated from their encode positions to the policy's
// target positions in one fused step (rotate by target - encoded). Frames
// appear in ascending stream order; relative order is never shuffled.
QAContext build_context(const StoreSnapshot& snapshot,
                        std::span<const RetrievalResult> per_layer, const ToyModel& model,
                        PositionalMode mode);

// Greedy QA over a prepared context: prefill the question, then decode up to
// max_new_tokens greedily (argmax, ties toward the lower token id). Fills
// prefill/decode latency and the attention-op count; the caller owns
// retrieve/load attribution for the steps it ran itself.
QAResult answer(const ToyModel& model, QAContext ctx, std::span<const int> question_tokens,
                const DecodeOptions& opts);

// Internal-retrieval QA: at each layer, retrieve with that layer's question
// vector (mean pre-rotation query rows), splice the retrieved context in,
// and run the question rows through the layer before moving to the next.
// The question KV computed during this pass is reused for decoding.
QAResult answer_internal(const ToyModel& model, const StoreSnapshot& snapshot,
                         const FrameVectorIndex& index, std::span<const int> question_tokens,
                         const RetrievalParams& params, const DecodeOptions& opts,
                         PositionalMode mode);

// Ground-truth path: one monolithic full-causal forward over every frame
// token plus the question, no window, no retrieval, then the same greedy
// decode. Throws Capacity when total tokens exceed dense_capacity.
QAResult oracle_answer(const ToyModel& model, std::span<const std::vector<int>> frames,
                       std::span<const int> question_tokens, const DecodeOptions& opts,
                       std::int64_t dense_capacity = 8192);

// One-stop dispatch used by serving and the benchmark harness. `relevant`
// feeds OracleLabels mode and is ignored otherwise; r == 0 answers from an
// empty context without touching retrieval.
QAResult answer_with_mode(const ToyModel& model, const StoreSnapshot& snapshot,
                          const FrameVectorIndex& index, std::span<const int> question_tokens,
                          const RetrievalParams& params, const DecodeOptions& opts,
                          PositionalMode mode, std::span<const std::int64_t> relevant = {});

} // namespace streamkv
