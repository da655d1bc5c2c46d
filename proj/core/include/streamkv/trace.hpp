// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "streamkv/model.hpp"

namespace streamkv {

// A needle: a run of frames that all carry one pattern's tokens. Questions
// about that pattern should retrieve exactly these frames.
struct NeedleSpec {
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0; // inclusive
  int pattern_id = 0;
};

struct QuestionSpec {
  std::int64_t admission_frame = 0; // newest frame visible to this question
  int pattern_id = 0;
};

struct SyntheticTraceSpec {
  std::uint64_t seed = 1;
  std::int64_t frames = 100;
  int tokens_per_frame = 16;
  int vocab_size = 256;
  std::vector<NeedleSpec> needles;
  std::vector<QuestionSpec> questions;
};

struct TraceFrameRecord {
  std::int64_t frame_index = 0;
  std::vector<int> tokens;
  std::vector<int> labels; // pattern ids planted in this frame
};

struct TraceQuestionRecord {
  std::int64_t question_id = 0;
  std::int64_t admission_frame = 0;
  int pattern_id = -1;
  std::vector<int> tokens;
  std::vector<std::int64_t> relevant_frames; // ascending
};

struct SyntheticTrace {
  SyntheticTraceSpec spec;
  std::vector<TraceFrameRecord> frames;
  std::vector<TraceQuestionRecord> questions;
};

// Deterministic planted-needle trace. Background frames draw tokens from
// [2, vocab/2); every frame of a needle repeats its pattern's tokens, drawn
// from [vocab/2, vocab-1) so patterns, background and the reserved EOS id
// (vocab-1) never collide. A question's tokens are its pattern's tokens and
// its relevant set is every needle frame of that pattern at or before the
// admission frame. Throws TraceSpec on overlapping needles, out-of-range
// frames, or a question whose relevant set would be empty.
SyntheticTrace gen_trace(const SyntheticTraceSpec& spec);

// The pattern token list used by gen_trace for (seed, pattern_id).
std::vector<int> pattern_tokens(const SyntheticTraceSpec& spec, int pattern_id);

// Line-delimited JSON, one record per line:
//   frames:    {"frame_index": n, "tokens": [...], "labels": [...]}
//   questions: {"question_id": n, "admission_frame": n, "pattern_id": n,
//               "tokens": [...], "relevant_frames": [...]}
void write_frames_jsonl(const std::filesystem::path& path,
                        const std::vector<TraceFrameRecord>& frames);
std::vector<TraceFrameRecord> read_frames_jsonl(const std::filesystem::path& path);
void write_questions_jsonl(const std::filesystem::path& path,
                           const std::vector<TraceQuestionRecord>& questions);
std::vector<TraceQuestionRecord> read_questions_jsonl(const std::filesystem::path& path);

} // namespace streamkv
