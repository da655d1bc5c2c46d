// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamkv/encoder.hpp"
#include "streamkv/qa.hpp"
#include "streamkv/trace.hpp"

namespace streamkv {

struct SweepSpec {
  std::vector<RetrievalMode> modes{RetrievalMode::Internal};
  std::vector<int> r_values{64};
  std::vector<int> b_values{1};
};

struct BenchRow {
  std::string mode;
  int r = 0;
  int b = 1;
  std::int64_t question_id = 0;
  std::int64_t admission_frame = 0;
  bool has_recall = false;
  double recall = 0.0; // over the union of per-layer retrieved sets
  StageLatencyUs stages;
  std::uint64_t attn_score_ops = 0;
  int blocks_selected = 0; // ceil(r/b) capped by candidate count
  std::vector<int> answer_tokens;
  std::vector<std::vector<std::int64_t>> retrieved_per_layer;
};

struct BenchAggregate {
  std::string mode;
  int r = 0;
  int b = 1;
  std::int64_t questions = 0;
  bool has_recall = false;
  double mean_recall = 0.0;
  double mean_total_us = 0.0;
};

// Every field except the stage latencies is a deterministic function of
// (trace, model, sweep).
struct BenchReport {
  std::uint64_t seed = 0;
  std::int64_t frames = 0;
  std::vector<BenchRow> rows;
  std::vector<BenchAggregate> aggregates;
};

// Encodes the trace once, then answers every question at every sweep point
// against the same store. Questions are answered at their admission frame's
// snapshot quantity, exactly as the serving path would see them.
BenchReport run_bench(const SyntheticTrace& trace, const ToyModel& model,
                      const StoreConfig& store_cfg, const EncoderConfig& encoder_cfg,
                      const SweepSpec& sweep, const RetrievalParams& base_params,
                      const DecodeOptions& decode);

// One JSON object per line: row records then aggregate records.
std::string bench_report_jsonl(const BenchReport& report);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double max_deviation = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_pass() const;
};

// Self-checks against the engine's own dense oracle:
//   window_fidelity    streamed KV on a window-sized prefix matches a
//                      monolithic full-causal forward within 1e-5
//   chunk_invariance   re-encoding at step sizes {1, frame, max} is
//                      bit-identical
//   qa_oracle_match    answering with every frame retrieved reproduces the
//                      dense no-retrieval answer exactly
//   store_roundtrip    flush to disk and reload is bit-identical
VerifyReport verify_oracle(const SyntheticTrace& trace, const ToyModel& model,
                           const EncoderConfig& encoder_cfg,
                           const std::filesystem::path& scratch_dir);

} // namespace streamkv
