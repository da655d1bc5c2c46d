// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/trace.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "streamkv/error.hpp"
#include "streamkv/rng.hpp"

namespace streamkv {

namespace {

// Seed-stream tags. 1000+pattern for pattern tokens, 2000+frame for
// background frames; disjoint from the model's weight tags by construction
// (different seeds anyway).
constexpr std::uint64_t kPatternTagBase = 1000;
constexpr std::uint64_t kBackgroundTagBase = 2000;

void validate_spec(const SyntheticTraceSpec& spec) {
  if (spec.frames < 1) throw Error::trace_spec("trace needs at least one frame");
  if (spec.tokens_per_frame < 1) throw Error::trace_spec("tokens_per_frame must be >= 1");
  if (spec.vocab_size < 8) throw Error::trace_spec("vocab_size must be >= 8");
  for (const auto& n : spec.needles) {
    if (n.first_frame < 0 || n.last_frame < n.first_frame || n.last_frame >= spec.frames)
      throw Error::trace_spec("needle range [" + std::to_string(n.first_frame) + ", " +
                              std::to_string(n.last_frame) + "] outside the trace");
    if (n.pattern_id < 0) throw Error::trace_spec("pattern_id must be >= 0");
  }
  for (std::size_t i = 0; i < spec.needles.size(); ++i)
    for (std::size_t j = i + 1; j < spec.needles.size(); ++j) {
      const auto& a = spec.needles[i];
      const auto& b = spec.needles[j];
      if (a.first_frame <= b.last_frame && b.first_frame <= a.last_frame)
        throw Error::trace_spec("needles " + std::to_string(i) + " and " + std::to_string(j) +
                                " overlap");
    }
  for (const auto& q : spec.questions) {
    if (q.admission_frame < 0 || q.admission_frame >= spec.frames)
      throw Error::trace_spec("question admission frame " + std::to_string(q.admission_frame) +
                              " outside the trace");
  }
}

} // namespace

std::vector<int> pattern_tokens(const SyntheticTraceSpec& spec, int pattern_id) {
  const int lo = spec.vocab_size / 2;
  const int hi = spec.vocab_size - 1; // exclusive; vocab-1 stays reserved for EOS
  SplitMix64 g(mix_seed(spec.seed, kPatternTagBase + static_cast<std::uint64_t>(pattern_id)));
  std::vector<int> tokens(static_cast<std::size_t>(spec.tokens_per_frame));
  for (auto& t : tokens)
    t = lo + static_cast<int>(g.next_below(static_cast<std::uint64_t>(hi - lo)));
  return tokens;
}

SyntheticTrace gen_trace(const SyntheticTraceSpec& spec) {
  validate_spec(spec);

  SyntheticTrace trace;
  trace.spec = spec;
  trace.frames.resize(static_cast<std::size_t>(spec.frames));

  const int bg_lo = 2;
  const int bg_hi = spec.vocab_size / 2;
  for (std::int64_t f = 0; f < spec.frames; ++f) {
    auto& frame = trace.frames[static_cast<std::size_t>(f)];
    frame.frame_index = f;
    SplitMix64 g(mix_seed(spec.seed, kBackgroundTagBase + static_cast<std::uint64_t>(f)));
    frame.tokens.resize(static_cast<std::size_t>(spec.tokens_per_frame));
    for (auto& t : frame.tokens)
      t = bg_lo + static_cast<int>(g.next_below(static_cast<std::uint64_t>(bg_hi - bg_lo)));
  }

  for (const auto& n : spec.needles) {
    const auto tokens = pattern_tokens(spec, n.pattern_id);
    for (std::int64_t f = n.first_frame; f <= n.last_frame; ++f) {
      auto& frame = trace.frames[static_cast<std::size_t>(f)];
      frame.tokens = tokens;
      frame.labels.push_back(n.pattern_id);
    }
  }

  std::int64_t qid = 0;
  for (const auto& q : spec.questions) {
    TraceQuestionRecord rec;
    rec.question_id = qid++;
    rec.admission_frame = q.admission_frame;
    rec.pattern_id = q.pattern_id;
    rec.tokens = pattern_tokens(spec, q.pattern_id);
    for (const auto& n : spec.needles)
      if (n.pattern_id == q.pattern_id)
        for (std::int64_t f = n.first_frame; f <= std::min(n.last_frame, q.admission_frame); ++f)
          rec.relevant_frames.push_back(f);
    std::sort(rec.relevant_frames.begin(), rec.relevant_frames.end());
    if (rec.relevant_frames.empty())
      throw Error::trace_spec("question " + std::to_string(rec.question_id) + " about pattern " +
                              std::to_string(q.pattern_id) +
                              " has no relevant frames at admission frame " +
                              std::to_string(q.admission_frame));
    trace.questions.push_back(std::move(rec));
  }
  return trace;
}

// ============================================================================
// JSONL
// ============================================================================

namespace {

nlohmann::json parse_line(const std::string& line, const std::string& where, std::size_t num) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error::corruption(where + " line " + std::to_string(num) + ": " + e.what());
  }
}

} // namespace

void write_frames_jsonl(const std::filesystem::path& path,
                        const std::vector<TraceFrameRecord>& frames) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error::storage("cannot write " + path.string());
  for (const auto& f : frames) {
    nlohmann::json j{{"frame_index", f.frame_index}, {"tokens", f.tokens}, {"labels", f.labels}};
    out << j.dump() << "\n";
  }
}

std::vector<TraceFrameRecord> read_frames_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error::not_found("cannot open " + path.string());
  std::vector<TraceFrameRecord> frames;
  std::string line;
  std::size_t num = 0;
  while (std::getline(in, line)) {
    ++num;
    if (line.empty()) continue;
    const auto j = parse_line(line, path.string(), num);
    TraceFrameRecord f;
    f.frame_index = j.at("frame_index").get<std::int64_t>();
    f.tokens = j.at("tokens").get<std::vector<int>>();
    if (j.contains("labels")) f.labels = j.at("labels").get<std::vector<int>>();
    if (f.frame_index != static_cast<std::int64_t>(frames.size()))
      throw Error::ordering(path.string() + ": frame indices must run 0,1,2,...");
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_questions_jsonl(const std::filesystem::path& path,
                           const std::vector<TraceQuestionRecord>& questions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error::storage("cannot write " + path.string());
  for (const auto& q : questions) {
    nlohmann::json j{{"question_id", q.question_id},
                     {"admission_frame", q.admission_frame},
                     {"pattern_id", q.pattern_id},
                     {"tokens", q.tokens},
                     {"relevant_frames", q.relevant_frames}};
    out << j.dump() << "\n";
  }
}

std::vector<TraceQuestionRecord> read_questions_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error::not_found("cannot open " + path.string());
  std::vector<TraceQuestionRecord> questions;
  std::string line;
  std::size_t num = 0;
  while (std::getline(in, line)) {
    ++num;
    if (line.empty()) continue;
    const auto j = parse_line(line, path.string(), num);
    TraceQuestionRecord q;
    q.question_id = j.at("question_id").get<std::int64_t>();
    q.admission_frame = j.at("admission_frame").get<std::int64_t>();
    if (j.contains("pattern_id")) q.pattern_id = j.at("pattern_id").get<int>();
    q.tokens = j.at("tokens").get<std::vector<int>>();
    if (j.contains("relevant_frames"))
      q.relevant_frames = j.at("relevant_frames").get<std::vector<std::int64_t>>();
    questions.push_back(std::move(q));
  }
  return questions;
}

} // namespace streamkv
