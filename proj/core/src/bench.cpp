// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/bench.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "streamkv/error.hpp"
#include "streamkv/serving.hpp"

namespace streamkv {

namespace {

std::vector<std::vector<int>> trace_token_frames(const SyntheticTrace& trace) {
  std::vector<std::vector<int>> frames;
  frames.reserve(trace.frames.size());
  for (const auto& f : trace.frames) frames.push_back(f.tokens);
  return frames;
}

std::vector<std::int64_t> retrieved_union(const QAResult& result) {
  std::set<std::int64_t> u;
  for (const auto& r : result.retrieved) u.insert(r.frame_indices.begin(), r.frame_indices.end());
  return {u.begin(), u.end()};
}

} // namespace

BenchReport run_bench(const SyntheticTrace& trace, const ToyModel& model,
                      const StoreConfig& store_cfg, const EncoderConfig& encoder_cfg,
                      const SweepSpec& sweep, const RetrievalParams& base_params,
                      const DecodeOptions& decode) {
  if (sweep.modes.empty() || sweep.r_values.empty() || sweep.b_values.empty())
    throw Error::config("run_bench: empty sweep");

  KVStore store(model.config(), store_cfg);
  auto embedder = std::make_shared<BagOfTokensEmbedder>(
      model.config().vocab_size, static_cast<std::size_t>(model.config().model_dim()),
      model.seed());
  FrameVectorIndex index(model.config(), base_params.frame_vector_rope, embedder);
  StreamingEncoder encoder(model, store, encoder_cfg);
  encoder.set_frame_callback(
      [&](const FrameKV& frame, std::span<const int> tokens) { index.add_frame(frame, tokens); });
  encoder.encode_frames(trace_token_frames(trace));
  store.close();

  BenchReport report;
  report.seed = trace.spec.seed;
  report.frames = store.frame_count();

  for (const auto mode : sweep.modes) {
    for (const int r : sweep.r_values) {
      for (const int b : sweep.b_values) {
        BenchAggregate agg;
        agg.mode = retrieval_mode_name(mode);
        agg.r = r;
        agg.b = b;
        double recall_sum = 0.0;
        std::int64_t recall_n = 0;
        double total_us_sum = 0.0;

        for (const auto& q : trace.questions) {
          RetrievalParams params = base_params;
          params.mode = mode;
          params.r = r;
          params.b = b;
          const auto snapshot = store.snapshot_at(q.admission_frame);
          reset_kernel_stats();
          QAResult result =
              answer_with_mode(model, snapshot, index, q.tokens, params, decode,
                               PositionalMode::Consecutive, q.relevant_frames);

          BenchRow row;
          row.mode = agg.mode;
          row.r = r;
          row.b = b;
          row.question_id = q.question_id;
          row.admission_frame = q.admission_frame;
          row.stages = result.latency;
          row.attn_score_ops = result.attn_score_ops;
          row.answer_tokens = result.answer_tokens;
          if (!result.retrieved.empty()) row.blocks_selected = result.retrieved[0].blocks_selected;
          for (const auto& res : result.retrieved) row.retrieved_per_layer.push_back(res.frame_indices);

          if (!q.relevant_frames.empty()) {
            row.has_recall = true;
            row.recall = recall(retrieved_union(result), q.relevant_frames);
            recall_sum += row.recall;
            ++recall_n;
          }
          total_us_sum += static_cast<double>(result.latency.total());
          report.rows.push_back(std::move(row));
          ++agg.questions;
        }

        agg.has_recall = recall_n > 0;
        agg.mean_recall = recall_n > 0 ? recall_sum / static_cast<double>(recall_n) : 0.0;
        agg.mean_total_us =
            agg.questions > 0 ? total_us_sum / static_cast<double>(agg.questions) : 0.0;
        report.aggregates.push_back(std::move(agg));
      }
    }
  }
  return report;
}

std::string bench_report_jsonl(const BenchReport& report) {
  std::ostringstream out;
  out << nlohmann::json{{"type", "config"}, {"seed", report.seed}, {"frames", report.frames}}
             .dump()
      << "\n";
  for (const auto& row : report.rows) {
    nlohmann::json j{
        {"type", "question"},
        {"mode", row.mode},
        {"r", row.r},
        {"b", row.b},
        {"question_id", row.question_id},
        {"admission_frame", row.admission_frame},
        {"latency_us",
         {{"retrieve", row.stages.retrieve},
          {"load", row.stages.load},
          {"prefill", row.stages.prefill},
          {"decode", row.stages.decode},
          {"total", row.stages.total()}}},
        {"attn_score_ops", row.attn_score_ops},
        {"blocks_selected", row.blocks_selected},
        {"answer_tokens", row.answer_tokens},
        {"retrieved", row.retrieved_per_layer},
    };
    if (row.has_recall) j["recall"] = row.recall;
    else j["recall"] = nullptr;
    out << j.dump() << "\n";
  }
  for (const auto& agg : report.aggregates) {
    nlohmann::json j{{"type", "aggregate"},
                     {"mode", agg.mode},
                     {"r", agg.r},
                     {"b", agg.b},
                     {"questions", agg.questions},
                     {"mean_total_us", agg.mean_total_us}};
    if (agg.has_recall) j["mean_recall"] = agg.mean_recall;
    else j["mean_recall"] = nullptr;
    out << j.dump() << "\n";
  }
  return out.str();
}

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
}

namespace {

// Dense per-layer KV over `ids` via the plain full-causal path.
std::vector<LayerKV> dense_kv(const ToyModel& model, std::span<const int> ids) {
  const auto& cfg = model.config();
  std::vector<LayerKV> out(static_cast<std::size_t>(cfg.num_layers));
  std::vector<std::int64_t> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<std::int64_t>(i);
  Mat x = model.embed_tokens(ids);
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto lo = model.layer_forward(l, x, LayerKV{}, positions);
    out[static_cast<std::size_t>(l)] = std::move(lo.new_kv);
    x = std::move(lo.hidden);
  }
  return out;
}

struct EncodedPrefix {
  std::vector<std::shared_ptr<const FrameKV>> frames;
};

EncodedPrefix encode_prefix(const SyntheticTrace& trace, const ToyModel& model,
                            EncoderConfig encoder_cfg, std::size_t frame_count, int step_tokens) {
  encoder_cfg.step_tokens = step_tokens;
  KVStore store(model.config(), StoreConfig{});
  StreamingEncoder enc(model, store, encoder_cfg);
  std::vector<std::vector<int>> frames;
  for (std::size_t i = 0; i < frame_count; ++i) frames.push_back(trace.frames[i].tokens);
  EncodedPrefix out;
  out.frames = enc.encode_frames(frames);
  return out;
}

double max_abs_dev(const Mat& a, const Mat& b) {
  double dev = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    dev = std::max(dev, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return dev;
}

} // namespace

VerifyReport verify_oracle(const SyntheticTrace& trace, const ToyModel& model,
                           const EncoderConfig& encoder_cfg,
                           const std::filesystem::path& scratch_dir) {
  const auto& cfg = model.config();
  VerifyReport report;
  const std::size_t window_frames = static_cast<std::size_t>(cfg.local_window / cfg.tokens_per_frame);
  const std::size_t prefix = std::min(trace.frames.size(), window_frames);

  // window_fidelity: streamed KV on a window-sized prefix vs dense forward.
  {
    VerifyCheck check{"window_fidelity", false, 0.0, ""};
    try {
      std::vector<int> ids;
      for (std::size_t i = 0; i < prefix; ++i)
        ids.insert(ids.end(), trace.frames[i].tokens.begin(), trace.frames[i].tokens.end());
      const auto dense = dense_kv(model, ids);
      const auto streamed = encode_prefix(trace, model, encoder_cfg, prefix, 0);
      double dev = 0.0;
      for (std::size_t f = 0; f < streamed.frames.size(); ++f) {
        const auto& frame = *streamed.frames[f];
        for (int l = 0; l < cfg.num_layers; ++l) {
          const auto& got = frame.layers[static_cast<std::size_t>(l)];
          const auto& want = dense[static_cast<std::size_t>(l)];
          for (std::size_t j = 0; j < got.keys.rows; ++j) {
            const std::size_t row = f * static_cast<std::size_t>(cfg.tokens_per_frame) + j;
            for (std::size_t d = 0; d < got.keys.cols; ++d) {
              dev = std::max(dev, std::abs(static_cast<double>(got.keys.at(j, d)) -
                                           static_cast<double>(want.keys.at(row, d))));
              dev = std::max(dev, std::abs(static_cast<double>(got.values.at(j, d)) -
                                           static_cast<double>(want.values.at(row, d))));
            }
          }
        }
      }
      check.max_deviation = dev;
      check.pass = dev < 1e-5;
      check.detail = std::to_string(prefix) + " frames compared";
    } catch (const std::exception& e) {
      check.detail = e.what();
    }
    report.checks.push_back(std::move(check));
  }

  // chunk_invariance: stored bits must not depend on the step size.
  {
    VerifyCheck check{"chunk_invariance", false, 0.0, ""};
    try {
      const auto a = encode_prefix(trace, model, encoder_cfg, prefix, 1);
      const auto b = encode_prefix(trace, model, encoder_cfg, prefix, 0);
      const auto c = encode_prefix(trace, model, encoder_cfg, prefix, cfg.chunk_tokens_max);
      double dev = 0.0;
      bool identical = a.frames.size() == b.frames.size() && b.frames.size() == c.frames.size();
      for (std::size_t f = 0; identical && f < a.frames.size(); ++f) {
        for (int l = 0; l < cfg.num_layers; ++l) {
          const auto& la = a.frames[f]->layers[static_cast<std::size_t>(l)];
          const auto& lb = b.frames[f]->layers[static_cast<std::size_t>(l)];
          const auto& lc = c.frames[f]->layers[static_cast<std::size_t>(l)];
          dev = std::max({dev, max_abs_dev(la.keys, lb.keys), max_abs_dev(la.values, lb.values),
                          max_abs_dev(la.keys, lc.keys), max_abs_dev(la.values, lc.values)});
          identical = identical && la.keys.data == lb.keys.data && la.keys.data == lc.keys.data &&
                      la.values.data == lb.values.data && la.values.data == lc.values.data;
        }
      }
      check.max_deviation = dev;
      check.pass = identical;
      check.detail = "step sizes 1, frame, chunk_tokens_max";
    } catch (const std::exception& e) {
      check.detail = e.what();
    }
    report.checks.push_back(std::move(check));
  }

  // qa_oracle_match: all-frames retrieval answer == dense oracle answer.
  {
    VerifyCheck check{"qa_oracle_match", false, 0.0, ""};
    try {
      std::vector<int> question;
      if (!trace.questions.empty()) question = trace.questions[0].tokens;
      else question = trace.frames[0].tokens;

      KVStore store(cfg, StoreConfig{});
      FrameVectorIndex index(cfg, FrameVectorRope::Post);
      EncoderConfig ec = encoder_cfg;
      StreamingEncoder enc(model, store, ec);
      enc.set_frame_callback([&](const FrameKV& frame, std::span<const int> tokens) {
        index.add_frame(frame, tokens);
      });
      std::vector<std::vector<int>> token_frames;
      for (std::size_t i = 0; i < prefix; ++i) token_frames.push_back(trace.frames[i].tokens);
      enc.encode_frames(token_frames);
      store.close();

      DecodeOptions opts;
      opts.max_new_tokens = 8;
      RetrievalParams params;
      params.mode = RetrievalMode::Internal;
      params.r = static_cast<int>(prefix);
      params.b = 1;
      const auto got = answer_with_mode(model, store.snapshot(), index, question, params, opts,
                                        PositionalMode::Consecutive);
      const auto want = oracle_answer(model, token_frames, question, opts);
      check.pass = got.answer_tokens == want.answer_tokens;
      std::ostringstream detail;
      detail << "retrieval-qa ids vs dense ids over " << prefix << " frames: "
             << (check.pass ? "equal" : "DIFFER");
      check.detail = detail.str();
    } catch (const std::exception& e) {
      check.detail = e.what();
    }
    report.checks.push_back(std::move(check));
  }

  // store_roundtrip: flush every frame to disk, reopen, compare bits.
  {
    VerifyCheck check{"store_roundtrip", false, 0.0, ""};
    try {
      std::filesystem::create_directories(scratch_dir);
      StoreConfig sc;
      sc.disk_dir = scratch_dir;
      KVStore store(cfg, sc);
      EncoderConfig ec = encoder_cfg;
      StreamingEncoder enc(model, store, ec);
      std::vector<std::vector<int>> token_frames;
      for (const auto& f : trace.frames) token_frames.push_back(f.tokens);
      auto originals = enc.encode_frames(token_frames);
      store.close();
      store.flush_all_to_disk();

      auto reopened = KVStore::open(scratch_dir, cfg, StoreConfig{});
      check.pass = true;
      for (const auto& orig : originals) {
        const auto back = reopened->snapshot().load_one(orig->frame_index);
        for (int l = 0; l < cfg.num_layers; ++l) {
          const auto& a = orig->layers[static_cast<std::size_t>(l)];
          const auto& b = back->layers[static_cast<std::size_t>(l)];
          if (a.keys.data != b.keys.data || a.values.data != b.values.data) {
            check.pass = false;
            check.detail = "frame " + std::to_string(orig->frame_index) + " differs after reload";
            break;
          }
        }
        if (!check.pass) break;
      }
      if (check.pass)
        check.detail = std::to_string(originals.size()) + " frames round-tripped bit-identically";
    } catch (const std::exception& e) {
      check.detail = e.what();
    }
    report.checks.push_back(std::move(check));
  }

  return report;
}

} // namespace streamkv
