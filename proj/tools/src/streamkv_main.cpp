// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

// streamkv: command line front end for the streaming KV-cache retrieval
// engine. Verbs cover the whole loop: synthesize a labelled token stream,
// encode it into a tiered cache, answer questions against the cache, replay
// a stream live through the serving pool, sweep retrieval settings, and run
// the engine's self-checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "streamkv/bench.hpp"
#include "streamkv/error.hpp"
#include "streamkv/serving.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streamkv;

namespace {

constexpr const char* kFramesFile = "frames.jsonl";
constexpr const char* kQuestionsFile = "questions.jsonl";

ModelConfig load_model_config(const std::string& config_path, int window_override) {
  ModelConfig cfg;
  if (!config_path.empty()) cfg = ModelConfig::from_file(config_path);
  if (window_override > 0) cfg.local_window = window_override;
  cfg.validate();
  return cfg;
}

std::vector<int> parse_token_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

// "first:last:pattern" -> NeedleSpec
NeedleSpec parse_needle(const std::string& text) {
  NeedleSpec n;
  if (std::sscanf(text.c_str(), "%ld:%ld:%d", &n.first_frame, &n.last_frame, &n.pattern_id) != 3)
    throw CLI::ValidationError("--needle expects first:last:pattern, got '" + text + "'");
  return n;
}

// "admission:pattern" -> QuestionSpec
QuestionSpec parse_question_spec(const std::string& text) {
  QuestionSpec q;
  long adm = 0;
  if (std::sscanf(text.c_str(), "%ld:%d", &adm, &q.pattern_id) != 2)
    throw CLI::ValidationError("--question expects admission:pattern, got '" + text + "'");
  q.admission_frame = adm;
  return q;
}

std::vector<std::vector<int>> frame_tokens(const std::vector<TraceFrameRecord>& records) {
  std::vector<std::vector<int>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.tokens);
  return out;
}

json latency_json(const StageLatencyUs& s) {
  return json{{"retrieve_us", s.retrieve},
              {"load_us", s.load},
              {"prefill_us", s.prefill},
              {"decode_us", s.decode},
              {"total_us", s.total()}};
}

json result_json(const QAResult& res) {
  json per_layer = json::array();
  for (const auto& r : res.retrieved) per_layer.push_back(r.frame_indices);
  return json{{"answer_tokens", res.answer_tokens},
              {"context_tokens", res.context_tokens},
              {"attn_score_ops", res.attn_score_ops},
              {"retrieved_per_layer", per_layer},
              {"latency", latency_json(res.latency)}};
}

std::string join_tokens(const std::vector<int>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(tokens[i]);
  }
  return s;
}

// Eagerly indexes every stored frame using the trace's token stream. Needed
// for external retrieval, whose embeddings require tokens the store does not
// keep.
void index_from_trace(FrameVectorIndex& index, const StoreSnapshot& snap,
                      const std::vector<TraceFrameRecord>& records) {
  const std::int64_t n = snap.max_frame_index() + 1;
  if (static_cast<std::int64_t>(records.size()) < n)
    throw Error::config("trace has fewer frames than the store");
  for (std::int64_t i = 0; i < n; ++i)
    index.add_frame(*snap.load_one(i), records[static_cast<std::size_t>(i)].tokens);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------
int cmd_gen(const SyntheticTraceSpec& spec, const std::string& out_dir) {
  const auto trace = gen_trace(spec);
  fs::create_directories(out_dir);
  write_frames_jsonl(fs::path(out_dir) / kFramesFile, trace.frames);
  write_questions_jsonl(fs::path(out_dir) / kQuestionsFile, trace.questions);
  std::printf("wrote %zu frames, %zu questions to %s (seed %llu)\n", trace.frames.size(),
              trace.questions.size(), out_dir.c_str(),
              static_cast<unsigned long long>(spec.seed));
  for (const auto& q : trace.questions)
    std::printf("  question %lld: admission frame %lld, %zu relevant frames\n",
                static_cast<long long>(q.question_id), static_cast<long long>(q.admission_frame),
                q.relevant_frames.size());
  return 0;
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------
int cmd_encode(const ModelConfig& cfg, std::uint64_t model_seed, const std::string& trace_dir,
               const std::string& store_dir, double fps, double source_fps, int step_tokens,
               std::uint64_t ram_budget_mb) {
  const auto records = read_frames_jsonl(fs::path(trace_dir) / kFramesFile);
  auto tokens = frame_tokens(records);
  if (source_fps > 0.0) {
    const auto kept = ingest_rate_control(tokens, fps, source_fps);
    std::vector<std::vector<int>> sub;
    sub.reserve(kept.size());
    for (const auto& f : kept) sub.push_back(f.tokens);
    std::printf("rate control: %zu source frames at %.3g fps -> %zu frames at %.3g fps\n",
                tokens.size(), source_fps, sub.size(), fps);
    tokens = std::move(sub);
  }

  fs::create_directories(store_dir);
  StoreConfig sc;
  sc.disk_dir = store_dir;
  sc.ram_budget_bytes = ram_budget_mb * 1024 * 1024;
  KVStore store(cfg, sc);

  EncoderConfig ecfg;
  ecfg.fps = fps;
  ecfg.step_tokens = step_tokens;
  const ToyModel model(cfg, model_seed);
  StreamingEncoder enc(model, store, ecfg);

  const auto t0 = std::chrono::steady_clock::now();
  enc.encode_frames(tokens);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  store.flush_all_to_disk();

  const auto n = store.frame_count();
  std::printf("encoded %lld frames (%lld tokens) in %.3fs (%.1f frames/s)\n",
              static_cast<long long>(n), static_cast<long long>(enc.tokens_encoded()), secs,
              secs > 0 ? static_cast<double>(n) / secs : 0.0);
  std::printf("cache: %llu bytes on disk at %s\n",
              static_cast<unsigned long long>(kv_cache_size_bytes(cfg, n)), store_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// ask
// ---------------------------------------------------------------------------
struct AskArgs {
  std::string store_dir;
  std::string trace_dir;
  std::string question_csv;
  std::int64_t question_id = -1;
  std::int64_t admit = -1; // -1: newest frame
  RetrievalParams params;
  DecodeOptions decode;
  PositionalMode positions = PositionalMode::Consecutive;
  std::string json_out;
};

int cmd_ask(const ModelConfig& cfg, std::uint64_t model_seed, const AskArgs& a) {
  StoreConfig sc;
  sc.disk_dir = a.store_dir;
  const auto store = KVStore::open(a.store_dir, cfg, sc);

  std::vector<TraceFrameRecord> frames;
  std::vector<int> question;
  std::vector<std::int64_t> relevant;
  std::int64_t admit = a.admit;
  if (!a.trace_dir.empty()) frames = read_frames_jsonl(fs::path(a.trace_dir) / kFramesFile);
  if (a.question_id >= 0) {
    if (a.trace_dir.empty()) throw Error::config("--question-id needs --trace");
    const auto questions = read_questions_jsonl(fs::path(a.trace_dir) / kQuestionsFile);
    if (a.question_id >= static_cast<std::int64_t>(questions.size()))
      throw Error::config("trace has no question " + std::to_string(a.question_id));
    const auto& q = questions[static_cast<std::size_t>(a.question_id)];
    question = q.tokens;
    relevant = q.relevant_frames;
    if (admit < 0) admit = q.admission_frame;
  } else {
    question = parse_token_list(a.question_csv);
  }
  if (question.empty()) throw Error::config("no question: pass --question or --question-id");

  std::shared_ptr<const Embedder> embedder;
  if (a.params.mode == RetrievalMode::External) {
    if (a.trace_dir.empty())
      throw Error::config("external retrieval needs --trace for frame tokens");
    embedder = std::make_shared<BagOfTokensEmbedder>(
        cfg.vocab_size, static_cast<std::size_t>(cfg.model_dim()), model_seed);
  }
  if (a.params.mode == RetrievalMode::OracleLabels && relevant.empty())
    throw Error::config("label-oracle retrieval needs --question-id with labelled relevant frames");

  FrameVectorIndex index(cfg, a.params.frame_vector_rope, embedder);
  const auto snap =
      admit >= 0 ? store->snapshot_at(std::min(admit, store->max_frame_index()))
                 : store->snapshot();
  if (embedder) index_from_trace(index, snap, frames);

  const ToyModel model(cfg, model_seed);
  const auto res = answer_with_mode(model, snap, index, question, a.params, a.decode,
                                    a.positions, relevant);

  std::printf("question: [%s]\n", join_tokens(question).c_str());
  std::printf("answer:   [%s]\n", join_tokens(res.answer_tokens).c_str());
  for (const auto& r : res.retrieved)
    std::printf("retrieved%s: %zu frames, %d blocks scored\n",
                r.layer >= 0 ? (" layer " + std::to_string(r.layer)).c_str() : "",
                r.frame_indices.size(), r.blocks_scored);
  std::printf("context tokens %lld, attention ops %llu, latency %lld us\n",
              static_cast<long long>(res.context_tokens),
              static_cast<unsigned long long>(res.attn_score_ops),
              static_cast<long long>(res.latency.total()));
  if (!relevant.empty() && a.params.mode != RetrievalMode::OracleLabels) {
    std::set<std::int64_t> got;
    for (const auto& r : res.retrieved)
      got.insert(r.frame_indices.begin(), r.frame_indices.end());
    std::printf("recall: %.3f\n",
                recall(std::vector<std::int64_t>(got.begin(), got.end()), relevant));
  }
  if (!a.json_out.empty()) {
    std::ofstream out(a.json_out);
    out << result_json(res).dump() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------
struct ServeArgs {
  std::string trace_dir;
  std::string store_dir;
  std::string out_path;
  int workers = 2;
  std::size_t queue_capacity = 64;
  double fps = 0.5;
  RetrievalParams params;
  DecodeOptions decode;
  PositionalMode positions = PositionalMode::Consecutive;
};

int cmd_serve(const ModelConfig& cfg, std::uint64_t model_seed, const ServeArgs& a) {
  const auto records = read_frames_jsonl(fs::path(a.trace_dir) / kFramesFile);
  std::vector<TraceQuestionRecord> questions;
  if (fs::exists(fs::path(a.trace_dir) / kQuestionsFile))
    questions = read_questions_jsonl(fs::path(a.trace_dir) / kQuestionsFile);

  // A question admitted at frame k is asked at a timestamp strictly between
  // frame k and frame k+1, so gating admits exactly frames 0..k.
  std::vector<QARequest> requests;
  for (const auto& q : questions) {
    QARequest r;
    r.question_id = q.question_id;
    r.tokens = q.tokens;
    r.timestamp = (static_cast<double>(q.admission_frame) + 0.5) / a.fps;
    requests.push_back(std::move(r));
  }

  StoreConfig sc;
  if (!a.store_dir.empty()) {
    fs::create_directories(a.store_dir);
    sc.disk_dir = a.store_dir;
  }
  EncoderConfig ecfg;
  ecfg.fps = a.fps;
  WorkerPoolConfig pool;
  pool.workers = a.workers;
  pool.queue_capacity = a.queue_capacity;
  pool.retrieval = a.params;
  pool.decode = a.decode;
  pool.positions = a.positions;

  const ToyModel model(cfg, model_seed);
  const auto run = run_stream(model, frame_tokens(records), requests, sc, ecfg, pool);
  const auto& m = run.metrics;

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!a.out_path.empty()) {
    file.open(a.out_path);
    out = &file;
  }
  for (std::size_t i = 0; i < run.answers.size(); ++i) {
    json j = result_json(run.answers[i]);
    j["type"] = "answer";
    j["question_id"] = requests[i].question_id;
    j["timestamp"] = requests[i].timestamp;
    j["admitted_frame"] = m.per_question[i].admitted_frame;
    j["queue_wait_us"] = m.per_question[i].queue_wait_us;
    *out << j.dump() << "\n";
  }
  std::size_t peak_depth = 0;
  for (auto d : m.queue_depth_samples) peak_depth = std::max(peak_depth, d);
  json summary{{"type", "metrics"},
               {"frames_encoded", m.frames_encoded},
               {"encode_seconds", m.encode_seconds},
               {"frames_per_second", m.frames_per_second},
               {"questions_completed", m.questions_completed},
               {"questions_failed", m.questions_failed},
               {"peak_queue_depth", peak_depth},
               {"offload_bytes_per_hour", m.offload_bytes_per_hour},
               {"tier_bytes",
                {{"hot", m.tier_bytes.hot},
                 {"ram", m.tier_bytes.ram},
                 {"disk", m.tier_bytes.disk},
                 {"peak_ram", m.tier_bytes.peak_ram}}}};
  *out << summary.dump() << "\n";

  std::fprintf(stderr,
               "served %lld questions (%lld failed) over %lld frames, %.1f frames/s encode, "
               "%d workers\n",
               static_cast<long long>(m.questions_completed),
               static_cast<long long>(m.questions_failed),
               static_cast<long long>(m.frames_encoded), m.frames_per_second, a.workers);
  return m.questions_failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------
int cmd_bench(const ModelConfig& cfg, std::uint64_t model_seed, const std::string& trace_dir,
              const std::vector<std::string>& modes, const std::vector<int>& r_list,
              const std::vector<int>& b_list, double fps, const RetrievalParams& base,
              const DecodeOptions& decode, const std::string& out_path) {
  SyntheticTrace trace;
  trace.frames = read_frames_jsonl(fs::path(trace_dir) / kFramesFile);
  if (fs::exists(fs::path(trace_dir) / kQuestionsFile))
    trace.questions = read_questions_jsonl(fs::path(trace_dir) / kQuestionsFile);
  if (trace.questions.empty()) throw Error::config("bench needs a trace with questions");

  SweepSpec sweep;
  sweep.modes.clear();
  for (const auto& m : modes) sweep.modes.push_back(parse_retrieval_mode(m));
  sweep.r_values = r_list;
  sweep.b_values = b_list;

  EncoderConfig ecfg;
  ecfg.fps = fps;
  const ToyModel model(cfg, model_seed);
  const auto report = run_bench(trace, model, {}, ecfg, sweep, base, decode);
  const auto jsonl = bench_report_jsonl(report);

  if (out_path.empty()) {
    std::fputs(jsonl.c_str(), stdout);
  } else {
    std::ofstream(out_path) << jsonl;
    std::printf("wrote %zu rows, %zu aggregates to %s\n", report.rows.size(),
                report.aggregates.size(), out_path.c_str());
  }
  for (const auto& agg : report.aggregates) {
    std::fprintf(stderr, "  %-12s r=%-3d b=%-3d mean_total %8.1f us", agg.mode.c_str(), agg.r,
                 agg.b, agg.mean_total_us);
    if (agg.has_recall) std::fprintf(stderr, "  mean_recall %.3f", agg.mean_recall);
    std::fputc('\n', stderr);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------
int cmd_verify(const ModelConfig& cfg, std::uint64_t model_seed, std::int64_t frames,
               std::uint64_t trace_seed, double fps) {
  SyntheticTraceSpec spec;
  spec.seed = trace_seed;
  spec.frames = frames;
  spec.tokens_per_frame = cfg.tokens_per_frame;
  spec.vocab_size = cfg.vocab_size;
  const std::int64_t mid = frames / 2;
  spec.needles = {{mid, std::min(frames - 1, mid + 1), 0}};
  spec.questions = {{frames - 1, 0}};

  EncoderConfig ecfg;
  ecfg.fps = fps;
  const ToyModel model(cfg, model_seed);
  const auto scratch = fs::temp_directory_path() /
                       ("streamkv_verify_" + std::to_string(::getpid()));
  fs::create_directories(scratch);
  const auto report = verify_oracle(gen_trace(spec), model, ecfg, scratch);
  fs::remove_all(scratch);

  for (const auto& check : report.checks)
    std::printf("[%s] %-18s max deviation %.3g%s%s\n", check.pass ? "ok" : "FAIL",
                check.name.c_str(), check.max_deviation, check.detail.empty() ? "" : "  ",
                check.detail.c_str());
  return report.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming KV-cache retrieval engine"};
  app.require_subcommand(1);

  // Shared flags, attached per verb below.
  std::string config_path;
  std::uint64_t model_seed = 1;
  int window_override = 0;
  double fps = 0.5;

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "model config file (key=value lines)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--model-seed", model_seed, "weight seed (default 1)");
    cmd->add_option("--window", window_override, "override the sliding window, in tokens");
  };

  RetrievalParams params;
  DecodeOptions decode;
  std::string mode_name = "internal";
  std::string rope_name = "post";
  std::string positions_name = "consecutive";
  int eos = -1;
  auto add_retrieval_flags = [&](CLI::App* cmd) {
    cmd->add_option("--r", params.r, "frames to retrieve (0 disables retrieval)");
    cmd->add_option("--b", params.b, "frames per retrieval block");
    cmd->add_option("--tau", params.tau, "similarity temperature");
    cmd->add_option("--mode", mode_name, "internal|external|uniform|oracle");
    cmd->add_option("--rope", rope_name, "frame vectors from post|pre rotation keys");
    cmd->add_option("--positions", positions_name, "context positions: consecutive|static");
    cmd->add_option("--max-new", decode.max_new_tokens, "max answer tokens");
    cmd->add_option("--eos", eos, "stop token id (-1: none)");
  };
  auto finish_retrieval_flags = [&]() {
    params.mode = parse_retrieval_mode(mode_name);
    params.frame_vector_rope = parse_frame_vector_rope(rope_name);
    if (eos >= 0) decode.eos_token = eos;
  };

  // gen
  auto* gen = app.add_subcommand("gen", "synthesize a labelled token stream");
  SyntheticTraceSpec spec;
  std::string out_dir;
  std::vector<std::string> needle_args, question_args;
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--frames", spec.frames, "number of frames");
  gen->add_option("--tokens-per-frame", spec.tokens_per_frame, "tokens per frame");
  gen->add_option("--vocab", spec.vocab_size, "vocabulary size");
  gen->add_option("--seed", spec.seed, "trace seed");
  gen->add_option("--needle", needle_args, "planted needle first:last:pattern (repeatable)");
  gen->add_option("--question", question_args, "question admission:pattern (repeatable)");

  // encode
  auto* encode = app.add_subcommand("encode", "stream a trace into a tiered cache");
  std::string trace_dir, store_dir;
  double source_fps = 0.0;
  int step_tokens = 0;
  std::uint64_t ram_budget_mb = 0;
  encode->add_option("--trace", trace_dir, "trace directory")->required()
      ->check(CLI::ExistingDirectory);
  encode->add_option("--store-dir", store_dir, "cache directory")->required();
  encode->add_option("--fps", fps, "stream frame rate");
  encode->add_option("--source-fps", source_fps, "subsample a faster source to --fps");
  encode->add_option("--step-tokens", step_tokens, "encode step size (0: one frame)");
  encode->add_option("--ram-budget-mb", ram_budget_mb, "RAM tier budget (0: unlimited)");
  add_model_flags(encode);

  // ask
  auto* ask = app.add_subcommand("ask", "answer one question against a cache");
  AskArgs ask_args;
  ask->add_option("--store-dir", ask_args.store_dir, "cache directory")->required()
      ->check(CLI::ExistingDirectory);
  ask->add_option("--trace", ask_args.trace_dir, "trace directory (tokens and labels)")
      ->check(CLI::ExistingDirectory);
  ask->add_option("--question", ask_args.question_csv, "question token ids, comma separated");
  ask->add_option("--question-id", ask_args.question_id, "use this trace question");
  ask->add_option("--admit", ask_args.admit, "newest visible frame (-1: all)");
  ask->add_option("--json", ask_args.json_out, "write the full result as JSON here");
  add_model_flags(ask);
  add_retrieval_flags(ask);

  // serve
  auto* serve = app.add_subcommand("serve", "replay a trace through the live serving pool");
  ServeArgs serve_args;
  serve->add_option("--trace", serve_args.trace_dir, "trace directory")->required()
      ->check(CLI::ExistingDirectory);
  serve->add_option("--store-dir", serve_args.store_dir, "optional disk tier directory");
  serve->add_option("--out", serve_args.out_path, "answers and metrics JSONL path");
  serve->add_option("--workers", serve_args.workers, "worker threads");
  serve->add_option("--queue-capacity", serve_args.queue_capacity, "question queue bound");
  serve->add_option("--fps", fps, "stream frame rate");
  add_model_flags(serve);
  add_retrieval_flags(serve);

  // bench
  auto* bench = app.add_subcommand("bench", "sweep retrieval settings over a trace");
  std::vector<std::string> bench_modes{"internal"};
  std::vector<int> r_list{64};
  std::vector<int> b_list{1};
  std::string bench_out;
  bench->add_option("--trace", trace_dir, "trace directory")->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--modes", bench_modes, "retrieval modes to sweep")->delimiter(',');
  bench->add_option("--r-list", r_list, "r values to sweep")->delimiter(',');
  bench->add_option("--b-list", b_list, "block sizes to sweep")->delimiter(',');
  bench->add_option("--fps", fps, "stream frame rate");
  bench->add_option("--out", bench_out, "report JSONL path (default: stdout)");
  add_model_flags(bench);
  add_retrieval_flags(bench);

  // verify
  auto* verify = app.add_subcommand("verify", "run the engine's dense-oracle self-checks");
  std::int64_t verify_frames = 8;
  std::uint64_t verify_seed = 1;
  verify->add_option("--frames", verify_frames, "stream length for the checks");
  verify->add_option("--seed", verify_seed, "trace seed");
  verify->add_option("--fps", fps, "stream frame rate");
  add_model_flags(verify);

  CLI11_PARSE(app, argc, argv);

  try {
    const ModelConfig cfg = load_model_config(config_path, window_override);
    if (gen->parsed()) {
      for (const auto& n : needle_args) spec.needles.push_back(parse_needle(n));
      for (const auto& q : question_args) spec.questions.push_back(parse_question_spec(q));
      return cmd_gen(spec, out_dir);
    }
    if (encode->parsed())
      return cmd_encode(cfg, model_seed, trace_dir, store_dir, fps, source_fps, step_tokens,
                        ram_budget_mb);
    if (ask->parsed()) {
      finish_retrieval_flags();
      ask_args.params = params;
      ask_args.decode = decode;
      ask_args.positions = parse_positional_mode(positions_name);
      return cmd_ask(cfg, model_seed, ask_args);
    }
    if (serve->parsed()) {
      finish_retrieval_flags();
      if (params.mode == RetrievalMode::OracleLabels)
        throw Error::config("the serving path has no labels; use bench for the label oracle");
      serve_args.params = params;
      serve_args.decode = decode;
      serve_args.positions = parse_positional_mode(positions_name);
      serve_args.fps = fps;
      return cmd_serve(cfg, model_seed, serve_args);
    }
    if (bench->parsed()) {
      finish_retrieval_flags();
      return cmd_bench(cfg, model_seed, trace_dir, bench_modes, r_list, b_list, fps, params,
                       decode, bench_out);
    }
    if (verify->parsed()) return cmd_verify(cfg, model_seed, verify_frames, verify_seed, fps);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
