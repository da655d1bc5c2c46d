// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "streamkv/error.hpp"
#include "streamkv/rng.hpp"

namespace streamkv {

RetrievalMode parse_retrieval_mode(const std::string& name) {
  if (name == "internal") return RetrievalMode::Internal;
  if (name == "external") return RetrievalMode::External;
  if (name == "uniform") return RetrievalMode::Uniform;
  if (name == "oracle") return RetrievalMode::OracleLabels;
  throw Error::config("unknown retrieval mode '" + name +
                      "' (expected internal|external|uniform|oracle)");
}

const char* retrieval_mode_name(RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::Internal: return "internal";
    case RetrievalMode::External: return "external";
    case RetrievalMode::Uniform: return "uniform";
    case RetrievalMode::OracleLabels: return "oracle";
  }
  return "?";
}

FrameVectorRope parse_frame_vector_rope(const std::string& name) {
  if (name == "post") return FrameVectorRope::Post;
  if (name == "pre") return FrameVectorRope::Pre;
  throw Error::config("unknown frame vector mode '" + name + "' (expected post|pre)");
}

Vec frame_vector_internal(const FrameKV& frame, int layer, const ModelConfig& cfg,
                          FrameVectorRope rope_mode) {
  if (layer < 0 || layer >= static_cast<int>(frame.layers.size()))
    throw Error::config("frame_vector: layer index out of range");
  const auto& keys = frame.layers[static_cast<std::size_t>(layer)].keys;
  if (keys.rows == 0) throw Error::degenerate("frame_vector: frame has no key rows");
  const std::size_t dim = keys.cols;
  std::vector<double> acc(dim, 0.0);
  Vec row(dim);
  for (std::size_t j = 0; j < keys.rows; ++j) {
    std::copy(keys.row(j), keys.row(j) + dim, row.data());
    if (rope_mode == FrameVectorRope::Pre) {
      const auto pos = static_cast<std::int64_t>(frame.encode_position_start) +
                       static_cast<std::int64_t>(j);
      rope_rotate_inplace(row.data(), dim, -pos, static_cast<std::size_t>(cfg.head_dim),
                          cfg.rope_base);
    }
    for (std::size_t d = 0; d < dim; ++d) acc[d] += static_cast<double>(row[d]);
  }
  Vec out(dim);
  for (std::size_t d = 0; d < dim; ++d)
    out[d] = static_cast<float>(acc[d] / static_cast<double>(keys.rows));
  return out;
}

Vec question_vector_internal(const Mat& question_query_rows) {
  if (question_query_rows.rows == 0)
    throw Error::degenerate("question_vector: no query rows to average");
  const std::size_t dim = question_query_rows.cols;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t i = 0; i < question_query_rows.rows; ++i) {
    const float* row = question_query_rows.row(i);
    for (std::size_t d = 0; d < dim; ++d) acc[d] += static_cast<double>(row[d]);
  }
  Vec out(dim);
  for (std::size_t d = 0; d < dim; ++d)
    out[d] = static_cast<float>(acc[d] / static_cast<double>(question_query_rows.rows));
  return out;
}

std::vector<BlockVector> block_vectors(std::span<const FrameVector> candidates, int b) {
  if (b < 1) throw Error::config("block_vectors: b must be >= 1");
  std::vector<BlockVector> blocks;
  if (candidates.empty()) return blocks;
  const std::size_t dim = candidates[0].vector.size();
  blocks.reserve((candidates.size() + static_cast<std::size_t>(b) - 1) /
                 static_cast<std::size_t>(b));
  for (std::size_t begin = 0; begin < candidates.size();
       begin += static_cast<std::size_t>(b)) {
    const std::size_t end = std::min(candidates.size(), begin + static_cast<std::size_t>(b));
    BlockVector block;
    std::vector<double> acc(dim, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      if (candidates[i].vector.size() != dim)
        throw Error::shape("block_vectors: candidate vectors have mixed widths");
      block.frames.push_back(candidates[i].frame_index);
      for (std::size_t d = 0; d < dim; ++d)
        acc[d] += static_cast<double>(candidates[i].vector[d]);
    }
    block.vector.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
      block.vector[d] = static_cast<float>(acc[d] / static_cast<double>(end - begin));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

RetrievalResult retrieve(std::span<const FrameVector> candidates, std::span<const float> qvec,
                         const RetrievalParams& params) {
  if (params.r < 1) throw Error::config("retrieve: r must be >= 1");
  if (params.b < 1) throw Error::config("retrieve: b must be >= 1");
  if (!(params.tau > 0.0f)) throw Error::config("retrieve: tau must be positive");

  RetrievalResult result;
  result.r = params.r;
  result.b = params.b;
  result.tau = params.tau;
  if (candidates.empty()) return result;

  std::int64_t prev = std::numeric_limits<std::int64_t>::min();
  for (const auto& c : candidates) {
    if (c.frame_index <= prev)
      throw Error::ordering("retrieve: candidate frames must be ascending and unique");
    prev = c.frame_index;
  }

  const auto blocks = block_vectors(candidates, params.b);
  std::vector<float> block_scores(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    block_scores[i] = cosine_sim(blocks[i].vector, qvec, params.tau);

  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable: equal scores keep ascending block order, so ties break toward
  // the earlier block.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t c) { return block_scores[a] > block_scores[c]; });

  const auto want_blocks = static_cast<std::size_t>(
      (static_cast<std::int64_t>(params.r) + params.b - 1) / params.b);
  const std::size_t take_blocks = std::min(want_blocks, blocks.size());

  std::vector<std::pair<std::int64_t, float>> taken;
  for (std::size_t rank = 0; rank < take_blocks; ++rank) {
    const auto bi = order[rank];
    for (std::int64_t f : blocks[bi].frames) {
      if (taken.size() == static_cast<std::size_t>(params.r)) break;
      taken.emplace_back(f, block_scores[bi]);
    }
    if (taken.size() == static_cast<std::size_t>(params.r)) break;
  }
  std::sort(taken.begin(), taken.end());

  result.blocks_scored = static_cast<int>(blocks.size());
  result.blocks_selected = static_cast<int>(take_blocks);
  result.frame_indices.reserve(taken.size());
  result.scores.reserve(taken.size());
  for (const auto& [f, s] : taken) {
    result.frame_indices.push_back(f);
    result.scores.push_back(s);
  }
  return result;
}

RetrievalResult uniform_baseline(std::int64_t num_frames, int r) {
  if (r < 1) throw Error::config("uniform_baseline: r must be >= 1");
  if (num_frames < 0) throw Error::config("uniform_baseline: negative frame count");
  RetrievalResult result;
  result.r = r;
  result.b = 1;
  if (num_frames == 0) return result;
  std::int64_t prev = -1;
  for (int i = 0; i < r; ++i) {
    const auto idx = static_cast<std::int64_t>(
        (static_cast<double>(i) + 0.5) * static_cast<double>(num_frames) / static_cast<double>(r));
    const auto clamped = std::min(idx, num_frames - 1);
    if (clamped != prev) {
      result.frame_indices.push_back(clamped);
      result.scores.push_back(0.0f);
      prev = clamped;
    }
  }
  return result;
}

RetrievalResult oracle_baseline(std::span<const std::int64_t> relevant, std::int64_t max_frame,
                                int r) {
  if (r < 1) throw Error::config("oracle_baseline: r must be >= 1");
  std::vector<std::int64_t> admitted;
  std::int64_t prev = std::numeric_limits<std::int64_t>::min();
  for (std::int64_t f : relevant) {
    if (f <= prev) throw Error::ordering("oracle_baseline: relevant frames must be ascending");
    prev = f;
    if (f >= 0 && f <= max_frame) admitted.push_back(f);
  }
  RetrievalResult result;
  result.r = r;
  result.b = 1;
  if (admitted.empty()) return result;
  if (admitted.size() > static_cast<std::size_t>(r)) {
    std::vector<std::int64_t> picked;
    std::int64_t last = -1;
    for (int i = 0; i < r; ++i) {
      const auto pos = static_cast<std::size_t>((static_cast<double>(i) + 0.5) *
                                                static_cast<double>(admitted.size()) /
                                                static_cast<double>(r));
      const auto f = admitted[std::min(pos, admitted.size() - 1)];
      if (f != last) {
        picked.push_back(f);
        last = f;
      }
    }
    admitted = std::move(picked);
  }
  result.frame_indices = std::move(admitted);
  result.scores.assign(result.frame_indices.size(), 1.0f);
  return result;
}

double recall(std::span<const std::int64_t> retrieved, std::span<const std::int64_t> relevant) {
  std::unordered_set<std::int64_t> rel(relevant.begin(), relevant.end());
  if (rel.empty()) throw Error::undefined_metric("recall: empty relevant set");
  std::unordered_set<std::int64_t> got(retrieved.begin(), retrieved.end());
  std::size_t hit = 0;
  for (std::int64_t f : rel)
    if (got.count(f)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(rel.size());
}

// ============================================================================
// BagOfTokensEmbedder
// ============================================================================

BagOfTokensEmbedder::BagOfTokensEmbedder(int vocab_size, std::size_t dim, std::uint64_t seed)
    : vocab_size_(vocab_size), dim_(dim) {
  if (vocab_size < 1) throw Error::config("embedder: vocab_size must be >= 1");
  if (dim == 0) throw Error::config("embedder: dim must be >= 1");
  projection_ = Mat(dim, static_cast<std::size_t>(vocab_size));
  SplitMix64 g(mix_seed(seed, 0x45585445u)); // independent of model weight streams
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : projection_.data) v = static_cast<float>(g.next_in(-1.0, 1.0) * scale);
}

Vec BagOfTokensEmbedder::embed(std::span<const int> tokens) const {
  if (tokens.empty()) throw Error::degenerate("embedder: empty token list");
  std::vector<double> acc(dim_, 0.0);
  for (int t : tokens) {
    if (t < 0 || t >= vocab_size_)
      throw Error::vocab("embedder: token id " + std::to_string(t) + " outside [0, " +
                         std::to_string(vocab_size_) + ")");
    for (std::size_t d = 0; d < dim_; ++d)
      acc[d] += static_cast<double>(projection_.at(d, static_cast<std::size_t>(t)));
  }
  Vec out(dim_);
  for (std::size_t d = 0; d < dim_; ++d)
    out[d] = static_cast<float>(acc[d] / static_cast<double>(tokens.size()));
  return out;
}

// ============================================================================
// FrameVectorIndex
// ============================================================================

FrameVectorIndex::FrameVectorIndex(const ModelConfig& cfg, FrameVectorRope rope_mode,
                                   std::shared_ptr<const Embedder> embedder)
    : cfg_(cfg), rope_mode_(rope_mode), embedder_(std::move(embedder)) {
  per_layer_.resize(static_cast<std::size_t>(cfg_.num_layers));
}

void FrameVectorIndex::add_frame(const FrameKV& frame, std::span<const int> tokens) {
  std::vector<Vec> vecs(per_layer_.size());
  for (int l = 0; l < cfg_.num_layers; ++l)
    vecs[static_cast<std::size_t>(l)] = frame_vector_internal(frame, l, cfg_, rope_mode_);
  std::optional<Vec> ext;
  if (embedder_) ext = embedder_->embed_frame(tokens);

  const auto idx = static_cast<std::size_t>(frame.frame_index);
  std::lock_guard lk(mu_);
  for (std::size_t l = 0; l < per_layer_.size(); ++l) {
    if (per_layer_[l].size() <= idx) per_layer_[l].resize(idx + 1);
    if (!per_layer_[l][idx]) per_layer_[l][idx] = std::move(vecs[l]); // publish once
  }
  if (ext) {
    if (external_.size() <= idx) external_.resize(idx + 1);
    if (!external_[idx]) external_[idx] = std::move(*ext);
  }
}

std::vector<FrameVector> FrameVectorIndex::layer_vectors(int layer,
                                                         const StoreSnapshot& snapshot) const {
  if (layer < 0 || layer >= cfg_.num_layers)
    throw Error::config("layer_vectors: layer index out of range");
  std::vector<FrameVector> out;
  const std::int64_t max = snapshot.max_frame_index();
  if (max < 0) return out;
  out.reserve(static_cast<std::size_t>(max + 1));
  for (std::int64_t f = 0; f <= max; ++f) {
    const auto idx = static_cast<std::size_t>(f);
    {
      std::lock_guard lk(mu_);
      auto& slot_layer = per_layer_[static_cast<std::size_t>(layer)];
      if (idx < slot_layer.size() && slot_layer[idx]) {
        out.push_back({f, layer, *slot_layer[idx]});
        continue;
      }
    }
    // Not cached: pull the frame from the store and cache every layer.
    auto frame = snapshot.load_one(f);
    std::vector<Vec> vecs(per_layer_.size());
    for (int l = 0; l < cfg_.num_layers; ++l)
      vecs[static_cast<std::size_t>(l)] = frame_vector_internal(*frame, l, cfg_, rope_mode_);
    std::lock_guard lk(mu_);
    ++lazy_loads_;
    for (std::size_t l = 0; l < per_layer_.size(); ++l) {
      if (per_layer_[l].size() <= idx) per_layer_[l].resize(idx + 1);
      if (!per_layer_[l][idx]) per_layer_[l][idx] = std::move(vecs[l]);
    }
    out.push_back({f, layer, *per_layer_[static_cast<std::size_t>(layer)][idx]});
  }
  return out;
}

std::vector<FrameVector> FrameVectorIndex::external_vectors(const StoreSnapshot& snapshot) const {
  if (!embedder_) throw Error::index("external_vectors: no embedder attached");
  std::vector<FrameVector> out;
  const std::int64_t max = snapshot.max_frame_index();
  if (max < 0) return out;
  out.reserve(static_cast<std::size_t>(max + 1));
  std::lock_guard lk(mu_);
  for (std::int64_t f = 0; f <= max; ++f) {
    const auto idx = static_cast<std::size_t>(f);
    if (idx >= external_.size() || !external_[idx])
      throw Error::index("external_vectors: frame " + std::to_string(f) +
                         " was never embedded (embeddings are computed at encode time)");
    out.push_back({f, -1, *external_[idx]});
  }
  return out;
}

std::uint64_t FrameVectorIndex::lazy_loads() const {
  std::lock_guard lk(mu_);
  return lazy_loads_;
}

RetrievalResult retrieve_external(const FrameVectorIndex& index, const StoreSnapshot& snapshot,
                                  std::span<const int> question_tokens,
                                  const RetrievalParams& params) {
  if (!index.has_embedder()) throw Error::index("retrieve_external: no embedder attached");
  const Vec qvec = index.embedder()->embed_text(question_tokens);
  const auto candidates = index.external_vectors(snapshot);
  auto result = retrieve(candidates, qvec, params);
  result.layer = -1;
  return result;
}

} // namespace streamkv
