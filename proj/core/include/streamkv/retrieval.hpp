// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamkv/kv_store.hpp"
#include "streamkv/model.hpp"

namespace streamkv {

// Frame vectors can summarise keys after rotary encoding (matching what the
// cache stores) or before it (position-free geometry; useful when ranking
// should ignore where in the stream a frame sat). Post is the default.
enum class FrameVectorRope { Post, Pre };

enum class RetrievalMode { Internal, External, Uniform, OracleLabels };

RetrievalMode parse_retrieval_mode(const std::string& name);
const char* retrieval_mode_name(RetrievalMode mode);
FrameVectorRope parse_frame_vector_rope(const std::string& name);

struct RetrievalParams {
  int r = 64;     // max frames returned; 0 disables retrieval entirely
  int b = 1;      // frames per block; ceil(r/b) blocks are selected
  float tau = 1.0f;
  RetrievalMode mode = RetrievalMode::Internal;
  FrameVectorRope frame_vector_rope = FrameVectorRope::Post;
};

struct FrameVector {
  std::int64_t frame_index = 0;
  int layer = -1; // -1 for external embeddings
  Vec vector;
};

struct BlockVector {
  std::vector<std::int64_t> frames; // ascending member frame indices
  Vec vector;                       // mean of member frame vectors
};

struct RetrievalResult {
  std::vector<std::int64_t> frame_indices; // ascending, at most r entries
  std::vector<float> scores;               // block score of each frame
  int layer = -1;
  int r = 0;
  int b = 1;
  float tau = 1.0f;
  int blocks_scored = 0;
  int blocks_selected = 0; // min(ceil(r/b), blocks_scored)
};

// Mean of a frame's post-rotation key rows at one layer; Pre mode rotates
// each row back by its encode position first. Heads stay concatenated, so
// the vector has model_dim entries.
Vec frame_vector_internal(const FrameKV& frame, int layer, const ModelConfig& cfg,
                          FrameVectorRope rope_mode);

// Mean of the question's pre-rotation query rows (W_Q x, before any rotary
// phase is applied). Using unrotated rows sidesteps the circularity that
// question positions depend on how much context retrieval returns.
Vec question_vector_internal(const Mat& question_query_rows);

// Groups consecutive candidates into blocks of b (last block may be short).
std::vector<BlockVector> block_vectors(std::span<const FrameVector> candidates, int b);

// Block-wise top-k: scores every block by cosine similarity against qvec,
// keeps the best ceil(r/b) blocks (ties break toward the lower block index),
// expands them in rank order taking member frames in ascending index order,
// and truncates at r frames total. Output is re-sorted ascending, so the
// result at r is always a subset of the result at any larger r.
RetrievalResult retrieve(std::span<const FrameVector> candidates, std::span<const float> qvec,
                         const RetrievalParams& params);

// Evenly spaced baseline: frame floor((i + 0.5) * num_frames / r) for each
// i < r, deduplicated. Scores are zero; no similarity is computed.
RetrievalResult uniform_baseline(std::int64_t num_frames, int r);

// Label oracle: the relevant frames themselves (ascending, <= max_frame),
// evenly subsampled down to r when there are more than r of them.
RetrievalResult oracle_baseline(std::span<const std::int64_t> relevant, std::int64_t max_frame,
                                int r);

// |retrieved intersect relevant| / |relevant|. Throws UndefinedMetric when
// relevant is empty.
double recall(std::span<const std::int64_t> retrieved, std::span<const std::int64_t> relevant);

// ============================================================================
// External embeddings
// ============================================================================

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Vec embed_frame(std::span<const int> tokens) const = 0;
  virtual Vec embed_text(std::span<const int> tokens) const = 0;
};

// Seeded random projection of the token count vector. Frames and question
// text share one token space here, so embed_frame == embed_text; a real
// deployment would plug in a cross-modal encoder behind the same interface.
class BagOfTokensEmbedder : public Embedder {
public:
  BagOfTokensEmbedder(int vocab_size, std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  Vec embed_frame(std::span<const int> tokens) const override { return embed(tokens); }
  Vec embed_text(std::span<const int> tokens) const override { return embed(tokens); }

private:
  Vec embed(std::span<const int> tokens) const;

  int vocab_size_;
  std::size_t dim_;
  Mat projection_; // dim x vocab
};

// ============================================================================
// FrameVectorIndex: per-frame retrieval vectors, filled eagerly as frames are
// encoded (the encoder's frame callback) and lazily from the store otherwise.
// External embeddings can only be added eagerly: they need the frame's
// tokens, which the KV store does not keep.
// ============================================================================

class FrameVectorIndex {
public:
  FrameVectorIndex(const ModelConfig& cfg, FrameVectorRope rope_mode,
                   std::shared_ptr<const Embedder> embedder = nullptr);

  // Computes and caches every layer's vector (and the external embedding if
  // an embedder is attached) for one encoded frame.
  void add_frame(const FrameKV& frame, std::span<const int> tokens);

  // Vectors for frames 0..snapshot.max at one layer, ascending. Frames not
  // added eagerly are loaded from the snapshot and cached.
  std::vector<FrameVector> layer_vectors(int layer, const StoreSnapshot& snapshot) const;

  // External embeddings for frames 0..snapshot.max. Throws Index when a
  // frame was never embedded or no embedder is attached.
  std::vector<FrameVector> external_vectors(const StoreSnapshot& snapshot) const;

  bool has_embedder() const { return embedder_ != nullptr; }
  const Embedder* embedder() const { return embedder_.get(); }

  std::uint64_t lazy_loads() const; // frames pulled from the store on demand

private:
  ModelConfig cfg_;
  FrameVectorRope rope_mode_;
  std::shared_ptr<const Embedder> embedder_;

  mutable std::mutex mu_;
  mutable std::vector<std::vector<std::optional<Vec>>> per_layer_; // [layer][frame]
  mutable std::vector<std::optional<Vec>> external_;
  mutable std::uint64_t lazy_loads_ = 0;
};

// Question-conditioned retrieval against external embeddings.
RetrievalResult retrieve_external(const FrameVectorIndex& index, const StoreSnapshot& snapshot,
                                  std::span<const int> question_tokens,
                                  const RetrievalParams& params);

class ToyModel;

// Layer-by-layer internal retrieval: the layer-l question vector comes from
// query projections of the question hidden states at layer l, which already
// attended to the context retrieved at layers 0..l-1. Returns one result per
// layer. Defined alongside the answering engine, which owns the interleaved
// forward pass.
std::vector<RetrievalResult> retrieve_internal(const ToyModel& model,
                                               const StoreSnapshot& snapshot,
                                               const FrameVectorIndex& index,
                                               std::span<const int> question_tokens,
                                               const RetrievalParams& params);

} // namespace streamkv
