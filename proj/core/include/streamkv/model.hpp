// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "streamkv/tensor.hpp"

namespace streamkv {

// With identity projections W_Q = W_K = I, attention scores reduce to
// embedding dot products, which makes retrieval geometry inspectable in
// tests. Random is the default everywhere else.
enum class ProjectionMode { RandomSeeded, DiagnosticIdentity };

struct ModelConfig {
  int num_layers = 4;       // L
  int num_heads = 2;        // H
  int head_dim = 16;        // D; model width is H * D
  int tokens_per_frame = 16; // M
  int vocab_size = 256;
  int local_window = 512;   // sliding attention window, in tokens
  int chunk_tokens_max = 64; // largest token chunk one encode step may take
  int sink_frames = 1;      // leading frames kept attendable forever
  int bytes_per_scalar = 4; // storage accounting; f32 on disk regardless
  float rope_base = 10000.0f;
  ProjectionMode projection_mode = ProjectionMode::RandomSeeded;
  bool use_mlp = false;     // optional fixed 2-layer MLP after attention

  int model_dim() const { return num_heads * head_dim; }
  int sink_tokens() const { return sink_frames * tokens_per_frame; }

  // Throws Config on any out-of-range field.
  void validate() const;

  // Plain key=value file, '#' comments. Unknown keys throw Config.
  static ModelConfig from_file(const std::filesystem::path& path);
  static ModelConfig from_text(const std::string& text);
};

// Cached keys and values for one layer. Rows are tokens, columns the full
// model width (heads concatenated). Keys are stored position-encoded.
struct LayerKV {
  Mat keys;
  Mat values;

  std::size_t tokens() const { return keys.rows; }
};

class ToyModel {
public:
  // Weights are drawn from splitmix64 streams derived from (seed, tensor
  // tag), uniform in [-1, 1) scaled by 1/sqrt(model_dim). Construction is
  // the only place weights are created; they never change afterwards.
  ToyModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  // Token ids -> embedding rows. Throws Vocab on out-of-range ids.
  // Empty input yields a 0 x model_dim matrix.
  Mat embed_tokens(std::span<const int> ids) const;

  struct LayerOut {
    Mat hidden;     // layer output rows for the new tokens (residual applied)
    LayerKV new_kv; // key/value rows produced for the new tokens
  };

  // One decoder layer over [past || new]. New token i attends causally to
  // every past row plus new rows 0..i. `positions` holds the absolute rotary
  // position of each new token; past keys are stored already rotated.
  // This is the plain full-causal path used for answering; the streaming
  // encoder applies its own windowed masks on top of the same kernels.
  LayerOut layer_forward(int layer, const Mat& x, const LayerKV& past,
                         std::span<const std::int64_t> positions) const;

  // Output projection, residual add and (when configured) the fixed MLP.
  // Shared by layer_forward and the streaming encoder so both paths apply
  // byte-identical arithmetic after attention.
  Mat finish_layer(int layer, const Mat& x, const Mat& attn_concat) const;

  // Hidden row -> vocab logits.
  Vec logits(std::span<const float> hidden) const;

  struct LayerWeights {
    Mat wq, wk, wv, wo;
    Mat mlp_w1, mlp_w2; // empty unless use_mlp
  };

  const LayerWeights& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  const Mat& embedding() const { return embedding_; }
  const Mat& head() const { return head_; }

private:
  ModelConfig cfg_;
  std::uint64_t seed_;
  std::vector<LayerWeights> layers_;
  Mat embedding_; // vocab x dim
  Mat head_;      // dim x vocab
};

ProjectionMode parse_projection_mode(const std::string& name);

} // namespace streamkv
