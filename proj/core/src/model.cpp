// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "streamkv/error.hpp"
#include "streamkv/rng.hpp"

namespace streamkv {

void ModelConfig::validate() const {
  if (num_layers < 1) throw Error::config("num_layers must be >= 1");
  if (num_heads < 1) throw Error::config("num_heads must be >= 1");
  if (head_dim < 2 || head_dim % 2 != 0) throw Error::config("head_dim must be even and >= 2");
  if (tokens_per_frame < 1) throw Error::config("tokens_per_frame must be >= 1");
  if (vocab_size < 2) throw Error::config("vocab_size must be >= 2");
  if (local_window < tokens_per_frame)
    throw Error::config("local_window must hold at least one frame of tokens");
  if (chunk_tokens_max < 1) throw Error::config("chunk_tokens_max must be >= 1");
  if (sink_frames < 0) throw Error::config("sink_frames must be >= 0");
  if (bytes_per_scalar < 1) throw Error::config("bytes_per_scalar must be >= 1");
  if (!(rope_base > 1.0f)) throw Error::config("rope_base must be > 1");
}

ProjectionMode parse_projection_mode(const std::string& name) {
  if (name == "random") return ProjectionMode::RandomSeeded;
  if (name == "identity") return ProjectionMode::DiagnosticIdentity;
  throw Error::config("unknown projection_mode '" + name + "' (expected random|identity)");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error::config("bad integer for '" + key + "': '" + value + "'");
  }
}

float parse_float(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    float v = std::stof(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error::config("bad float for '" + key + "': '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error::config("bad bool for '" + key + "': '" + value + "'");
}

} // namespace

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error::config("expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "num_layers") cfg.num_layers = parse_int(key, value);
    else if (key == "num_heads") cfg.num_heads = parse_int(key, value);
    else if (key == "head_dim") cfg.head_dim = parse_int(key, value);
    else if (key == "tokens_per_frame") cfg.tokens_per_frame = parse_int(key, value);
    else if (key == "vocab_size") cfg.vocab_size = parse_int(key, value);
    else if (key == "local_window") cfg.local_window = parse_int(key, value);
    else if (key == "chunk_tokens_max") cfg.chunk_tokens_max = parse_int(key, value);
    else if (key == "sink_frames") cfg.sink_frames = parse_int(key, value);
    else if (key == "bytes_per_scalar") cfg.bytes_per_scalar = parse_int(key, value);
    else if (key == "rope_base") cfg.rope_base = parse_float(key, value);
    else if (key == "projection_mode") cfg.projection_mode = parse_projection_mode(value);
    else if (key == "use_mlp") cfg.use_mlp = parse_bool(key, value);
    else throw Error::config("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error::storage("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

namespace {

// Tensor tags for seed derivation. Stable: changing them changes every model.
enum : std::uint64_t { kTagEmbedding = 1, kTagHead = 2, kTagLayerBase = 100 };

Mat random_mat(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t tag,
               double scale) {
  Mat m(rows, cols);
  SplitMix64 g(mix_seed(seed, tag));
  for (auto& v : m.data) v = static_cast<float>(g.next_in(-1.0, 1.0) * scale);
  return m;
}

} // namespace

ToyModel::ToyModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  const std::size_t dim = static_cast<std::size_t>(cfg_.model_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  embedding_ = random_mat(static_cast<std::size_t>(cfg_.vocab_size), dim, seed, kTagEmbedding, scale);
  head_ = random_mat(dim, static_cast<std::size_t>(cfg_.vocab_size), seed, kTagHead, scale);
  layers_.resize(static_cast<std::size_t>(cfg_.num_layers));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::uint64_t base = kTagLayerBase + static_cast<std::uint64_t>(l) * 10;
    auto& w = layers_[static_cast<std::size_t>(l)];
    if (cfg_.projection_mode == ProjectionMode::DiagnosticIdentity) {
      w.wq = Mat::identity(dim);
      w.wk = Mat::identity(dim);
    } else {
      w.wq = random_mat(dim, dim, seed, base + 0, scale);
      w.wk = random_mat(dim, dim, seed, base + 1, scale);
    }
    w.wv = random_mat(dim, dim, seed, base + 2, scale);
    w.wo = random_mat(dim, dim, seed, base + 3, scale);
    if (cfg_.use_mlp) {
      w.mlp_w1 = random_mat(dim, 2 * dim, seed, base + 4, scale);
      w.mlp_w2 = random_mat(2 * dim, dim, seed, base + 5, scale);
    }
  }
}

Mat ToyModel::embed_tokens(std::span<const int> ids) const {
  const std::size_t dim = static_cast<std::size_t>(cfg_.model_dim());
  Mat out(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= cfg_.vocab_size)
      throw Error::vocab("token id " + std::to_string(id) + " outside [0, " +
                         std::to_string(cfg_.vocab_size) + ")");
    const float* src = embedding_.row(static_cast<std::size_t>(id));
    std::copy(src, src + dim, out.row(i));
  }
  return out;
}

namespace {

Mat col_slice(const Mat& m, std::size_t begin, std::size_t end) {
  Mat out(m.rows, end - begin);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const float* src = m.row(i);
    std::copy(src + begin, src + end, out.row(i));
  }
  return out;
}

} // namespace

ToyModel::LayerOut ToyModel::layer_forward(int layer, const Mat& x, const LayerKV& past,
                                           std::span<const std::int64_t> positions) const {
  if (layer < 0 || layer >= cfg_.num_layers) throw Error::config("layer index out of range");
  const std::size_t dim = static_cast<std::size_t>(cfg_.model_dim());
  if (x.cols != dim) throw Error::shape("layer_forward: input width != model_dim");
  if (positions.size() != x.rows)
    throw Error::shape("layer_forward: one position per new token required");
  if (past.tokens() > 0 && (past.keys.cols != dim || past.values.cols != dim))
    throw Error::shape("layer_forward: past cache width != model_dim");
  if (past.keys.rows != past.values.rows)
    throw Error::shape("layer_forward: past key/value row count mismatch");

  const auto& w = layers_[static_cast<std::size_t>(layer)];
  Mat q = matmul(x, w.wq);
  Mat k = matmul(x, w.wk);
  Mat v = matmul(x, w.wv);
  for (std::size_t i = 0; i < x.rows; ++i) {
    rope_rotate_inplace(q.row(i), dim, positions[i], static_cast<std::size_t>(cfg_.head_dim),
                        cfg_.rope_base);
    rope_rotate_inplace(k.row(i), dim, positions[i], static_cast<std::size_t>(cfg_.head_dim),
                        cfg_.rope_base);
  }

  LayerOut out;
  out.new_kv.keys = k;
  out.new_kv.values = v;
  if (x.rows == 0) {
    out.hidden = Mat(0, dim);
    return out;
  }

  Mat k_all = past.keys;
  k_all.append_rows(k);
  Mat v_all = past.values;
  v_all.append_rows(v);

  const std::size_t n_past = past.tokens();
  std::vector<KeyRange> mask(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) mask[i] = {0, n_past + i + 1};

  const std::size_t hd = static_cast<std::size_t>(cfg_.head_dim);
  Mat attn(x.rows, dim);
  for (int h = 0; h < cfg_.num_heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * hd;
    Mat qh = col_slice(q, c0, c0 + hd);
    Mat kh = col_slice(k_all, c0, c0 + hd);
    Mat vh = col_slice(v_all, c0, c0 + hd);
    Mat oh = scaled_dot_attention(qh, kh, vh, mask);
    for (std::size_t i = 0; i < x.rows; ++i)
      std::copy(oh.row(i), oh.row(i) + hd, attn.row(i) + c0);
  }

  out.hidden = finish_layer(layer, x, attn);
  return out;
}

Mat ToyModel::finish_layer(int layer, const Mat& x, const Mat& attn_concat) const {
  const auto& w = layers_[static_cast<std::size_t>(layer)];
  Mat proj = matmul(attn_concat, w.wo);
  Mat hidden(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) hidden.data[i] = x.data[i] + proj.data[i];
  if (cfg_.use_mlp) {
    Mat h1 = matmul(hidden, w.mlp_w1);
    for (auto& v : h1.data) v = std::max(v, 0.0f);
    Mat h2 = matmul(h1, w.mlp_w2);
    for (std::size_t i = 0; i < hidden.data.size(); ++i) hidden.data[i] += h2.data[i];
  }
  return hidden;
}

Vec ToyModel::logits(std::span<const float> hidden) const {
  const std::size_t dim = static_cast<std::size_t>(cfg_.model_dim());
  if (hidden.size() != dim) throw Error::shape("logits: hidden width != model_dim");
  Vec out(static_cast<std::size_t>(cfg_.vocab_size));
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      acc += static_cast<double>(hidden[d]) * static_cast<double>(head_.at(d, j));
    out[j] = static_cast<float>(acc);
  }
  return out;
}

} // namespace streamkv
