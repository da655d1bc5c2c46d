// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkv/kv_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "streamkv/error.hpp"

namespace streamkv {

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::Hot: return "hot";
    case Tier::Ram: return "ram";
    case Tier::Disk: return "disk";
  }
  return "?";
}

std::uint64_t kv_cache_size_bytes(const ModelConfig& cfg, std::int64_t frames) {
  if (frames < 0) throw Error::config("frame count must be >= 0");
  return 2ull * static_cast<std::uint64_t>(cfg.num_layers) * static_cast<std::uint64_t>(frames) *
         static_cast<std::uint64_t>(cfg.tokens_per_frame) *
         static_cast<std::uint64_t>(cfg.num_heads) * static_cast<std::uint64_t>(cfg.head_dim) *
         static_cast<std::uint64_t>(cfg.bytes_per_scalar);
}

namespace {

std::array<std::uint64_t, 256> make_crc64_table() {
  // Reflected form of polynomial 0x42F0E1EBA9EA3693.
  constexpr std::uint64_t poly = 0xC96C5795D7870F42ull;
  std::array<std::uint64_t, 256> table{};
  for (std::uint64_t i = 0; i < 256; ++i) {
    std::uint64_t crc = i;
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ ((crc & 1) ? poly : 0);
    table[i] = crc;
  }
  return table;
}

} // namespace

std::uint64_t crc64_xz(const void* data, std::size_t len) {
  static const auto table = make_crc64_table();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t crc = ~0ull;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

// ============================================================================
// Serialization. Explicit little-endian byte order so files are portable.
// ============================================================================

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string context;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw Error::corruption(context + ": truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
};

constexpr char kMagic[4] = {'R', 'K', 'V', '1'};
constexpr std::uint32_t kVersion = 1;

} // namespace

void write_frame_file(const std::filesystem::path& path, const FrameKV& frame,
                      const ModelConfig& cfg) {
  const std::size_t dim = static_cast<std::size_t>(cfg.model_dim());
  const std::size_t m = static_cast<std::size_t>(cfg.tokens_per_frame);
  if (frame.layers.size() != static_cast<std::size_t>(cfg.num_layers))
    throw Error::shape("frame " + std::to_string(frame.frame_index) + ": layer count mismatch");

  std::string payload;
  payload.reserve(2 * frame.layers.size() * m * dim * 4);
  for (const auto& layer : frame.layers) {
    if (layer.keys.rows != m || layer.keys.cols != dim || layer.values.rows != m ||
        layer.values.cols != dim)
      throw Error::shape("frame " + std::to_string(frame.frame_index) + ": bad layer shape");
    for (float v : layer.keys.data) put_f32(payload, v);
    for (float v : layer.values.data) put_f32(payload, v);
  }

  std::string out;
  out.reserve(48 + payload.size() + 8);
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg.num_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg.tokens_per_frame));
  put_u32(out, static_cast<std::uint32_t>(cfg.num_heads));
  put_u32(out, static_cast<std::uint32_t>(cfg.head_dim));
  put_u64(out, static_cast<std::uint64_t>(frame.frame_index));
  put_f64(out, frame.timestamp);
  put_u64(out, frame.encode_position_start);
  out += payload;
  put_u64(out, crc64_xz(payload.data(), payload.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error::storage("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw Error::storage("write failed for " + path.string());
}

FrameKV read_frame_file(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error::not_found("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  const std::string ctx = path.filename().string();
  Reader r{buf, 0, ctx};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw Error::corruption(ctx + ": bad magic");
  r.pos = 4;
  if (r.u32() != kVersion) throw Error::corruption(ctx + ": unsupported version");
  const std::uint32_t L = r.u32(), M = r.u32(), H = r.u32(), D = r.u32();
  if (L != static_cast<std::uint32_t>(cfg.num_layers) ||
      M != static_cast<std::uint32_t>(cfg.tokens_per_frame) ||
      H != static_cast<std::uint32_t>(cfg.num_heads) ||
      D != static_cast<std::uint32_t>(cfg.head_dim))
    throw Error::storage(ctx + ": stored shape (" + std::to_string(L) + "," + std::to_string(M) +
                         "," + std::to_string(H) + "," + std::to_string(D) +
                         ") does not match the model config");

  FrameKV frame;
  frame.frame_index = static_cast<std::int64_t>(r.u64());
  frame.timestamp = r.f64();
  frame.encode_position_start = r.u64();

  const std::size_t dim = static_cast<std::size_t>(H) * D;
  const std::size_t payload_len = 2ull * L * M * dim * 4;
  r.need(payload_len + 8);
  const std::size_t payload_begin = r.pos;

  frame.layers.resize(L);
  for (auto& layer : frame.layers) {
    layer.keys = Mat(M, dim);
    layer.values = Mat(M, dim);
    for (auto& v : layer.keys.data) v = r.f32();
    for (auto& v : layer.values.data) v = r.f32();
  }
  const std::uint64_t stored_crc = r.u64();
  const std::uint64_t actual_crc = crc64_xz(buf.data() + payload_begin, payload_len);
  if (stored_crc != actual_crc)
    throw Error::corruption("frame " + std::to_string(frame.frame_index) +
                            ": checksum mismatch in " + ctx);
  if (r.pos != buf.size()) throw Error::corruption(ctx + ": trailing bytes");
  return frame;
}

// ============================================================================
// KVStore
// ============================================================================

KVStore::KVStore(const ModelConfig& cfg, StoreConfig store_cfg)
    : cfg_(cfg), store_cfg_(std::move(store_cfg)) {
  cfg_.validate();
  frame_bytes_ = kv_cache_size_bytes(cfg_, 1);
  hot_capacity_frames_ = cfg_.local_window / cfg_.tokens_per_frame;
  if (!store_cfg_.disk_dir.empty()) std::filesystem::create_directories(store_cfg_.disk_dir);
}

std::string KVStore::frame_file_name(std::int64_t frame_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%08lld.rkv", static_cast<long long>(frame_index));
  return buf;
}

TierPlacement KVStore::append(FrameKV frame) {
  const std::size_t dim = static_cast<std::size_t>(cfg_.model_dim());
  const std::size_t m = static_cast<std::size_t>(cfg_.tokens_per_frame);
  if (frame.layers.size() != static_cast<std::size_t>(cfg_.num_layers))
    throw Error::shape("append: expected " + std::to_string(cfg_.num_layers) + " layers");
  for (const auto& layer : frame.layers)
    if (layer.keys.rows != m || layer.keys.cols != dim || layer.values.rows != m ||
        layer.values.cols != dim)
      throw Error::shape("append: layer rows/cols do not match the model config");

  auto shared = std::make_shared<const FrameKV>(std::move(frame));
  std::unique_lock lk(mu_);
  if (closed_) throw Error::ordering("append on a closed store");
  const auto expected = static_cast<std::int64_t>(slots_.size());
  if (shared->frame_index != expected)
    throw Error::ordering("append: expected frame " + std::to_string(expected) + ", got " +
                          std::to_string(shared->frame_index));
  slots_.push_back(Slot{std::move(shared), Tier::Hot, {}});
  bytes_.hot += frame_bytes_;
  bytes_.peak_hot = std::max(bytes_.peak_hot, bytes_.hot);
  demote_after_append();
  enforce_ram_budget_locked(lk);
  TierPlacement placement{expected, slots_[static_cast<std::size_t>(expected)].tier,
                          slots_[static_cast<std::size_t>(expected)].disk_path};
  lk.unlock();
  cv_.notify_all();
  return placement;
}

void KVStore::demote_after_append() {
  // Hot suffix capacity excludes the pinned sink frames.
  const auto count = static_cast<std::int64_t>(slots_.size());
  const std::int64_t sinks = std::min<std::int64_t>(cfg_.sink_frames, count);
  for (std::int64_t i = sinks; i < count; ++i) {
    auto& slot = slots_[static_cast<std::size_t>(i)];
    if (slot.tier != Tier::Hot) continue;
    if (count - i <= hot_capacity_frames_) break; // inside the recent window
    slot.tier = Tier::Ram;
    bytes_.hot -= frame_bytes_;
    bytes_.ram += frame_bytes_;
    bytes_.peak_ram = std::max(bytes_.peak_ram, bytes_.ram);
  }
}

void KVStore::enforce_ram_budget_locked(std::unique_lock<std::mutex>& lk) {
  if (store_cfg_.ram_budget_bytes == 0 || store_cfg_.disk_dir.empty()) return;
  while (bytes_.ram > store_cfg_.ram_budget_bytes) {
    std::int64_t victim = -1;
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].tier == Tier::Ram) {
        victim = static_cast<std::int64_t>(i);
        break;
      }
    if (victim < 0) break;
    auto frame = slots_[static_cast<std::size_t>(victim)].mem;
    const auto path = store_cfg_.disk_dir / frame_file_name(victim);
    lk.unlock(); // file I/O happens outside the critical section
    write_frame_file(path, *frame, cfg_);
    lk.lock();
    set_tier_locked(victim, Tier::Disk, path.string());
  }
}

void KVStore::set_tier_locked(std::int64_t index, Tier tier, std::string disk_path) {
  auto& slot = slots_[static_cast<std::size_t>(index)];
  switch (slot.tier) {
    case Tier::Hot: bytes_.hot -= frame_bytes_; break;
    case Tier::Ram: bytes_.ram -= frame_bytes_; break;
    case Tier::Disk: bytes_.disk -= frame_bytes_; break;
  }
  slot.tier = tier;
  slot.disk_path = std::move(disk_path);
  if (tier == Tier::Disk) slot.mem.reset();
  switch (tier) {
    case Tier::Hot:
      bytes_.hot += frame_bytes_;
      bytes_.peak_hot = std::max(bytes_.peak_hot, bytes_.hot);
      break;
    case Tier::Ram:
      bytes_.ram += frame_bytes_;
      bytes_.peak_ram = std::max(bytes_.peak_ram, bytes_.ram);
      break;
    case Tier::Disk:
      bytes_.disk += frame_bytes_;
      bytes_.peak_disk = std::max(bytes_.peak_disk, bytes_.disk);
      break;
  }
}

std::vector<std::string> KVStore::offload_to_disk(std::int64_t first, std::int64_t last) {
  if (store_cfg_.disk_dir.empty()) throw Error::storage("offload: no disk_dir configured");
  if (first < 0 || last < first) throw Error::config("offload: bad frame range");

  std::vector<std::string> written;
  for (std::int64_t i = first; i <= last; ++i) {
    std::shared_ptr<const FrameKV> frame;
    {
      std::unique_lock lk(mu_);
      if (i >= static_cast<std::int64_t>(slots_.size()))
        throw Error::not_found("offload: frame " + std::to_string(i) + " not in store");
      const auto& slot = slots_[static_cast<std::size_t>(i)];
      if (slot.tier == Tier::Disk) continue; // idempotent
      if (slot.tier == Tier::Hot)
        throw Error::storage("offload: frame " + std::to_string(i) +
                             " is hot; only RAM frames can be offloaded");
      frame = slot.mem;
    }
    const auto path = store_cfg_.disk_dir / frame_file_name(i);
    write_frame_file(path, *frame, cfg_);
    {
      std::unique_lock lk(mu_);
      set_tier_locked(i, Tier::Disk, path.string());
    }
    written.push_back(path.string());
  }
  write_manifest();
  return written;
}

void KVStore::flush_all_to_disk() {
  if (store_cfg_.disk_dir.empty()) throw Error::storage("flush: no disk_dir configured");
  const std::int64_t count = frame_count();
  {
    std::unique_lock lk(mu_);
    for (auto& slot : slots_)
      if (slot.tier == Tier::Hot) {
        slot.tier = Tier::Ram;
        bytes_.hot -= frame_bytes_;
        bytes_.ram += frame_bytes_;
        bytes_.peak_ram = std::max(bytes_.peak_ram, bytes_.ram);
      }
  }
  if (count > 0) offload_to_disk(0, count - 1);
  else write_manifest();
}

void KVStore::write_manifest() const {
  nlohmann::json j;
  j["version"] = 1;
  j["model"] = {{"num_layers", cfg_.num_layers},
                {"tokens_per_frame", cfg_.tokens_per_frame},
                {"num_heads", cfg_.num_heads},
                {"head_dim", cfg_.head_dim}};
  nlohmann::json frames = nlohmann::json::array();
  {
    std::unique_lock lk(mu_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const auto& slot = slots_[i];
      frames.push_back({{"frame_index", static_cast<std::int64_t>(i)},
                        {"tier", tier_name(slot.tier)},
                        {"path", slot.tier == Tier::Disk
                                     ? std::filesystem::path(slot.disk_path).filename().string()
                                     : ""}});
    }
  }
  j["frames"] = std::move(frames);

  const auto tmp = store_cfg_.disk_dir / "manifest.json.tmp";
  const auto final_path = store_cfg_.disk_dir / "manifest.json";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw Error::storage("cannot write manifest " + tmp.string());
    f << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, final_path);
}

std::unique_ptr<KVStore> KVStore::open(const std::filesystem::path& dir, const ModelConfig& cfg,
                                       StoreConfig store_cfg) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw Error::not_found("no manifest at " + manifest_path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error::corruption("manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto& jm = j.at("model");
  if (jm.at("num_layers").get<int>() != cfg.num_layers ||
      jm.at("tokens_per_frame").get<int>() != cfg.tokens_per_frame ||
      jm.at("num_heads").get<int>() != cfg.num_heads ||
      jm.at("head_dim").get<int>() != cfg.head_dim)
    throw Error::storage("manifest model shape does not match the model config");

  store_cfg.disk_dir = dir;
  auto store = std::make_unique<KVStore>(cfg, std::move(store_cfg));
  const auto& jframes = j.at("frames");
  std::unique_lock lk(store->mu_);
  for (std::size_t i = 0; i < jframes.size(); ++i) {
    const auto& jf = jframes[i];
    if (jf.at("frame_index").get<std::int64_t>() != static_cast<std::int64_t>(i))
      throw Error::storage("manifest frames are not contiguous from 0");
    if (jf.at("tier").get<std::string>() != "disk")
      throw Error::storage("manifest frame " + std::to_string(i) +
                           " was never offloaded; reopen requires a fully flushed store");
    store->slots_.push_back(Slot{nullptr, Tier::Disk, (dir / jf.at("path").get<std::string>()).string()});
    store->bytes_.disk += store->frame_bytes_;
  }
  store->bytes_.peak_disk = store->bytes_.disk;
  return store;
}

StoreSnapshot KVStore::snapshot() const { return snapshot_at(max_frame_index()); }

StoreSnapshot KVStore::snapshot_at(std::int64_t max) const {
  if (max < -1) throw Error::config("snapshot_at: max must be >= -1");
  if (max > max_frame_index())
    throw Error::not_found("snapshot_at: frame " + std::to_string(max) + " not yet appended");
  return StoreSnapshot(this, max);
}

std::int64_t KVStore::max_frame_index() const {
  std::unique_lock lk(mu_);
  return static_cast<std::int64_t>(slots_.size()) - 1;
}

std::int64_t KVStore::frame_count() const {
  std::unique_lock lk(mu_);
  return static_cast<std::int64_t>(slots_.size());
}

std::vector<TierPlacement> KVStore::placements() const {
  std::unique_lock lk(mu_);
  std::vector<TierPlacement> out;
  out.reserve(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i)
    out.push_back({static_cast<std::int64_t>(i), slots_[i].tier, slots_[i].disk_path});
  return out;
}

KVStore::TierBytes KVStore::tier_bytes() const {
  std::unique_lock lk(mu_);
  return bytes_;
}

void KVStore::close() {
  {
    std::unique_lock lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool KVStore::closed() const {
  std::unique_lock lk(mu_);
  return closed_;
}

std::int64_t KVStore::wait_admitted(std::int64_t frame_index) const {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] {
    return closed_ || static_cast<std::int64_t>(slots_.size()) > frame_index;
  });
  return static_cast<std::int64_t>(slots_.size()) - 1;
}

std::shared_ptr<const FrameKV> KVStore::load_frame(std::int64_t index,
                                                   std::int64_t max_allowed) const {
  if (index < 0 || index > max_allowed)
    throw Error::not_found("frame " + std::to_string(index) + " outside the snapshot");
  std::shared_ptr<const FrameKV> mem;
  std::string disk_path;
  {
    std::unique_lock lk(mu_);
    if (index >= static_cast<std::int64_t>(slots_.size()))
      throw Error::not_found("frame " + std::to_string(index) + " not in store");
    const auto& slot = slots_[static_cast<std::size_t>(index)];
    mem = slot.mem;
    disk_path = slot.disk_path;
  }
  if (mem) return mem;
  auto frame = read_frame_file(disk_path, cfg_);
  if (frame.frame_index != index)
    throw Error::corruption("frame " + std::to_string(index) + ": file " + disk_path +
                            " holds frame " + std::to_string(frame.frame_index));
  return std::make_shared<const FrameKV>(std::move(frame));
}

const KVStore& StoreSnapshot::store() const {
  if (!store_) throw Error::not_found("empty snapshot has no store");
  return *store_;
}

std::shared_ptr<const FrameKV> StoreSnapshot::load_one(std::int64_t index) const {
  if (!store_) throw Error::not_found("load on an empty snapshot");
  return store_->load_frame(index, max_);
}

std::vector<std::shared_ptr<const FrameKV>> StoreSnapshot::load(
    std::span<const std::int64_t> indices) const {
  std::vector<std::shared_ptr<const FrameKV>> out;
  out.reserve(indices.size());
  std::int64_t prev = -1;
  for (std::int64_t idx : indices) {
    if (idx <= prev) throw Error::ordering("load: frame indices must be ascending and unique");
    prev = idx;
    out.push_back(load_one(idx));
  }
  return out;
}

} // namespace streamkv
