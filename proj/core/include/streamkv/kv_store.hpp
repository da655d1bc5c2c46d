// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "streamkv/model.hpp"

namespace streamkv {

// Per-frame KV cache entry: one LayerKV (M token rows, model_dim columns)
// per layer, keys stored rotated at their encode positions.
struct FrameKV {
  std::int64_t frame_index = 0;
  double timestamp = 0.0;
  std::uint64_t encode_position_start = 0;
  std::vector<LayerKV> layers;
};

enum class Tier { Hot, Ram, Disk };

const char* tier_name(Tier t);

struct TierPlacement {
  std::int64_t frame_index = 0;
  Tier tier = Tier::Hot;
  std::string disk_path; // empty unless tier == Disk
};

struct StoreConfig {
  // RAM bytes allowed before the oldest RAM frames are offloaded to disk.
  // 0 means unlimited. Ignored when disk_dir is empty.
  std::uint64_t ram_budget_bytes = 0;
  std::filesystem::path disk_dir; // empty disables the disk tier
};

// Total cache footprint for `frames` frames:
//   2 (K and V) * L * frames * M * H * D * bytes_per_scalar.
std::uint64_t kv_cache_size_bytes(const ModelConfig& cfg, std::int64_t frames);

// CRC-64/XZ (reflected, poly 0x42F0E1EBA9EA3693, init/xorout all-ones).
// crc64_xz over "123456789" is 0x995DC9BBDF1939FA.
std::uint64_t crc64_xz(const void* data, std::size_t len);

// ============================================================================
// On-disk block format, one frame per file, all integers little-endian:
//   "RKV1" | u32 version=1 | u32 L | u32 M | u32 H | u32 D
//   | u64 frame_index | f64 timestamp | u64 encode_position_start
//   | payload: per layer, M*H*D key floats then M*H*D value floats (f32 LE)
//   | u64 CRC-64/XZ of the payload bytes
// ============================================================================

void write_frame_file(const std::filesystem::path& path, const FrameKV& frame,
                      const ModelConfig& cfg);
FrameKV read_frame_file(const std::filesystem::path& path, const ModelConfig& cfg);

class KVStore;

// Immutable view of the store up to a fixed maximum frame. Frames appended
// after the snapshot was taken are invisible through it. The snapshot does
// not own the store; the store must outlive every snapshot taken from it.
class StoreSnapshot {
public:
  StoreSnapshot() = default;

  std::int64_t max_frame_index() const { return max_; } // -1 when empty
  bool empty() const { return max_ < 0; }

  // Frames for ascending unique indices, every tier transparently. Bits are
  // identical to what was appended. Throws Ordering on unsorted input,
  // NotFound for indices beyond the snapshot.
  std::vector<std::shared_ptr<const FrameKV>> load(std::span<const std::int64_t> indices) const;
  std::shared_ptr<const FrameKV> load_one(std::int64_t index) const;

  const KVStore& store() const;

private:
  friend class KVStore;
  StoreSnapshot(const KVStore* store, std::int64_t max) : store_(store), max_(max) {}
  const KVStore* store_ = nullptr;
  std::int64_t max_ = -1;
};

// Tiered KV-cache store. Single writer (the streaming encoder), any number
// of concurrent readers. The hot tier keeps the pinned sink frames plus the
// most recent floor(local_window / M) frames; older frames demote to RAM in
// FIFO order, and RAM frames past the budget offload to disk. Critical
// sections are O(1) slot flips, so the writer never waits on reader I/O.
class KVStore {
public:
  KVStore(const ModelConfig& cfg, StoreConfig store_cfg);

  // Reopens a directory previously populated by flush_all_to_disk. The
  // manifest must cover frames 0..N-1 contiguously.
  static std::unique_ptr<KVStore> open(const std::filesystem::path& dir, const ModelConfig& cfg,
                                       StoreConfig store_cfg);

  // Appends the next frame. frame_index must be exactly max_frame_index()+1
  // (Ordering otherwise); layer count and row shapes must match the model
  // config (Shape). Returns the placement of the new frame, after any
  // demotions it triggered.
  TierPlacement append(FrameKV frame);

  // Moves RAM-resident frames in [first, last] to disk. Hot frames are
  // refused (Storage), frames already on disk are skipped. Returns the
  // paths written. The manifest is rewritten atomically afterwards.
  std::vector<std::string> offload_to_disk(std::int64_t first, std::int64_t last);

  // Demotes everything (sinks included) and offloads it, then writes the
  // manifest. Used when a stream ends and the store should persist.
  void flush_all_to_disk();

  StoreSnapshot snapshot() const;                     // view at current max
  StoreSnapshot snapshot_at(std::int64_t max) const;  // view at a fixed max

  std::int64_t max_frame_index() const; // -1 when empty
  std::int64_t frame_count() const;

  std::vector<TierPlacement> placements() const;

  struct TierBytes {
    std::uint64_t hot = 0, ram = 0, disk = 0;
    std::uint64_t peak_hot = 0, peak_ram = 0, peak_disk = 0;
  };
  TierBytes tier_bytes() const;

  std::uint64_t frame_bytes() const { return frame_bytes_; }

  // Marks the stream finished: no further appends, waiters wake up.
  void close();
  bool closed() const;

  // Blocks until max_frame_index() >= frame_index or the store is closed.
  // Returns the max frame index visible at wakeup.
  std::int64_t wait_admitted(std::int64_t frame_index) const;

  const ModelConfig& model_config() const { return cfg_; }
  const StoreConfig& store_config() const { return store_cfg_; }

  static std::string frame_file_name(std::int64_t frame_index);

private:
  friend class StoreSnapshot;

  struct Slot {
    std::shared_ptr<const FrameKV> mem; // null when only on disk
    Tier tier = Tier::Hot;
    std::string disk_path;
  };

  std::shared_ptr<const FrameKV> load_frame(std::int64_t index, std::int64_t max_allowed) const;
  void demote_after_append();            // caller holds mu_
  void enforce_ram_budget_locked(std::unique_lock<std::mutex>& lk);
  void write_manifest() const;           // takes its own snapshot of slots
  void set_tier_locked(std::int64_t index, Tier tier, std::string disk_path);

  ModelConfig cfg_;
  StoreConfig store_cfg_;
  std::uint64_t frame_bytes_ = 0;
  int hot_capacity_frames_ = 0;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::deque<Slot> slots_; // index == frame_index
  bool closed_ = false;
  TierBytes bytes_;
};

} // namespace streamkv
