#pragma once

#include "implace/core.hpp"

namespace implace {

// Quantized voxel coordinate packed into 64 bits (21 bits per axis, signed).
// Covers +-1e6 voxels per axis, far beyond any submap extent.
struct VoxelKey {
  std::int64_t packed;

  static VoxelKey from_point(const Vec3& p, double voxel_size) {
    auto q = [&](double v) {
      return static_cast<std::int64_t>(std::floor(v / voxel_size));
    };
    return from_coords(q(p.x()), q(p.y()), q(p.z()));
  }
  static VoxelKey from_coords(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t kMask = (1LL << 21) - 1;
    return VoxelKey{((x & kMask) << 42) | ((y & kMask) << 21) | (z & kMask)};
  }
  VoxelKey offset(int dx, int dy, int dz) const {
    auto sext = [](std::int64_t v) { return (v << 43) >> 43; };  // sign-extend 21 bits
    constexpr std::int64_t kMask = (1LL << 21) - 1;
    return from_coords(sext((packed >> 42) & kMask) + dx, sext((packed >> 21) & kMask) + dy,
                       sext(packed & kMask) + dz);
  }
  bool operator==(const VoxelKey& o) const { return packed == o.packed; }
};

// Open-addressing hash map voxel key -> point index. One slot per occupied
// voxel; collisions at the voxel level are resolved upstream by the map's
// eviction rule, so values are plain indices.
class VoxelHashIndex {
 public:
  explicit VoxelHashIndex(std::size_t expected = 1024) { rehash(expected * 2); }

  void insert_or_assign(VoxelKey key, std::uint32_t value) {
    if ((size_ + 1) * 10 >= capacity_ * 7) rehash(capacity_ * 2);
    std::size_t slot = probe(key);
    if (keys_[slot] == kEmpty) {
      keys_[slot] = key.packed;
      ++size_;
    }
    values_[slot] = value;
  }

  // Returns the stored index or uint32 max.
  std::uint32_t find(VoxelKey key) const {
    std::size_t slot = hash(key.packed);
    while (true) {
      std::int64_t k = keys_[slot];
      if (k == key.packed) return values_[slot];
      if (k == kEmpty) return kNotFound;
      slot = (slot + 1) & (capacity_ - 1);
    }
  }

  void clear() {
    std::fill(keys_.begin(), keys_.end(), kEmpty);
    size_ = 0;
  }

  std::size_t size() const { return size_; }

  static constexpr std::uint32_t kNotFound = 0xffffffffu;

 private:
  static constexpr std::int64_t kEmpty = std::numeric_limits<std::int64_t>::min();

  std::size_t hash(std::int64_t packed) const {
    std::uint64_t h = static_cast<std::uint64_t>(packed) * 0x9e3779b97f4a7c15ULL;
    return (h >> 24) & (capacity_ - 1);
  }

  std::size_t probe(VoxelKey key) const {
    std::size_t slot = hash(key.packed);
    while (keys_[slot] != kEmpty && keys_[slot] != key.packed)
      slot = (slot + 1) & (capacity_ - 1);
    return slot;
  }

  void rehash(std::size_t want) {
    std::size_t cap = 64;
    while (cap < want) cap <<= 1;
    std::vector<std::int64_t> old_keys = std::move(keys_);
    std::vector<std::uint32_t> old_values = std::move(values_);
    keys_.assign(cap, kEmpty);
    values_.assign(cap, 0);
    capacity_ = cap;
    size_ = 0;
    for (std::size_t i = 0; i < old_keys.size(); ++i) {
      if (old_keys[i] == kEmpty) continue;
      std::size_t slot = probe(VoxelKey{old_keys[i]});
      keys_[slot] = old_keys[i];
      values_[slot] = old_values[i];
      ++size_;
    }
  }

  std::vector<std::int64_t> keys_;
  std::vector<std::uint32_t> values_;
  std::size_t capacity_ = 0;
  std::size_t size_ = 0;
};

}  // namespace implace
