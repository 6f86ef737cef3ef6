#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bigsr/error.hpp"
#include "bigsr/records.hpp"

namespace bigsr {

/// Bloom filter over vertex ids (double hashing on a splitmix64 mix).
class BloomFilter {
public:
  static constexpr unsigned kBitsPerKey = 10;
  static constexpr unsigned kHashes = 7;

  BloomFilter() = default;

  explicit BloomFilter(std::uint64_t expected_keys, unsigned bits_per_key = kBitsPerKey,
                       unsigned hashes = kHashes)
      : hashes_(hashes) {
    num_bits_ = std::max<std::uint64_t>(64, expected_keys * bits_per_key);
    words_.assign((num_bits_ + 63) / 64, 0);
  }

  void add(VertexId key) {
    auto [h1, h2] = hash(key);
    for (unsigned i = 0; i < hashes_; ++i) {
      const std::uint64_t bit = (h1 + i * h2) % num_bits_;
      words_[bit >> 6] |= std::uint64_t{1} << (bit & 63);
    }
    ++keys_;
  }

  bool may_contain(VertexId key) const {
    if (num_bits_ == 0) return true;
    auto [h1, h2] = hash(key);
    for (unsigned i = 0; i < hashes_; ++i) {
      const std::uint64_t bit = (h1 + i * h2) % num_bits_;
      if (!(words_[bit >> 6] >> (bit & 63) & 1)) return false;
    }
    return true;
  }

  std::uint64_t num_bits() const noexcept { return num_bits_; }
  unsigned num_hashes() const noexcept { return hashes_; }
  std::uint64_t keys() const noexcept { return keys_; }

  /// Layout: num_bits u64, hashes u32, reserved u32, keys u64, bit words.
  std::vector<std::byte> serialize() const {
    std::vector<std::byte> out;
    put_le(out, num_bits_);
    put_le(out, static_cast<std::uint32_t>(hashes_));
    put_le(out, std::uint32_t{0});
    put_le(out, keys_);
    for (auto w : words_) put_le(out, w);
    return out;
  }

  static BloomFilter deserialize(const std::vector<std::byte>& in) {
    if (in.size() < 24) throw FormatError("bloom sidecar too short");
    BloomFilter b;
    b.num_bits_ = get_le<std::uint64_t>(in.data());
    b.hashes_ = get_le<std::uint32_t>(in.data() + 8);
    b.keys_ = get_le<std::uint64_t>(in.data() + 16);
    const std::size_t words = (b.num_bits_ + 63) / 64;
    if (in.size() != 24 + words * 8) throw FormatError("bloom sidecar size mismatch");
    b.words_.resize(words);
    for (std::size_t i = 0; i < words; ++i) b.words_[i] = get_le<std::uint64_t>(in.data() + 24 + 8 * i);
    return b;
  }

private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::pair<std::uint64_t, std::uint64_t> hash(VertexId key) {
    const std::uint64_t h = mix(key);
    return {h, mix(h) | 1};
  }

  std::uint64_t num_bits_ = 0;
  unsigned hashes_ = kHashes;
  std::uint64_t keys_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace bigsr
