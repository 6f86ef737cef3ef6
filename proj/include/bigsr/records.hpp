#pragma once

// Fixed-width (key u64, value) records and buffered sequential I/O over
// striped files.

#include <cstdint>
#include <cstring>
#include <future>
#include <span>
#include <type_traits>
#include <vector>

#include "bigsr/memory.hpp"
#include "bigsr/storage.hpp"

namespace bigsr {

using VertexId = std::uint64_t;

template <class V>
struct UpdatePair {
  VertexId key = 0;
  V value{};

  friend bool operator==(const UpdatePair&, const UpdatePair&) = default;
};

template <class V>
concept FixedWidthValue = std::is_trivially_copyable_v<V> && std::is_default_constructible_v<V>;

template <class V>
inline constexpr std::size_t record_size_v = sizeof(VertexId) + sizeof(V);

template <class V>
inline void encode_record(std::byte* dst, VertexId key, const V& value) {
  std::memcpy(dst, &key, sizeof key);
  std::memcpy(dst + sizeof key, &value, sizeof(V));
}

template <class V>
inline UpdatePair<V> decode_record(const std::byte* src) {
  UpdatePair<V> p;
  std::memcpy(&p.key, src, sizeof p.key);
  std::memcpy(&p.value, src + sizeof p.key, sizeof(V));
  return p;
}

template <class T>
inline void put_le(std::vector<std::byte>& out, const T& v) {
  const auto* b = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
inline T get_le(const std::byte* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

/// Buffered appender; bytes reach the file in blocks of `block_bytes`.
class BlockWriter {
public:
  BlockWriter(FileHandle file, std::size_t block_bytes, MemoryTracker* tracker = nullptr)
      : file_(std::move(file)), block_bytes_(block_bytes ? block_bytes : 4096),
        mem_(tracker, block_bytes_) {
    buf_.reserve(block_bytes_);
  }

  void write(std::span<const std::byte> bytes) {
    for (std::size_t done = 0; done < bytes.size();) {
      const std::size_t n = std::min(bytes.size() - done, block_bytes_ - buf_.size());
      buf_.insert(buf_.end(), bytes.begin() + done, bytes.begin() + done + n);
      done += n;
      if (buf_.size() == block_bytes_) drain();
    }
  }

  std::byte* reserve(std::size_t n) {
    if (buf_.size() + n > block_bytes_) drain();
    const auto at = buf_.size();
    buf_.resize(at + n);
    return buf_.data() + at;
  }

  void drain() {
    if (buf_.empty()) return;
    file_->append(buf_);
    bytes_written_ += buf_.size();
    buf_.clear();
  }

  std::uint64_t bytes_written() const noexcept { return bytes_written_; }
  const FileHandle& file() const noexcept { return file_; }

private:
  FileHandle file_;
  std::size_t block_bytes_;
  TrackedBytes mem_;
  std::vector<std::byte> buf_;
  std::uint64_t bytes_written_ = 0;
};

/// Sequential reader over [begin, end) of a file, in whole records, with one
/// block of asynchronous read-ahead. No I/O happens until the first fetch.
class BlockReader {
public:
  BlockReader() = default;
  BlockReader(FileHandle file, std::uint64_t begin, std::uint64_t end, std::size_t record_bytes,
              std::uint64_t block_bytes, MemoryTracker* tracker = nullptr)
      : file_(std::move(file)), begin_(begin), end_(end), pos_(begin) {
    const std::uint64_t recs = std::max<std::uint64_t>(1, block_bytes / record_bytes);
    block_ = recs * record_bytes;
    mem_ = TrackedBytes(tracker, 2 * block_);
  }

  BlockReader(BlockReader&&) noexcept = default;
  BlockReader& operator=(BlockReader&&) noexcept = default;
  ~BlockReader() { settle(); }

  /// Fills `out` with the next block; returns false at end of range.
  bool next(std::vector<std::byte>& out) {
    if (pending_.valid()) {
      out = pending_.get();
    } else {
      if (pos_ >= end_) return false;
      const std::uint64_t n = std::min(block_, end_ - pos_);
      out = file_->read_at(pos_, n);
      pos_ += n;
    }
    if (pos_ < end_) {
      const std::uint64_t n = std::min(block_, end_ - pos_);
      pending_ = file_->read_async(pos_, n);
      pos_ += n;
    }
    return true;
  }

  /// Repositions to an absolute byte offset within the range.
  void seek(std::uint64_t offset) {
    settle();
    pos_ = std::clamp(offset, begin_, end_);
  }

  void rewind() { seek(begin_); }

  std::uint64_t begin() const noexcept { return begin_; }
  std::uint64_t end() const noexcept { return end_; }

private:
  void settle() {
    if (pending_.valid()) {
      try {
        pending_.get();
      } catch (...) {
      }
    }
  }

  FileHandle file_;
  std::uint64_t begin_ = 0, end_ = 0, pos_ = 0, block_ = 0;
  std::future<std::vector<std::byte>> pending_;
  TrackedBytes mem_;
};

}  // namespace bigsr
