#pragma once

#include <atomic>
#include <cstdint>

namespace bigsr {

/// Current/peak byte accounting for large buffers.
class MemoryTracker {
public:
  void add(std::uint64_t bytes) noexcept {
    const auto now = current_.fetch_add(bytes) + bytes;
    auto peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
  }
  void sub(std::uint64_t bytes) noexcept { current_.fetch_sub(bytes); }

  std::uint64_t current() const noexcept { return current_.load(); }
  std::uint64_t peak() const noexcept { return peak_.load(); }
  void reset_peak() noexcept { peak_.store(current_.load()); }

private:
  std::atomic<std::uint64_t> current_{0};
  std::atomic<std::uint64_t> peak_{0};
};

/// Phase-1 update buffers and Phase-2 streaming buffers are tracked apart so
/// the Phase-1 budget can be asserted on its own.
struct MemoryAccounting {
  MemoryTracker phase1;
  MemoryTracker merge;
};

/// RAII registration of `bytes` with a tracker (which may be null).
class TrackedBytes {
public:
  TrackedBytes() = default;
  TrackedBytes(MemoryTracker* t, std::uint64_t bytes) : t_(t), bytes_(bytes) {
    if (t_) t_->add(bytes_);
  }
  TrackedBytes(TrackedBytes&& o) noexcept : t_(o.t_), bytes_(o.bytes_) { o.t_ = nullptr; }
  TrackedBytes& operator=(TrackedBytes&& o) noexcept {
    if (this != &o) {
      release();
      t_ = o.t_;
      bytes_ = o.bytes_;
      o.t_ = nullptr;
    }
    return *this;
  }
  ~TrackedBytes() { release(); }

  void release() noexcept {
    if (t_) t_->sub(bytes_);
    t_ = nullptr;
  }

private:
  MemoryTracker* t_ = nullptr;
  std::uint64_t bytes_ = 0;
};

}  // namespace bigsr
