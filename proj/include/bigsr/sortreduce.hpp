#pragma once

// Sort-Reduce: Phase 1 sorts fixed-size buffers of update pairs and folds
// equal keys with the reducer; Phase 2 repeatedly k-way merges the resulting
// runs, folding again at every level, until a single run remains.
//
// Fold order is fixed: within a buffer, input order; across runs, run
// sequence order. Merges only ever combine runs that are adjacent in that
// sequence, so any associative reducer (commutative or not) produces the same
// result whatever the merge schedule.

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "bigsr/error.hpp"
#include "bigsr/memory.hpp"
#include "bigsr/queue.hpp"
#include "bigsr/records.hpp"
#include "bigsr/storage.hpp"

namespace bigsr {

inline constexpr std::uint64_t MiB = std::uint64_t{1} << 20;

/// Orders pairs by key only.
struct KeyLess {
  template <class P>
  bool operator()(const P& a, const P& b) const noexcept {
    return a.key < b.key;
  }
};

/// Reducer placeholder for pure external sorting (duplicates retained).
struct NoReduce {};

template <class R, class V>
concept ReducerFor = std::is_same_v<R, NoReduce> || requires(const R& r, const V& a) {
  { r(a, a) } -> std::convertible_to<V>;
};

struct SortReduceConfig {
  std::uint64_t buffer_bytes = 512 * MiB;
  std::uint64_t sub_chunk_bytes = 32 * MiB;
  unsigned fan_in = 16;
  std::uint64_t merge_read_ahead = 4 * MiB;
  unsigned worker_threads = 1;
  /// Phase-1 buffers in circulation; 0 means 2 * worker_threads.
  unsigned pool_buffers = 0;
  /// When false, runs are only sorted and a single reduction pass follows
  /// the last merge (the baseline that interleaving is measured against).
  bool interleave_reduction = true;
  /// fdatasync each merged run before deleting its inputs.
  bool sync_runs = false;
  std::string temp_dir = "tmp";

  unsigned effective_pool() const { return pool_buffers ? pool_buffers : 2 * worker_threads; }

  void validate() const {
    if (sub_chunk_bytes == 0 || buffer_bytes < 2 * sub_chunk_bytes)
      throw ConfigError("buffer_bytes must be at least twice sub_chunk_bytes");
    if (fan_in < 2) throw ConfigError("fan_in must be >= 2");
    if (worker_threads == 0) throw ConfigError("worker_threads must be >= 1");
    if (merge_read_ahead == 0) throw ConfigError("merge_read_ahead must be > 0");
  }

  /// Paper-scale defaults shrunk to a given buffer size.
  static SortReduceConfig scaled(std::uint64_t buffer_bytes, unsigned threads = 1) {
    SortReduceConfig c;
    c.buffer_bytes = buffer_bytes;
    c.sub_chunk_bytes = std::min<std::uint64_t>(32 * MiB, buffer_bytes / 4);
    c.merge_read_ahead = std::min<std::uint64_t>(4 * MiB, std::max<std::uint64_t>(buffer_bytes / 8, 64 * 1024));
    c.worker_threads = threads;
    return c;
  }
};

template <class V>
struct SortedRun {
  FileHandle file;
  std::uint64_t count = 0;
  VertexId min_key = 0;
  VertexId max_key = 0;
  unsigned level = 0;

  bool empty() const noexcept { return count == 0; }
  std::uint64_t data_bytes() const noexcept { return count * record_size_v<V>; }
};

inline constexpr std::uint32_t kRunMagic = 0x4e555253;  // "SRUN"
inline constexpr std::size_t kRunFooterBytes = 32;

/// Writes records followed by a 32-byte footer
/// (count u64, min u64, max u64, value width u32, magic u32). The footer
/// trails the data so the file stays append-only.
template <class V>
class RunWriter {
public:
  RunWriter(FileHandle f, std::size_t block_bytes, MemoryTracker* mem = nullptr)
      : out_(std::move(f), block_bytes, mem) {}

  void put(VertexId key, const V& value) {
    if (count_ == 0) min_ = key;
    max_ = key;
    ++count_;
    encode_record(out_.reserve(record_size_v<V>), key, value);
  }
  void put(const UpdatePair<V>& p) { put(p.key, p.value); }

  SortedRun<V> finish(unsigned level) {
    std::vector<std::byte> footer;
    put_le(footer, count_);
    put_le(footer, count_ ? min_ : VertexId{0});
    put_le(footer, count_ ? max_ : VertexId{0});
    put_le(footer, static_cast<std::uint32_t>(sizeof(V)));
    put_le(footer, kRunMagic);
    out_.write(footer);
    out_.drain();
    SortedRun<V> r;
    r.file = out_.file();
    r.count = count_;
    r.min_key = count_ ? min_ : 0;
    r.max_key = count_ ? max_ : 0;
    r.level = level;
    return r;
  }

  std::uint64_t bytes_written() const noexcept { return out_.bytes_written(); }
  std::uint64_t count() const noexcept { return count_; }

private:
  BlockWriter out_;
  std::uint64_t count_ = 0;
  VertexId min_ = 0, max_ = 0;
};

/// Reopens a run from its footer.
template <class V>
SortedRun<V> open_run(Store& store, const std::string& name, unsigned level = 0) {
  auto f = store.open(name);
  if (f->length() < kRunFooterBytes) throw FormatError("run '" + name + "' has no footer");
  const auto footer = f->read_at(f->length() - kRunFooterBytes, kRunFooterBytes);
  SortedRun<V> r;
  r.file = f;
  r.count = get_le<std::uint64_t>(footer.data());
  r.min_key = get_le<std::uint64_t>(footer.data() + 8);
  r.max_key = get_le<std::uint64_t>(footer.data() + 16);
  const auto width = get_le<std::uint32_t>(footer.data() + 24);
  const auto magic = get_le<std::uint32_t>(footer.data() + 28);
  if (magic != kRunMagic) throw FormatError("run '" + name + "' has a bad footer");
  if (width != sizeof(V))
    throw FormatError("run '" + name + "' holds " + std::to_string(width) +
                      "-byte values, expected " + std::to_string(sizeof(V)));
  if (r.count * record_size_v<V> + kRunFooterBytes != f->length())
    throw FormatError("run '" + name + "' length disagrees with its footer");
  r.level = level;
  return r;
}

/// A stream of sorted pair blocks.
template <class V>
class BlockSource {
public:
  virtual ~BlockSource() = default;
  virtual bool next_block(std::vector<UpdatePair<V>>& out) = 0;
};

/// Streams a run and validates its ordering as it goes.
template <class V, class Less = KeyLess>
class RunReader final : public BlockSource<V> {
public:
  RunReader(const SortedRun<V>& run, std::uint64_t read_ahead, bool strict,
            MemoryTracker* mem = nullptr, Less less = {})
      : name_(run.file->name()),
        blocks_(run.file, 0, run.data_bytes(), record_size_v<V>, read_ahead, mem),
        strict_(strict), less_(less) {}

  bool next_block(std::vector<UpdatePair<V>>& out) override {
    if (!blocks_.next(raw_)) return false;
    const std::size_t n = raw_.size() / record_size_v<V>;
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = decode_record<V>(raw_.data() + i * record_size_v<V>);
      check(out[i]);
    }
    return true;
  }

  bool next(UpdatePair<V>& p) {
    while (at_ >= cur_.size()) {
      if (!next_block(cur_)) return false;
      at_ = 0;
    }
    p = cur_[at_++];
    return true;
  }

private:
  void check(const UpdatePair<V>& p) {
    if (have_prev_ && (less_(p, prev_) || (strict_ && !less_(prev_, p))))
      throw CorruptionError("run '" + name_ + "' is not sorted at key " + std::to_string(p.key));
    prev_ = p;
    have_prev_ = true;
  }

  std::string name_;
  BlockReader blocks_;
  bool strict_;
  Less less_;
  std::vector<std::byte> raw_;
  std::vector<UpdatePair<V>> cur_;
  std::size_t at_ = 0;
  UpdatePair<V> prev_{};
  bool have_prev_ = false;
};

/// 2-to-1 merger running on its own thread; passes merged blocks downstream
/// through a short bounded queue. On equal order the left input goes first.
template <class V, class Less = KeyLess>
class MergeNode final : public BlockSource<V> {
public:
  MergeNode(std::unique_ptr<BlockSource<V>> left, std::unique_ptr<BlockSource<V>> right,
            std::size_t block_pairs, MemoryTracker* mem, Less less = {})
      : left_(std::move(left)), right_(std::move(right)), block_pairs_(std::max<std::size_t>(1, block_pairs)),
        less_(less), queue_(2), mem_(mem, 5 * block_pairs_ * sizeof(UpdatePair<V>)) {
    worker_ = std::thread([this] { run(); });
  }

  ~MergeNode() override {
    queue_.close();
    if (worker_.joinable()) worker_.join();
  }

  bool next_block(std::vector<UpdatePair<V>>& out) override {
    auto b = queue_.pop();
    if (!b) return false;
    out = std::move(*b);
    return true;
  }

private:
  struct Cursor {
    BlockSource<V>* src;
    std::vector<UpdatePair<V>> buf;
    std::size_t at = 0;
    bool done = false;

    bool ready() {
      while (!done && at >= buf.size()) {
        at = 0;
        if (!src->next_block(buf)) {
          done = true;
          buf.clear();
        }
      }
      return !done;
    }
  };

  void run() {
    try {
      Cursor l{left_.get(), {}}, r{right_.get(), {}};
      std::vector<UpdatePair<V>> out;
      out.reserve(block_pairs_);
      auto emit = [&](const UpdatePair<V>& p) {
        out.push_back(p);
        if (out.size() == block_pairs_) {
          if (!queue_.push(std::move(out))) return false;
          out = {};
          out.reserve(block_pairs_);
        }
        return true;
      };
      for (;;) {
        const bool lr = l.ready(), rr = r.ready();
        if (!lr && !rr) break;
        Cursor& take = (!rr || (lr && !less_(r.buf[r.at], l.buf[l.at]))) ? l : r;
        if (!emit(take.buf[take.at++])) return;
      }
      if (!out.empty()) queue_.push(std::move(out));
      queue_.close();
    } catch (...) {
      queue_.fail(std::current_exception());
    }
  }

  std::unique_ptr<BlockSource<V>> left_, right_;
  std::size_t block_pairs_;
  Less less_;
  BoundedQueue<std::vector<UpdatePair<V>>> queue_;
  TrackedBytes mem_;
  std::thread worker_;
};

/// Per-level record: level 0 is Phase 1, level L>0 holds merges whose
/// output is L levels above the Phase-1 runs.
struct LevelMetrics {
  unsigned level = 0;
  std::uint64_t pairs_in = 0;
  std::uint64_t pairs_out = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t jobs = 0;

  double fraction() const { return pairs_in ? double(pairs_out) / double(pairs_in) : 1.0; }
};

class ReductionMetrics {
public:
  void add(unsigned level, std::uint64_t in, std::uint64_t out, std::uint64_t bytes) {
    std::lock_guard lk(mu_);
    if (levels_.size() <= level) {
      const auto old = levels_.size();
      levels_.resize(level + 1);
      for (auto i = old; i <= level; ++i) levels_[i].level = static_cast<unsigned>(i);
    }
    auto& l = levels_[level];
    l.pairs_in += in;
    l.pairs_out += out;
    l.bytes_written += bytes;
    ++l.jobs;
  }

  std::vector<LevelMetrics> levels() const {
    std::lock_guard lk(mu_);
    return levels_;
  }

  std::uint64_t total_bytes_written() const {
    std::lock_guard lk(mu_);
    std::uint64_t t = 0;
    for (const auto& l : levels_) t += l.bytes_written;
    return t;
  }

  std::uint64_t merge_jobs() const {
    std::lock_guard lk(mu_);
    std::uint64_t t = 0;
    for (std::size_t i = 1; i < levels_.size(); ++i) t += levels_[i].jobs;
    return t;
  }

  std::string csv() const {
    std::ostringstream os;
    os << "level,pairs_in,pairs_out,bytes_written\n";
    for (const auto& l : levels())
      os << l.level << ',' << l.pairs_in << ',' << l.pairs_out << ',' << l.bytes_written << '\n';
    return os.str();
  }

  void merge_from(const ReductionMetrics& o) {
    for (const auto& l : o.levels()) {
      std::lock_guard lk(mu_);
      if (levels_.size() <= l.level) {
        const auto old = levels_.size();
        levels_.resize(l.level + 1);
        for (auto i = old; i <= l.level; ++i) levels_[i].level = static_cast<unsigned>(i);
      }
      auto& m = levels_[l.level];
      m.pairs_in += l.pairs_in;
      m.pairs_out += l.pairs_out;
      m.bytes_written += l.bytes_written;
      m.jobs += l.jobs;
    }
  }

private:
  mutable std::mutex mu_;
  std::vector<LevelMetrics> levels_;
};

/// The Sort-Reduce kernel bound to a store, a configuration and a reducer.
template <FixedWidthValue V, class Reduce = NoReduce, class Less = KeyLess>
  requires ReducerFor<Reduce, V>
class SortReducer {
public:
  using Pair = UpdatePair<V>;
  static constexpr bool kHasReducer = !std::is_same_v<Reduce, NoReduce>;

  SortReducer(Store store, SortReduceConfig cfg, Reduce reduce = {},
              MemoryAccounting* accounting = nullptr, Less less = {})
      : store_(std::move(store)), cfg_(std::move(cfg)), reduce_(std::move(reduce)),
        acct_(accounting), less_(less), metrics_(std::make_shared<ReductionMetrics>()) {
    cfg_.validate();
  }

  const SortReduceConfig& config() const noexcept { return cfg_; }
  Store& store() noexcept { return store_; }
  const ReductionMetrics& metrics() const noexcept { return *metrics_; }
  std::shared_ptr<ReductionMetrics> metrics_ptr() const noexcept { return metrics_; }

  /// True when runs are reduced as they are produced (runs are then strictly
  /// increasing by key).
  bool interleaved() const noexcept { return kHasReducer && cfg_.interleave_reduction; }

  std::size_t buffer_capacity() const noexcept {
    return std::max<std::size_t>(1, cfg_.buffer_bytes / sizeof(Pair));
  }

  /// Phase 1 on one buffer. The buffer is reordered in place.
  SortedRun<V> inmem_sort_reduce(std::vector<Pair>& buffer) {
    if (buffer.size() * sizeof(Pair) > cfg_.buffer_bytes)
      throw ContractViolation("update buffer exceeds buffer_bytes");
    const std::size_t sub = std::max<std::size_t>(1, cfg_.sub_chunk_bytes / sizeof(Pair));
    struct Range {
      std::size_t at, end;
    };
    std::vector<Range> ranges;
    for (std::size_t b = 0; b < buffer.size(); b += sub) {
      const auto e = std::min(buffer.size(), b + sub);
      std::stable_sort(buffer.begin() + b, buffer.begin() + e, less_);
      std::size_t end = e;
      if (interleaved()) end = b + fold_sorted(buffer.begin() + b, buffer.begin() + e);
      ranges.push_back({b, end});
    }

    RunWriter<V> w(store_.create(store_.temp_name(cfg_.temp_dir, "run")), write_block(), merge_mem());
    Emitter out(*this, w);
    if (ranges.size() == 1) {
      for (std::size_t i = ranges[0].at; i < ranges[0].end; ++i) out.put(buffer[i]);
    } else {
      // Sub-chunk merge: ties resolve to the lower sub-chunk, preserving
      // input order for the fold.
      auto cmp = [&](std::size_t a, std::size_t b) {
        const Pair& pa = buffer[ranges[a].at];
        const Pair& pb = buffer[ranges[b].at];
        if (less_(pa, pb)) return false;
        if (less_(pb, pa)) return true;
        return a > b;
      };
      std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
      for (std::size_t i = 0; i < ranges.size(); ++i)
        if (ranges[i].at < ranges[i].end) heap.push(i);
      while (!heap.empty()) {
        const auto i = heap.top();
        heap.pop();
        out.put(buffer[ranges[i].at++]);
        if (ranges[i].at < ranges[i].end) heap.push(i);
      }
    }
    out.flush();
    auto run = w.finish(0);
    metrics_->add(0, buffer.size(), run.count, w.bytes_written());
    return run;
  }

  /// k-to-1 merge of runs given in sequence order. Inputs are deleted once
  /// the output is complete.
  SortedRun<V> merge_reduce(std::vector<SortedRun<V>> runs) {
    if (runs.size() < 2) throw ContractViolation("merge_reduce needs at least two runs");
    if (runs.size() > cfg_.fan_in) throw ContractViolation("merge_reduce given more runs than fan_in");
    unsigned level = 0;
    std::uint64_t in = 0;
    for (const auto& r : runs) {
      level = std::max(level, r.level);
      in += r.count;
    }
    ++level;
    auto root = build_tree(runs, 0, runs.size());
    RunWriter<V> w(store_.create(store_.temp_name(cfg_.temp_dir, "run")), write_block(), merge_mem());
    Emitter out(*this, w);
    std::vector<Pair> block;
    while (root->next_block(block))
      for (const auto& p : block) out.put(p);
    out.flush();
    root.reset();
    auto result = w.finish(level);
    if (cfg_.sync_runs) result.file->flush();
    for (auto& r : runs) store_.remove(r.file);
    metrics_->add(level, in, result.count, w.bytes_written());
    return result;
  }

  /// Merges a sequence of runs down to one using the worker pool.
  SortedRun<V> sort_reduce_all(std::vector<SortedRun<V>> runs) {
    if (runs.empty()) throw ContractViolation("sort_reduce_all needs a non-empty run queue");
    Scheduler sched(*this);
    const auto n = runs.size();
    for (std::size_t i = 0; i < n; ++i) sched.submit(i, std::move(runs[i]));
    sched.close(n);
    return finalize(sched.result());
  }

  /// Single reduction pass over a sorted, unreduced run (sort-only mode).
  SortedRun<V> reduce_pass(SortedRun<V> run) {
    RunReader<V, Less> in(run, cfg_.merge_read_ahead, false, merge_mem(), less_);
    RunWriter<V> w(store_.create(store_.temp_name(cfg_.temp_dir, "run")), write_block(), merge_mem());
    Emitter out(*this, w, true);
    Pair p;
    while (in.next(p)) out.put(p);
    out.flush();
    auto result = w.finish(run.level + 1);
    metrics_->add(result.level, run.count, result.count, w.bytes_written());
    store_.remove(run.file);
    return result;
  }

  /// Deletes a run's backing file.
  void discard(const SortedRun<V>& run) {
    if (run.file) store_.remove(run.file);
  }

  /// Reads a whole run into memory (tests and small results).
  std::vector<Pair> load(const SortedRun<V>& run) {
    std::vector<Pair> out;
    out.reserve(run.count);
    RunReader<V, Less> in(run, cfg_.merge_read_ahead, false, nullptr, less_);
    Pair p;
    while (in.next(p)) out.push_back(p);
    return out;
  }

  class Pipeline;

  /// Orders runs by sequence number and merges adjacent groups of up to
  /// fan_in runs whenever a worker is free. Groups never span a gap.
  class Scheduler {
  public:
    explicit Scheduler(SortReducer& sr) : sr_(sr) {
      for (unsigned i = 0; i < sr_.cfg_.worker_threads; ++i)
        workers_.emplace_back([this] { work(); });
    }

    ~Scheduler() {
      {
        std::lock_guard lk(mu_);
        stop_ = true;
      }
      cv_.notify_all();
      for (auto& t : workers_) t.join();
      for (auto& [_, s] : slots_)
        if (s.run.file && !s.busy) {
          try {
            sr_.discard(s.run);
          } catch (...) {
          }
        }
    }

    void submit(std::uint64_t seq, SortedRun<V> run) {
      {
        std::lock_guard lk(mu_);
        slots_.emplace(seq, Slot{seq, std::move(run), false});
      }
      cv_.notify_all();
    }

    void close(std::uint64_t total) {
      {
        std::lock_guard lk(mu_);
        closed_ = true;
        total_ = total;
      }
      cv_.notify_all();
    }

    void fail(std::exception_ptr e) {
      {
        std::lock_guard lk(mu_);
        if (!error_) error_ = e;
      }
      cv_.notify_all();
    }

    /// Waits for the single remaining run.
    SortedRun<V> result() {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [&] { return error_ || finished(); });
      if (error_) std::rethrow_exception(error_);
      if (slots_.empty()) {
        lk.unlock();
        RunWriter<V> w(sr_.store_.create(sr_.store_.temp_name(sr_.cfg_.temp_dir, "run")),
                       4096, nullptr);
        return w.finish(0);
      }
      auto run = std::move(slots_.begin()->second.run);
      slots_.clear();
      return run;
    }

  private:
    struct Slot {
      std::uint64_t last;  // highest Phase-1 sequence number covered
      SortedRun<V> run;
      bool busy;
    };

    bool finished() const {
      if (!closed_ || busy_ != 0) return false;
      if (total_ == 0) return true;
      return slots_.size() == 1 && slots_.begin()->first == 0 &&
             slots_.begin()->second.last + 1 == total_;
    }

    // Lowest group of >= 2 idle, adjacent slots (at most fan_in).
    std::vector<std::uint64_t> pick() {
      std::vector<std::uint64_t> group;
      std::uint64_t expect = 0;
      for (auto& [first, s] : slots_) {
        if (s.busy || (!group.empty() && first != expect)) {
          if (group.size() >= 2) break;
          group.clear();
          if (s.busy) continue;
        }
        group.push_back(first);
        expect = s.last + 1;
        if (group.size() == sr_.cfg_.fan_in) break;
      }
      if (group.size() < 2) group.clear();
      return group;
    }

    void work() {
      std::unique_lock lk(mu_);
      for (;;) {
        std::vector<std::uint64_t> group;
        cv_.wait(lk, [&] { return stop_ || error_ || !(group = pick()).empty(); });
        if (stop_ || error_) return;
        std::vector<SortedRun<V>> inputs;
        std::uint64_t last = 0;
        for (auto k : group) {
          auto& s = slots_.at(k);
          s.busy = true;
          inputs.push_back(s.run);
          last = s.last;
        }
        ++busy_;
        lk.unlock();
        SortedRun<V> out;
        std::exception_ptr err;
        try {
          out = sr_.merge_reduce(std::move(inputs));
        } catch (...) {
          err = std::current_exception();
        }
        lk.lock();
        --busy_;
        if (err) {
          if (!error_) error_ = err;
          for (auto k : group) slots_.at(k).busy = false;
          cv_.notify_all();
          return;
        }
        for (std::size_t i = 1; i < group.size(); ++i) slots_.erase(group[i]);
        auto& head = slots_.at(group.front());
        head.run = std::move(out);
        head.last = last;
        head.busy = false;
        cv_.notify_all();
      }
    }

    SortReducer& sr_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::uint64_t, Slot> slots_;
    std::vector<std::thread> workers_;
    bool closed_ = false;
    bool stop_ = false;
    std::uint64_t total_ = 0;
    unsigned busy_ = 0;
    std::exception_ptr error_;
  };

  /// Sort-only mode finishes with one reduction pass.
  SortedRun<V> finalize(SortedRun<V> run) {
    if constexpr (kHasReducer) {
      if (!cfg_.interleave_reduction && !run.empty()) return reduce_pass(std::move(run));
    }
    return run;
  }

private:
  // Writes pairs, folding adjacent equal keys when reduction applies.
  class Emitter {
  public:
    Emitter(SortReducer& sr, RunWriter<V>& w, bool force_reduce = false)
        : sr_(sr), w_(w), reduce_(force_reduce || sr.interleaved()) {}

    void put(const Pair& p) {
      if constexpr (kHasReducer) {
        if (reduce_) {
          if (have_ && acc_.key == p.key) {
            acc_.value = sr_.reduce_(acc_.value, p.value);
            return;
          }
          if (have_) w_.put(acc_);
          acc_ = p;
          have_ = true;
          return;
        }
      }
      w_.put(p);
    }

    void flush() {
      if (have_) w_.put(acc_);
      have_ = false;
    }

  private:
    SortReducer& sr_;
    RunWriter<V>& w_;
    bool reduce_;
    Pair acc_{};
    bool have_ = false;
  };

  // Folds equal-key neighbours of a sorted range in place; returns new size.
  template <class It>
  std::size_t fold_sorted(It first, It last) {
    if constexpr (kHasReducer) {
      if (first == last) return 0;
      It out = first;
      for (It it = std::next(first); it != last; ++it) {
        if (it->key == out->key) {
          out->value = reduce_(out->value, it->value);
        } else {
          *++out = *it;
        }
      }
      return static_cast<std::size_t>(std::distance(first, out)) + 1;
    } else {
      return static_cast<std::size_t>(std::distance(first, last));
    }
  }

  std::unique_ptr<BlockSource<V>> build_tree(std::vector<SortedRun<V>>& runs, std::size_t lo,
                                             std::size_t hi) {
    if (hi - lo == 1)
      return std::make_unique<RunReader<V, Less>>(runs[lo], cfg_.merge_read_ahead, interleaved(),
                                                  merge_mem(), less_);
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    auto l = build_tree(runs, lo, mid);
    auto r = build_tree(runs, mid, hi);
    return std::make_unique<MergeNode<V, Less>>(std::move(l), std::move(r), block_pairs(),
                                                merge_mem(), less_);
  }

  std::size_t block_pairs() const {
    return std::max<std::size_t>(1, cfg_.merge_read_ahead / sizeof(Pair));
  }
  std::size_t write_block() const {
    return static_cast<std::size_t>(std::max<std::uint64_t>(4096, cfg_.merge_read_ahead));
  }
  MemoryTracker* merge_mem() const { return acct_ ? &acct_->merge : nullptr; }
  MemoryTracker* phase1_mem() const { return acct_ ? &acct_->phase1 : nullptr; }

  Store store_;
  SortReduceConfig cfg_;
  Reduce reduce_;
  MemoryAccounting* acct_;
  Less less_;
  std::shared_ptr<ReductionMetrics> metrics_;
};

/// Streaming front end: producers push pairs through Emitters; full
/// buffers go to sorter threads, runs go to the merge scheduler. Buffers
/// come from a fixed pool, so producers block when sorting falls behind.
template <FixedWidthValue V, class Reduce, class Less>
  requires ReducerFor<Reduce, V>
class SortReducer<V, Reduce, Less>::Pipeline {
public:
  using Buffer = std::vector<Pair>;

  explicit Pipeline(SortReducer& sr)
      : sr_(sr), pool_cap_(sr.cfg_.effective_pool()), free_(pool_cap_), full_(pool_cap_),
        sched_(std::make_unique<Scheduler>(sr)) {
    for (unsigned i = 0; i < sr_.cfg_.worker_threads; ++i)
      sorters_.emplace_back([this] { sort_loop(); });
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  ~Pipeline() {
    if (!finished_) {
      full_.close();
      for (auto& t : sorters_)
        if (t.joinable()) t.join();
    }
  }

  /// Per-producer handle; not thread-safe, one per producing thread.
  class Emitter {
  public:
    explicit Emitter(Pipeline& p) : p_(&p) {}
    Emitter(Emitter&& o) noexcept : p_(o.p_), buf_(std::move(o.buf_)), has_(o.has_), pushed_(o.pushed_) {
      o.has_ = false;
    }
    ~Emitter() {
      try {
        flush();
      } catch (...) {
      }
    }

    void push(VertexId key, const V& value) {
      if (!has_) {
        buf_ = p_->acquire();
        has_ = true;
      }
      buf_.push_back(Pair{key, value});
      ++pushed_;
      if (buf_.size() == p_->sr_.buffer_capacity()) emit();
    }

    void flush() {
      if (has_ && !buf_.empty()) emit();
      if (has_) {
        p_->release(std::move(buf_));
        has_ = false;
      }
    }

    std::uint64_t pushed() const noexcept { return pushed_; }

  private:
    void emit() {
      p_->submit(std::move(buf_));
      buf_ = {};
      has_ = false;
    }

    Pipeline* p_;
    Buffer buf_;
    bool has_ = false;
    std::uint64_t pushed_ = 0;
  };

  Emitter emitter() { return Emitter(*this); }

  /// Waits for all buffers to be sorted and all runs merged.
  SortedRun<V> finish() {
    full_.close();
    for (auto& t : sorters_) t.join();
    finished_ = true;
    {
      std::lock_guard lk(err_mu_);
      if (error_) std::rethrow_exception(error_);
    }
    sched_->close(next_seq_.load());
    auto run = sched_->result();
    sched_.reset();
    return sr_.finalize(std::move(run));
  }

  std::uint64_t runs_produced() const noexcept { return next_seq_.load(); }

private:
  struct Item {
    std::uint64_t seq;
    Buffer buf;
  };

  Buffer acquire() {
    {
      std::lock_guard lk(pool_mu_);
      if (allocated_ < pool_cap_) {
        ++allocated_;
        Buffer b;
        b.reserve(sr_.buffer_capacity());
        mem_.emplace_back(sr_.phase1_mem(), sr_.buffer_capacity() * sizeof(Pair));
        return b;
      }
    }
    auto b = free_.pop();
    if (!b) throw Error("sort-reduce pipeline shut down");
    return std::move(*b);
  }

  void release(Buffer b) {
    b.clear();
    free_.push(std::move(b));
  }

  void submit(Buffer b) {
    // Sequence numbers follow hand-off order, which fixes cross-run fold order.
    std::lock_guard lk(submit_mu_);
    full_.push(Item{next_seq_.fetch_add(1), std::move(b)});
  }

  void sort_loop() {
    try {
      while (auto item = full_.pop()) {
        auto run = sr_.inmem_sort_reduce(item->buf);
        release(std::move(item->buf));
        sched_->submit(item->seq, std::move(run));
      }
    } catch (...) {
      {
        std::lock_guard lk(err_mu_);
        if (!error_) error_ = std::current_exception();
      }
      full_.fail(std::current_exception());
      free_.fail(std::current_exception());
    }
  }

  SortReducer& sr_;
  unsigned pool_cap_;
  BoundedQueue<Buffer> free_;
  BoundedQueue<Item> full_;
  std::unique_ptr<Scheduler> sched_;
  std::vector<std::thread> sorters_;
  std::mutex pool_mu_, submit_mu_, err_mu_;
  unsigned allocated_ = 0;
  std::vector<TrackedBytes> mem_;
  std::atomic<std::uint64_t> next_seq_{0};
  std::exception_ptr error_;
  bool finished_ = false;
};

}  // namespace bigsr
