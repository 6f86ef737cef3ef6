#pragma once

// Vertex sources: lazily evaluated, key-ordered streams of (vertex, value)
// entries over sparse and dense vertex files, plus compound sources that
// combine them. Nothing is read from storage until has_next/get_next.

#include <algorithm>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bigsr/bloom.hpp"
#include "bigsr/error.hpp"
#include "bigsr/records.hpp"
#include "bigsr/storage.hpp"

namespace bigsr {

template <class V>
using VertexEntry = UpdatePair<V>;

inline constexpr std::uint64_t kSourceBlockBytes = 256 * 1024;

template <class V>
class VertexSource {
public:
  virtual ~VertexSource() = default;

  /// Without `idx`: is there another entry. With `idx`: skips every entry
  /// with key < idx and reports whether an entry with key >= idx remains.
  /// Successive idx arguments must not decrease.
  bool has_next(std::optional<VertexId> idx = std::nullopt) {
    if (idx) {
      if (last_idx_ && *idx < *last_idx_)
        throw ContractViolation("has_next index decreased from " + std::to_string(*last_idx_) +
                                " to " + std::to_string(*idx));
      last_idx_ = idx;
      skip_to(*idx);
    }
    return peek() != nullptr;
  }

  VertexEntry<V> get_next() {
    const auto* e = peek();
    if (!e) throw ContractViolation("get_next on an exhausted vertex source");
    VertexEntry<V> out = *e;
    advance();
    return out;
  }

  /// Restarts the stream; compound sources rewind their inputs.
  void rewind() {
    last_idx_.reset();
    reset();
  }

  // Building blocks used by compound sources.
  virtual const VertexEntry<V>* peek() = 0;
  virtual void advance() = 0;
  virtual void skip_to(VertexId idx) {
    while (const auto* e = peek()) {
      if (e->key >= idx) break;
      advance();
    }
  }
  virtual void reset() = 0;

private:
  std::optional<VertexId> last_idx_;
};

template <class V>
using SourcePtr = std::unique_ptr<VertexSource<V>>;

/// In-memory source; keys must be strictly increasing.
template <class V>
class VectorSource final : public VertexSource<V> {
public:
  explicit VectorSource(std::vector<VertexEntry<V>> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (entries_[i].key <= entries_[i - 1].key)
        throw ContractViolation("VectorSource keys must be strictly increasing");
  }

  const VertexEntry<V>* peek() override { return at_ < entries_.size() ? &entries_[at_] : nullptr; }
  void advance() override { ++at_; }
  void skip_to(VertexId idx) override {
    auto it = std::lower_bound(entries_.begin() + static_cast<std::ptrdiff_t>(at_), entries_.end(), idx,
                               [](const VertexEntry<V>& e, VertexId k) { return e.key < k; });
    at_ = static_cast<std::size_t>(it - entries_.begin());
  }
  void reset() override { at_ = 0; }

private:
  std::vector<VertexEntry<V>> entries_;
  std::size_t at_ = 0;
};

template <class V>
SourcePtr<V> make_vector_source(std::vector<VertexEntry<V>> entries) {
  return std::make_unique<VectorSource<V>>(std::move(entries));
}

template <class V>
SourcePtr<V> make_empty_source() {
  return std::make_unique<VectorSource<V>>(std::vector<VertexEntry<V>>{});
}

template <class V>
std::vector<VertexEntry<V>> drain(VertexSource<V>& s) {
  std::vector<VertexEntry<V>> out;
  while (s.has_next()) out.push_back(s.get_next());
  return out;
}

/// (k, f(k)) for every k in [0, n).
template <class V>
class RangeSource final : public VertexSource<V> {
public:
  using Fn = std::function<V(VertexId)>;

  RangeSource(std::uint64_t n, Fn f) : n_(n), f_(std::move(f)) {}

  const VertexEntry<V>* peek() override {
    if (at_ >= n_) return nullptr;
    if (!have_) {
      cur_ = {at_, f_(at_)};
      have_ = true;
    }
    return &cur_;
  }
  void advance() override {
    ++at_;
    have_ = false;
  }
  void skip_to(VertexId idx) override {
    if (idx > at_) {
      at_ = std::min<VertexId>(idx, n_);
      have_ = false;
    }
  }
  void reset() override {
    at_ = 0;
    have_ = false;
  }

private:
  std::uint64_t n_;
  Fn f_;
  VertexId at_ = 0;
  VertexEntry<V> cur_{};
  bool have_ = false;
};

template <class V>
SourcePtr<V> range_source(std::uint64_t n, typename RangeSource<V>::Fn f) {
  return std::make_unique<RangeSource<V>>(n, std::move(f));
}

// ---------------------------------------------------------------------------
// Sparse vertex files: contiguous (key u64, value) records, keys strictly
// increasing, no header.

template <class V>
struct SparseVertexFile {
  FileHandle file;
  std::uint64_t count = 0;
};

template <FixedWidthValue V>
SparseVertexFile<V> open_sparse(Store& store, const std::string& name) {
  auto f = store.open(name);
  if (f->length() % record_size_v<V>)
    throw FormatError("sparse vertex file '" + name + "' is not a whole number of records");
  return {f, f->length() / record_size_v<V>};
}

template <FixedWidthValue V>
class SparseFileWriter {
public:
  SparseFileWriter(FileHandle f, std::size_t block_bytes = kSourceBlockBytes)
      : out_(std::move(f), block_bytes) {}

  void put(VertexId key, const V& value) {
    if (count_ && key <= last_)
      throw ContractViolation("sparse vertex file keys must be strictly increasing");
    encode_record(out_.reserve(record_size_v<V>), key, value);
    last_ = key;
    ++count_;
  }

  SparseVertexFile<V> finish() {
    out_.drain();
    return {out_.file(), count_};
  }

  std::uint64_t count() const noexcept { return count_; }

private:
  BlockWriter out_;
  std::uint64_t count_ = 0;
  VertexId last_ = 0;
};

template <FixedWidthValue V>
class SparseFileSource final : public VertexSource<V> {
public:
  explicit SparseFileSource(const SparseVertexFile<V>& f, std::uint64_t block = kSourceBlockBytes)
      : name_(f.file->name()), reader_(f.file, 0, f.count * record_size_v<V>, record_size_v<V>, block) {}

  const VertexEntry<V>* peek() override {
    if (!loaded_) load();
    return has_ ? &cur_ : nullptr;
  }
  void advance() override {
    if (!loaded_) load();
    loaded_ = false;
  }
  void reset() override {
    reader_.rewind();
    raw_.clear();
    at_ = 0;
    loaded_ = false;
    has_ = false;
    started_ = false;
  }

private:
  void load() {
    loaded_ = true;
    while (at_ >= raw_.size()) {
      at_ = 0;
      if (!reader_.next(raw_)) {
        raw_.clear();
        has_ = false;
        return;
      }
    }
    const auto e = decode_record<V>(raw_.data() + at_);
    at_ += record_size_v<V>;
    if (started_ && e.key <= cur_.key)
      throw CorruptionError("sparse vertex file '" + name_ + "' keys not increasing at " +
                            std::to_string(e.key));
    cur_ = e;
    has_ = true;
    started_ = true;
  }

  std::string name_;
  BlockReader reader_;
  std::vector<std::byte> raw_;
  std::size_t at_ = 0;
  VertexEntry<V> cur_{};
  bool loaded_ = false, has_ = false, started_ = false;
};

template <FixedWidthValue V>
SourcePtr<V> make_sparse_source(const SparseVertexFile<V>& f) {
  return std::make_unique<SparseFileSource<V>>(f);
}

// ---------------------------------------------------------------------------
// Dense vertex files: 16-byte preamble (value width u32, default-value
// pattern 8 bytes, flags u32) followed by num_vertices values. Flag bit 0
// marks a `<name>.bloom` sidecar over the keys holding non-default values.

inline constexpr std::size_t kDenseHeaderBytes = 16;
inline constexpr std::uint32_t kDenseFlagBloom = 1;

template <class V>
bool same_bytes(const V& a, const V& b) {
  return std::memcmp(&a, &b, sizeof(V)) == 0;
}

template <class V>
struct DenseVertexFile {
  FileHandle file;
  std::uint64_t num_vertices = 0;
  V default_value{};
  std::shared_ptr<const BloomFilter> bloom;  // null when absent
};

template <FixedWidthValue V>
DenseVertexFile<V> open_dense(Store& store, const std::string& name) {
  static_assert(sizeof(V) <= 8, "dense default pattern holds at most 8 bytes");
  auto f = store.open(name);
  if (f->length() < kDenseHeaderBytes) throw FormatError("dense file '" + name + "' has no header");
  const auto h = f->read_at(0, kDenseHeaderBytes);
  const auto width = get_le<std::uint32_t>(h.data());
  if (width != sizeof(V))
    throw FormatError("dense file '" + name + "' holds " + std::to_string(width) +
                      "-byte values, expected " + std::to_string(sizeof(V)));
  const auto payload = f->length() - kDenseHeaderBytes;
  if (payload % sizeof(V)) throw FormatError("dense file '" + name + "' has a partial value");
  DenseVertexFile<V> d;
  d.file = f;
  d.num_vertices = payload / sizeof(V);
  std::memcpy(&d.default_value, h.data() + 4, sizeof(V));
  const auto flags = get_le<std::uint32_t>(h.data() + 12);
  if (flags & kDenseFlagBloom) {
    auto b = store.open(name + ".bloom");
    d.bloom = std::make_shared<BloomFilter>(BloomFilter::deserialize(b->read_at(0, b->length())));
  }
  return d;
}

/// Writes a dense file in key order; skipped keys receive the default.
template <FixedWidthValue V>
class DenseFileWriter {
public:
  DenseFileWriter(Store store, std::string name, std::uint64_t num_vertices, V default_value,
                  bool with_bloom, std::size_t block_bytes = kSourceBlockBytes)
      : store_(std::move(store)), name_(std::move(name)), n_(num_vertices), def_(default_value),
        bloom_(with_bloom), out_(store_.create(name_), block_bytes) {
    static_assert(sizeof(V) <= 8);
    std::vector<std::byte> h;
    put_le(h, static_cast<std::uint32_t>(sizeof(V)));
    std::byte pattern[8]{};
    std::memcpy(pattern, &def_, sizeof(V));
    h.insert(h.end(), pattern, pattern + 8);
    put_le(h, bloom_ ? kDenseFlagBloom : std::uint32_t{0});
    out_.write(h);
  }

  void put(VertexId key, const V& value) {
    if (key < next_) throw ContractViolation("dense writer keys must be strictly increasing");
    if (key >= n_) throw BoundsError("dense writer key " + std::to_string(key) + " >= " + std::to_string(n_));
    fill_to(key);
    emit(value);
  }

  DenseVertexFile<V> finish() {
    fill_to(n_);
    out_.drain();
    DenseVertexFile<V> d{out_.file(), n_, def_, nullptr};
    if (bloom_) d.bloom = build_bloom(d);
    return d;
  }

private:
  void emit(const V& v) {
    std::memcpy(out_.reserve(sizeof(V)), &v, sizeof(V));
    if (!same_bytes(v, def_)) ++non_default_;
    ++next_;
  }

  void fill_to(VertexId key) {
    while (next_ < key) emit(def_);
  }

  // Second sequential pass over the finished file sizes the filter exactly.
  std::shared_ptr<const BloomFilter> build_bloom(const DenseVertexFile<V>& d) {
    auto bf = std::make_shared<BloomFilter>(non_default_);
    BlockReader r(d.file, kDenseHeaderBytes, d.file->length(), sizeof(V), kSourceBlockBytes);
    std::vector<std::byte> raw;
    VertexId k = 0;
    while (r.next(raw)) {
      for (std::size_t at = 0; at < raw.size(); at += sizeof(V), ++k) {
        V v;
        std::memcpy(&v, raw.data() + at, sizeof(V));
        if (!same_bytes(v, def_)) bf->add(k);
      }
    }
    auto side = store_.create(name_ + ".bloom");
    side->append(bf->serialize());
    return bf;
  }

  Store store_;
  std::string name_;
  std::uint64_t n_;
  V def_;
  bool bloom_;
  BlockWriter out_;
  VertexId next_ = 0;
  std::uint64_t non_default_ = 0;
};

/// Streams a dense file. In `all` mode every vertex is produced; in
/// `non_default` mode only vertices whose value differs from the default,
/// and keys the bloom filter rules out are skipped without any read.
template <FixedWidthValue V>
class DenseFileSource final : public VertexSource<V> {
public:
  enum class Mode { all, non_default };

  DenseFileSource(DenseVertexFile<V> f, Mode mode = Mode::all, std::uint64_t block = kSourceBlockBytes)
      : f_(std::move(f)), mode_(mode),
        per_block_(std::max<std::uint64_t>(1, block / sizeof(V))) {}

  const VertexEntry<V>* peek() override {
    if (!settled_) settle();
    return pos_ < f_.num_vertices ? &cur_ : nullptr;
  }
  void advance() override {
    if (!settled_) settle();
    if (pos_ < f_.num_vertices) ++pos_;
    settled_ = false;
  }
  // Dense files jump straight to the requested key.
  void skip_to(VertexId idx) override {
    if (idx > pos_) {
      pos_ = std::min<VertexId>(idx, f_.num_vertices);
      settled_ = false;
    }
  }
  void reset() override {
    pos_ = 0;
    settled_ = false;
  }

  std::uint64_t blocks_fetched() const noexcept { return fetches_; }

private:
  void settle() {
    settled_ = true;
    while (pos_ < f_.num_vertices) {
      if (mode_ == Mode::non_default && f_.bloom && !f_.bloom->may_contain(pos_)) {
        ++pos_;
        continue;
      }
      V v = value_at(pos_);
      if (mode_ == Mode::non_default && same_bytes(v, f_.default_value)) {
        ++pos_;
        continue;
      }
      cur_ = {pos_, v};
      return;
    }
  }

  V value_at(VertexId k) {
    if (k < buf_first_ || k >= buf_first_ + buf_count_) {
      buf_first_ = k - k % per_block_;
      buf_count_ = std::min<std::uint64_t>(per_block_, f_.num_vertices - buf_first_);
      buf_ = f_.file->read_at(kDenseHeaderBytes + buf_first_ * sizeof(V), buf_count_ * sizeof(V));
      ++fetches_;
    }
    V v;
    std::memcpy(&v, buf_.data() + (k - buf_first_) * sizeof(V), sizeof(V));
    return v;
  }

  DenseVertexFile<V> f_;
  Mode mode_;
  std::uint64_t per_block_;
  VertexId pos_ = 0;
  bool settled_ = false;
  VertexEntry<V> cur_{};
  std::vector<std::byte> buf_;
  VertexId buf_first_ = 0;
  std::uint64_t buf_count_ = 0;
  std::uint64_t fetches_ = 0;
};

template <FixedWidthValue V>
SourcePtr<V> make_dense_source(const DenseVertexFile<V>& f,
                               typename DenseFileSource<V>::Mode mode = DenseFileSource<V>::Mode::all) {
  return std::make_unique<DenseFileSource<V>>(f, mode);
}

/// Drains `src` into a new dense file.
template <FixedWidthValue V>
DenseVertexFile<V> write_dense(Store& store, const std::string& name, std::uint64_t num_vertices,
                               V default_value, VertexSource<V>& src, bool with_bloom) {
  DenseFileWriter<V> w(store, name, num_vertices, default_value, with_bloom);
  while (src.has_next()) {
    const auto e = src.get_next();
    w.put(e.key, e.value);
  }
  return w.finish();
}

template <FixedWidthValue V>
SparseVertexFile<V> write_sparse(Store& store, const std::string& name, VertexSource<V>& src) {
  SparseFileWriter<V> w(store.create(name));
  while (src.has_next()) {
    const auto e = src.get_next();
    w.put(e.key, e.value);
  }
  return w.finish();
}

// ---------------------------------------------------------------------------
// Compound sources.

/// <K, f(V)> for every entry of the input.
template <class V>
class ArithSource final : public VertexSource<V> {
public:
  using Fn = std::function<V(const V&)>;

  ArithSource(SourcePtr<V> in, Fn f) : in_(std::move(in)), f_(std::move(f)) {}

  const VertexEntry<V>* peek() override {
    if (!have_) {
      const auto* e = in_->peek();
      if (!e) return nullptr;
      cur_ = {e->key, f_(e->value)};
      have_ = true;
    }
    return &cur_;
  }
  void advance() override {
    in_->advance();
    have_ = false;
  }
  void skip_to(VertexId idx) override {
    if (have_ && cur_.key >= idx) return;
    have_ = false;
    in_->skip_to(idx);
  }
  void reset() override {
    in_->reset();
    have_ = false;
  }

private:
  SourcePtr<V> in_;
  Fn f_;
  VertexEntry<V> cur_{};
  bool have_ = false;
};

template <class V>
SourcePtr<V> arith_source(SourcePtr<V> in, typename ArithSource<V>::Fn f) {
  return std::make_unique<ArithSource<V>>(std::move(in), std::move(f));
}

enum class LogicalOp { union_, difference, minimum, custom, converge };

/// Two-input merge-style set operations. Both inputs must be key-ordered.
///  union      : all keys of a and b; a's value wins on a match
///  difference : entries of a whose key is absent from b
///  minimum    : (k, min(va, vb)) for keys present in both
///  custom     : (k, g(va, vb)) on a match; unmatched entries pass through
///  converge   : entries of a where pred(va, vb) says "not converged"; entries
///               of a with no counterpart in b are emitted
template <class V>
class LogicalSource final : public VertexSource<V> {
public:
  using Combine = std::function<V(const V&, const V&)>;
  using Predicate = std::function<bool(const V&, const V&)>;

  LogicalSource(LogicalOp op, SourcePtr<V> a, SourcePtr<V> b, Combine g = {}, Predicate pred = {})
      : op_(op), a_(std::move(a)), b_(std::move(b)), g_(std::move(g)), pred_(std::move(pred)) {
    if (op_ == LogicalOp::custom && !g_) throw ContractViolation("custom logical source needs a function");
    if (op_ == LogicalOp::converge && !pred_)
      throw ContractViolation("converge logical source needs a predicate");
    if (op_ == LogicalOp::minimum && !g_) {
      if constexpr (requires(const V& x) { x < x; }) {
        g_ = [](const V& x, const V& y) { return y < x ? y : x; };
      } else {
        throw ContractViolation("minimum needs an ordered value type");
      }
    }
  }

  const VertexEntry<V>* peek() override {
    if (!have_ && !done_) compute();
    return have_ ? &cur_ : nullptr;
  }
  void advance() override {
    if (!have_ && !done_) compute();
    have_ = false;
  }
  void skip_to(VertexId idx) override {
    if (have_ && cur_.key >= idx) return;
    have_ = false;
    done_ = false;
    a_->skip_to(idx);
    b_->skip_to(idx);
  }
  void reset() override {
    a_->reset();
    b_->reset();
    have_ = false;
    done_ = false;
  }

private:
  void set(VertexId k, const V& v) {
    cur_ = {k, v};
    have_ = true;
  }

  void compute() {
    for (;;) {
      const auto* pa = a_->peek();
      switch (op_) {
        case LogicalOp::union_:
        case LogicalOp::custom: {
          const auto* pb = b_->peek();
          if (!pa && !pb) return finish();
          if (!pb || (pa && pa->key < pb->key)) {
            set(pa->key, pa->value);
            a_->advance();
          } else if (!pa || pb->key < pa->key) {
            set(pb->key, pb->value);
            b_->advance();
          } else {
            set(pa->key, op_ == LogicalOp::union_ ? pa->value : g_(pa->value, pb->value));
            a_->advance();
            b_->advance();
          }
          return;
        }
        case LogicalOp::difference:
        case LogicalOp::converge: {
          if (!pa) return finish();
          const VertexEntry<V> ea = *pa;
          b_->skip_to(ea.key);
          const auto* pb = b_->peek();
          a_->advance();
          const bool match = pb && pb->key == ea.key;
          if (op_ == LogicalOp::difference) {
            if (match) continue;
          } else if (match && !pred_(ea.value, pb->value)) {
            continue;
          }
          set(ea.key, ea.value);
          return;
        }
        case LogicalOp::minimum: {
          const auto* pb = b_->peek();
          if (!pa || !pb) return finish();
          if (pa->key < pb->key) {
            a_->skip_to(pb->key);
          } else if (pb->key < pa->key) {
            b_->skip_to(pa->key);
          } else {
            set(pa->key, g_(pa->value, pb->value));
            a_->advance();
            b_->advance();
            return;
          }
          continue;
        }
      }
    }
  }

  void finish() {
    have_ = false;
    done_ = true;
  }

  LogicalOp op_;
  SourcePtr<V> a_, b_;
  Combine g_;
  Predicate pred_;
  VertexEntry<V> cur_{};
  bool have_ = false;
  bool done_ = false;
};

template <class V>
SourcePtr<V> logical_source(LogicalOp op, SourcePtr<V> a, SourcePtr<V> b,
                            typename LogicalSource<V>::Combine g = {},
                            typename LogicalSource<V>::Predicate pred = {}) {
  return std::make_unique<LogicalSource<V>>(op, std::move(a), std::move(b), std::move(g), std::move(pred));
}

template <class V>
SourcePtr<V> union_source(SourcePtr<V> a, SourcePtr<V> b) {
  return logical_source<V>(LogicalOp::union_, std::move(a), std::move(b));
}

template <class V>
SourcePtr<V> difference_source(SourcePtr<V> a, SourcePtr<V> b) {
  return logical_source<V>(LogicalOp::difference, std::move(a), std::move(b));
}

template <class V>
SourcePtr<V> minimum_source(SourcePtr<V> a, SourcePtr<V> b) {
  return logical_source<V>(LogicalOp::minimum, std::move(a), std::move(b));
}

template <class V>
SourcePtr<V> custom_source(SourcePtr<V> a, SourcePtr<V> b, typename LogicalSource<V>::Combine g) {
  return logical_source<V>(LogicalOp::custom, std::move(a), std::move(b), std::move(g));
}

template <class V>
SourcePtr<V> converge_source(SourcePtr<V> a, SourcePtr<V> b, typename LogicalSource<V>::Predicate not_converged) {
  return logical_source<V>(LogicalOp::converge, std::move(a), std::move(b), {}, std::move(not_converged));
}

// ---------------------------------------------------------------------------
// Split: routes consecutive chunks of N input entries round-robin to `ways`
// outputs. Outputs may be drained from different threads; the input is only
// touched under the group lock. Rewinding any output rewinds the group.

template <class V>
class SplitGroup : public std::enable_shared_from_this<SplitGroup<V>> {
public:
  SplitGroup(SourcePtr<V> in, std::size_t ways, std::size_t chunk)
      : in_(std::move(in)), ways_(ways), chunk_(chunk), queues_(ways) {}

  // Moves the next entry for `out` into `dst`; false when exhausted.
  bool pull(std::size_t out, VertexEntry<V>& dst) {
    std::lock_guard lk(mu_);
    while (queues_[out].empty()) {
      if (exhausted_) return false;
      fill_chunk();
    }
    dst = queues_[out].front();
    queues_[out].pop_front();
    return true;
  }

  void reset() {
    std::lock_guard lk(mu_);
    in_->reset();
    for (auto& q : queues_) q.clear();
    next_chunk_ = 0;
    exhausted_ = false;
    ++epoch_;
  }

  std::uint64_t epoch() const {
    std::lock_guard lk(mu_);
    return epoch_;
  }

private:
  void fill_chunk() {
    auto& q = queues_[next_chunk_ % ways_];
    for (std::size_t i = 0; i < chunk_; ++i) {
      const auto* e = in_->peek();
      if (!e) {
        exhausted_ = true;
        break;
      }
      q.push_back(*e);
      in_->advance();
    }
    ++next_chunk_;
  }

  mutable std::mutex mu_;
  SourcePtr<V> in_;
  std::size_t ways_, chunk_;
  std::vector<std::deque<VertexEntry<V>>> queues_;
  std::uint64_t next_chunk_ = 0;
  bool exhausted_ = false;
  std::uint64_t epoch_ = 0;
};

template <class V>
class SplitOutput final : public VertexSource<V> {
public:
  SplitOutput(std::shared_ptr<SplitGroup<V>> g, std::size_t idx) : g_(std::move(g)), idx_(idx) {}

  const VertexEntry<V>* peek() override {
    sync();
    if (!have_ && !done_) {
      have_ = g_->pull(idx_, cur_);
      done_ = !have_;
    }
    return have_ ? &cur_ : nullptr;
  }
  void advance() override {
    peek();
    have_ = false;
  }
  void reset() override { g_->reset(); }

private:
  // Another output may have rewound the group.
  void sync() {
    const auto e = g_->epoch();
    if (e != epoch_) {
      epoch_ = e;
      have_ = false;
      done_ = false;
    }
  }

  std::shared_ptr<SplitGroup<V>> g_;
  std::size_t idx_;
  VertexEntry<V> cur_{};
  bool have_ = false, done_ = false;
  std::uint64_t epoch_ = 0;
};

template <class V>
std::vector<SourcePtr<V>> split_source(SourcePtr<V> in, std::size_t ways, std::size_t chunk) {
  if (ways == 0 || chunk == 0) throw ContractViolation("split_source needs ways >= 1 and chunk >= 1");
  auto g = std::make_shared<SplitGroup<V>>(std::move(in), ways, chunk);
  std::vector<SourcePtr<V>> outs;
  for (std::size_t i = 0; i < ways; ++i) outs.push_back(std::make_unique<SplitOutput<V>>(g, i));
  return outs;
}

}  // namespace bigsr
