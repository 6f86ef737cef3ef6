#pragma once

// Binary graph layout: an index file of num_vertices + 1 byte offsets and an
// edge file of fixed-width (dst, weight) records sorted by source vertex.
// Also text ingestion, text emission and an RMAT generator.

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bigsr/error.hpp"
#include "bigsr/records.hpp"
#include "bigsr/sortreduce.hpp"
#include "bigsr/storage.hpp"

namespace bigsr {

inline constexpr VertexId kUnvisited = std::numeric_limits<VertexId>::max();
inline constexpr std::uint64_t kMaxVertices = std::uint64_t{1} << 48;

/// How text weights are read and written. Binary weights are raw bits.
enum class WeightFormat { integer, real };

struct GraphMeta {
  std::uint64_t num_vertices = 0;
  std::uint64_t num_edges = 0;
  unsigned weight_width = 0;
  WeightFormat weight_format = WeightFormat::integer;

  static constexpr unsigned vertex_id_width = 8;

  std::size_t edge_record_bytes() const noexcept { return vertex_id_width + weight_width; }

  void validate() const {
    if (num_vertices == 0) throw FormatError("graph has no vertices");
    if (num_vertices > kMaxVertices) throw FormatError("graph has more than 2^48 vertices");
    if (weight_width != 0 && weight_width != 4 && weight_width != 8)
      throw FormatError("weight_width must be 0, 4 or 8");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "num_vertices=" << num_vertices << '\n'
       << "num_edges=" << num_edges << '\n'
       << "weight_width=" << weight_width << '\n'
       << "vertex_id_width=" << vertex_id_width << '\n'
       << "weight_format=" << (weight_format == WeightFormat::real ? "real" : "integer") << '\n';
    return os.str();
  }

  static GraphMeta from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    std::uint64_t no = 0;
    while (std::getline(is, line)) {
      ++no;
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected key=value in graph.meta", no);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto num = [&](const char* k) -> std::uint64_t {
      auto it = kv.find(k);
      if (it == kv.end()) throw FormatError(std::string("graph.meta lacks ") + k);
      std::uint64_t v = 0;
      const auto& s = it->second;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size())
        throw FormatError(std::string("graph.meta has a bad ") + k);
      return v;
    };
    GraphMeta m;
    m.num_vertices = num("num_vertices");
    m.num_edges = num("num_edges");
    m.weight_width = static_cast<unsigned>(num("weight_width"));
    if (auto it = kv.find("weight_format"); it != kv.end() && it->second == "real")
      m.weight_format = WeightFormat::real;
    m.validate();
    return m;
  }
};

struct EdgeRecord {
  VertexId dst = 0;
  std::uint64_t weight_bits = 0;

  float weight_f32() const { return std::bit_cast<float>(static_cast<std::uint32_t>(weight_bits)); }
  double weight_f64() const { return std::bit_cast<double>(weight_bits); }

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

/// An ingested graph: `<name>/index`, `<name>/edges` and `<name>/graph.meta`.
struct Graph {
  Store store;
  std::string name;
  GraphMeta meta;
  FileHandle index;
  FileHandle edges;

  std::uint64_t num_vertices() const noexcept { return meta.num_vertices; }
  std::uint64_t num_edges() const noexcept { return meta.num_edges; }
};

inline std::string graph_index_name(const std::string& g) { return g + "/index"; }
inline std::string graph_edges_name(const std::string& g) { return g + "/edges"; }
inline std::string graph_meta_name(const std::string& g) { return g + "/graph.meta"; }

inline bool graph_exists(const Store& store, const std::string& name) {
  return store.text_exists(graph_meta_name(name));
}

inline Graph open_graph(Store store, const std::string& name) {
  if (name.empty()) throw ConfigError("graph name is empty");
  if (!graph_exists(store, name)) throw NotFound("no such graph: " + name);
  Graph g{store, name, GraphMeta::from_text(store.read_text(graph_meta_name(name))), nullptr, nullptr};
  g.index = g.store.open(graph_index_name(name));
  g.edges = g.store.open(graph_edges_name(name));
  if (g.index->length() != (g.meta.num_vertices + 1) * 8)
    throw FormatError("index of '" + name + "' does not hold num_vertices + 1 offsets");
  if (g.edges->length() != g.meta.num_edges * g.meta.edge_record_bytes())
    throw FormatError("edge file of '" + name + "' disagrees with num_edges");
  return g;
}

/// Removes a graph's files.
inline void remove_graph(Store& store, const std::string& name) {
  for (const auto& f : {graph_index_name(name), graph_edges_name(name)})
    if (store.exists(f)) store.remove(f);
  std::error_code ec;
  fs::remove(store.config().device_dirs.front() / graph_meta_name(name), ec);
}

inline std::uint64_t out_degree(const Graph& g, VertexId v) {
  if (v >= g.meta.num_vertices)
    throw BoundsError("vertex " + std::to_string(v) + " out of range (" + std::to_string(g.meta.num_vertices) +
                      " vertices)");
  const auto b = g.index->read_at(v * 8, 16);
  return (get_le<std::uint64_t>(b.data() + 8) - get_le<std::uint64_t>(b.data())) / g.meta.edge_record_bytes();
}

// ---------------------------------------------------------------------------
// Traversal with a single-page cache per file.

inline constexpr std::uint64_t kDefaultPageBytes = 64 * 1024;

class PageCache {
public:
  PageCache(FileHandle f, std::uint64_t page_bytes) : f_(std::move(f)), page_(page_bytes) {}

  void read(std::uint64_t offset, std::byte* out, std::size_t len) {
    while (len) {
      const std::uint64_t p = offset / page_;
      if (!valid_ || p != cur_) load(p);
      const std::uint64_t in = offset - p * page_;
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(len, buf_.size() - in));
      std::memcpy(out, buf_.data() + in, n);
      out += n;
      offset += n;
      len -= n;
    }
  }

  std::uint64_t fetches() const noexcept { return fetches_; }

private:
  void load(std::uint64_t p) {
    const std::uint64_t at = p * page_;
    if (at >= f_->length()) throw BoundsError("page beyond end of '" + f_->name() + "'");
    buf_ = f_->read_at(at, std::min(page_, f_->length() - at));
    cur_ = p;
    valid_ = true;
    ++fetches_;
  }

  FileHandle f_;
  std::uint64_t page_;
  std::vector<std::byte> buf_;
  std::uint64_t cur_ = 0;
  bool valid_ = false;
  std::uint64_t fetches_ = 0;
};

/// Out-edge access for one thread. When vertices are visited in ascending
/// order every index and edge page is fetched at most once.
class TraversalSession {
public:
  explicit TraversalSession(const Graph& g, std::uint64_t page_bytes = kDefaultPageBytes)
      : g_(&g), index_(g.index, page_bytes), edges_(g.edges, page_bytes) {}

  class EdgeRange {
  public:
    bool next(EdgeRecord& e) {
      if (at_ >= end_) return false;
      std::byte rec[16];
      const auto w = s_->g_->meta.weight_width;
      s_->edges_.read(at_, rec, 8 + w);
      e.dst = get_le<std::uint64_t>(rec);
      e.weight_bits = w == 4 ? get_le<std::uint32_t>(rec + 8) : w == 8 ? get_le<std::uint64_t>(rec + 8) : 0;
      at_ += 8 + w;
      return true;
    }

    std::uint64_t size() const noexcept { return (end_ - at_) / s_->g_->meta.edge_record_bytes(); }

  private:
    friend class TraversalSession;
    EdgeRange(TraversalSession* s, std::uint64_t at, std::uint64_t end) : s_(s), at_(at), end_(end) {}
    TraversalSession* s_;
    std::uint64_t at_, end_;
  };

  /// Byte range of v's edges within the edge file.
  std::pair<std::uint64_t, std::uint64_t> offsets(VertexId v) {
    check(v);
    std::byte b[16];
    index_.read(v * 8, b, 16);
    return {get_le<std::uint64_t>(b), get_le<std::uint64_t>(b + 8)};
  }

  std::uint64_t out_degree(VertexId v) {
    const auto [a, b] = offsets(v);
    return (b - a) / g_->meta.edge_record_bytes();
  }

  EdgeRange edges_of(VertexId v) {
    const auto [a, b] = offsets(v);
    return EdgeRange(this, a, b);
  }

  std::vector<EdgeRecord> edge_list(VertexId v) {
    std::vector<EdgeRecord> out;
    auto r = edges_of(v);
    EdgeRecord e;
    while (r.next(e)) out.push_back(e);
    return out;
  }

  std::uint64_t index_fetches() const noexcept { return index_.fetches(); }
  std::uint64_t edge_fetches() const noexcept { return edges_.fetches(); }
  const Graph& graph() const noexcept { return *g_; }

private:
  void check(VertexId v) const {
    if (v >= g_->meta.num_vertices)
      throw BoundsError("vertex " + std::to_string(v) + " out of range (" +
                        std::to_string(g_->meta.num_vertices) + " vertices)");
  }

  const Graph* g_;
  PageCache index_;
  PageCache edges_;
};

// ---------------------------------------------------------------------------
// Ingestion.

struct IngestOptions {
  unsigned weight_width = 0;
  WeightFormat weight_format = WeightFormat::integer;
  std::uint64_t sort_buffer_bytes = 64 * MiB;
  /// Lower bound on num_vertices (otherwise 1 + the largest id seen).
  std::uint64_t min_vertices = 0;
};

namespace detail {

struct EdgePayload {
  VertexId dst;
  std::uint64_t weight_bits;
};

struct EdgeOrder {
  bool operator()(const UpdatePair<EdgePayload>& a, const UpdatePair<EdgePayload>& b) const noexcept {
    if (a.key != b.key) return a.key < b.key;
    if (a.value.dst != b.value.dst) return a.value.dst < b.value.dst;
    return a.value.weight_bits < b.value.weight_bits;
  }
};

inline std::uint64_t parse_id(std::string_view tok, std::uint64_t line) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec == std::errc::result_out_of_range || (ec == std::errc{} && p == tok.data() + tok.size() && v >= kMaxVertices))
    throw ParseError("vertex id '" + std::string(tok) + "' exceeds the 2^48 limit", line);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw ParseError("expected a non-negative vertex id, got '" + std::string(tok) + "'", line);
  return v;
}

inline std::uint64_t parse_weight(std::string_view tok, unsigned width, WeightFormat fmt, std::uint64_t line) {
  const char* end = tok.data() + tok.size();
  if (fmt == WeightFormat::real) {
    double d = 0;
    auto [p, ec] = std::from_chars(tok.data(), end, d);
    if (ec != std::errc{} || p != end) throw ParseError("bad weight '" + std::string(tok) + "'", line);
    return width == 4 ? std::bit_cast<std::uint32_t>(static_cast<float>(d)) : std::bit_cast<std::uint64_t>(d);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || p != end || (width == 4 && v > 0xffffffffULL))
    throw ParseError("bad weight '" + std::string(tok) + "'", line);
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const auto b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

}  // namespace detail

/// Parses a text edge list and writes the binary graph `name`. Edges are
/// externally sorted by (src, dst, weight) within `sort_buffer_bytes`.
inline Graph ingest_edge_list(Store store, const std::string& name, std::istream& in,
                              const IngestOptions& opt = {}) {
  using detail::EdgePayload;
  if (name.empty()) throw ConfigError("graph name is empty");
  if (opt.weight_width != 0 && opt.weight_width != 4 && opt.weight_width != 8)
    throw ConfigError("weight_width must be 0, 4 or 8");
  if (graph_exists(store, name)) throw Error("graph already exists: " + name);

  auto cfg = SortReduceConfig::scaled(std::max<std::uint64_t>(opt.sort_buffer_bytes, 64 * 1024));
  cfg.temp_dir = name + "/tmp";
  SortReducer<EdgePayload, NoReduce, detail::EdgeOrder> sorter(store, cfg);

  std::uint64_t max_id = 0, edges = 0;
  SortedRun<EdgePayload> sorted;
  {
    typename decltype(sorter)::Pipeline pipe(sorter);
    auto em = pipe.emitter();
    std::string line;
    std::uint64_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto toks = detail::split_ws(line);
      if (toks.empty() || toks[0].front() == '#') continue;
      if (toks.size() < 2) throw ParseError("expected 'src dst [weight]'", no);
      if (toks.size() > 3) throw ParseError("too many fields", no);
      const auto src = detail::parse_id(toks[0], no);
      const auto dst = detail::parse_id(toks[1], no);
      std::uint64_t w = 0;
      if (toks.size() == 3) {
        if (opt.weight_width == 0) throw FormatError("line " + std::to_string(no) + ": weight given but weight_width is 0");
        w = detail::parse_weight(toks[2], opt.weight_width, opt.weight_format, no);
      } else if (opt.weight_width != 0) {
        throw ParseError("missing weight", no);
      }
      max_id = std::max({max_id, src, dst});
      em.push(src, EdgePayload{dst, w});
      ++edges;
    }
    if (in.bad()) throw StorageError("error reading edge list", "input");
    em.flush();
    if (edges == 0) throw FormatError("no edges");
    sorted = pipe.finish();
  }

  GraphMeta meta;
  meta.num_vertices = std::max(max_id + 1, opt.min_vertices);
  meta.num_edges = edges;
  meta.weight_width = opt.weight_width;
  meta.weight_format = opt.weight_format;
  meta.validate();

  const std::size_t rec = meta.edge_record_bytes();
  BlockWriter index(store.create(graph_index_name(name)), 1 * MiB);
  BlockWriter out(store.create(graph_edges_name(name)), 1 * MiB);
  {
    RunReader<EdgePayload, detail::EdgeOrder> reader(sorted, 1 * MiB, false);
    UpdatePair<EdgePayload> p;
    VertexId next_v = 0;
    std::uint64_t off = 0;
    auto offset_upto = [&](VertexId v) {
      for (; next_v <= v; ++next_v) {
        std::byte b[8];
        std::memcpy(b, &off, 8);
        index.write(b);
      }
    };
    while (reader.next(p)) {
      if (p.key >= next_v) offset_upto(p.key);
      std::byte* r = out.reserve(rec);
      std::memcpy(r, &p.value.dst, 8);
      if (meta.weight_width == 4) {
        const auto w = static_cast<std::uint32_t>(p.value.weight_bits);
        std::memcpy(r + 8, &w, 4);
      } else if (meta.weight_width == 8) {
        std::memcpy(r + 8, &p.value.weight_bits, 8);
      }
      off += rec;
    }
    offset_upto(meta.num_vertices);
  }
  sorter.discard(sorted);
  index.drain();
  out.drain();
  store.write_text(graph_meta_name(name), meta.to_text());
  return open_graph(store, name);
}

inline Graph ingest_edge_file(Store store, const std::string& name, const fs::path& path,
                              const IngestOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw NotFound("not found: " + path.string());
  return ingest_edge_list(std::move(store), name, in, opt);
}

/// Writes the graph back as a text edge list in stored order.
inline void emit_text(const Graph& g, std::ostream& os) {
  TraversalSession s(g);
  EdgeRecord e;
  for (VertexId v = 0; v < g.meta.num_vertices; ++v) {
    auto r = s.edges_of(v);
    while (r.next(e)) {
      os << v << ' ' << e.dst;
      if (g.meta.weight_width) {
        os << ' ';
        if (g.meta.weight_format == WeightFormat::integer) {
          os << e.weight_bits;
        } else {
          char buf[64];
          auto res = g.meta.weight_width == 4 ? std::to_chars(buf, buf + sizeof buf, e.weight_f32())
                                              : std::to_chars(buf, buf + sizeof buf, e.weight_f64());
          os << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
      }
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// RMAT generator with the Graph 500 initiator.

struct RmatParams {
  double a = 0.57, b = 0.19, c = 0.19;  // d = 1 - a - b - c
};

template <class Fn>
void for_each_rmat_edge(unsigned scale, std::uint64_t edge_factor, std::uint64_t seed, Fn&& fn,
                        RmatParams p = {}) {
  if (scale > 30) throw ConfigError("scale must be <= 30");
  std::mt19937_64 rng(seed);
  const std::uint64_t m = edge_factor << scale;
  const double ab = p.a + p.b, abc = p.a + p.b + p.c;
  for (std::uint64_t i = 0; i < m; ++i) {
    VertexId src = 0, dst = 0;
    for (unsigned bit = 0; bit < scale; ++bit) {
      const double r = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      src <<= 1;
      dst <<= 1;
      if (r < p.a) {
      } else if (r < ab) {
        dst |= 1;
      } else if (r < abc) {
        src |= 1;
      } else {
        src |= 1;
        dst |= 1;
      }
    }
    fn(src, dst);
  }
}

inline void generate_rmat(unsigned scale, std::uint64_t edge_factor, std::uint64_t seed, std::ostream& os) {
  for_each_rmat_edge(scale, edge_factor, seed, [&](VertexId s, VertexId d) { os << s << ' ' << d << '\n'; });
}

}  // namespace bigsr
