#pragma once

// BFS, PageRank and tree-based betweenness centrality as engine algorithms.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bigsr/engine.hpp"
#include "bigsr/graph.hpp"
#include "bigsr/sortreduce.hpp"
#include "bigsr/vsource.hpp"

namespace bigsr {

// ---------------------------------------------------------------------------
// BFS: each vertex records the parent that first reached it.

struct Bfs {
  using Value = VertexId;
  static constexpr ActiveRule active_rule = ActiveRule::difference_visited;

  VertexId root = 0;

  Value edge_program(const Value&, const EdgeRecord&, const EdgeContext& c) const { return c.src; }
  // Keeps the first parent in fold order.
  Value vertex_program(const Value& a, const Value&) const { return a; }
  Value finalize(const Value& old, const Value& reduced, const SuperstepContext&) const {
    return old == kUnvisited ? reduced : old;
  }
  bool is_active(const Value& old, const Value& now) const { return old == kUnvisited && now != kUnvisited; }
  Value default_value() const { return kUnvisited; }

  SourcePtr<Value> initial_values(const Graph& g) const {
    check_root(g);
    return make_vector_source<Value>({{root, root}});
  }
  std::optional<std::vector<VertexId>> initial_active(const Graph& g) const {
    check_root(g);
    return std::vector<VertexId>{root};
  }
  void prepare(const Graph& g) const { check_root(g); }

private:
  void check_root(const Graph& g) const {
    if (root >= g.num_vertices())
      throw BoundsError("root " + std::to_string(root) + " out of range (" + std::to_string(g.num_vertices()) +
                        " vertices)");
  }
};

struct BfsResult {
  DenseVertexFile<VertexId> parents;
  DenseVertexFile<std::uint64_t> depths;  // kUnvisited where unreached
  std::vector<SparseVertexFile<VertexId>> levels;  // levels[d-1]: (v, parent) first reached at depth d
  std::vector<SuperstepReport> reports;
  std::uint64_t supersteps = 0;
  std::uint64_t reached = 0;
  std::uint64_t max_depth = 0;
};

inline BfsResult bfs(const Graph& g, VertexId root, EngineConfig cfg = {}) {
  cfg.record_activations = true;
  Engine<Bfs> eng(g, Bfs{root}, cfg);
  auto run = eng.run_until_done();
  BfsResult r;
  r.parents = run.values;
  r.reports = std::move(run.reports);
  r.supersteps = run.supersteps;
  r.reached = 1;
  Store store = g.store;
  for (auto& l : run.activations) {
    if (l.count == 0) {
      store.remove(l.file);
      continue;
    }
    r.reached += l.count;
    r.levels.push_back(l);
  }
  r.max_depth = r.levels.size();

  SourcePtr<std::uint64_t> depth = make_vector_source<std::uint64_t>({{root, 0}});
  for (std::size_t d = 0; d < r.levels.size(); ++d) {
    SparseVertexFile<std::uint64_t> as_u64{r.levels[d].file, r.levels[d].count};
    const std::uint64_t level = d + 1;
    depth = union_source<std::uint64_t>(
        std::move(depth), arith_source<std::uint64_t>(make_sparse_source(as_u64), [level](const std::uint64_t&) {
          return level;
        }));
  }
  r.depths = write_dense<std::uint64_t>(store, eng.config().job_dir + "/depth", g.num_vertices(), kUnvisited,
                                        *depth, false);
  return r;
}

// ---------------------------------------------------------------------------
// PageRank.

enum class SinkPolicy { reject, redistribute };

struct PageRank {
  using Value = double;
  static constexpr ActiveRule active_rule = ActiveRule::all_vertices;
  // Every active vertex sends itself the identity so vertices without
  // in-edges still get the teleport term.
  static constexpr bool self_update = true;

  double eps = 1e-7;
  std::uint64_t max_iters = 100;
  SinkPolicy sinks = SinkPolicy::reject;

  Value edge_program(const Value& v, const EdgeRecord&, const EdgeContext& c) const {
    return v / static_cast<double>(c.out_degree);
  }
  Value vertex_program(const Value& a, const Value& b) const { return a + b; }
  Value identity() const { return 0.0; }
  Value finalize(const Value&, const Value& sum, const SuperstepContext& sc) const {
    const double n = static_cast<double>(sc.num_vertices);
    const double spread = sinks == SinkPolicy::redistribute ? sc.sink_mass / n : 0.0;
    return 0.15 / n + 0.85 * (sum + spread);
  }
  bool is_active(const Value& old, const Value& now) const { return std::abs(now - old) > eps; }
  Value default_value() const { return 0.0; }
  double sink_mass(const Value& v) const { return sinks == SinkPolicy::redistribute ? v : 0.0; }

  SourcePtr<Value> initial_values(const Graph& g) const {
    const double r = 1.0 / static_cast<double>(g.num_vertices());
    return range_source<Value>(g.num_vertices(), [r](VertexId) { return r; });
  }
  std::optional<std::vector<VertexId>> initial_active(const Graph&) const { return std::nullopt; }

  void prepare(const Graph& g) const {
    if (sinks != SinkPolicy::reject) return;
    TraversalSession s(g);
    for (VertexId v = 0; v < g.num_vertices(); ++v)
      if (s.out_degree(v) == 0)
        throw PreconditionError("vertex " + std::to_string(v) +
                                " has no out-edges; use the redistribute sink policy");
  }

  bool converged(const SuperstepReport& rep) const { return rep.activated == 0 || rep.step >= max_iters; }
};

struct PageRankResult {
  DenseVertexFile<double> ranks;
  std::vector<SuperstepReport> reports;
  std::uint64_t supersteps = 0;
};

inline PageRankResult pagerank(const Graph& g, double eps, std::uint64_t max_iters,
                               SinkPolicy sinks = SinkPolicy::reject, EngineConfig cfg = {}) {
  if (max_iters == 0) throw ConfigError("max_iters must be >= 1");
  if (eps < 0) throw ConfigError("eps must be >= 0");
  Engine<PageRank> eng(g, PageRank{eps, max_iters, sinks}, cfg);
  auto run = eng.run_until_done();
  return {run.values, std::move(run.reports), run.supersteps};
}

// ---------------------------------------------------------------------------
// Betweenness centrality over the BFS parent tree. Walking the BFS levels
// from the deepest up, every (v, parent) entry becomes (parent, 1 + count(v))
// and the pairs are sort-reduced with addition; count(u) ends up as the
// number of descendants of u in the parent tree.

struct SumU64 {
  std::uint64_t operator()(std::uint64_t a, std::uint64_t b) const { return a + b; }
};

struct BcResult {
  DenseVertexFile<std::uint64_t> scores;
  BfsResult tree;
};

inline BcResult bc(const Graph& g, VertexId root, EngineConfig cfg = {}) {
  BcResult out;
  out.tree = bfs(g, root, cfg);
  Store store = g.store;
  const std::string dir = store.temp_name("jobs", "bc");
  auto sort_cfg = cfg.sort;
  sort_cfg.temp_dir = dir + "/tmp";
  SortReducer<std::uint64_t, SumU64> sr(store, sort_cfg, {}, cfg.accounting);

  // counts[d] holds the sort-reduced counts keyed by vertices at depth d.
  std::vector<SortedRun<std::uint64_t>> counts;
  std::optional<SortedRun<std::uint64_t>> below;
  for (std::size_t i = out.tree.levels.size(); i-- > 0;) {
    SortedRun<std::uint64_t> run;
    {
      typename SortReducer<std::uint64_t, SumU64>::Pipeline pipe(sr);
      auto em = pipe.emitter();
      auto level = make_sparse_source(out.tree.levels[i]);
      std::unique_ptr<RunSource<std::uint64_t>> child;
      if (below) child = std::make_unique<RunSource<std::uint64_t>>(*below);
      while (level->has_next()) {
        const auto e = level->get_next();
        std::uint64_t c = 0;
        if (child && child->has_next(e.key) && child->peek()->key == e.key) c = child->get_next().value;
        em.push(e.value, 1 + c);
      }
      em.flush();
      run = pipe.finish();
    }
    counts.push_back(run);
    below = run;
  }

  SourcePtr<std::uint64_t> all = make_empty_source<std::uint64_t>();
  for (const auto& c : counts)
    all = custom_source<std::uint64_t>(std::move(all), std::make_unique<RunSource<std::uint64_t>>(c),
                                       [](const std::uint64_t& a, const std::uint64_t& b) { return a + b; });
  out.scores = write_dense<std::uint64_t>(store, dir + "/scores", g.num_vertices(), 0, *all, false);
  for (auto& c : counts) sr.discard(c);
  return out;
}

// ---------------------------------------------------------------------------
// Summaries.

template <class V, class Fn>
void for_each_value(const DenseVertexFile<V>& f, Fn&& fn) {
  DenseFileSource<V> s(f);
  while (s.has_next()) {
    const auto e = s.get_next();
    fn(e.key, e.value);
  }
}

template <class V>
std::vector<V> read_all(const DenseVertexFile<V>& f) {
  std::vector<V> out;
  out.reserve(f.num_vertices);
  for_each_value(f, [&](VertexId, const V& v) { out.push_back(v); });
  return out;
}

inline std::string summarize(const BfsResult& r) {
  std::ostringstream os;
  os << "reached " << r.reached << "\n"
     << "supersteps " << r.supersteps << "\n"
     << "max depth " << r.max_depth << "\n";
  return os.str();
}

inline std::string summarize(const PageRankResult& r) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0;
  for_each_value(r.ranks, [&](VertexId, double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  });
  std::ostringstream os;
  os.precision(12);
  os << "supersteps " << r.supersteps << "\n"
     << "rank min " << lo << " max " << hi << "\n"
     << "rank sum " << sum << "\n";
  return os.str();
}

inline std::string summarize(const BcResult& r) {
  std::uint64_t lo = std::numeric_limits<std::uint64_t>::max(), hi = 0;
  for_each_value(r.scores, [&](VertexId, std::uint64_t v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  });
  std::ostringstream os;
  os << "reached " << r.tree.reached << "\n"
     << "supersteps " << r.tree.supersteps << "\n"
     << "score min " << lo << " max " << hi << "\n";
  return os.str();
}

}  // namespace bigsr
