#pragma once

// In-memory reference superstep with random-access value arrays. Used as the
// oracle the storage-resident engine is checked against.

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "bigsr/engine.hpp"
#include "bigsr/graph.hpp"

namespace bigsr {

/// CSR copy of a graph held entirely in memory.
struct InMemoryGraph {
  std::uint64_t num_vertices = 0;
  std::vector<std::uint64_t> first;  // num_vertices + 1 edge indices
  std::vector<EdgeRecord> edges;

  std::uint64_t out_degree(VertexId v) const { return first[v + 1] - first[v]; }
};

inline InMemoryGraph load_in_memory(const Graph& g, std::uint64_t max_vertices = std::uint64_t{1} << 22) {
  if (g.num_vertices() > max_vertices)
    throw PreconditionError("graph with " + std::to_string(g.num_vertices()) +
                            " vertices is too large for the in-memory oracle");
  InMemoryGraph m;
  m.num_vertices = g.num_vertices();
  m.first.reserve(m.num_vertices + 1);
  m.edges.reserve(g.num_edges());
  TraversalSession s(g);
  EdgeRecord e;
  for (VertexId v = 0; v < m.num_vertices; ++v) {
    m.first.push_back(m.edges.size());
    auto r = s.edges_of(v);
    while (r.next(e)) m.edges.push_back(e);
  }
  m.first.push_back(m.edges.size());
  return m;
}

template <class V>
struct OracleStep {
  std::vector<V> values;                       // after the superstep
  std::vector<std::pair<VertexId, V>> log;     // every key that received updates
  std::vector<VertexId> next_active;
  std::uint64_t activated = 0;
};

/// One vertex-program superstep over arrays: for each active vertex in
/// ascending order and each out-edge, fold the edge program's output into
/// the destination's accumulator; then finalize every vertex that received
/// something. Vertices that receive nothing keep their value.
template <GraphAlgorithm A>
OracleStep<typename A::Value> baseline_superstep(const InMemoryGraph& g, const A& alg,
                                                 const std::vector<typename A::Value>& values,
                                                 const std::vector<VertexId>& active, std::uint64_t superstep) {
  using V = typename A::Value;
  const auto n = g.num_vertices;
  std::vector<V> acc(n);
  std::vector<char> got(n, 0);
  auto deliver = [&](VertexId v, const V& x) {
    if (got[v]) {
      acc[v] = alg.vertex_program(acc[v], x);
    } else {
      acc[v] = x;
      got[v] = 1;
    }
  };
  double sink_mass = 0;
  std::vector<VertexId> order(active);
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  for (VertexId u : order) {
    if (u >= n) throw BoundsError("active vertex out of range");
    EdgeContext ctx{u, g.out_degree(u), 0, n};
    if constexpr (detail::self_update_of<A>()) deliver(u, alg.identity());
    if constexpr (requires { alg.sink_mass(values[u]); }) {
      if (ctx.out_degree == 0) sink_mass += alg.sink_mass(values[u]);
    }
    for (auto i = g.first[u]; i < g.first[u + 1]; ++i, ++ctx.ordinal)
      deliver(g.edges[i].dst, alg.edge_program(values[u], g.edges[i], ctx));
  }
  OracleStep<V> out;
  out.values = values;
  const SuperstepContext sc{superstep, n, sink_mass};
  for (VertexId v = 0; v < n; ++v) {
    if (!got[v]) continue;
    const V nv = alg.finalize(values[v], acc[v], sc);
    out.values[v] = nv;
    out.log.emplace_back(v, nv);
    if (alg.is_active(values[v], nv)) {
      ++out.activated;
      out.next_active.push_back(v);
    }
  }
  if constexpr (detail::active_rule_of<A>() == ActiveRule::all_vertices) {
    out.next_active.resize(n);
    for (VertexId v = 0; v < n; ++v) out.next_active[v] = v;
  }
  return out;
}

/// Initial values and active set of an algorithm, as arrays.
template <GraphAlgorithm A>
std::pair<std::vector<typename A::Value>, std::vector<VertexId>> baseline_initial(const Graph& g, const A& alg) {
  using V = typename A::Value;
  std::vector<V> values(g.num_vertices(), alg.default_value());
  auto src = alg.initial_values(g);
  while (src->has_next()) {
    const auto e = src->get_next();
    values[e.key] = e.value;
  }
  std::vector<VertexId> active;
  if (auto listed = alg.initial_active(g)) {
    active = std::move(*listed);
  } else {
    active.resize(g.num_vertices());
    for (VertexId v = 0; v < g.num_vertices(); ++v) active[v] = v;
  }
  return {std::move(values), std::move(active)};
}

}  // namespace bigsr
