#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "bigsr/graph.hpp"
#include "test_util.hpp"

using namespace bigsr;
using bigsr::test::Edge;
using bigsr::test::TempDir;

namespace {

Graph ingest_text(Store& store, const std::string& name, const std::string& text, IngestOptions opt = {}) {
  std::istringstream is(text);
  opt.sort_buffer_bytes = std::min<std::uint64_t>(opt.sort_buffer_bytes, 1 << 20);
  return ingest_edge_list(store, name, is, opt);
}

std::vector<std::uint64_t> read_u64s(const FileHandle& f) {
  const auto raw = f->read_at(0, f->length());
  std::vector<std::uint64_t> out(raw.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<std::uint64_t>(raw.data() + 8 * i);
  return out;
}

std::vector<std::byte> contents(const FileHandle& f) { return f->read_at(0, f->length()); }

void check_index_invariants(const Graph& g) {
  const auto off = read_u64s(g.index);
  ASSERT_EQ(off.size(), g.num_vertices() + 1);
  EXPECT_EQ(off.front(), 0u);
  EXPECT_EQ(off.back(), g.edges->length());
  for (std::size_t i = 1; i < off.size(); ++i) {
    ASSERT_LE(off[i - 1], off[i]);
    ASSERT_EQ((off[i] - off[i - 1]) % g.meta.edge_record_bytes(), 0u);
  }
}

}  // namespace

TEST(Ingest, HandLaidExample) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = ingest_text(store, "g", "0 1\n0 2\n1 0\n");
  EXPECT_EQ(g.num_vertices(), 3u);
  EXPECT_EQ(g.num_edges(), 3u);
  EXPECT_EQ(read_u64s(g.index), (std::vector<std::uint64_t>{0, 16, 24, 24}));
  EXPECT_EQ(read_u64s(g.edges), (std::vector<std::uint64_t>{1, 2, 0}));
  check_index_invariants(g);
}

TEST(Ingest, EmptyInputIsRejected) {
  TempDir t;
  auto store = test::make_store(t);
  try {
    ingest_text(store, "g", "# nothing\n\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("no edges"), std::string::npos);
  }
}

TEST(Ingest, MalformedLineNamesLine) {
  TempDir t;
  auto store = test::make_store(t);
  try {
    ingest_text(store, "g", "0 1\n1 2\n2 x\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, WeightWithoutWeightWidthIsFormatError) {
  TempDir t;
  auto store = test::make_store(t);
  EXPECT_THROW(ingest_text(store, "g", "0 1 5\n"), FormatError);
}

TEST(Ingest, WeightsAreStored) {
  TempDir t;
  auto store = test::make_store(t);
  IngestOptions opt;
  opt.weight_width = 4;
  opt.weight_format = WeightFormat::real;
  auto g = ingest_text(store, "g", "1 0 2.5\n0 1 0.25\n", opt);
  EXPECT_EQ(g.meta.edge_record_bytes(), 12u);
  TraversalSession s(g);
  auto e0 = s.edge_list(0);
  ASSERT_EQ(e0.size(), 1u);
  EXPECT_EQ(e0[0].dst, 1u);
  EXPECT_FLOAT_EQ(e0[0].weight_f32(), 0.25f);
  EXPECT_FLOAT_EQ(s.edge_list(1)[0].weight_f32(), 2.5f);
  check_index_invariants(g);
}

TEST(Ingest, CommentsAndDuplicatesAndSelfLoops) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = ingest_text(store, "g", "# header\n2 2\n0 1\n\n0 1\n");
  EXPECT_EQ(g.num_edges(), 3u);
  TraversalSession s(g);
  EXPECT_EQ(s.out_degree(0), 2u);
  EXPECT_EQ(s.out_degree(1), 0u);
  EXPECT_EQ(s.edge_list(2), (std::vector<EdgeRecord>{{2, 0}}));
}

TEST(Ingest, DestinationOnlyIdsCount) {
  TempDir t;
  auto store = test::make_store(t);
  EXPECT_EQ(ingest_text(store, "g", "0 9\n").num_vertices(), 10u);
}

TEST(Ingest, IdAboveLimitIsRejected) {
  TempDir t;
  auto store = test::make_store(t);
  EXPECT_THROW(ingest_text(store, "g", "0 281474976710656\n"), ParseError);
}

TEST(Ingest, ExistingGraphIsRejected) {
  TempDir t;
  auto store = test::make_store(t);
  ingest_text(store, "g", "0 1\n");
  EXPECT_THROW(ingest_text(store, "g", "0 1\n"), Error);
}

TEST(Ingest, OutOfOrderMatchesSorted) {
  TempDir t;
  auto store = test::make_store(t, 2);
  auto edges = test::random_edges(3000, 40'000, 12);
  auto sorted = edges;
  std::sort(sorted.begin(), sorted.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
  auto a = test::ingest_edges(store, "a", edges);
  auto b = test::ingest_edges(store, "b", sorted);
  EXPECT_EQ(contents(a.index), contents(b.index));
  EXPECT_EQ(contents(a.edges), contents(b.edges));
  check_index_invariants(a);
  // Small sort buffer forced an external merge; its scratch runs are gone.
  EXPECT_TRUE(store.list("a/tmp/").empty());
}

TEST(Ingest, MetaPersists) {
  TempDir t;
  auto store = test::make_store(t);
  IngestOptions opt;
  opt.weight_width = 8;
  ingest_text(store, "g", "0 1 7\n", opt);
  auto g = open_graph(store, "g");
  EXPECT_EQ(g.meta.num_vertices, 2u);
  EXPECT_EQ(g.meta.weight_width, 8u);
  EXPECT_EQ(g.meta.vertex_id_width, 8u);
  EXPECT_EQ(GraphMeta::from_text(g.meta.to_text()).num_edges, 1u);
  EXPECT_THROW(open_graph(store, "missing"), NotFound);
}

TEST(OutDegree, ExampleAndConservation) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = ingest_text(store, "g", "0 1\n0 2\n1 0\n");
  EXPECT_EQ(out_degree(g, 0), 2u);
  EXPECT_EQ(out_degree(g, 2), 0u);
  EXPECT_THROW(out_degree(g, 3), BoundsError);

  auto r = test::ingest_edges(store, "r", test::random_edges(500, 5000, 3), 500);
  std::uint64_t sum = 0;
  for (VertexId v = 0; v < r.num_vertices(); ++v) sum += out_degree(r, v);
  EXPECT_EQ(sum, r.num_edges());
}

TEST(EdgesOf, ExampleAndIsolated) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = ingest_text(store, "g", "0 1\n0 2\n1 0\n");
  TraversalSession s(g);
  EXPECT_EQ(s.edge_list(0), (std::vector<EdgeRecord>{{1, 0}, {2, 0}}));
  EXPECT_EQ(s.edges_of(2).size(), 0u);
  EXPECT_THROW(s.edges_of(3), BoundsError);
}

TEST(EdgesOf, MatchesAdjacencyOracle) {
  TempDir t;
  auto store = test::make_store(t, 3, 4096);
  const std::uint64_t n = 2000;
  auto edges = test::random_edges(n, 30'000, 99);
  auto g = test::ingest_edges(store, "g", edges, n);
  std::vector<std::vector<VertexId>> adj(n);
  for (const auto& e : edges) adj[e.src].push_back(e.dst);
  for (auto& a : adj) std::sort(a.begin(), a.end());
  TraversalSession s(g, 4096);
  for (VertexId v = 0; v < n; ++v) {
    std::vector<VertexId> got;
    for (const auto& e : s.edge_list(v)) got.push_back(e.dst);
    ASSERT_EQ(got, adj[v]) << v;
  }
}

TEST(EdgesOf, AscendingScanFetchesEachPageOnce) {
  TempDir t;
  auto store = test::make_store(t, 2);
  auto g = test::ingest_edges(store, "g", test::rmat_edges(12, 8, 4), 1 << 12);
  for (std::uint64_t page : {4096u, 65536u, 1000u}) {
    TraversalSession s(g, page);
    for (VertexId v = 0; v < g.num_vertices(); ++v) s.edge_list(v);
    const auto ceil_div = [](std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; };
    EXPECT_EQ(s.index_fetches(), ceil_div(g.index->length(), page));
    EXPECT_EQ(s.edge_fetches(), ceil_div(g.edges->length(), page));
  }
}

TEST(RoundTrip, EmitThenIngestIsByteIdentical) {
  TempDir t;
  auto store = test::make_store(t, 2);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const std::string a = "a" + std::to_string(seed), b = "b" + std::to_string(seed);
    auto g = test::ingest_edges(store, a, test::rmat_edges(10, 6, seed), 1 << 10);
    std::ostringstream os;
    emit_text(g, os);
    IngestOptions opt;
    opt.min_vertices = g.num_vertices();
    auto h = ingest_text(store, b, os.str(), opt);
    EXPECT_EQ(contents(g.index), contents(h.index));
    EXPECT_EQ(contents(g.edges), contents(h.edges));
  }
}

TEST(RoundTrip, RealWeights) {
  TempDir t;
  auto store = test::make_store(t);
  IngestOptions opt;
  opt.weight_width = 8;
  opt.weight_format = WeightFormat::real;
  auto g = ingest_text(store, "a", "0 1 0.1\n1 0 3.75e10\n2 0 -1\n", opt);
  std::ostringstream os;
  emit_text(g, os);
  auto h = ingest_text(store, "b", os.str(), opt);
  EXPECT_EQ(contents(g.edges), contents(h.edges));
}

TEST(Rmat, EdgeCount) {
  std::ostringstream os;
  generate_rmat(4, 8, 42, os);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 128);
  std::istringstream is(text);
  VertexId s, d;
  while (is >> s >> d) {
    EXPECT_LT(s, 16u);
    EXPECT_LT(d, 16u);
  }
}

TEST(Rmat, Deterministic) {
  std::ostringstream a, b, c;
  generate_rmat(10, 4, 7, a);
  generate_rmat(10, 4, 7, b);
  generate_rmat(10, 4, 8, c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Rmat, DegreeDistributionIsSkewed) {
  std::vector<std::uint64_t> deg(1 << 16, 0);
  std::uint64_t m = 0;
  for_each_rmat_edge(16, 16, 1, [&](VertexId s, VertexId) {
    ++deg[s];
    ++m;
  });
  const double mean = double(m) / double(deg.size());
  EXPECT_GT(double(*std::max_element(deg.begin(), deg.end())), 10 * mean);
}

TEST(Rmat, ScaleAboveLimitIsRejected) {
  std::ostringstream os;
  EXPECT_THROW(generate_rmat(31, 1, 1, os), ConfigError);
}
