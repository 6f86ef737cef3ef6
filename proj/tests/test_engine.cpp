#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "bigsr/algorithms.hpp"
#include "bigsr/baseline.hpp"
#include "bigsr/engine.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bigsr;
using bigsr::test::Edge;
using bigsr::test::TempDir;

namespace {

EngineConfig small_engine(unsigned threads = 1, std::uint64_t buffer = 64 * 1024) {
  EngineConfig c;
  c.sort = SortReduceConfig::scaled(buffer, threads);
  c.sort.fan_in = 4;
  c.sort.merge_read_ahead = 4096;
  c.page_bytes = 4096;
  return c;
}

Graph tiny(Store& store) { return test::ingest_edges(store, "g", {{0, 1}, {0, 2}, {1, 0}}); }

Graph path(Store& store, std::uint64_t n, const std::string& name = "path") {
  std::vector<Edge> e;
  for (VertexId v = 0; v + 1 < n; ++v) e.push_back({v, v + 1});
  return test::ingest_edges(store, name, e, n);
}

template <class V>
struct Capture {
  std::mutex* mu;
  std::vector<UpdatePair<V>>* out;
  void push(VertexId k, const V& v) {
    std::lock_guard lk(*mu);
    out->push_back({k, v});
  }
  void flush() {}
};

template <class V>
std::vector<UpdatePair<V>> read_log(const SparseVertexFile<V>& f) {
  SparseFileSource<V> s(f);
  return drain(s);
}

std::vector<VertexId> keys_of(VertexSource<std::uint64_t>& s) {
  std::vector<VertexId> k;
  while (s.has_next()) k.push_back(s.get_next().key);
  return k;
}

struct NoStart : test::MinLabel {
  std::optional<std::vector<VertexId>> initial_active(const Graph&) const { return std::vector<VertexId>{}; }
};

struct BadStart : test::MinLabel {
  std::optional<std::vector<VertexId>> initial_active(const Graph& g) const {
    return std::vector<VertexId>{g.num_vertices()};
  }
};

}  // namespace

TEST(Generate, BfsFromRootOnTinyGraph) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  Engine<Bfs> eng(g, Bfs{0}, small_engine());
  std::mutex mu;
  std::vector<UpdatePair<VertexId>> got;
  auto stats = eng.generate_intermediate(make_vector_source<VertexId>({{0, 0}}),
                                         [&] { return Capture<VertexId>{&mu, &got}; });
  EXPECT_EQ(got, (std::vector<UpdatePair<VertexId>>{{1, 0}, {2, 0}}));
  EXPECT_EQ(stats.active, 1u);
  EXPECT_EQ(stats.pairs, 2u);
}

TEST(Generate, EmptyActiveEmitsNothing) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  Engine<Bfs> eng(g, Bfs{0}, small_engine());
  using SR = SortReducer<VertexId, detail::ReduceAdapter<Bfs>>;
  SR sr(store, small_engine().sort, detail::ReduceAdapter<Bfs>{&eng.algorithm()});
  typename SR::Pipeline pipe(sr);
  auto stats = eng.generate_intermediate(make_empty_source<VertexId>(), [&] { return pipe.emitter(); });
  EXPECT_EQ(stats.pairs, 0u);
  EXPECT_EQ(pipe.runs_produced(), 0u);
  EXPECT_EQ(pipe.finish().count, 0u);
}

TEST(Generate, SplitMatchesSerialMultiset) {
  TempDir t;
  auto store = test::make_store(t, 2);
  auto g = test::random_graph(store, "g", 3000, 40'000, 5);
  std::vector<UpdatePair<std::uint64_t>> runs[2];
  for (unsigned threads : {1u, 2u}) {
    auto cfg = small_engine(threads);
    cfg.split_chunk = 7;
    Engine<test::MinLabel> eng(g, test::MinLabel{}, cfg);
    std::mutex mu;
    auto& got = runs[threads - 1];
    eng.generate_intermediate(range_source<std::uint64_t>(g.num_vertices(), [](VertexId v) { return v * 3; }),
                              [&] { return Capture<std::uint64_t>{&mu, &got}; });
    std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) {
      return std::tie(a.key, a.value) < std::tie(b.key, b.value);
    });
  }
  EXPECT_EQ(runs[0].size(), 40'000u);
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Generate, ActiveKeyOutOfRange) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  Engine<Bfs> eng(g, Bfs{0}, small_engine());
  std::mutex mu;
  std::vector<UpdatePair<VertexId>> got;
  EXPECT_THROW(eng.generate_intermediate(make_vector_source<VertexId>({{3, 0}}),
                                         [&] { return Capture<VertexId>{&mu, &got}; }),
               BoundsError);
  EXPECT_THROW((Engine<BadStart>(g, BadStart{}, small_engine()).init()), BoundsError);
}

TEST(Superstep, BfsFirstStepOnTinyGraph) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  Engine<Bfs> eng(g, Bfs{0}, small_engine());
  auto st = eng.init();
  const auto rep = eng.run_superstep(st);
  EXPECT_EQ(read_log(st.logs.back()), (std::vector<UpdatePair<VertexId>>{{1, 0}, {2, 0}}));
  auto next = st.active();
  EXPECT_EQ(keys_of(*next), (std::vector<VertexId>{1, 2}));
  EXPECT_EQ(rep.active, 1u);
  EXPECT_EQ(rep.pairs, 2u);
  EXPECT_EQ(rep.activated, 2u);
}

TEST(Superstep, PageRankTwoCycleIsStationary) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = test::ingest_edges(store, "g", {{0, 1}, {1, 0}});
  Engine<PageRank> eng(g, PageRank{}, small_engine());
  auto st = eng.init();
  eng.run_superstep(st);
  const auto log = read_log(st.logs.back());
  ASSERT_EQ(log.size(), 2u);
  EXPECT_DOUBLE_EQ(log[0].value, 0.5);
  EXPECT_DOUBLE_EQ(log[1].value, 0.5);
  EXPECT_DOUBLE_EQ(0.15 / 2 + 0.85 * 0.5, 0.5);
}

TEST(Superstep, EmptyActiveTerminatesImmediately) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  Engine<NoStart> eng(g, NoStart{}, small_engine());
  auto run = eng.run_until_done();
  EXPECT_EQ(run.supersteps, 0u);
  EXPECT_EQ(read_all(run.values), (std::vector<std::uint64_t>{0, 1, 2}));

  auto st = eng.init();
  st.active = [] { return make_empty_source<std::uint64_t>(); };
  const auto rep = eng.run_superstep(st);
  EXPECT_EQ(rep.updates, 0u);
  EXPECT_EQ(st.logs.back().count, 0u);
}

TEST(RunUntilDone, PathTakesOneSuperstepPerVertex) {
  TempDir t;
  auto store = test::make_store(t);
  for (std::uint64_t len : {2u, 5u, 17u}) {
    auto g = path(store, len, "p" + std::to_string(len));
    Engine<Bfs> eng(g, Bfs{0}, small_engine());
    EXPECT_EQ(eng.run_until_done().supersteps, len) << len;
  }
  // One vertex: the root's only edge leads back to itself.
  auto one = test::ingest_edges(store, "single", {{0, 0}});
  EXPECT_EQ(Engine<Bfs>(one, Bfs{0}, small_engine()).run_until_done().supersteps, 1u);
}

TEST(RunUntilDone, SuperstepCapRaisesNonConvergence) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = path(store, 10);
  auto cfg = small_engine();
  cfg.superstep_cap = 3;
  Engine<Bfs> eng(g, Bfs{0}, cfg);
  EXPECT_THROW(eng.run_until_done(), NonConvergence);
}

TEST(RunUntilDone, PageRankMatchesPowerIteration) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = test::ingest_edges(store, "g", test::rmat_sink_free(8, 4, 3));
  auto img = load_in_memory(g);
  auto res = pagerank(g, 1e-10, 200, SinkPolicy::reject, small_engine());
  const auto ranks = read_all(res.ranks);
  std::vector<double> x(g.num_vertices(), 1.0 / double(g.num_vertices()));
  for (std::uint64_t i = 0; i < res.supersteps; ++i) x = test::pagerank_step(img, x);
  double sum = 0;
  for (VertexId v = 0; v < g.num_vertices(); ++v) {
    EXPECT_NEAR(ranks[v], x[v], 1e-12) << v;
    sum += ranks[v];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_LT(res.supersteps, 200u);
}

// Engine and array oracle advance in lockstep; every log and every composed
// value array must agree after each step.
template <class A, class Cmp>
void lockstep(const Graph& g, const A& alg, EngineConfig cfg, Cmp same, std::uint64_t max_steps = 1000) {
  auto img = load_in_memory(g);
  auto [values, active] = baseline_initial(g, alg);
  Engine<A> eng(g, alg, cfg);
  auto st = eng.init();
  for (std::uint64_t step = 1; step <= max_steps && !active.empty(); ++step) {
    auto o = baseline_superstep(img, alg, values, active, step);
    eng.run_superstep(st);
    // Right after a consolidation the log has already been folded into the base.
    if (!st.logs.empty()) {
      const auto log = read_log(st.logs.back());
      ASSERT_EQ(log.size(), o.log.size()) << "step " << step;
      for (std::size_t i = 0; i < log.size(); ++i) {
        ASSERT_EQ(log[i].key, o.log[i].first) << "step " << step;
        ASSERT_TRUE(same(log[i].value, o.log[i].second)) << "step " << step << " key " << log[i].key;
      }
    }
    auto cur = eng.current_values(st);
    for (VertexId v = 0; v < g.num_vertices(); ++v) {
      ASSERT_TRUE(cur->has_next(v));
      ASSERT_TRUE(same(cur->get_next().value, o.values[v])) << "step " << step << " vertex " << v;
    }
    auto next = st.active();
    std::vector<VertexId> engine_active;
    while (next->has_next()) engine_active.push_back(next->get_next().key);
    ASSERT_EQ(engine_active, o.next_active) << "step " << step;
    values = std::move(o.values);
    active = std::move(o.next_active);
  }
}

TEST(Equivalence, BfsMatchesArrayOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    TempDir t;
    auto store = test::make_store(t, 1 + seed % 3);
    const std::uint64_t n = 200 + seed * 150;
    auto g = test::random_graph(store, "g", n, n * 3, seed);
    lockstep(g, Bfs{seed % n}, small_engine(1, 16 * 1024), std::equal_to<>{});
  }
}

TEST(Equivalence, MinLabelMatchesArrayOracle) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    TempDir t;
    auto store = test::make_store(t);
    auto g = test::random_graph(store, "g", 500, 900, seed + 40);
    auto cfg = small_engine(1 + seed % 3, 16 * 1024);
    cfg.consolidation_threshold = 2;
    lockstep(g, test::MinLabel{}, cfg, std::equal_to<>{});
  }
}

TEST(Equivalence, PageRankMatchesArrayOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    TempDir t;
    auto store = test::make_store(t);
    auto g = test::ingest_edges(store, "g", test::rmat_sink_free(9, 4, seed));
    lockstep(g, PageRank{1e-9, 1000}, small_engine(1, 16 * 1024),
             [](double a, double b) { return std::abs(a - b) <= 1e-12; }, 6);
  }
}

TEST(Purity, CurrentValuesReplayIdentically) {
  TempDir t;
  auto store = test::make_store(t, 2);
  auto g = test::random_graph(store, "g", 3000, 9000, 2);
  Engine<test::MinLabel> eng(g, test::MinLabel{}, small_engine());
  auto st = eng.init();
  for (int i = 0; i < 3; ++i) eng.run_superstep(st);
  ASSERT_EQ(st.logs.size(), 3u);
  const auto r0 = store.io().bytes_read;
  auto a = eng.current_values(st);
  const auto first = drain(*a);
  const auto r1 = store.io().bytes_read;
  auto b = eng.current_values(st);
  EXPECT_EQ(drain(*b), first);
  EXPECT_EQ(store.io().bytes_read - r1, r1 - r0);
  a->rewind();
  EXPECT_EQ(drain(*a), first);
}

TEST(Storage, RunsOnlyAppend) {
  TempDir t;
  auto store = test::make_store(t, 3);
  auto g = test::ingest_edges(store, "g", test::rmat_sink_free(10, 4, 1));
  bfs(g, 0, small_engine(2));
  pagerank(g, 1e-6, 10, SinkPolicy::reject, small_engine(2));
  EXPECT_EQ(store.io().non_append_writes, 0u);
  EXPECT_GT(store.io().append_ops, 0u);
}

TEST(Consolidation, KeepsLogCountBoundedAndCleansUp) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = path(store, 30);
  auto cfg = small_engine();
  cfg.consolidation_threshold = 3;
  cfg.job_dir = "jobs/cons";
  Engine<Bfs> eng(g, Bfs{0}, cfg);
  auto st = eng.init();
  while (!st.active_known_empty) {
    eng.run_superstep(st);
    EXPECT_LE(st.logs.size(), 3u);
  }
  auto final_values = eng.materialize(st, "jobs/cons/out");
  auto parents = read_all(final_values);
  EXPECT_EQ(parents[0], 0u);
  for (VertexId v = 1; v < 30; ++v) EXPECT_EQ(parents[v], v - 1);

  RunResult<VertexId> keep;
  keep.values = final_values;
  eng.cleanup(st, keep);
  EXPECT_EQ(store.list("jobs/cons/"), (std::vector<std::string>{"jobs/cons/out", "jobs/cons/out.bloom"}));
}

TEST(Consolidation, RunUntilDoneLeavesOnlyResults) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = path(store, 20);
  auto cfg = small_engine();
  cfg.consolidation_threshold = 2;
  cfg.job_dir = "jobs/r";
  Engine<test::MinLabel> eng(g, test::MinLabel{}, cfg);
  auto run = eng.run_until_done();
  const auto left = store.list("jobs/r/");
  EXPECT_EQ(left, (std::vector<std::string>{run.values.file->name(), run.values.file->name() + ".bloom"}));
  const auto labels = read_all(run.values);
  for (VertexId v = 0; v < 20; ++v) EXPECT_EQ(labels[v], 0u);
}

TEST(Determinism, ThreadCountDoesNotChangeIntegerResults) {
  TempDir t;
  auto store = test::make_store(t, 2);
  auto g = test::random_graph(store, "g", 4000, 16'000, 8);
  std::vector<std::uint64_t> ref;
  for (unsigned threads : {1u, 2u, 4u}) {
    Engine<test::MinLabel> eng(g, test::MinLabel{}, small_engine(threads, 16 * 1024));
    auto labels = read_all(eng.run_until_done().values);
    if (ref.empty()) ref = labels;
    EXPECT_EQ(labels, ref) << threads;
  }
}

TEST(Memory, PhaseOnePeakWithinPool) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = test::ingest_edges(store, "g", test::rmat_sink_free(11, 8, 2));
  MemoryAccounting acct;
  auto cfg = small_engine(3, 32 * 1024);
  cfg.accounting = &acct;
  pagerank(g, 1e-6, 3, SinkPolicy::reject, cfg);
  EXPECT_GT(acct.phase1.peak(), 0u);
  EXPECT_LE(acct.phase1.peak(), cfg.sort.effective_pool() * cfg.sort.buffer_bytes);
}

TEST(Report, CsvColumns) {
  SuperstepReport r;
  r.step = 1;
  r.active = 2;
  r.pairs = 3;
  r.runs = 4;
  r.bytes_read = 5;
  r.bytes_written = 6;
  r.seconds = 0.5;
  EXPECT_EQ(report_csv({r}), "step,active,pairs,runs,bytes_read,bytes_written,seconds\n1,2,3,4,5,6,0.500000\n");
}

TEST(Oracle, EmptyActiveLeavesValues) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = tiny(store);
  auto img = load_in_memory(g);
  const std::vector<std::uint64_t> values{5, 6, 7};
  auto o = baseline_superstep(img, test::MinLabel{}, values, {}, 1);
  EXPECT_EQ(o.values, values);
  EXPECT_TRUE(o.log.empty());
  EXPECT_THROW(load_in_memory(g, 2), PreconditionError);
}

TEST(Oracle, StarDepths) {
  TempDir t;
  auto store = test::make_store(t);
  auto g = test::ingest_edges(store, "g", {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  EXPECT_EQ(test::bfs_depths(load_in_memory(g), 0), (std::vector<std::uint64_t>{0, 1, 1, 1, 1}));
}
