#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "bigsr/vsource.hpp"
#include "test_util.hpp"

using namespace bigsr;
using bigsr::test::TempDir;

namespace {

using E = VertexEntry<std::uint64_t>;

std::vector<E> random_stream(std::size_t n, std::uint64_t key_range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::set<VertexId> keys;
  while (keys.size() < std::min<std::uint64_t>(n, key_range)) keys.insert(rng() % key_range);
  std::vector<E> out;
  for (auto k : keys) out.push_back({k, rng() % 1000});
  return out;
}

SourcePtr<std::uint64_t> vec(std::vector<E> v) { return make_vector_source<std::uint64_t>(std::move(v)); }

bool strictly_increasing(const std::vector<E>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].key <= v[i - 1].key) return false;
  return true;
}

}  // namespace

TEST(Protocol, SparseFileFastForward) {
  TempDir t;
  auto store = test::make_store(t);
  auto src = vec({{2, 10}, {5, 11}});
  auto f = write_sparse<std::uint64_t>(store, "s", *src);
  SparseFileSource<std::uint64_t> s(f);
  EXPECT_TRUE(s.has_next(3));
  EXPECT_EQ(s.get_next(), (E{5, 11}));
  EXPECT_FALSE(s.has_next(6));
}

TEST(Protocol, RewindReplaysIdentically) {
  TempDir t;
  auto store = test::make_store(t);
  auto in = random_stream(5000, 100'000, 1);
  auto src = vec(in);
  auto f = write_sparse<std::uint64_t>(store, "s", *src);
  SparseFileSource<std::uint64_t> s(f, 4096);
  const auto first = drain(s);
  s.rewind();
  EXPECT_EQ(drain(s), first);
  EXPECT_EQ(first, in);
}

TEST(Protocol, DecreasingIndexIsRejected) {
  auto s = vec({{1, 1}, {4, 4}, {9, 9}});
  EXPECT_TRUE(s->has_next(4));
  EXPECT_THROW(s->has_next(2), ContractViolation);
  s->rewind();
  EXPECT_TRUE(s->has_next(1));
}

TEST(Protocol, GetNextOnExhaustedSourceIsRejected) {
  auto s = vec({{1, 1}});
  s->get_next();
  EXPECT_FALSE(s->has_next());
  EXPECT_THROW(s->get_next(), ContractViolation);
}

TEST(Protocol, VectorSourceRequiresIncreasingKeys) {
  EXPECT_THROW(vec({{3, 0}, {3, 1}}), ContractViolation);
}

TEST(Protocol, SparseWriterRequiresIncreasingKeys) {
  TempDir t;
  auto store = test::make_store(t);
  SparseFileWriter<std::uint64_t> w(store.create("s"));
  w.put(5, 0);
  EXPECT_THROW(w.put(5, 1), ContractViolation);
}

TEST(Dense, LayoutAndDefaults) {
  TempDir t;
  auto store = test::make_store(t);
  auto src = vec({{1, 7}, {4, 9}});
  auto d = write_dense<std::uint64_t>(store, "d", 6, 42, *src, false);
  EXPECT_EQ(d.file->length(), kDenseHeaderBytes + 6 * 8);
  auto back = open_dense<std::uint64_t>(store, "d");
  EXPECT_EQ(back.num_vertices, 6u);
  EXPECT_EQ(back.default_value, 42u);
  EXPECT_EQ(back.bloom, nullptr);
  DenseFileSource<std::uint64_t> all(back);
  EXPECT_EQ(drain(all), (std::vector<E>{{0, 42}, {1, 7}, {2, 42}, {3, 42}, {4, 9}, {5, 42}}));
  DenseFileSource<std::uint64_t> nd(back, DenseFileSource<std::uint64_t>::Mode::non_default);
  EXPECT_EQ(drain(nd), (std::vector<E>{{1, 7}, {4, 9}}));
  EXPECT_THROW(open_dense<std::uint32_t>(store, "d"), FormatError);
}

TEST(Dense, DoubleDefaultPatternRoundTrips) {
  TempDir t;
  auto store = test::make_store(t);
  auto src = make_empty_source<double>();
  write_dense<double>(store, "d", 3, -0.5, *src, false);
  EXPECT_EQ(open_dense<double>(store, "d").default_value, -0.5);
}

TEST(Dense, IndexJumpsWithoutScanning) {
  TempDir t;
  auto store = test::make_store(t);
  auto src = range_source<std::uint64_t>(1'000'000, [](VertexId k) { return k * 2; });
  auto d = write_dense<std::uint64_t>(store, "d", 1'000'000, 0, *src, false);
  DenseFileSource<std::uint64_t> s(d, DenseFileSource<std::uint64_t>::Mode::all, 4096);
  ASSERT_TRUE(s.has_next(999'990));
  EXPECT_EQ(s.get_next(), (E{999'990, 1'999'980}));
  EXPECT_EQ(s.blocks_fetched(), 1u);
  EXPECT_FALSE(s.has_next(1'000'000));
}

TEST(Dense, BloomHasNoFalseNegatives) {
  TempDir t;
  auto store = test::make_store(t);
  const std::uint64_t n = 200'000;
  auto in = random_stream(100, n, 8);
  auto src = vec(in);
  auto d = write_dense<std::uint64_t>(store, "d", n, 0, *src, true);
  ASSERT_NE(d.bloom, nullptr);
  EXPECT_TRUE(store.exists("d.bloom"));
  std::uint64_t fp = 0;
  std::set<VertexId> keys;
  for (const auto& e : in)
    if (e.value != 0) keys.insert(e.key);
  for (auto k : keys) ASSERT_TRUE(d.bloom->may_contain(k)) << k;
  for (VertexId k = 0; k < n; ++k)
    if (!keys.count(k) && d.bloom->may_contain(k)) ++fp;
  RecordProperty("bloom_false_positive_rate", std::to_string(double(fp) / double(n - keys.size())));

  auto reopened = open_dense<std::uint64_t>(store, "d");
  ASSERT_NE(reopened.bloom, nullptr);
  const std::uint64_t per_block = 8;
  DenseFileSource<std::uint64_t> s(reopened, DenseFileSource<std::uint64_t>::Mode::non_default, per_block * 8);
  std::vector<E> expect;
  for (const auto& e : in)
    if (e.value != 0) expect.push_back(e);
  EXPECT_EQ(drain(s), expect);
  // Only blocks holding a bloom-positive key are read.
  std::set<std::uint64_t> touched;
  for (VertexId k = 0; k < n; ++k)
    if (d.bloom->may_contain(k)) touched.insert(k / per_block);
  EXPECT_EQ(s.blocks_fetched(), touched.size());
  EXPECT_LT(s.blocks_fetched(), n / per_block / 4);
}

TEST(Arith, IdentityAndDamping) {
  auto in = random_stream(100, 1000, 2);
  auto id = arith_source<std::uint64_t>(vec(in), [](const std::uint64_t& v) { return v; });
  EXPECT_EQ(drain(*id), in);
  auto damp = arith_source<double>(make_vector_source<double>({{1, 1.0}}), [](const double& v) { return v * 0.85; });
  auto out = drain(*damp);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].key, 1u);
  EXPECT_DOUBLE_EQ(out[0].value, 0.85);
}

TEST(Arith, CompositionMatchesComposedFunction) {
  auto f = [](const std::uint64_t& v) { return v * 3 + 1; };
  auto g = [](const std::uint64_t& v) { return v ^ 0x55; };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = random_stream(500, 10'000, seed);
    auto two = arith_source<std::uint64_t>(arith_source<std::uint64_t>(vec(in), g), f);
    auto one = arith_source<std::uint64_t>(vec(in), [&](const std::uint64_t& v) { return f(g(v)); });
    EXPECT_EQ(drain(*two), drain(*one));
  }
}

TEST(Logical, UnionFirstSourceWins) {
  auto u = union_source<std::uint64_t>(vec({{1, 100}, {3, 101}}), vec({{3, 200}, {4, 201}}));
  EXPECT_EQ(drain(*u), (std::vector<E>{{1, 100}, {3, 101}, {4, 201}}));
}

TEST(Logical, Difference) {
  auto d = difference_source<std::uint64_t>(vec({{1, 100}, {3, 101}}), vec({{3, 200}}));
  EXPECT_EQ(drain(*d), (std::vector<E>{{1, 100}}));
}

TEST(Logical, MinimumOnlyOnMatch) {
  auto m = minimum_source<std::uint64_t>(vec({{1, 5}, {2, 9}, {4, 1}}), vec({{2, 3}, {3, 0}, {4, 8}}));
  EXPECT_EQ(drain(*m), (std::vector<E>{{2, 3}, {4, 1}}));
}

TEST(Logical, MinimumOfDisjointStreamsIsEmpty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto all = random_stream(400, 5000, 100 + trial);
    std::vector<E> a, b;
    for (const auto& e : all) (rng() & 1 ? a : b).push_back(e);
    auto m = minimum_source<std::uint64_t>(vec(a), vec(b));
    EXPECT_TRUE(drain(*m).empty());
  }
}

TEST(Logical, CustomCombinesMatchesAndPassesOthers) {
  auto c = custom_source<std::uint64_t>(vec({{1, 1}, {3, 3}}), vec({{2, 20}, {3, 30}}),
                                        [](const std::uint64_t& a, const std::uint64_t& b) { return a + b; });
  EXPECT_EQ(drain(*c), (std::vector<E>{{1, 1}, {2, 20}, {3, 33}}));
}

TEST(Logical, ConvergeEmitsUnconvergedEntriesOfA) {
  auto c = converge_source<double>(make_vector_source<double>({{1, 1.0}, {2, 2.0}, {5, 5.0}}),
                                   make_vector_source<double>({{1, 1.0 + 1e-9}, {2, 2.5}}),
                                   [](const double& a, const double& b) { return std::abs(a - b) > 1e-7; });
  auto out = drain(*c);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].key, 2u);
  EXPECT_EQ(out[1].key, 5u);
}

TEST(Logical, MatchesSetOracles) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto a = random_stream(300, 1000, seed * 2);
    auto b = random_stream(300, 1000, seed * 2 + 1);
    std::map<VertexId, std::uint64_t> ma, mb;
    for (const auto& e : a) ma[e.key] = e.value;
    for (const auto& e : b) mb[e.key] = e.value;
    std::vector<E> u, d, m;
    std::map<VertexId, std::uint64_t> mu = mb;
    for (const auto& [k, v] : ma) mu[k] = v;
    for (const auto& [k, v] : mu) u.push_back({k, v});
    for (const auto& [k, v] : ma) {
      if (!mb.count(k)) d.push_back({k, v});
      else m.push_back({k, std::min(v, mb[k])});
    }
    EXPECT_EQ(drain(*union_source<std::uint64_t>(vec(a), vec(b))), u);
    EXPECT_EQ(drain(*difference_source<std::uint64_t>(vec(a), vec(b))), d);
    EXPECT_EQ(drain(*minimum_source<std::uint64_t>(vec(a), vec(b))), m);
  }
}

TEST(Logical, UnionIsAssociative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = random_stream(200, 600, seed), b = random_stream(200, 600, seed + 50),
         c = random_stream(200, 600, seed + 99);
    auto l = union_source<std::uint64_t>(vec(a), union_source<std::uint64_t>(vec(b), vec(c)));
    auto r = union_source<std::uint64_t>(union_source<std::uint64_t>(vec(a), vec(b)), vec(c));
    EXPECT_EQ(drain(*l), drain(*r));
  }
}

TEST(Logical, CombinatorsPreserveKeyOrder) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = random_stream(300, 900, seed), b = random_stream(300, 900, seed + 7);
    auto add = [](const std::uint64_t& x, const std::uint64_t& y) { return x + y; };
    auto tree = custom_source<std::uint64_t>(
        union_source<std::uint64_t>(vec(a), arith_source<std::uint64_t>(vec(b), [](const std::uint64_t& v) {
                                      return v + 1;
                                    })),
        difference_source<std::uint64_t>(vec(b), vec(a)), add);
    EXPECT_TRUE(strictly_increasing(drain(*tree)));
  }
}

TEST(Logical, RewindRewindsChildren) {
  TempDir t;
  auto store = test::make_store(t);
  auto sa = vec(random_stream(2000, 50'000, 3));
  auto fa = write_sparse<std::uint64_t>(store, "a", *sa);
  auto sb = vec(random_stream(2000, 50'000, 4));
  auto fb = write_sparse<std::uint64_t>(store, "b", *sb);
  auto u = union_source<std::uint64_t>(make_sparse_source(fa), make_sparse_source(fb));
  auto first = drain(*u);
  u->rewind();
  EXPECT_EQ(drain(*u), first);
}

TEST(Laziness, ConstructionPerformsNoReads) {
  TempDir t;
  auto store = test::make_store(t);
  auto sa = vec(random_stream(2000, 50'000, 3));
  auto fa = write_sparse<std::uint64_t>(store, "a", *sa);
  auto src = range_source<std::uint64_t>(50'000, [](VertexId k) { return k; });
  auto fd = write_dense<std::uint64_t>(store, "d", 50'000, 0, *src, true);
  const auto before = store.io().read_ops;
  auto tree = union_source<std::uint64_t>(
      arith_source<std::uint64_t>(make_sparse_source(fa), [](const std::uint64_t& v) { return v; }),
      difference_source<std::uint64_t>(make_dense_source(fd), make_sparse_source(fa)));
  auto parts = split_source<std::uint64_t>(std::move(tree), 3, 16);
  EXPECT_EQ(store.io().read_ops, before);
  EXPECT_TRUE(parts[0]->has_next());
  EXPECT_GT(store.io().read_ops, before);
}

TEST(Split, SingleWayIsIdentity) {
  auto in = random_stream(777, 10'000, 5);
  auto parts = split_source<std::uint64_t>(vec(in), 1, 10);
  EXPECT_EQ(drain(*parts[0]), in);
}

TEST(Split, RoundRobinChunks) {
  std::vector<E> in;
  for (std::uint64_t i = 0; i < 6; ++i) in.push_back({i * 10, i});
  auto parts = split_source<std::uint64_t>(vec(in), 2, 2);
  EXPECT_EQ(drain(*parts[0]), (std::vector<E>{in[0], in[1], in[4], in[5]}));
  EXPECT_EQ(drain(*parts[1]), (std::vector<E>{in[2], in[3]}));
}

TEST(Split, OutputsPartitionTheInput) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_stream(1 + rng() % 3000, 100'000, trial);
    const std::size_t ways = 1 + rng() % 5, chunk = 1 + rng() % 40;
    auto parts = split_source<std::uint64_t>(vec(in), ways, chunk);
    std::vector<E> all;
    for (std::size_t w = 0; w < ways; ++w) {
      // Drain in a different order than creation.
      auto out = drain(*parts[(w * 3) % ways == w ? w : w]);
      EXPECT_TRUE(strictly_increasing(out));
      all.insert(all.end(), out.begin(), out.end());
    }
    std::sort(all.begin(), all.end(), [](const E& a, const E& b) { return a.key < b.key; });
    EXPECT_EQ(all, in) << "ways " << ways << " chunk " << chunk;
  }
}

TEST(Split, OutputsDrainConcurrently) {
  auto in = random_stream(50'000, 1'000'000, 7);
  const std::size_t ways = 4;
  auto parts = split_source<std::uint64_t>(vec(in), ways, 64);
  std::vector<std::vector<E>> got(ways);
  std::vector<std::thread> th;
  for (std::size_t w = 0; w < ways; ++w) th.emplace_back([&, w] { got[w] = drain(*parts[w]); });
  for (auto& x : th) x.join();
  std::vector<E> all;
  for (const auto& g : got) {
    EXPECT_TRUE(strictly_increasing(g));
    all.insert(all.end(), g.begin(), g.end());
  }
  std::sort(all.begin(), all.end(), [](const E& a, const E& b) { return a.key < b.key; });
  EXPECT_EQ(all, in);
}

TEST(Split, RewindRestartsTheGroup) {
  auto in = random_stream(100, 1000, 8);
  auto parts = split_source<std::uint64_t>(vec(in), 2, 3);
  auto a1 = drain(*parts[0]);
  auto b1 = drain(*parts[1]);
  parts[0]->rewind();
  EXPECT_EQ(drain(*parts[0]), a1);
  EXPECT_EQ(drain(*parts[1]), b1);
}

TEST(Split, RejectsZeroWaysOrChunk) {
  EXPECT_THROW(split_source<std::uint64_t>(vec({}), 0, 1), ContractViolation);
  EXPECT_THROW(split_source<std::uint64_t>(vec({}), 1, 0), ContractViolation);
}
