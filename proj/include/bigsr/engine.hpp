#pragma once

// Superstep executor. Each superstep streams the active vertices, runs the
// edge program over their out-edges into a Sort-Reduce pipeline, then walks
// the reduced run against the current values to produce an update log. The
// current values are never rewritten in place: they are the initial dense
// file overlaid by the update logs, newest first, evaluated on demand.

#include <chrono>
#include <concepts>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bigsr/error.hpp"
#include "bigsr/graph.hpp"
#include "bigsr/memory.hpp"
#include "bigsr/sortreduce.hpp"
#include "bigsr/storage.hpp"
#include "bigsr/vsource.hpp"

namespace bigsr {

struct EdgeContext {
  VertexId src = 0;
  std::uint64_t out_degree = 0;
  std::uint64_t ordinal = 0;  // position of the edge among src's out-edges
  std::uint64_t num_vertices = 0;
};

struct SuperstepContext {
  std::uint64_t superstep = 0;  // 1-based
  std::uint64_t num_vertices = 0;
  /// Total value mass held by active sink vertices this superstep (only
  /// gathered for algorithms that define sink_mass).
  double sink_mass = 0;
};

/// How the next superstep's active set is derived from the update log.
enum class ActiveRule {
  converge,            // log entries where is_active(old, new)
  difference_visited,  // log entries whose key held the default value before
  all_vertices,        // every vertex, every superstep
};

template <class A>
concept GraphAlgorithm = requires(const A& a, const typename A::Value& v, const EdgeRecord& e,
                                  const EdgeContext& ec, const SuperstepContext& sc, const Graph& g) {
  requires FixedWidthValue<typename A::Value>;
  { a.edge_program(v, e, ec) } -> std::convertible_to<typename A::Value>;
  { a.vertex_program(v, v) } -> std::convertible_to<typename A::Value>;
  { a.finalize(v, v, sc) } -> std::convertible_to<typename A::Value>;
  { a.is_active(v, v) } -> std::convertible_to<bool>;
  { a.default_value() } -> std::convertible_to<typename A::Value>;
  { a.initial_values(g) } -> std::convertible_to<SourcePtr<typename A::Value>>;
  { a.initial_active(g) } -> std::convertible_to<std::optional<std::vector<VertexId>>>;
};

namespace detail {

template <class A>
constexpr ActiveRule active_rule_of() {
  if constexpr (requires { A::active_rule; })
    return A::active_rule;
  else
    return ActiveRule::converge;
}

template <class A>
constexpr bool self_update_of() {
  if constexpr (requires { A::self_update; })
    return A::self_update;
  else
    return false;
}

template <class A>
struct ReduceAdapter {
  const A* alg;
  typename A::Value operator()(const typename A::Value& a, const typename A::Value& b) const {
    return alg->vertex_program(a, b);
  }
};

}  // namespace detail

struct EngineConfig {
  SortReduceConfig sort;
  /// Update logs are folded into a fresh dense base once more than this many
  /// accumulate.
  unsigned consolidation_threshold = 8;
  std::uint64_t superstep_cap = 1'000'000;
  /// Entries per chunk when the active stream is split across workers.
  std::size_t split_chunk = 256;
  std::uint64_t page_bytes = kDefaultPageBytes;
  /// Keep a sparse file of newly activated entries per superstep.
  bool record_activations = false;
  /// Leave logs and the dense bases in the store after the run.
  bool keep_intermediates = false;
  /// Store directory for this run's files; empty picks a fresh one.
  std::string job_dir;
  MemoryAccounting* accounting = nullptr;

  void validate() const {
    sort.validate();
    if (consolidation_threshold == 0) throw ConfigError("consolidation threshold must be >= 1");
    if (superstep_cap == 0) throw ConfigError("superstep cap must be >= 1");
    if (split_chunk == 0) throw ConfigError("split chunk must be >= 1");
    if (page_bytes < 64) throw ConfigError("page size must be >= 64 bytes");
  }
};

struct SuperstepReport {
  std::uint64_t step = 0;
  std::uint64_t active = 0;
  std::uint64_t pairs = 0;
  std::uint64_t runs = 0;
  std::uint64_t updates = 0;    // keys in the update log
  std::uint64_t activated = 0;  // keys for which is_active held
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  double seconds = 0;
  std::vector<LevelMetrics> levels;
};

inline std::string report_csv(const std::vector<SuperstepReport>& rows) {
  std::ostringstream os;
  os << "step,active,pairs,runs,bytes_read,bytes_written,seconds\n";
  for (const auto& r : rows)
    os << r.step << ',' << r.active << ',' << r.pairs << ',' << r.runs << ',' << r.bytes_read << ','
       << r.bytes_written << ',' << std::fixed << std::setprecision(6) << r.seconds << std::defaultfloat << '\n';
  return os.str();
}

/// Vertex source over a strictly increasing sorted run.
template <FixedWidthValue V>
class RunSource final : public VertexSource<V> {
public:
  explicit RunSource(SortedRun<V> run, std::uint64_t read_ahead = kSourceBlockBytes)
      : run_(std::move(run)), read_ahead_(read_ahead) {
    reset();
  }

  const VertexEntry<V>* peek() override {
    if (!loaded_) {
      loaded_ = true;
      has_ = reader_->next(cur_);
    }
    return has_ ? &cur_ : nullptr;
  }
  void advance() override {
    peek();
    loaded_ = false;
  }
  void reset() override {
    reader_ = std::make_unique<RunReader<V>>(run_, read_ahead_, true);
    loaded_ = false;
  }

private:
  SortedRun<V> run_;
  std::uint64_t read_ahead_;
  std::unique_ptr<RunReader<V>> reader_;
  VertexEntry<V> cur_{};
  bool loaded_ = false, has_ = false;
};

template <class V>
using SourceFactory = std::function<SourcePtr<V>()>;

/// Everything needed to evaluate the current values and active set.
template <class V>
struct SuperstepState {
  std::uint64_t superstep = 0;
  DenseVertexFile<V> base;
  std::vector<SparseVertexFile<V>> logs;  // oldest first
  SourceFactory<V> active;
  std::uint64_t active_hint = 0;  // known size of the active set, if computed
  bool active_known_empty = false;
  std::vector<SparseVertexFile<V>> activations;  // per superstep, when recorded
  std::vector<SuperstepReport> reports;
  std::vector<FileHandle> retired;  // superseded files still referenced by `active`
};

template <class V>
struct RunResult {
  DenseVertexFile<V> values;
  std::vector<SuperstepReport> reports;
  std::vector<SparseVertexFile<V>> activations;
  std::uint64_t supersteps = 0;
};

template <GraphAlgorithm A>
class Engine {
public:
  using V = typename A::Value;
  using Reducer = SortReducer<V, detail::ReduceAdapter<A>>;

  Engine(const Graph& g, A alg, EngineConfig cfg)
      : g_(g), alg_(std::move(alg)), cfg_(std::move(cfg)), store_(g.store) {
    cfg_.validate();
    if (cfg_.job_dir.empty()) cfg_.job_dir = store_.temp_name("jobs", "job");
    cfg_.sort.temp_dir = cfg_.job_dir + "/tmp";
    if constexpr (requires { alg_.prepare(g_); }) alg_.prepare(g_);
  }

  const A& algorithm() const noexcept { return alg_; }
  const EngineConfig& config() const noexcept { return cfg_; }
  const Graph& graph() const noexcept { return g_; }

  /// Writes the initial dense values and sets up the initial active set.
  SuperstepState<V> init() {
    SuperstepState<V> st;
    auto init_src = alg_.initial_values(g_);
    st.base = write_dense<V>(store_, next_name("base"), g_.num_vertices(), alg_.default_value(), *init_src, true);
    auto listed = alg_.initial_active(g_);
    if (!listed) {
      st.active = [this, base = st.base] { return make_dense_source(base); };
      st.active_hint = g_.num_vertices();
    } else {
      std::vector<VertexId> keys = std::move(*listed);
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      std::vector<VertexEntry<V>> entries;
      auto vals = make_dense_source(st.base);
      for (auto k : keys) {
        if (k >= g_.num_vertices())
          throw BoundsError("active vertex " + std::to_string(k) + " out of range");
        vals->has_next(k);
        entries.push_back(vals->get_next());
      }
      st.active_hint = entries.size();
      st.active_known_empty = entries.empty();
      st.active = [entries] { return make_vector_source<V>(entries); };
    }
    return st;
  }

  /// The current values of every vertex, newest log first.
  SourcePtr<V> current_values(const SuperstepState<V>& st,
                              typename DenseFileSource<V>::Mode mode = DenseFileSource<V>::Mode::all) const {
    return compose(st.base, st.logs, mode);
  }

  /// Phase 1: streams the active set through the edge program into `pipe`.
  /// Returns (active vertices, pairs emitted, sink mass).
  struct GenerateStats {
    std::uint64_t active = 0;
    std::uint64_t pairs = 0;
    double sink_mass = 0;
  };

  template <class Sink>
  GenerateStats generate_intermediate(SourcePtr<V> active, Sink&& make_emitter) {
    const unsigned ways = cfg_.sort.worker_threads;
    std::vector<SourcePtr<V>> parts;
    if (ways == 1)
      parts.push_back(std::move(active));
    else
      parts = split_source(std::move(active), ways, cfg_.split_chunk);
    std::vector<GenerateStats> stats(parts.size());
    std::vector<std::exception_ptr> errors(parts.size());
    auto work = [&](std::size_t i) {
      try {
        auto em = make_emitter();
        TraversalSession s(g_, cfg_.page_bytes);
        auto& src = *parts[i];
        auto& st = stats[i];
        const EdgeContext base{0, 0, 0, g_.num_vertices()};
        EdgeRecord e;
        while (src.has_next()) {
          const auto u = src.get_next();
          if (u.key >= g_.num_vertices())
            throw BoundsError("active vertex " + std::to_string(u.key) + " out of range");
          ++st.active;
          EdgeContext ctx = base;
          ctx.src = u.key;
          auto edges = s.edges_of(u.key);
          ctx.out_degree = edges.size();
          if constexpr (detail::self_update_of<A>()) {
            em.push(u.key, alg_.identity());
            ++st.pairs;
          }
          if constexpr (requires { alg_.sink_mass(u.value); }) {
            if (ctx.out_degree == 0) st.sink_mass += alg_.sink_mass(u.value);
          }
          while (edges.next(e)) {
            em.push(e.dst, alg_.edge_program(u.value, e, ctx));
            ++ctx.ordinal;
            ++st.pairs;
          }
        }
        em.flush();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    if (parts.size() == 1) {
      work(0);
    } else {
      std::vector<std::thread> ts;
      for (std::size_t i = 0; i < parts.size(); ++i) ts.emplace_back(work, i);
      for (auto& t : ts) t.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    GenerateStats total;
    for (const auto& s : stats) {
      total.active += s.active;
      total.pairs += s.pairs;
      total.sink_mass += s.sink_mass;
    }
    return total;
  }

  /// Runs one superstep and advances `st`. Returns the step's report.
  SuperstepReport run_superstep(SuperstepState<V>& st) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto io0 = store_.io();
    SuperstepReport rep;
    rep.step = st.superstep + 1;

    Reducer sr(store_, cfg_.sort, detail::ReduceAdapter<A>{&alg_}, cfg_.accounting);
    SortedRun<V> reduced;
    GenerateStats gen;
    {
      typename Reducer::Pipeline pipe(sr);
      gen = generate_intermediate(st.active(), [&] { return pipe.emitter(); });
      rep.runs = pipe.runs_produced();
      reduced = pipe.finish();
    }
    rep.active = gen.active;
    rep.pairs = gen.pairs;

    const SuperstepContext ctx{rep.step, g_.num_vertices(), gen.sink_mass};
    SparseFileWriter<V> log(store_.create(next_name("log")));
    std::optional<SparseFileWriter<V>> act;
    if (cfg_.record_activations) act.emplace(store_.create(next_name("act")));
    {
      RunReader<V> in(reduced, cfg_.sort.merge_read_ahead, true);
      auto old = current_values(st);
      UpdatePair<V> p;
      while (in.next(p)) {
        if (!old->has_next(p.key))
          throw CorruptionError("reduced key " + std::to_string(p.key) + " has no current value");
        const V before = old->get_next().value;
        const V after = alg_.finalize(before, p.value, ctx);
        log.put(p.key, after);
        if (alg_.is_active(before, after)) {
          ++rep.activated;
          if (act) act->put(p.key, after);
        }
      }
    }
    sr.discard(reduced);
    const auto log_file = log.finish();
    rep.updates = log_file.count;
    if (act) st.activations.push_back(act->finish());

    // Files referenced by the previous active set can go now.
    for (auto& f : st.retired) store_.remove(f);
    st.retired.clear();

    advance(st, log_file, rep.activated);

    rep.levels = sr.metrics().levels();
    const auto io1 = store_.io();
    rep.bytes_read = io1.bytes_read - io0.bytes_read;
    rep.bytes_written = io1.bytes_appended - io0.bytes_appended;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++st.superstep;
    st.reports.push_back(rep);
    return rep;
  }

  /// Iterates until the active set is empty or the algorithm reports
  /// convergence, then materializes the final values.
  RunResult<V> run_until_done() {
    auto st = init();
    return run_until_done(st);
  }

  RunResult<V> run_until_done(SuperstepState<V>& st) {
    for (;;) {
      if (st.active_known_empty) break;
      if (st.superstep >= cfg_.superstep_cap)
        throw NonConvergence("no convergence within " + std::to_string(cfg_.superstep_cap) + " supersteps");
      const auto rep = run_superstep(st);
      if (converged(rep)) break;
    }
    RunResult<V> out;
    out.values = materialize(st, next_name("final"));
    out.reports = st.reports;
    out.activations = st.activations;
    out.supersteps = st.superstep;
    if (!cfg_.keep_intermediates) cleanup(st, out);
    return out;
  }

  /// Writes the composed current values into one dense file.
  DenseVertexFile<V> materialize(const SuperstepState<V>& st, const std::string& name) {
    auto src = current_values(st);
    return write_dense<V>(store_, name, g_.num_vertices(), alg_.default_value(), *src, true);
  }

  /// Deletes everything the run created except the final values and the
  /// activation logs.
  void cleanup(SuperstepState<V>& st, const RunResult<V>& keep) {
    auto drop = [&](const FileHandle& f) {
      if (f && f != keep.values.file && !f->removed()) store_.remove(f);
    };
    for (auto& f : st.retired) drop(f);
    st.retired.clear();
    for (auto& l : st.logs) drop(l.file);
    st.logs.clear();
    drop(st.base.file);
    if (store_.exists(st.base.file->name() + ".bloom")) store_.remove(st.base.file->name() + ".bloom");
    st.active = [] { return make_empty_source<V>(); };
  }

private:
  bool converged(const SuperstepReport& rep) const {
    if constexpr (requires { alg_.converged(rep); })
      return alg_.converged(rep);
    else
      return rep.activated == 0;
  }

  std::string next_name(const std::string& stem) {
    return cfg_.job_dir + "/" + stem + "_" + std::to_string(counter_++);
  }

  SourcePtr<V> compose(const DenseVertexFile<V>& base, const std::vector<SparseVertexFile<V>>& logs,
                       typename DenseFileSource<V>::Mode mode) const {
    SourcePtr<V> src = make_dense_source(base, mode);
    for (const auto& l : logs) src = union_source<V>(make_sparse_source(l), std::move(src));
    return src;
  }

  // Installs the new log and derives the next active set from it.
  void advance(SuperstepState<V>& st, const SparseVertexFile<V>& log, std::uint64_t activated) {
    const auto old_base = st.base;
    const auto old_logs = st.logs;
    st.logs.push_back(log);
    constexpr ActiveRule rule = detail::active_rule_of<A>();
    if constexpr (rule == ActiveRule::converge) {
      st.active = [this, log, old_base, old_logs] {
        return converge_source<V>(make_sparse_source(log),
                                  compose(old_base, old_logs, DenseFileSource<V>::Mode::all),
                                  [this](const V& now, const V& before) { return alg_.is_active(before, now); });
      };
    } else if constexpr (rule == ActiveRule::difference_visited) {
      st.active = [this, log, old_base, old_logs] {
        return difference_source<V>(make_sparse_source(log),
                                    compose(old_base, old_logs, DenseFileSource<V>::Mode::non_default));
      };
    }
    st.active_hint = rule == ActiveRule::all_vertices ? g_.num_vertices() : activated;
    st.active_known_empty = rule != ActiveRule::all_vertices && activated == 0;

    if (st.logs.size() > cfg_.consolidation_threshold) {
      auto fresh = materialize(st, next_name("base"));
      st.retired.push_back(st.base.file);
      const auto bloom = st.base.file->name() + ".bloom";
      if (store_.exists(bloom)) st.retired.push_back(store_.open(bloom));
      for (auto& l : st.logs) st.retired.push_back(l.file);
      st.logs.clear();
      st.base = fresh;
    }
    if constexpr (rule == ActiveRule::all_vertices) {
      st.active = [this, base = st.base, logs = st.logs] {
        return compose(base, logs, DenseFileSource<V>::Mode::all);
      };
    }
  }

  Graph g_;
  A alg_;
  EngineConfig cfg_;
  Store store_;
  std::uint64_t counter_ = 0;
};

}  // namespace bigsr
