#pragma once

// The `bigsr` command-line tool. Lives in a header so tests can drive it
// in-process.

#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bigsr/algorithms.hpp"
#include "bigsr/config.hpp"
#include "bigsr/graph.hpp"

namespace bigsr {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNonConvergence = 3 };

namespace detail {

inline std::string read_host_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("not found: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_host_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  os << text;
  if (!os) throw StorageError("cannot write " + path, path);
}

struct Stats {
  std::uint64_t min = 0, max = 0;
  double mean = 0;
};

inline Stats degree_stats(const Graph& g) {
  TraversalSession s(g);
  Stats st;
  st.min = std::numeric_limits<std::uint64_t>::max();
  for (VertexId v = 0; v < g.num_vertices(); ++v) {
    const auto d = s.out_degree(v);
    st.min = std::min(st.min, d);
    st.max = std::max(st.max, d);
  }
  st.mean = static_cast<double>(g.num_edges()) / static_cast<double>(g.num_vertices());
  return st;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Out-of-core graph analytics with sort-reduce", "bigsr"};
  app.require_subcommand(1);
  app.fallthrough();

  // Settings that may also come from --config; kept as text until merged.
  std::map<std::string, std::string> flag;
  std::vector<std::string> store_dirs;
  std::map<std::string, CLI::Option*> given;
  std::string config_path;
  app.add_option("--config", config_path, "key=value settings file (flags override it)");
  given["store-dir"] = app.add_option("--store-dir", store_dirs, "store device directory (repeatable)");
  for (const auto* key : {"chunk-size", "buffer-mb", "sub-chunk-mb", "fan-in", "threads", "consolidate",
                          "superstep-cap", "root", "eps", "max-iters", "seed", "sink-policy"})
    given[key] = app.add_option(std::string("--") + key, flag[key]);

  auto* convert = app.add_subcommand("convert", "ingest a text edge list");
  std::string input, graph_name, weight_format = "integer";
  unsigned weight_width = 0;
  convert->add_option("input", input, "text edge list")->required();
  convert->add_option("graph", graph_name, "graph name in the store")->required();
  convert->add_option("--weight-width", weight_width, "bytes per edge weight (0, 4, 8)");
  convert->add_option("--weight-format", weight_format, "integer or real");

  auto* generate = app.add_subcommand("generate", "write an RMAT edge list");
  unsigned scale = 0;
  std::uint64_t edge_factor = 16;
  std::string output;
  generate->add_option("--scale", scale, "log2 of the vertex count")->required();
  generate->add_option("--edge-factor", edge_factor, "edges per vertex");
  generate->add_option("output", output, "output path")->required();

  auto* run = app.add_subcommand("run", "run an algorithm");
  std::string algorithm, report;
  run->add_option("algorithm", algorithm, "bfs, pagerank or bc")->required();
  run->add_option("graph", graph_name, "graph name")->required();
  run->add_option("--report", report, "per-superstep CSV report path");

  auto* stats = app.add_subcommand("stats", "describe a graph");
  stats->add_option("graph", graph_name, "graph name")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    RunConfig cfg;
    if (const char* env = std::getenv("BIGSR_STORE"); env && *env) cfg.store_dirs = {env};
    if (!config_path.empty()) cfg.apply_file_text(detail::read_host_file(config_path));
    if (given["store-dir"]->count()) cfg.store_dirs = store_dirs;
    for (const auto& [key, value] : flag)
      if (given[key]->count()) cfg.set(key, value);

    if (generate->parsed()) {
      if (scale > 30) throw ConfigError("scale must be <= 30");
      std::ofstream os(output, std::ios::trunc);
      if (!os) throw StorageError("cannot write " + output, output);
      generate_rmat(scale, edge_factor, cfg.seed, os);
      os.flush();
      if (!os) throw StorageError("cannot write " + output, output);
      out << (edge_factor << scale) << " edges over " << (std::uint64_t{1} << scale) << " vertices\n";
      return kExitOk;
    }

    if (cfg.store_dirs.empty()) throw ConfigError("no store: pass --store-dir or set BIGSR_STORE");
    cfg.validate();
    Store store(cfg.store_config());

    if (convert->parsed()) {
      IngestOptions opt;
      opt.weight_width = weight_width;
      if (weight_format == "real")
        opt.weight_format = WeightFormat::real;
      else if (weight_format != "integer")
        throw ConfigError("weight-format must be 'integer' or 'real'");
      opt.sort_buffer_bytes = cfg.buffer_mb * MiB;
      const auto g = ingest_edge_file(store, graph_name, input, opt);
      out << g.num_vertices() << " vertices, " << g.num_edges() << " edges\n";
      return kExitOk;
    }

    if (graph_name.empty()) throw ConfigError("graph name is empty");
    const auto g = open_graph(store, graph_name);

    if (stats->parsed()) {
      const auto d = detail::degree_stats(g);
      out << g.num_vertices() << " vertices, " << g.num_edges() << " edges\n"
          << "weight width " << g.meta.weight_width << "\n"
          << "min out-degree " << d.min << "\n"
          << "max out-degree " << d.max << "\n"
          << "mean out-degree " << d.mean << "\n"
          << "index bytes " << g.index->length() << "\n"
          << "edge bytes " << g.edges->length() << "\n";
      return kExitOk;
    }

    auto ecfg = cfg.engine_config();
    std::vector<SuperstepReport> reports;
    if (algorithm == "bfs") {
      const auto r = bfs(g, cfg.root, ecfg);
      out << summarize(r) << "values " << r.parents.file->name() << "\n";
      reports = r.reports;
    } else if (algorithm == "pagerank") {
      const auto r = pagerank(g, cfg.eps, cfg.max_iters, cfg.sink_policy, ecfg);
      out << summarize(r) << "values " << r.ranks.file->name() << "\n";
      reports = r.reports;
    } else if (algorithm == "bc") {
      const auto r = bc(g, cfg.root, ecfg);
      out << summarize(r) << "values " << r.scores.file->name() << "\n";
      reports = r.tree.reports;
    } else {
      throw ConfigError("unknown algorithm '" + algorithm + "' (expected bfs, pagerank or bc)");
    }
    if (!report.empty()) detail::write_host_file(report, report_csv(reports));
    return kExitOk;
  } catch (const NonConvergence& e) {
    err << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BoundsError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace bigsr
