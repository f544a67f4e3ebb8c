#include "hcl/cli.hpp"

#include "hcl/config.hpp"
#include "hcl/errors.hpp"
#include "hcl/eval.hpp"
#include "hcl/graph.hpp"
#include "hcl/model.hpp"
#include "hcl/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace hcl::cli {

namespace fs = std::filesystem;

namespace {

Index thread_cap() {
  if (const char* env = std::getenv("HCL_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<Index>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::string graph_hash(const fs::path& dir) {
  std::string acc;
  for (const char* name : {kEdgeFile, kFeatureFile, kLabelFile, kMaskFile}) {
    const fs::path p = dir / name;
    acc += std::string(name) + ":" + (fs::exists(p) ? file_hash(p) : std::string("absent")) + ";";
  }
  return content_hash(acc);
}

void add_config(Report& report, const TrainConfig& cfg) {
  report.section("config");
  report.add("config_hash", content_hash(cfg.to_text()));
  std::istringstream in(cfg.to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    report.add(line.substr(0, eq), line.substr(eq + 3));
  }
}

std::string seed_list(std::uint64_t seed, Index runs) {
  std::string s;
  for (Index r = 0; r < runs; ++r) s += (r ? "," : "") + std::to_string(seed + static_cast<std::uint64_t>(r));
  return s;
}

Index class_count(const std::vector<int>& labels) {
  std::set<int> distinct;
  for (int y : labels) {
    if (y >= 0) distinct.insert(y);
  }
  return static_cast<Index>(distinct.size());
}

void require_labels(const Graph& g, const fs::path& dir) {
  if (!g.has_labels()) throw DataError("graph " + dir.string() + " has no " + kLabelFile);
}

// Uses the graph's own splits when present, otherwise draws 20 train / 20 val
// nodes per class afresh for every run.
ProbeResult probe_graph(const Matrix& embeddings, const Graph& g, Index runs, std::uint64_t seed) {
  if (!g.splits.empty()) return linear_probe(embeddings, g.labels, g.splits, runs, seed);
  ProbeResult r;
  for (Index run = 0; run < runs; ++run) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(run);
    const auto splits = stratified_split(g.labels, 20, 20, s);
    r.per_run.push_back(linear_probe(embeddings, g.labels, splits, 1, s).accuracy_mean);
  }
  r.runs = runs;
  double m = 0;
  for (double v : r.per_run) m += v / static_cast<double>(runs);
  double var = 0;
  for (double v : r.per_run) var += (v - m) * (v - m) / static_cast<double>(runs);
  r.accuracy_mean = m;
  r.accuracy_std = std::sqrt(var);
  return r;
}

TrainConfig resolve_config(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                           const std::optional<Index>& scales, const std::string& input_mode) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::load(config_path);
  if (seed) cfg.seed = *seed;
  if (scales) cfg.truncate_scales(*scales);
  if (!input_mode.empty()) cfg.set("input_mode", input_mode);
  cfg.validate();
  return cfg;
}

struct VariantOutcome {
  std::string name;
  TrainConfig config;
  TrainResult training;
  ProbeResult probe;
  ClusterResult cluster;
};

VariantOutcome run_variant(const std::string& name, const TrainConfig& cfg, const Graph& g, Index runs, std::uint64_t seed) {
  VariantOutcome v;
  v.name = name;
  v.config = cfg;
  HclModel model = HclModel::create(cfg, g.features.cols());
  const GraphView view(g);
  v.training = train(model, view);
  const Matrix emb = embed(model, view);
  v.probe = probe_graph(emb, g, runs, seed);
  v.cluster = cluster_embeddings(emb, g.labels, class_count(g.labels), runs, seed);
  return v;
}

std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base, const std::string& axis) {
  std::vector<std::pair<std::string, TrainConfig>> out;
  if (axis.empty()) {
    out.emplace_back("base", base);
  } else if (axis == "scales") {
    for (std::size_t len = 1; len <= base.pool_ratios.size(); ++len) {
      TrainConfig c = base;
      c.pool_ratios.resize(len);
      out.emplace_back("scales=" + std::to_string(len + 1), c);
    }
    if (out.empty()) out.emplace_back("scales=1", base);
  } else if (axis == "pooling_gate") {
    TrainConfig on = base, off = base;
    on.pool_gate = true;
    off.pool_gate = false;
    out.emplace_back("gate=on", on);
    out.emplace_back("gate=off", off);
  } else if (axis == "channels") {
    TrainConfig dual = base, single = base;
    dual.channels = 2;
    single.channels = 1;
    single.embed_fusion = EmbedFusion::mix;
    out.emplace_back("channels=2", dual);
    out.emplace_back("channels=1", single);
  } else if (axis == "input_mode") {
    TrainConfig a = base, d = base;
    a.input_mode = InputMode::adjacency;
    d.input_mode = InputMode::diffusion;
    out.emplace_back("input=adjacency", a);
    out.emplace_back("input=diffusion", d);
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "' (scales|pooling_gate|channels|input_mode)");
  }
  return out;
}

// ---- subcommands -------------------------------------------------------------

struct Options {
  // shared
  std::string config, graph, out, input_mode;
  std::optional<std::uint64_t> seed;
  std::optional<Index> scales;
  Index runs = 10;
  // gen-sbm
  SbmParams sbm;
  // embed / probe / cluster
  std::string checkpoint, embeddings;
  Index k = 0;
  // eval-graph
  Index folds = 10;
  // ablate
  std::string axis;
};

int cmd_gen_sbm(const Options& o, std::ostream& out) {
  SbmParams p = o.sbm;
  if (o.seed) p.seed = *o.seed;
  const Graph g = generate_sbm(p);
  save_graph_dir(g, o.out);
  out << "wrote " << g.num_nodes() << "-node graph to " << o.out << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const TrainConfig cfg = resolve_config(o.config, o.seed, o.scales, o.input_mode);
  const Graph g = load_graph_dir(o.graph);
  HclModel model = HclModel::create(cfg, g.features.cols());
  const TrainResult result = train(model, GraphView(g));
  const fs::path dir(o.out);
  fs::create_directories(dir);
  save_checkpoint(model, dir / "checkpoint.bin");
  write_loss_trace(result, dir / "loss_trace.csv");
  {
    std::ofstream cfg_out(dir / "config.cfg");
    cfg_out << cfg.to_text();
  }
  Report report;
  report.section("train");
  report.add("graph", o.graph);
  report.add("graph_hash", graph_hash(o.graph));
  report.add("nodes", std::to_string(g.num_nodes()));
  report.add("epochs_run", std::to_string(result.trace.size()));
  report.add("best_epoch", std::to_string(result.best_epoch));
  report.add("best_loss", result.best_loss);
  report.add("initial_loss", result.trace.empty() ? 0.0 : result.trace.front().total_loss);
  report.add("final_loss", result.trace.empty() ? 0.0 : result.trace.back().total_loss);
  report.add("stopped_early", result.stopped_early ? "true" : "false");
  report.add("seeds", std::to_string(cfg.seed));
  add_config(report, cfg);
  report.write(dir / "train_report.txt");
  out << "trained " << result.trace.size() << " epochs, best loss " << format_real(result.best_loss, 6) << " -> "
      << dir.string() << '\n';
  return kOk;
}

int cmd_embed(const Options& o, std::ostream& out) {
  HclModel model = load_checkpoint(o.checkpoint);
  if (!o.config.empty()) {
    const TrainConfig expected = TrainConfig::load(o.config);
    if (expected.to_text() != model.config.to_text()) {
      throw VersionError("checkpoint " + o.checkpoint + " was trained with a different config than " + o.config);
    }
  }
  const Graph g = load_graph_dir(o.graph);
  const Matrix emb = embed(model, GraphView(g));
  write_embeddings(emb, o.out);
  out << "wrote " << emb.rows() << "x" << emb.cols() << " embeddings to " << o.out << '\n';
  return kOk;
}

int cmd_probe(const Options& o, std::ostream& out) {
  const Graph g = load_graph_dir(o.graph);
  require_labels(g, o.graph);
  const Matrix emb = read_embeddings(o.embeddings);
  if (emb.rows() != g.num_nodes()) throw DataError("embeddings have " + std::to_string(emb.rows()) + " rows, graph has " +
                                                   std::to_string(g.num_nodes()) + " nodes");
  const std::uint64_t seed = o.seed.value_or(0);
  const ProbeResult r = probe_graph(emb, g, o.runs, seed);
  Report report;
  report.section("probe");
  report.add("embeddings", o.embeddings);
  report.add("embeddings_hash", file_hash(o.embeddings));
  report.add("graph_hash", graph_hash(o.graph));
  report.add("accuracy_mean", r.accuracy_mean);
  report.add("accuracy_std", r.accuracy_std);
  report.add("runs", std::to_string(r.runs));
  report.add("seeds", seed_list(seed, o.runs));
  if (!o.out.empty()) report.write(o.out);
  out << "probe accuracy " << format_real(r.accuracy_mean, 4) << " +- " << format_real(r.accuracy_std, 4) << '\n';
  return kOk;
}

int cmd_cluster(const Options& o, std::ostream& out) {
  const Graph g = load_graph_dir(o.graph);
  require_labels(g, o.graph);
  const Matrix emb = read_embeddings(o.embeddings);
  if (emb.rows() != g.num_nodes()) throw DataError("embedding row count differs from node count");
  const std::uint64_t seed = o.seed.value_or(0);
  const Index k = o.k > 0 ? o.k : class_count(g.labels);
  const ClusterResult r = cluster_embeddings(emb, g.labels, k, o.runs, seed);
  Report report;
  report.section("cluster");
  report.add("embeddings_hash", file_hash(o.embeddings));
  report.add("graph_hash", graph_hash(o.graph));
  report.add("k", std::to_string(k));
  report.add("nmi", r.nmi);
  report.add("nmi_std", r.nmi_std);
  report.add("ari", r.ari);
  report.add("ari_std", r.ari_std);
  report.add("runs", std::to_string(r.runs));
  report.add("seeds", seed_list(seed, o.runs));
  if (!o.out.empty()) report.write(o.out);
  out << "NMI " << format_real(r.nmi, 4) << "  ARI " << format_real(r.ari, 4) << '\n';
  return kOk;
}

// A graph set is a directory with `graphs.tsv` (`subdir<TAB>label` per line)
// and one graph directory per entry.
int cmd_eval_graph(const Options& o, std::ostream& out) {
  const TrainConfig cfg = resolve_config(o.config, o.seed, o.scales, o.input_mode);
  const fs::path root(o.graph);
  const fs::path index = root / "graphs.tsv";
  std::ifstream in(index);
  if (!in) throw IoError("missing graph set index " + index.string());
  std::vector<Graph> graphs;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  std::string hashes;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string sub;
    int label = 0;
    if (!(ls >> sub >> label)) throw ParseError(index.string(), lineno, "expected 'subdir<TAB>label'");
    graphs.push_back(load_graph_dir(root / sub));
    labels.push_back(label);
    hashes += graph_hash(root / sub);
  }
  if (graphs.empty()) throw DataError(index.string() + " lists no graphs");
  HclModel model = HclModel::create(cfg, graphs.front().features.cols());
  std::vector<GraphView> views;
  for (const Graph& g : graphs) views.emplace_back(g);
  const TrainResult result = train(model, views);
  std::vector<Matrix> node_embeddings;
  for (const GraphView& v : views) node_embeddings.push_back(embed(model, v));
  const Matrix graph_emb = graph_level_embed(node_embeddings);
  const std::uint64_t seed = cfg.seed;
  const ProbeResult r = graph_classification(graph_emb, labels, o.folds, seed);
  Report report;
  report.section("eval-graph");
  report.add("graphs", std::to_string(graphs.size()));
  report.add("graph_set_hash", content_hash(hashes));
  report.add("epochs_run", std::to_string(result.trace.size()));
  report.add("folds", std::to_string(o.folds));
  report.add("classifier", "stratified k-fold logistic probe");
  report.add("accuracy_mean", r.accuracy_mean);
  report.add("accuracy_std", r.accuracy_std);
  report.add("seeds", std::to_string(seed));
  add_config(report, cfg);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    report.write(fs::path(o.out) / "graph_report.txt");
  }
  out << "graph classification accuracy " << format_real(r.accuracy_mean, 4) << " +- " << format_real(r.accuracy_std, 4)
      << '\n';
  return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const TrainConfig base = resolve_config(o.config, o.seed, o.scales, o.input_mode);
  const Graph g = load_graph_dir(o.graph);
  require_labels(g, o.graph);
  const auto variants = ablation_variants(base, o.axis);
  const std::uint64_t seed = base.seed;

  std::vector<VariantOutcome> results(variants.size());
  const auto workers = static_cast<std::size_t>(std::max<Index>(1, thread_cap()));
  for (std::size_t start = 0; start < variants.size(); start += workers) {
    std::vector<std::future<VariantOutcome>> batch;
    for (std::size_t i = start; i < std::min(variants.size(), start + workers); ++i) {
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, [&, i] {
        return run_variant(variants[i].first, variants[i].second, g, o.runs, seed);
      }));
    }
    for (std::size_t j = 0; j < batch.size(); ++j) results[start + j] = batch[j].get();
  }

  const fs::path dir(o.out);
  fs::create_directories(dir);
  Report report;
  report.section("ablation");
  report.add("axis", o.axis.empty() ? "none" : o.axis);
  report.add("graph", o.graph);
  report.add("graph_hash", graph_hash(o.graph));
  report.add("runs", std::to_string(o.runs));
  report.add("seeds", seed_list(seed, o.runs));
  std::ostringstream table;
  table << "variant\tfinal_loss\tprobe_mean\tprobe_std\tnmi\tari\n";
  for (const VariantOutcome& v : results) {
    table << v.name << '\t' << format_real(v.training.trace.empty() ? 0.0 : v.training.trace.back().total_loss, 6) << '\t'
          << format_real(v.probe.accuracy_mean, 6) << '\t' << format_real(v.probe.accuracy_std, 6) << '\t'
          << format_real(v.cluster.nmi, 6) << '\t' << format_real(v.cluster.ari, 6) << '\n';
    std::string safe = v.name;
    std::replace(safe.begin(), safe.end(), '=', '_');
    fs::create_directories(dir / safe);
    write_loss_trace(v.training, dir / safe / "loss_trace.csv");
  }
  report.add_block("table", table.str());
  for (const VariantOutcome& v : results) {
    report.section("variant " + v.name);
    report.add("config_hash", content_hash(v.config.to_text()));
    report.add("probe_accuracy_mean", v.probe.accuracy_mean);
    report.add("probe_accuracy_std", v.probe.accuracy_std);
    report.add("nmi", v.cluster.nmi);
    report.add("ari", v.cluster.ari);
    report.add("epochs_run", std::to_string(v.training.trace.size()));
  }
  add_config(report, base);
  report.write(dir / "ablation_report.txt");
  out << table.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical contrastive graph representation learning"};
  app.require_subcommand(1);
  Options o;

  const auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Seed for all randomness"); };
  const auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    c->add_option("--scales", o.scales, "Number of scales incl. the full graph (1 = no pooling)");
    c->add_option("--input-mode", o.input_mode, "adjacency|diffusion")->check(CLI::IsMember({"adjacency", "diffusion"}));
    add_seed(c);
  };

  auto* gen = app.add_subcommand("gen-sbm", "Write a stochastic-block-model graph directory");
  gen->add_option("--blocks", o.sbm.blocks)->default_val(3);
  gen->add_option("--nodes-per-block", o.sbm.nodes_per_block)->default_val(100);
  gen->add_option("--p-in", o.sbm.p_in)->default_val(0.1);
  gen->add_option("--p-out", o.sbm.p_out)->default_val(0.01);
  gen->add_option("--noise", o.sbm.feature_noise)->default_val(1.0);
  gen->add_option("--out", o.out, "Output graph directory")->required();
  add_seed(gen);

  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint, loss trace and report");
  tr->add_option("--graph", o.graph, "Graph directory")->required();
  tr->add_option("--out", o.out, "Run directory")->required();
  add_model_flags(tr);

  auto* em = app.add_subcommand("embed", "Export node embeddings from a checkpoint");
  em->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  em->add_option("--config", o.config, "Expected config; must match the checkpoint")->check(CLI::ExistingFile);
  em->add_option("--graph", o.graph)->required();
  em->add_option("--out", o.out, "Embedding file")->required();
  add_seed(em);

  auto* pr = app.add_subcommand("probe", "Linear-probe node classification on exported embeddings");
  pr->add_option("--embeddings", o.embeddings)->required();
  pr->add_option("--graph", o.graph)->required();
  pr->add_option("--runs", o.runs)->default_val(10);
  pr->add_option("--out", o.out, "Report file");
  add_seed(pr);

  auto* cl = app.add_subcommand("cluster", "k-means NMI / ARI on exported embeddings");
  cl->add_option("--embeddings", o.embeddings)->required();
  cl->add_option("--graph", o.graph)->required();
  cl->add_option("--runs", o.runs)->default_val(10);
  cl->add_option("--k", o.k, "Clusters (default: number of classes)");
  cl->add_option("--out", o.out, "Report file");
  add_seed(cl);

  auto* eg = app.add_subcommand("eval-graph", "Graph classification from averaged node embeddings");
  eg->add_option("--graph", o.graph, "Graph set directory containing graphs.tsv")->required();
  eg->add_option("--out", o.out, "Report directory");
  eg->add_option("--folds", o.folds)->default_val(10);
  add_model_flags(eg);

  auto* ab = app.add_subcommand("ablate", "Train and evaluate config variants along one axis");
  ab->add_option("--graph", o.graph)->required();
  ab->add_option("--out", o.out, "Report directory")->required();
  ab->add_option("--axis", o.axis)->check(CLI::IsMember({"scales", "pooling_gate", "channels", "input_mode"}));
  ab->add_option("--runs", o.runs)->default_val(10);
  add_model_flags(ab);

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kUsage;
  }

  try {
    if (const char* env = std::getenv("HCL_THREADS")) {
      (void)env;
      Eigen::setNbThreads(static_cast<int>(thread_cap()));
    }
    if (gen->parsed()) return cmd_gen_sbm(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (em->parsed()) return cmd_embed(o, out);
    if (pr->parsed()) return cmd_probe(o, out);
    if (cl->parsed()) return cmd_cluster(o, out);
    if (eg->parsed()) return cmd_eval_graph(o, out);
    if (ab->parsed()) return cmd_ablate(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace hcl::cli
