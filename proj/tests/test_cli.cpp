#include "hcl/cli.hpp"
#include "hcl/graph.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hcl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "hcl_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "small.cfg") << "hidden_dim = 8\nheads = 2\ngcnii_layers = 1\npool_ratios = 0.8,0.6\n"
                                      "max_epochs = 5\nlr = 0.01\n";
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (root() / name).string(); }

void ensure_sbm() {
  if (fs::exists(root() / "sbm" / kEdgeFile)) return;
  REQUIRE(run({"gen-sbm", "--nodes-per-block", "20", "--p-in", "0.3", "--p-out", "0.02", "--seed", "2", "--out", path("sbm")}).code == 0);
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kUsage);
  const Outcome o = run({"train", "--bogus"});
  CHECK(o.code == cli::kUsage);
  CHECK(o.err.find("Usage") != std::string::npos);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("gen-sbm writes a loadable graph") {
  ensure_sbm();
  const Graph g = load_graph_dir(root() / "sbm");
  CHECK(g.num_nodes() == 60);
  CHECK(run({"gen-sbm", "--p-in", "0.01", "--p-out", "0.5", "--out", path("bad_sbm")}).code == cli::kDataError);
}

TEST_CASE("train, embed, probe, cluster") {
  ensure_sbm();
  const Outcome t = run({"train", "--config", path("small.cfg"), "--graph", path("sbm"), "--out", path("run"), "--seed", "1"});
  INFO(t.err);
  REQUIRE(t.code == 0);
  for (const char* f : {"checkpoint.bin", "loss_trace.csv", "config.cfg", "train_report.txt"}) CHECK(fs::exists(root() / "run" / f));
  const std::string report = slurp(root() / "run" / "train_report.txt");
  CHECK(report.find("config_hash = ") != std::string::npos);
  CHECK(report.find("graph_hash = ") != std::string::npos);
  CHECK(report.find("seed = 1") != std::string::npos);

  REQUIRE(run({"train", "--config", path("small.cfg"), "--graph", path("sbm"), "--out", path("run2"), "--seed", "1"}).code == 0);
  CHECK(slurp(root() / "run" / "checkpoint.bin") == slurp(root() / "run2" / "checkpoint.bin"));
  CHECK(report == slurp(root() / "run2" / "train_report.txt"));

  REQUIRE(run({"embed", "--checkpoint", path("run/checkpoint.bin"), "--graph", path("sbm"), "--out", path("e1.txt")}).code == 0);
  REQUIRE(run({"embed", "--checkpoint", path("run2/checkpoint.bin"), "--config", path("run/config.cfg"), "--graph",
               path("sbm"), "--out", path("e2.txt")}).code == 0);
  CHECK(slurp(root() / "e1.txt") == slurp(root() / "e2.txt"));
  CHECK(run({"embed", "--checkpoint", path("run/checkpoint.bin"), "--config", path("small.cfg"), "--graph", path("sbm"),
             "--out", path("e3.txt")}).code == cli::kDataError);

  const Outcome p = run({"probe", "--embeddings", path("e1.txt"), "--graph", path("sbm"), "--runs", "2", "--out", path("probe.txt")});
  CHECK(p.code == 0);
  CHECK(slurp(root() / "probe.txt").find("accuracy_mean = ") != std::string::npos);
  const Outcome c = run({"cluster", "--embeddings", path("e1.txt"), "--graph", path("sbm"), "--runs", "2", "--out", path("cluster.txt")});
  CHECK(c.code == 0);
  CHECK(slurp(root() / "cluster.txt").find("nmi = ") != std::string::npos);
}

TEST_CASE("data and config errors map to exit codes") {
  ensure_sbm();
  fs::create_directories(root() / "empty");
  CHECK(run({"train", "--graph", path("empty"), "--out", path("x")}).code == cli::kDataError);
  std::ofstream(root() / "typo.cfg") << "hidden_dimm = 8\n";
  CHECK(run({"train", "--config", path("typo.cfg"), "--graph", path("sbm"), "--out", path("x")}).code == cli::kUsage);
  CHECK(run({"train", "--config", path("small.cfg"), "--scales", "9", "--graph", path("sbm"), "--out", path("x")}).code ==
        cli::kUsage);
  std::ofstream(root() / "bad.ckpt") << "garbage";
  CHECK(run({"embed", "--checkpoint", path("bad.ckpt"), "--graph", path("sbm"), "--out", path("x.txt")}).code == cli::kDataError);
}

TEST_CASE("overflowing features exit 3") {
  const fs::path dir = root() / "huge";
  fs::create_directories(dir);
  std::ofstream(dir / kEdgeFile) << "0\t1\n1\t2\n2\t3\n";
  std::ofstream(dir / kFeatureFile) << "1e308 1e308\n-1e308 1e308\n1e308 -1e308\n1e308 1e308\n";
  const Outcome o = run({"train", "--config", path("small.cfg"), "--graph", dir.string(), "--out", path("huge_run")});
  CHECK(o.code == cli::kNumericalFailure);
  CHECK(o.err.find("non-finite") != std::string::npos);
}

TEST_CASE("eval-graph on a graph set") {
  const fs::path set = root() / "set";
  fs::create_directories(set);
  std::ofstream index(set / "graphs.tsv");
  for (int i = 0; i < 10; ++i) {
    SbmParams p;
    p.blocks = 2;
    p.nodes_per_block = 6;
    p.p_in = i % 2 ? 0.9 : 0.3;
    p.p_out = i % 2 ? 0.05 : 0.2;
    p.seed = static_cast<std::uint64_t>(i);
    const std::string name = "g" + std::to_string(i);
    save_graph_dir(generate_sbm(p), set / name);
    index << name << '\t' << (i % 2) << '\n';
  }
  index.close();
  const Outcome o = run({"eval-graph", "--config", path("small.cfg"), "--graph", set.string(), "--folds", "2", "--out", path("ge")});
  INFO(o.err);
  CHECK(o.code == 0);
  CHECK(slurp(root() / "ge" / "graph_report.txt").find("accuracy_mean") != std::string::npos);
}

TEST_CASE("ablate writes a deterministic report") {
  ensure_sbm();
  const auto args = [](const std::string& out) {
    return std::vector<std::string>{"ablate", "--axis", "channels", "--config", path("small.cfg"), "--graph", path("sbm"),
                                    "--runs", "2", "--out", path(out)};
  };
  const Outcome a = run(args("abl1"));
  INFO(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(run(args("abl2")).code == 0);
  const std::string report = slurp(root() / "abl1" / "ablation_report.txt");
  CHECK(report == slurp(root() / "abl2" / "ablation_report.txt"));
  CHECK(report.find("channels=1") != std::string::npos);
  CHECK(fs::exists(root() / "abl1" / "channels_2" / "loss_trace.csv"));
  CHECK(run({"ablate", "--axis", "nonsense", "--graph", path("sbm"), "--out", path("abl3")}).code == cli::kUsage);
}
