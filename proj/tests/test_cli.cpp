#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "psys/artifact.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace psys;

namespace {

// Runs partsys with `args` in `dir`; returns its exit status.
int partsys(const fs::path& dir, const std::string& args, const std::string& stdout_file = "/dev/null") {
  const std::string cmd = "cd '" + dir.string() + "' && '" PARTSYS_BINARY "' " + args + " -q > '" + stdout_file +
                          "' 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name) : path(fs::temp_directory_path() / ("partsys-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
};

const std::string kFigureOne = "--data f1/data.csv --schema f1/schema.json";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("train reproduces the figure one minimal system") {
    Workdir w("train");
    REQUIRE(partsys(w.path, "synth --task figure1 --out f1") == 0);
    REQUIRE(partsys(w.path, "train " + kFigureOne +
                                " --kind minimal --kind flat --model-class fixed_rule --fixed-models f1/models.json"
                                " --shared-assign-prune --out sys",
                    "summary.tsv") == 0);
    const auto sys = load_system((w.path / "sys" / "minimal.json").string());
    CHECK(sys.tree.num_surviving() == 3);
    CHECK(fs::exists(w.path / "sys" / "flat.json"));
    CHECK(fs::exists(w.path / "sys" / "build_log.json"));
    const auto summary = slurp(w.path / "summary.tsv");
    CHECK(summary.find("minimal\tyes\t2\t0.5\t0.0\t0.5") != std::string::npos);

    // A second run writes identical artifacts.
    REQUIRE(partsys(w.path, "train " + kFigureOne +
                                " --kind minimal --model-class fixed_rule --fixed-models f1/models.json"
                                " --shared-assign-prune --out again") == 0);
    CHECK(slurp(w.path / "sys" / "minimal.json") == slurp(w.path / "again" / "minimal.json"));
    CHECK(slurp(w.path / "sys" / "build_log.json").size() > 0);

    REQUIRE(partsys(w.path, "evaluate " + kFigureOne + " --model sys/minimal.json --out ev") == 0);
    CHECK(fs::exists(w.path / "ev" / "evaluation.json"));
    CHECK(slurp(w.path / "ev" / "summary.csv").rfind("name,", 0) == 0);
  }

  TEST_CASE("exit codes") {
    Workdir w("codes");
    REQUIRE(partsys(w.path, "synth --task figure1 --out f1") == 0);
    REQUIRE(partsys(w.path, "synth --task random --k 3 --n 300 --seed 4 --out other") == 0);
    CHECK(partsys(w.path, "train --data f1/data.csv --schema missing.json") == 2);
    CHECK(partsys(w.path, "train " + kFigureOne + " --alpha 2") == 2);
    CHECK(partsys(w.path, "frobnicate") == 2);
    CHECK(partsys(w.path, "train " + kFigureOne + " --metric mse") == 2);
    REQUIRE(partsys(w.path, "train " + kFigureOne +
                                " --kind minimal --model-class fixed_rule --fixed-models f1/models.json"
                                " --shared-assign-prune --out sys") == 0);
    // Artifact and data disagree on the reporting schema.
    CHECK(partsys(w.path, "evaluate --data other/data.csv --schema other/schema.json --model sys/minimal.json") == 3);
    std::ofstream(w.path / "bad.json") << "{\"format_version\": 99}";
    CHECK(partsys(w.path, "serve --model bad.json") == 3);
    CHECK(partsys(w.path, "simulate --model bad.json " + kFigureOne) == 3);
  }

  TEST_CASE("serve reports a busy port") {
    Workdir w("serve");
    REQUIRE(partsys(w.path, "synth --task figure1 --out f1") == 0);
    REQUIRE(partsys(w.path, "train " + kFigureOne +
                                " --kind minimal --model-class fixed_rule --fixed-models f1/models.json"
                                " --shared-assign-prune --out sys") == 0);
    httplib::Server blocker;
    const int port = blocker.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    CHECK(partsys(w.path, "serve --model sys/minimal.json --host 127.0.0.1 --port " + std::to_string(port)) == 5);
  }

  TEST_CASE("enumerate counts trees") {
    Workdir w("enumerate");
    REQUIRE(partsys(w.path, "synth --task figure1 --out f1") == 0);
    REQUIRE(partsys(w.path, "enumerate " + kFigureOne + " --count-only --min-samples 1 --allow-single-class",
                    "count.txt") == 0);
    CHECK(slurp(w.path / "count.txt") == "2\n");
    REQUIRE(partsys(w.path, "enumerate " + kFigureOne + " --count-only", "strict.txt") == 0);
    CHECK(slurp(w.path / "strict.txt") == "0\n");
    REQUIRE(partsys(w.path, "enumerate " + kFigureOne + " --min-samples 1 --allow-single-class", "trees.jsonl") == 0);
    std::ifstream in(w.path / "trees.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) {
      const Json tree = Json::parse(line);
      CHECK(tree.size() == 7);
      ++lines;
    }
    CHECK(lines == 2);
  }

  TEST_CASE("simulate is repeatable") {
    Workdir w("simulate");
    REQUIRE(partsys(w.path, "synth --task figure1 --out f1") == 0);
    REQUIRE(partsys(w.path, "train " + kFigureOne +
                                " --kind minimal --model-class fixed_rule --fixed-models f1/models.json"
                                " --shared-assign-prune --out sys") == 0);
    const std::string sim = "simulate --model sys/minimal.json " + kFigureOne + " --jitter 0.5 --seed 9";
    REQUIRE(partsys(w.path, sim + " --out a.csv") == 0);
    REQUIRE(partsys(w.path, sim + " --out b.csv") == 0);
    const auto a = slurp(w.path / "a.csv");
    CHECK(a == slurp(w.path / "b.csv"));
    CHECK(a.rfind("group,cost,n,opt_in_rate,risk\n", 0) == 0);
    CHECK(a.find("all,inf,101,0.0,") != std::string::npos);
  }
}
