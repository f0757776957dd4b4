#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dynorg/cli.hpp"
#include "json.hpp"

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  RunResult r;
  r.code = dynorg::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string data_path(const std::string& name) {
  return std::string(DYNORG_SOURCE_DIR) + "/data/" + name;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dynorg_cli_" + name)).string();
}

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = temp_path(name);
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("market simulations print deterministic trajectory CSV") {
  unsetenv("DYNORG_LOG");
  const RunResult a = run({"market", "--in", data_path("three_agents.json")});
  CHECK(a.code == 0);
  CHECK(a.err.empty());
  CHECK(a.out.rfind("round,node_path,kind,values\n", 0) == 0);
  CHECK(a.out.find("199,root,trust,") != std::string::npos);

  const RunResult b = run({"market", "--in", data_path("three_agents.json")});
  CHECK(a.out == b.out);
}

TEST_CASE("a zero-round market emits only the CSV header") {
  const RunResult r =
      run({"market", "--in", data_path("three_agents.json"), "--rounds", "0"});
  CHECK(r.code == 0);
  CHECK(r.out == "round,node_path,kind,values\n");
}

TEST_CASE("market rejects trust vectors that do not sum to one") {
  const std::string path = write_temp("bad_trust.json", R"({
    "outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
    "tree": {"trust": [0.5, 0.4],
             "children": [
               {"agent": {"kind": "fixed", "probs": [0.9, 0.1]}},
               {"agent": {"kind": "fixed", "probs": [0.2, 0.8]}}]}})");
  const RunResult r = run({"market", "--in", path});
  CHECK(r.code == 2);
  CHECK(r.out.empty());
  CHECK(r.err.find("error") != std::string::npos);
  CHECK(r.err.find("sum") != std::string::npos);
}

TEST_CASE("market reports a missing input file on stream two") {
  const RunResult r = run({"market", "--in", temp_path("does_not_exist.json")});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("law suites report passing structures as JSON") {
  const RunResult r =
      run({"laws", "--suite", "pro-gd", "--samples", "25", "--seed", "5"});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("passed").get<bool>());
  CHECK(j.at("laws").is_array());

  const RunResult again =
      run({"laws", "--suite", "pro-gd", "--samples", "25", "--seed", "5"});
  CHECK(again.out == r.out);
}

TEST_CASE("a corrupted market fails its law suite with exit code one") {
  const RunResult r = run({"laws", "--suite", "operad-market", "--corrupt", "bayes",
                           "--samples", "100"});
  CHECK(r.code == 1);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(!j.at("passed").get<bool>());
  bool some_failure = false;
  for (const auto& law : j.at("laws"))
    some_failure = some_failure || !law.at("failures").empty();
  CHECK(some_failure);
}

TEST_CASE("mismatched corruptions and unknown suites are usage errors") {
  CHECK(run({"laws", "--suite", "pro-gd", "--corrupt", "bayes"}).code == 2);
  CHECK(run({"laws", "--suite", "category-gd", "--corrupt", "vjp"}).code == 2);
  const RunResult r = run({"laws", "--suite", "nonsense"});
  CHECK(r.code == 2);
  CHECK(r.err.find("operad-market") != std::string::npos);  // lists the catalog
  CHECK(run({"market", "--in", data_path("three_agents.json"), "--corrupt", "vjp"}).code ==
        2);
}

TEST_CASE("every law suite passes uncorrupted at a small budget") {
  for (const std::string suite :
       {"operad-market", "pro-gd", "category-gd", "morphism-gd", "terminal-market",
        "terminal-gd"}) {
    const RunResult r = run({"laws", "--suite", suite, "--samples", "10"});
    CHECK_MESSAGE(r.code == 0, suite << ": " << r.err);
  }
}

TEST_CASE("gd training writes the history CSV and the final state JSON") {
  const std::string csv_path = temp_path("train.csv");
  const std::string state_path = temp_path("train_state.json");
  const RunResult r = run({"gd", "--in", data_path("linear_regression.json"), "--out",
                           csv_path, "--state-out", state_path});
  CHECK(r.code == 0);
  CHECK(r.out.empty());

  const std::string csv = slurp(csv_path);
  CHECK(csv.rfind("step,loss,param_norm\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 502);

  const auto j = nlohmann::json::parse(slurp(state_path));
  CHECK(j.at("mode").get<std::string>() == "both");
  CHECK(j.at("steps").get<std::size_t>() == 500);
  REQUIRE(j.at("params_composed").size() == 1);
  CHECK(std::abs(j.at("params_composed")[0].get<double>() - 3.0) < 1e-3);
  CHECK(j.at("max_divergence").get<double>() < 1e-9);
  CHECK(j.at("layout").is_array());
}

TEST_CASE("gd accepts a stepwise-only reading") {
  const RunResult r = run({"gd", "--in", data_path("linear_regression.json"), "--mode",
                           "stepwise", "--steps", "10"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("step,loss,param_norm\n", 0) == 0);
  CHECK(r.out.find("params_stepwise") != std::string::npos);
}

TEST_CASE("flag validation failures exit with code two") {
  CHECK(run({"gd", "--in", data_path("linear_regression.json"), "--eps", "0"}).code == 2);
  CHECK(run({"gd", "--in", data_path("linear_regression.json"), "--mode", "sideways"})
            .code == 2);
  CHECK(run({"gd"}).code == 2);                                   // --in is required
  CHECK(run({"market", "--in", data_path("three_agents.json"), "--seed", "0"}).code == 2);
  CHECK(run({}).code == 2);                                       // a subcommand is required
  CHECK(run({"conquer"}).code == 2);
}

TEST_CASE("help is available and exits cleanly") {
  const RunResult r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("market") != std::string::npos);
  CHECK(r.out.find("laws") != std::string::npos);
}

TEST_CASE("DYNORG_LOG routes progress notes to the diagnostic stream") {
  setenv("DYNORG_LOG", "1", 1);
  const RunResult r = run({"market", "--in", data_path("three_agents.json")});
  unsetenv("DYNORG_LOG");
  CHECK(r.code == 0);
  CHECK(r.err.find("[dynorg]") != std::string::npos);
  CHECK(r.out.rfind("round,node_path,kind,values\n", 0) == 0);
}
