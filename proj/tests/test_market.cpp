#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "dynorg/dynstruct.hpp"
#include "dynorg/market.hpp"
#include "dynorg/rng.hpp"

using namespace dynorg;
using namespace dynorg::market;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<double> random_dist(SplitMix64& rng, std::size_t n) {
  std::vector<double> d(n);
  double sum = 0.0;
  for (double& x : d) {
    x = -std::log(rng.uniform());
    sum += x;
  }
  for (double& x : d) x /= sum;
  return d;
}

double rel_gap(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

void expect_reject(const std::string& text, const std::string& needle) {
  try {
    (void)Scenario::from_json(text);
    FAIL_CHECK("expected rejection containing \"" << needle << "\"");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK_MESSAGE(msg.find(needle) != std::string::npos,
                  "message \"" << msg << "\" lacks \"" << needle << "\"");
  }
}

}  // namespace

TEST_CASE("aggregation, posteriors, and trust composition match hand calculations") {
  const TrustDist mu{0.5, 0.5};
  const std::vector<Guess> gs{{0.9, 0.1}, {0.3, 0.7}};

  const Guess agg = aggregate(mu, gs);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(agg[1] == doctest::Approx(0.4).epsilon(1e-12));

  // Outcome 0: weighted likelihoods (0.45, 0.15) renormalize to (0.75, 0.25).
  const TrustDist post = bayes_update(mu, gs, 0);
  CHECK(post[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(0.25).epsilon(1e-12));

  const TrustDist flat = trust_compose({0.5, 0.5}, {{0.3, 0.7}, {1.0}});
  REQUIRE(flat.size() == 3);
  CHECK(flat[0] == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(flat[1] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(flat[2] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("dirichlet jitter is deterministic per seed and tightens with concentration") {
  const Guess mean{0.6, 0.3, 0.1};
  CHECK(dirichlet_jitter(mean, 0.0, 42) == mean);

  const Guess a = dirichlet_jitter(mean, 25.0, 42);
  const Guess b = dirichlet_jitter(mean, 25.0, 42);
  CHECK(a == b);
  CHECK(dirichlet_jitter(mean, 25.0, 43) != a);

  double sum = 0.0;
  for (double x : a) {
    CHECK(x > 0.0);
    sum += x;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const Guess tight = dirichlet_jitter(mean, 1e7, 42);
  for (std::size_t i = 0; i < mean.size(); ++i)
    CHECK(std::abs(tight[i] - mean[i]) < 5e-3);
}

TEST_CASE("two-level trust updates commute with flattening the hierarchy") {
  SplitMix64 rng{2026};
  double worst_trust = 0.0;
  double worst_guess = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t k = std::vector<std::size_t>{2, 3, 5}[rng.index(3)];
    const std::size_t n = 1 + rng.index(3);
    const TrustDist mu = random_dist(rng, n);
    std::vector<TrustDist> nus(n);
    std::vector<std::vector<Guess>> gs(n);
    std::vector<Guess> flat_guesses;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = 1 + rng.index(3);
      nus[i] = random_dist(rng, m);
      for (std::size_t j = 0; j < m; ++j) {
        gs[i].push_back(random_dist(rng, k));
        flat_guesses.push_back(gs[i].back());
      }
    }
    const std::size_t x = rng.index(k);

    // One flat update versus updating both levels and recombining.
    const TrustDist flat_before = trust_compose(mu, nus);
    const TrustDist lhs = bayes_update(flat_before, flat_guesses, x);

    std::vector<Guess> mids(n);
    std::vector<TrustDist> nus_after(n);
    for (std::size_t i = 0; i < n; ++i) {
      mids[i] = aggregate(nus[i], gs[i]);
      nus_after[i] = bayes_update(nus[i], gs[i], x);
    }
    const TrustDist rhs = trust_compose(bayes_update(mu, mids, x), nus_after);
    worst_trust = std::max(worst_trust, rel_gap(lhs, rhs));

    // The aggregated prediction is likewise independent of the bracketing.
    worst_guess = std::max(
        worst_guess, rel_gap(aggregate(flat_before, flat_guesses), aggregate(mu, mids)));
  }
  CHECK(worst_trust < 1e-12);
  CHECK(worst_guess < 1e-12);
}

TEST_CASE("posterior updates preserve normalization and positivity") {
  SplitMix64 rng{7};
  for (int iter = 0; iter < 10000; ++iter) {
    const std::size_t k = 2 + rng.index(4);
    const std::size_t n = 1 + rng.index(4);
    const TrustDist mu = random_dist(rng, n);
    std::vector<Guess> gs(n);
    for (auto& g : gs) g = random_dist(rng, k);
    const std::size_t x = rng.index(k);

    const TrustDist post = bayes_update(mu, gs, x);
    const Guess agg = aggregate(mu, gs);
    double psum = 0.0;
    double asum = 0.0;
    for (double v : post) {
      REQUIRE(v > 0.0);
      psum += v;
    }
    for (double v : agg) {
      REQUIRE(v > 0.0);
      asum += v;
    }
    REQUIRE(std::abs(psum - 1.0) < 1e-12);
    REQUIRE(std::abs(asum - 1.0) < 1e-12);
  }
}

TEST_CASE("prediction markets satisfy the operad laws") {
  OperadLawConfig cfg;
  cfg.samples = 300;
  cfg.seed = 11;
  cfg.tol = 1e-12;
  const LawReport rep = check_operad_laws(market_operad(2), cfg);
  CHECK(rep.passed());
}

TEST_CASE("squaring likelihoods breaks exactly the substitution morphism law") {
  OperadLawConfig cfg;
  cfg.samples = 300;
  cfg.seed = 11;
  const LawReport rep =
      check_operad_laws(market_operad(3, Corruption::bayes_exponent), cfg);
  CHECK(!rep.passed());
  for (const auto& law : rep.laws) {
    if (law.law == "substitution is a machine morphism") {
      CHECK(!law.passed());
      CHECK(!law.failures.empty());
    } else {
      CHECK_MESSAGE(law.passed(), "unexpected failure in: " << law.law);
    }
  }
}

TEST_CASE("trust converges to the best-calibrated advisor") {
  const Scenario sc =
      Scenario::from_json(slurp(std::string(DYNORG_SOURCE_DIR) + "/data/three_agents.json"));
  REQUIRE(sc.rounds == 200);
  const Trajectory tr = simulate(sc);
  REQUIRE(tr.flat_trust.size() == 200);
  for (const auto& w : tr.flat_trust) {
    REQUIRE(w.size() == 3);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  // Agent 0 predicts the true distribution exactly; it should win the market.
  CHECK(tr.flat_trust.back()[0] > 0.99);
  for (std::size_t x : tr.outcome) CHECK(x < 2);
}

TEST_CASE("nested markets and their flattened form produce identical trajectories") {
  const std::string nested = R"({
    "outcomes": 2,
    "true_dist": [0.7, 0.3],
    "rounds": 100,
    "seed": 9,
    "tree": {
      "trust": [0.6, 0.4],
      "children": [
        {
          "trust": [0.5, 0.5],
          "children": [
            {"agent": {"kind": "fixed", "probs": [0.8, 0.2]}},
            {"agent": {"kind": "dirichlet", "probs": [0.5, 0.5], "jitter": 50.0}}
          ]
        },
        {"agent": {"kind": "dirichlet", "probs": [0.3, 0.7], "jitter": 20.0}}
      ]
    }
  })";
  const Scenario sc = Scenario::from_json(nested);
  const Scenario flat = flatten(sc);
  REQUIRE(flat.tree.children.size() == 3);
  REQUIRE(flat.tree.trust.size() == 3);
  CHECK(flat.tree.trust[0] == doctest::Approx(0.3).epsilon(1e-12));

  const Trajectory a = simulate(sc);
  const Trajectory b = simulate(flat);
  REQUIRE(a.root_guess.size() == 100);
  REQUIRE(b.root_guess.size() == 100);
  CHECK(a.outcome == b.outcome);
  double worst = 0.0;
  for (std::size_t r = 0; r < 100; ++r) {
    worst = std::max(worst, rel_gap(a.root_guess[r], b.root_guess[r]));
    worst = std::max(worst, rel_gap(a.flat_trust[r], b.flat_trust[r]));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("malformed scenarios are rejected with precise messages") {
  expect_reject("not json", "invalid JSON");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1})", "required");
  expect_reject(R"({"outcomes": 1, "true_dist": [1.0], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [1.0]}}})",
                "at least two outcomes");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5, 0.0], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [0.5, 0.5]}}})",
                "one probability per outcome");

  // Trust entries must be positive and sum to one.
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"trust": [0.5, 0.4],
                             "children": [
                               {"agent": {"kind": "fixed", "probs": [0.5, 0.5]}},
                               {"agent": {"kind": "fixed", "probs": [0.5, 0.5]}}]}})",
                "sum");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"trust": [1.5, -0.5],
                             "children": [
                               {"agent": {"kind": "fixed", "probs": [0.5, 0.5]}},
                               {"agent": {"kind": "fixed", "probs": [0.5, 0.5]}}]}})",
                "must be positive");

  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [1.2, -0.2]}}})",
                "finite and >= 0");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [0.5, 0.5, 0.0]}}})",
                "one probability per outcome");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "dirichlet", "probs": [0.5, 0.5]}}})",
                "jitter > 0");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [0.5, 0.5],
                                       "jitter": 3.0}}})",
                "do not take jitter");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "oracle", "probs": [0.5, 0.5]}}})",
                "kind");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"agent": {"kind": "fixed", "probs": [0.5, 0.5]},
                             "trust": [1.0],
                             "children": [{"agent": {"kind": "fixed",
                                                     "probs": [0.5, 0.5]}}]}})",
                "not both");
  expect_reject(R"({"outcomes": 2, "true_dist": [0.5, 0.5], "rounds": 1,
                    "tree": {"trust": [0.5, 0.5],
                             "children": [{"agent": {"kind": "fixed",
                                                     "probs": [0.5, 0.5]}}]}})",
                "one entry per child");
}

TEST_CASE("trajectories serialize as long-format CSV") {
  const std::string text = R"({
    "outcomes": 2,
    "true_dist": [0.5, 0.5],
    "rounds": 2,
    "seed": 3,
    "tree": {
      "trust": [0.5, 0.5],
      "children": [
        {"agent": {"kind": "fixed", "probs": [0.9, 0.1]}},
        {"agent": {"kind": "fixed", "probs": [0.2, 0.8]}}
      ]
    }
  })";
  const Scenario sc = Scenario::from_json(text);
  const Trajectory tr = simulate(sc);
  const std::string csv = tr.to_csv();
  CHECK(csv.rfind("round,node_path,kind,values\n", 0) == 0);
  CHECK(csv.find("0,root,guess,") != std::string::npos);
  CHECK(csv.find("0,root/0,guess,0.9,0.1") != std::string::npos);
  CHECK(csv.find("0,root,outcome,") != std::string::npos);
  CHECK(csv.find("0,root,trust,") != std::string::npos);

  std::size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 1 + tr.records.size());
  // Per round: three guess rows, one outcome row, one trust row.
  CHECK(tr.records.size() == 2 * 5);

  CHECK(simulate(sc).to_csv() == csv);
}
