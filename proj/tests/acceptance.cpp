// Acceptance gate: exercises every top-level guarantee of the library in one
// binary. Each criterion prints exactly one PASS/FAIL line; the process exits
// nonzero if any criterion fails. All tolerances are pinned here.
#include <cmath>
#include <cstddef>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dynorg/coalg.hpp"
#include "dynorg/dynstruct.hpp"
#include "dynorg/graddesc.hpp"
#include "dynorg/market.hpp"
#include "dynorg/rng.hpp"
#include "test_util.hpp"

using namespace dynorg;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string data_path(const std::string& name) {
  return std::string(DYNORG_SOURCE_DIR) + "/data/" + name;
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

bool run_criterion(int n, const std::string& what, const std::function<bool()>& body) {
  bool ok = false;
  std::string note;
  try {
    ok = body();
  } catch (const std::exception& e) {
    note = e.what();
  }
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << what;
  if (!ok && !note.empty()) std::cout << " (exception: " << note << ")";
  std::cout << std::endl;
  return ok;
}

// 1. Market machines form a lawful operad for several outcome counts.
bool market_operad_laws() {
  for (std::size_t outcomes : {2u, 3u, 5u}) {
    OperadLawConfig cfg;
    cfg.samples = 1000;
    cfg.seed = 1200 + outcomes;
    cfg.tol = 1e-12;
    cfg.max_total_arity = 4;
    if (!check_operad_laws(market::market_operad(outcomes), cfg).passed()) return false;
  }
  return true;
}

// 2. Updating trust on the flattened market equals updating both levels.
bool trust_update_identity() {
  using market::aggregate;
  using market::bayes_update;
  using market::trust_compose;
  using market::Guess;
  using market::TrustDist;
  SplitMix64 rng{8086};
  double worst = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t k = std::vector<std::size_t>{2, 3, 5}[rng.index(3)];
    const std::size_t n = 1 + rng.index(3);
    const TrustDist mu = random_dist(rng, n);
    std::vector<TrustDist> nus(n);
    std::vector<std::vector<Guess>> gs(n);
    std::vector<Guess> flat;
    for (std::size_t i = 0; i < n; ++i) {
      nus[i] = random_dist(rng, 1 + rng.index(3));
      for (std::size_t j = 0; j < nus[i].size(); ++j) {
        gs[i].push_back(random_dist(rng, k));
        flat.push_back(gs[i].back());
      }
    }
    const std::size_t x = rng.index(k);
    const TrustDist lhs = bayes_update(trust_compose(mu, nus), flat, x);
    std::vector<Guess> mids(n);
    std::vector<TrustDist> nus_after(n);
    for (std::size_t i = 0; i < n; ++i) {
      mids[i] = aggregate(nus[i], gs[i]);
      nus_after[i] = bayes_update(nus[i], gs[i], x);
    }
    const TrustDist rhs = trust_compose(bayes_update(mu, mids, x), nus_after);
    worst = std::max(worst, rel_gap(lhs, rhs));
  }
  return worst < 1e-12;
}

// 3. Gradient-descent learners form a lawful PRO.
bool gd_pro_laws() {
  PROLawConfig cfg;
  cfg.samples = 500;
  cfg.seed = 3001;
  cfg.tol = 1e-9;
  cfg.max_arity = 2;
  return check_pro_laws(gd::gd_pro(0.05), cfg).passed();
}

// 4. Reverse-mode pullbacks agree with central finite differences.
bool vjp_matches_fd() {
  SplitMix64 rng{4004};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const gd::FnPtr f = testutil::random_fn(rng, 1 + rng.index(4), 3);
    std::size_t checked = 0;
    for (int p = 0; p < 10 || checked == 0; ++p) {
      if (p > 200) return false;  // cannot find a probe away from relu kinks
      std::vector<double> x(f->in_dim());
      for (double& v : x) v = rng.uniform(-2.0, 2.0);
      if (f->relu_margin(x) < 1e-3) continue;
      std::vector<double> dy(f->out_dim());
      for (double& v : dy) v = rng.uniform(-1.0, 1.0);
      worst = std::max(worst,
                       testutil::max_rel_gap(f->vjp(x, dy), testutil::fd_vjp(*f, x, dy)));
      ++checked;
    }
  }
  return worst < 1e-5;
}

// 5. Collapsing a diagram into one learner and running it stepwise agree.
bool composed_stepwise_agree() {
  using namespace gd;
  SplitMix64 rng{5005};
  auto vec = [&rng](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-0.5, 0.5);
    return v;
  };
  const DiagramPtr d = diagram_sequence(
      {diagram_generator("front", param_linear(2, 3, vec(9))),
       diagram_parallel({diagram_generator("gate", learner_from_spec(1, 1, "tanh", {})),
                         diagram_generator("mix", param_linear(2, 2, vec(6)))}),
       diagram_generator("read", param_linear(3, 1, vec(4)))});
  const std::vector<Sample> data{{{0.3, -0.4}, {0.5}},
                                 {{1.0, 0.2}, {-0.3}},
                                 {{-0.7, 0.9}, {0.8}},
                                 {{0.1, 0.1}, {0.0}}};
  const TrainReport rep = train(*d, data, 0.05, 100, TrainMode::both);
  return std::isfinite(rep.final_loss) && rep.max_divergence < 1e-9;
}

// 6. The bundled training scenarios reach their targets.
bool bundled_training_targets() {
  using namespace gd;
  const TrainScenario line =
      TrainScenario::from_json(slurp(data_path("linear_regression.json")));
  const TrainReport lrep = train(*line.diagram, line.data, line.eps, line.steps);
  if (lrep.params_composed.size() != 1) return false;
  if (std::abs(lrep.params_composed[0] - 3.0) >= 1e-3) return false;

  const TrainScenario net =
      TrainScenario::from_json(slurp(data_path("two_layer_tanh.json")));
  const TrainReport nrep =
      train(*net.diagram, net.data, net.eps, net.steps, TrainMode::composed);
  return nrep.initial_loss > 100.0 * nrep.final_loss;
}

// 7. Simulating a nested market matches simulating its flattened form.
bool flattening_equivalence() {
  const std::string nested = R"({
    "outcomes": 2, "true_dist": [0.7, 0.3], "rounds": 100, "seed": 9,
    "tree": {
      "trust": [0.6, 0.4],
      "children": [
        {"trust": [0.5, 0.5],
         "children": [
           {"agent": {"kind": "fixed", "probs": [0.8, 0.2]}},
           {"agent": {"kind": "dirichlet", "probs": [0.5, 0.5], "jitter": 50.0}}]},
        {"agent": {"kind": "dirichlet", "probs": [0.3, 0.7], "jitter": 20.0}}
      ]}})";
  const market::Scenario sc = market::Scenario::from_json(nested);
  const market::Trajectory a = market::simulate(sc);
  const market::Trajectory b = market::simulate(market::flatten(sc));
  if (a.outcome != b.outcome) return false;
  double worst = 0.0;
  for (std::size_t r = 0; r < a.root_guess.size(); ++r) {
    worst = std::max(worst, rel_gap(a.root_guess[r], b.root_guess[r]));
    worst = std::max(worst, rel_gap(a.flat_trust[r], b.flat_trust[r]));
  }
  return worst < 1e-9;
}

// 8. Trust concentrates on the advisor whose guesses match reality.
bool trust_concentrates() {
  const market::Scenario sc =
      market::Scenario::from_json(slurp(data_path("three_agents.json")));
  const market::Trajectory tr = market::simulate(sc);
  if (tr.flat_trust.size() != 200) return false;
  return tr.flat_trust.back().at(0) > 0.99;
}

// 9. Recorded behavior trees replay exactly after an update step.
bool unfold_replay() {
  const bool market_ok =
      terminal_unfold_check(market::market_operad(3).coalgebra(2), 3, 50, 9090).passed();
  const bool gd_ok =
      terminal_unfold_check(gd::gd_pro(0.05).coalgebra(1, 1), 3, 50, 9091).passed();
  return market_ok && gd_ok;
}

// 10. Every shipped corruption is caught by the law checkers.
bool corruptions_caught() {
  OperadLawConfig ocfg;
  ocfg.samples = 300;
  ocfg.seed = 10010;
  const LawReport bayes =
      check_operad_laws(market::market_operad(2, market::Corruption::bayes_exponent), ocfg);

  PROLawConfig pcfg;
  pcfg.samples = 150;
  pcfg.seed = 10011;
  const LawReport order =
      check_pro_laws(gd::gd_pro(0.05, gd::Corruption::compositor_param_order), pcfg);
  const LawReport sign = check_pro_laws(gd::gd_pro(0.05, gd::Corruption::vjp_sign), pcfg);

  const auto counterexamples = [](const LawReport& rep) {
    std::size_t n = 0;
    for (const auto& law : rep.laws) n += law.failures.size();
    return n;
  };
  return !bayes.passed() && counterexamples(bayes) > 0 && !order.passed() &&
         counterexamples(order) > 0 && !sign.passed() && counterexamples(sign) > 0;
}

}  // namespace

int main() {
  bool all = true;
  all &= run_criterion(1,
                       "hierarchical prediction markets satisfy the operad laws "
                       "(outcomes 2, 3, 5; arity <= 4; 1000 samples; tol 1e-12)",
                       market_operad_laws);
  all &= run_criterion(2,
                       "two-level Bayesian trust updates commute with flattening "
                       "(1000 instances; rel tol 1e-12)",
                       trust_update_identity);
  all &= run_criterion(3,
                       "gradient-descent learners satisfy the PRO laws "
                       "(arity <= 2; 500 samples; tol 1e-9)",
                       gd_pro_laws);
  all &= run_criterion(4,
                       "reverse-mode pullbacks match finite differences "
                       "(100 composites x 10 probes; rel tol 1e-5)",
                       vjp_matches_fd);
  all &= run_criterion(5,
                       "compiled and stepwise diagram training agree "
                       "(4 generators; 100 steps; gap < 1e-9)",
                       composed_stepwise_agree);
  all &= run_criterion(6,
                       "bundled training runs reach their targets "
                       "(|p - 3| < 1e-3; loss shrinks 100x)",
                       bundled_training_targets);
  all &= run_criterion(7,
                       "nested market trajectories match their flattened form "
                       "(100 rounds; tol 1e-9)",
                       flattening_equivalence);
  all &= run_criterion(8,
                       "trust concentrates on the best-calibrated advisor "
                       "(> 0.99 by round 200; seed 42)",
                       trust_concentrates);
  all &= run_criterion(9,
                       "depth-3 behavior trees replay exactly after updates "
                       "(50 probes per node)",
                       unfold_replay);
  all &= run_criterion(10,
                       "corrupted market and learner variants are caught by the law "
                       "checkers (>= 1 counterexample each)",
                       corruptions_caught);
  return all ? 0 : 1;
}
