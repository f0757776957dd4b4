#include "dynorg/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dynorg::market {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

/// Validates a probability vector: finite nonnegative entries summing to 1
/// within kSumTol. Returns it renormalized so downstream sums are exact.
std::vector<double> checked_dist(std::vector<double> xs, const std::string& what) {
  require(!xs.empty(), what + ": must be nonempty");
  double sum = 0.0;
  for (double x : xs) {
    require(std::isfinite(x) && x >= 0.0, what + ": entries must be finite and >= 0");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSumTol) {
    std::ostringstream os;
    os << what << ": entries sum to " << format_double(sum) << ", expected 1";
    throw std::invalid_argument(os.str());
  }
  for (double& x : xs) x /= sum;
  return xs;
}

/// Trust vectors must additionally be strictly positive: a market that
/// ignores an advisor entirely should drop it instead.
TrustDist checked_trust(TrustDist xs, const std::string& what) {
  for (double x : xs)
    require(std::isfinite(x) && x > 0.0, what + ": entries must be positive");
  return checked_dist(std::move(xs), what);
}

std::string joined(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i)
    out += (i ? ", " : "") + format_double(xs[i]);
  return out;
}

/// Marsaglia-Tsang gamma variate with unit scale.
double gamma_draw(double alpha, SplitMix64& rng) {
  if (alpha < 1.0) {
    const double u = rng.uniform();
    return gamma_draw(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

TrustDist posterior(const TrustDist& trust, const std::vector<double>& likelihoods) {
  require(trust.size() == likelihoods.size(), "posterior: size mismatch");
  TrustDist out(trust.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < trust.size(); ++i) {
    out[i] = trust[i] * likelihoods[i];
    sum += out[i];
  }
  if (!(sum > 0.0))
    throw std::invalid_argument("posterior: all likelihood-weighted trust vanished");
  for (double& w : out) w /= sum;
  return out;
}

}  // namespace

Guess floored(Guess g) {
  double sum = 0.0;
  for (double& x : g) {
    if (!(x > kGuessFloor)) x = kGuessFloor;
    sum += x;
  }
  require(sum > 0.0 && std::isfinite(sum), "floored: invalid probability vector");
  for (double& x : g) x /= sum;
  return g;
}

Guess aggregate(const TrustDist& trust, const std::vector<Guess>& guesses) {
  require(trust.size() == guesses.size(),
          "aggregate: one guess per trust entry required");
  require(!guesses.empty(), "aggregate: no guesses");
  const std::size_t k = guesses.front().size();
  Guess out(k, 0.0);
  for (std::size_t i = 0; i < guesses.size(); ++i) {
    require(guesses[i].size() == k, "aggregate: guesses must share the outcome count");
    for (std::size_t x = 0; x < k; ++x) out[x] += trust[i] * guesses[i][x];
  }
  return out;
}

TrustDist bayes_update(const TrustDist& trust, const std::vector<Guess>& guesses,
                       std::size_t outcome) {
  require(trust.size() == guesses.size(),
          "bayes_update: one guess per trust entry required");
  std::vector<double> likes(trust.size());
  for (std::size_t i = 0; i < trust.size(); ++i) {
    require(outcome < guesses[i].size(), "bayes_update: outcome out of range");
    likes[i] = guesses[i][outcome];
  }
  return posterior(trust, likes);
}

TrustDist trust_compose(const TrustDist& outer, const std::vector<TrustDist>& inners) {
  require(outer.size() == inners.size(),
          "trust_compose: one inner trust per outer entry required");
  TrustDist out;
  for (std::size_t i = 0; i < outer.size(); ++i)
    for (double w : inners[i]) out.push_back(outer[i] * w);
  return out;
}

std::size_t sample_outcome(const std::vector<double>& probs, SplitMix64& rng) {
  require(!probs.empty(), "sample_outcome: empty distribution");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return probs.size() - 1;
}

Guess dirichlet_jitter(const Guess& mean, double concentration, Seed seed) {
  if (!(concentration > 0.0)) return mean;
  SplitMix64 rng{seed};
  Guess g(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i)
    g[i] = gamma_draw(concentration * std::max(mean[i], kGuessFloor), rng);
  return floored(std::move(g));
}

PolyInterface market_interface(std::size_t outcomes) {
  require(outcomes >= 2, "market_interface: at least two outcomes required");
  PolyAtom atom;
  atom.name = "guess" + std::to_string(outcomes);
  atom.tol = 1e-9;
  atom.validate_pos = [outcomes](const Value& v) {
    return v.is_dist() && v.as_dist().size() == outcomes;
  };
  atom.validate_dir = [outcomes](const Value&, const Value& d) {
    return d.is_outcome() && d.as_outcome().arity == outcomes;
  };
  atom.sample_pos = [outcomes](Seed seed) {
    SplitMix64 rng{seed};
    Guess g(outcomes);
    for (double& x : g) x = -std::log(std::max(rng.uniform(), 1e-300));
    return Value::dist(floored(std::move(g)));
  };
  atom.sample_dir = [outcomes](const Value& pos, Seed seed) {
    SplitMix64 rng{seed};
    return Value::outcome(sample_outcome(pos.as_dist(), rng), outcomes);
  };
  return PolyInterface(atom);
}

DynamicOperad market_operad(std::size_t outcomes, Corruption corruption) {
  const PolyInterface p = market_interface(outcomes);

  DynamicOperad o;
  o.interface = p;
  o.coalgebra = [p, corruption](std::size_t n) -> Coalgebra {
    const PolyInterface dom = power_interface(p, n);
    if (n == 0) return empty_coalgebra(dom, p);

    Coalgebra c;
    c.dom = dom;
    c.cod = p;
    c.states.name = "market[" + std::to_string(n) + "]";
    c.states.sample = [n](Seed seed) {
      SplitMix64 rng{seed};
      TrustDist t(n);
      for (double& x : t) x = -std::log(std::max(rng.uniform(), 1e-300));
      return State(TrustDist(floored(std::move(t))));
    };
    c.states.equal = [](const State& a, const State& b) {
      const auto& x = std::any_cast<const TrustDist&>(a);
      const auto& y = std::any_cast<const TrustDist&>(b);
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (!rel_equal(x[i], y[i], 1e-12)) return false;
      return true;
    };
    c.states.show = [](const State& s) {
      return "trust[" + joined(std::any_cast<const TrustDist&>(s)) + "]";
    };
    c.act = [dom, p, n](const State& s) {
      const TrustDist t = std::any_cast<TrustDist>(s);
      PolyMap m;
      m.dom = dom;
      m.cod = p;
      m.on_pos = [dom, t](const Value& pos) {
        const auto parts = dom.unpack(pos);
        std::vector<Guess> gs;
        gs.reserve(parts.size());
        for (const Value& v : parts) gs.push_back(v.as_dist());
        return Value::dist(aggregate(t, gs));
      };
      m.on_dir = [dom, n](const Value&, const Value& dir) {
        return dom.pack(std::vector<Value>(n, dir));
      };
      return m;
    };
    c.upd = [dom, corruption](const State& s, const Value& pos, const Value& dir) {
      const auto& t = std::any_cast<const TrustDist&>(s);
      const auto parts = dom.unpack(pos);
      const std::size_t x = dir.as_outcome().index;
      std::vector<double> likes(parts.size());
      for (std::size_t i = 0; i < parts.size(); ++i) {
        likes[i] = parts[i].as_dist().at(x);
        if (corruption == Corruption::bayes_exponent) likes[i] *= likes[i];
      }
      return State(posterior(t, likes));
    };
    return c;
  };
  o.identitor = []() { return State(TrustDist{1.0}); };
  o.compositor = [](const State& outer, const std::vector<State>& inners) {
    const auto& nu = std::any_cast<const TrustDist&>(outer);
    std::vector<TrustDist> ins;
    ins.reserve(inners.size());
    for (const State& s : inners) ins.push_back(std::any_cast<TrustDist>(s));
    return State(trust_compose(nu, ins));
  };
  return o;
}

namespace {

MarketNode parse_node(const nlohmann::json& j, std::size_t outcomes) {
  require(j.is_object(), "scenario: tree nodes must be JSON objects");
  MarketNode node;
  if (j.contains("agent")) {
    require(!j.contains("children") && !j.contains("trust"),
            "scenario: a node is either an agent or a market, not both");
    const auto& a = j.at("agent");
    require(a.is_object() && a.contains("kind") && a.contains("probs"),
            "scenario: agents need a kind and probs");
    const std::string kind = a.at("kind").get<std::string>();
    require(kind == "fixed" || kind == "dirichlet",
            "scenario: agent kind must be \"fixed\" or \"dirichlet\"");
    AgentSpec spec;
    spec.probs = a.at("probs").get<std::vector<double>>();
    require(spec.probs.size() == outcomes,
            "scenario: agent probs must list one probability per outcome");
    spec.probs = floored(checked_dist(std::move(spec.probs), "scenario: agent probs"));
    if (a.contains("jitter")) {
      spec.jitter = a.at("jitter").get<double>();
      require(std::isfinite(spec.jitter) && spec.jitter >= 0.0,
              "scenario: jitter must be finite and >= 0");
    }
    if (kind == "dirichlet")
      require(spec.jitter > 0.0, "scenario: dirichlet agents need jitter > 0");
    else
      require(spec.jitter == 0.0, "scenario: fixed agents do not take jitter");
    node.agent = std::move(spec);
    return node;
  }
  require(j.contains("trust") && j.contains("children"),
          "scenario: market nodes need trust and children");
  node.trust = checked_trust(j.at("trust").get<std::vector<double>>(), "scenario: trust");
  require(j.at("children").is_array() && j.at("children").size() == node.trust.size() &&
              !node.trust.empty(),
          "scenario: trust needs one entry per child");
  for (const auto& cj : j.at("children")) node.children.push_back(parse_node(cj, outcomes));
  return node;
}

void collect_agents(const MarketNode& node, std::vector<const AgentSpec*>& out) {
  if (node.is_leaf()) {
    out.push_back(&*node.agent);
    return;
  }
  for (const auto& child : node.children) collect_agents(child, out);
}

void collect_weights(const MarketNode& node, double w, std::vector<double>& out) {
  if (node.is_leaf()) {
    out.push_back(w);
    return;
  }
  for (std::size_t i = 0; i < node.children.size(); ++i)
    collect_weights(node.children[i], w * node.trust[i], out);
}

void validate_node(const MarketNode& node, std::size_t outcomes) {
  if (node.is_leaf()) {
    require(node.children.empty() && node.trust.empty(),
            "scenario: agent nodes cannot have children or trust");
    require(node.agent->probs.size() == outcomes,
            "scenario: agent probs have the wrong length");
    checked_dist(node.agent->probs, "scenario: agent probs");
    require(std::isfinite(node.agent->jitter) && node.agent->jitter >= 0.0,
            "scenario: jitter must be finite and >= 0");
    return;
  }
  require(!node.children.empty() && node.trust.size() == node.children.size(),
          "scenario: trust needs one entry per child");
  checked_trust(node.trust, "scenario: trust");
  for (const auto& child : node.children) validate_node(child, outcomes);
}

void validate_scenario(const Scenario& sc) {
  require(sc.outcomes >= 2, "scenario: at least two outcomes required");
  require(sc.true_dist.size() == sc.outcomes,
          "scenario: true_dist must list one probability per outcome");
  checked_dist(sc.true_dist, "scenario: true_dist");
  validate_node(sc.tree, sc.outcomes);
}

/// Mutable mirror of the scenario tree carrying run-time trust and the
/// current round's guesses.
struct RunNode {
  const MarketNode* spec = nullptr;
  TrustDist trust;
  Guess guess;
  std::vector<RunNode> kids;
  std::size_t leaf_index = 0;
};

RunNode build_run(const MarketNode& node, std::size_t& next_leaf) {
  RunNode rn;
  rn.spec = &node;
  if (node.is_leaf()) {
    rn.leaf_index = next_leaf++;
    return rn;
  }
  rn.trust = node.trust;
  rn.kids.reserve(node.children.size());
  for (const auto& child : node.children) rn.kids.push_back(build_run(child, next_leaf));
  return rn;
}

void compute_guesses(RunNode& n, std::size_t round, Seed leaf_root) {
  if (n.spec->is_leaf()) {
    const AgentSpec& a = *n.spec->agent;
    const Seed gs = mix_seed(mix_seed(leaf_root, n.leaf_index), round);
    n.guess = dirichlet_jitter(a.probs, a.jitter, gs);
    return;
  }
  std::vector<Guess> gs;
  gs.reserve(n.kids.size());
  for (RunNode& k : n.kids) {
    compute_guesses(k, round, leaf_root);
    gs.push_back(k.guess);
  }
  n.guess = aggregate(n.trust, gs);
}

void update_trust(RunNode& n, std::size_t x, Corruption corruption) {
  if (n.spec->is_leaf()) return;
  std::vector<double> likes(n.kids.size());
  for (std::size_t i = 0; i < n.kids.size(); ++i) {
    likes[i] = n.kids[i].guess.at(x);
    if (corruption == Corruption::bayes_exponent) likes[i] *= likes[i];
  }
  n.trust = posterior(n.trust, likes);
  for (RunNode& k : n.kids) update_trust(k, x, corruption);
}

void record_guesses(const RunNode& n, std::size_t round, const std::string& path,
                    std::vector<TrajectoryRecord>& out) {
  out.push_back({round, path, "guess", n.guess});
  for (std::size_t i = 0; i < n.kids.size(); ++i)
    record_guesses(n.kids[i], round, path + "/" + std::to_string(i), out);
}

void record_trust(const RunNode& n, std::size_t round, const std::string& path,
                  std::vector<TrajectoryRecord>& out) {
  if (n.spec->is_leaf()) return;
  out.push_back({round, path, "trust", n.trust});
  for (std::size_t i = 0; i < n.kids.size(); ++i)
    record_trust(n.kids[i], round, path + "/" + std::to_string(i), out);
}

void flat_weights(const RunNode& n, double w, std::vector<double>& out) {
  if (n.spec->is_leaf()) {
    out.push_back(w);
    return;
  }
  for (std::size_t i = 0; i < n.kids.size(); ++i)
    flat_weights(n.kids[i], w * n.trust[i], out);
}

}  // namespace

Scenario Scenario::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
  }
  try {
    require(j.is_object(), "scenario: top level must be a JSON object");
    require(j.contains("outcomes") && j.contains("true_dist") && j.contains("rounds") &&
                j.contains("tree"),
            "scenario: outcomes, true_dist, tree, and rounds are required");
    Scenario sc;
    sc.outcomes = j.at("outcomes").get<std::size_t>();
    require(sc.outcomes >= 2, "scenario: at least two outcomes required");
    sc.true_dist = j.at("true_dist").get<std::vector<double>>();
    require(sc.true_dist.size() == sc.outcomes,
            "scenario: true_dist must list one probability per outcome");
    sc.true_dist = checked_dist(std::move(sc.true_dist), "scenario: true_dist");
    sc.rounds = j.at("rounds").get<std::size_t>();
    if (j.contains("seed")) sc.seed = j.at("seed").get<Seed>();
    sc.tree = parse_node(j.at("tree"), sc.outcomes);
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
}

std::vector<const AgentSpec*> scenario_agents(const Scenario& sc) {
  std::vector<const AgentSpec*> out;
  collect_agents(sc.tree, out);
  return out;
}

Scenario flatten(const Scenario& sc) {
  validate_scenario(sc);
  Scenario flat = sc;
  MarketNode root;
  collect_weights(sc.tree, 1.0, root.trust);
  for (const AgentSpec* a : scenario_agents(sc)) {
    MarketNode leaf;
    leaf.agent = *a;
    root.children.push_back(std::move(leaf));
  }
  flat.tree = std::move(root);
  return flat;
}

std::string Trajectory::to_csv() const {
  std::ostringstream os;
  os << "round,node_path,kind,values\n";
  for (const auto& r : records) {
    os << r.round << "," << r.node_path << "," << r.kind;
    for (double v : r.values) os << "," << format_double(v);
    os << "\n";
  }
  return os.str();
}

Trajectory simulate(const Scenario& sc, Corruption corruption) {
  validate_scenario(sc);

  std::size_t next_leaf = 0;
  RunNode root = build_run(sc.tree, next_leaf);

  Trajectory tr;
  tr.outcomes = sc.outcomes;
  const Seed leaf_root = mix_seed(sc.seed, "leaf");
  const Seed outcome_root = mix_seed(sc.seed, "outcome");
  for (std::size_t round = 0; round < sc.rounds; ++round) {
    compute_guesses(root, round, leaf_root);
    record_guesses(root, round, "root", tr.records);

    SplitMix64 orng{mix_seed(outcome_root, round)};
    const std::size_t x = sample_outcome(sc.true_dist, orng);
    tr.records.push_back({round, "root", "outcome", {static_cast<double>(x)}});

    update_trust(root, x, corruption);
    record_trust(root, round, "root", tr.records);

    tr.root_guess.push_back(root.guess);
    tr.outcome.push_back(x);
    std::vector<double> fw;
    flat_weights(root, 1.0, fw);
    tr.flat_trust.push_back(std::move(fw));
  }
  return tr;
}

}  // namespace dynorg::market
