#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dynorg/coalg.hpp"
#include "dynorg/dynstruct.hpp"
#include "dynorg/poly.hpp"
#include "dynorg/rng.hpp"
#include "dynorg/value.hpp"

namespace dynorg::market {

/// A probability vector over a fixed outcome set. Guesses are predictions;
/// trust vectors weight advisors (or sub-markets).
using Guess = std::vector<double>;
using TrustDist = std::vector<double>;

/// Entries of constructed guesses are floored here to keep every coordinate
/// strictly positive.
inline constexpr double kGuessFloor = 1e-9;

/// Input probability vectors must sum to 1 within this tolerance.
inline constexpr double kSumTol = 1e-9;

/// Floors entries at kGuessFloor and renormalizes to sum 1.
Guess floored(Guess g);

/// Trust-weighted mixture: result[x] = sum_i trust[i] * guesses[i][x].
Guess aggregate(const TrustDist& trust, const std::vector<Guess>& guesses);

/// Posterior trust after observing `outcome`: trust[i] is reweighted by the
/// likelihood guesses[i][outcome] and renormalized.
TrustDist bayes_update(const TrustDist& trust, const std::vector<Guess>& guesses,
                       std::size_t outcome);

/// Flattens two-level trust: block i of the result is outer[i] * inners[i].
/// The inner vectors may have different lengths.
TrustDist trust_compose(const TrustDist& outer, const std::vector<TrustDist>& inners);

/// Draws an outcome index from a probability vector by inverting the CDF.
std::size_t sample_outcome(const std::vector<double>& probs, SplitMix64& rng);

/// Dirichlet(concentration * mean) draw; concentration <= 0 returns the mean
/// unchanged.
Guess dirichlet_jitter(const Guess& mean, double concentration, Seed seed);

/// The prediction-market interface: positions are probability vectors over
/// `outcomes` possibilities, directions are realized outcomes.
PolyInterface market_interface(std::size_t outcomes);

/// Deliberate defects used as negative controls for the law checker.
enum class Corruption {
  none,
  /// Trust updates square each likelihood, which silently breaks the
  /// compatibility between updating a nested market and updating its
  /// flattened form.
  bayes_exponent,
};

/// The market operad on market_interface(outcomes): S_n holds a trust vector
/// over n advisors, aggregates their guesses, broadcasts the realized outcome
/// back to each, and re-trusts by Bayes. Substitution multiplies trust along
/// the hierarchy. S_0 is empty (a market needs at least one advisor).
DynamicOperad market_operad(std::size_t outcomes, Corruption corruption = Corruption::none);

/// A leaf of a scenario tree: a base prediction, either emitted verbatim
/// every round (jitter == 0) or redrawn from Dirichlet(jitter * probs).
struct AgentSpec {
  Guess probs;
  double jitter = 0.0;
};

/// A scenario tree node: either an agent (leaf) or a market over child nodes
/// with an initial trust vector of matching length.
struct MarketNode {
  std::optional<AgentSpec> agent;
  TrustDist trust;
  std::vector<MarketNode> children;

  bool is_leaf() const { return agent.has_value(); }
};

struct Scenario {
  std::size_t outcomes = 0;
  std::vector<double> true_dist;  // outcome distribution used to draw rounds
  std::size_t rounds = 0;
  Seed seed = 0;
  MarketNode tree;

  /// Parses the scenario file format ({outcomes, true_dist, tree, rounds,
  /// seed}); throws std::invalid_argument with a description on malformed
  /// input, including probability vectors that do not sum to 1 within 1e-9.
  static Scenario from_json(const std::string& text);
};

/// DFS list of the scenario's agents (the order used for seeding and for
/// flattened trust vectors).
std::vector<const AgentSpec*> scenario_agents(const Scenario& sc);

/// The same agents under a single one-level market whose trust vector is the
/// tree's flattened trust. Guess noise is seeded by agent index and round and
/// outcomes by round alone, so the flat scenario sees identical inputs.
Scenario flatten(const Scenario& sc);

/// One CSV row: a guess (per node), the sampled outcome, or a post-update
/// trust vector (per internal node).
struct TrajectoryRecord {
  std::size_t round = 0;
  std::string node_path;  // "root", "root/0", "root/0/1", ...
  std::string kind;       // "guess" | "outcome" | "trust"
  std::vector<double> values;
};

struct Trajectory {
  std::size_t outcomes = 0;
  std::vector<TrajectoryRecord> records;

  // The same run reshaped for programmatic checks, one entry per round.
  std::vector<Guess> root_guess;
  std::vector<std::size_t> outcome;
  /// Effective per-leaf weight: the product of trust entries along each
  /// leaf's path, in DFS leaf order.
  std::vector<std::vector<double>> flat_trust;

  std::string to_csv() const;
};

/// Runs the scenario: each round the leaves emit guesses, internal nodes
/// aggregate bottom-up with their current trust, one outcome is drawn from
/// true_dist, and every internal node updates by Bayes. Guess noise is seeded
/// by (seed, leaf index, round), the outcome by (seed, round); both are
/// independent of the tree shape.
Trajectory simulate(const Scenario& sc, Corruption corruption = Corruption::none);

}  // namespace dynorg::market
