#pragma once

#include <any>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dynorg/poly.hpp"

namespace dynorg {

/// States are type-erased; each state space carries its own sampler,
/// comparator, and printer, so generic checkers never need the concrete type.
using State = std::any;

struct StateSpace {
  std::string name;
  /// Null exactly when the state set is empty.
  std::function<State(Seed)> sample;
  std::function<bool(const State&, const State&)> equal;
  /// Optional; used when reporting counterexamples.
  std::function<std::string(const State&)> show;

  bool empty() const { return sample == nullptr; }
  std::string describe(const State& s) const { return show ? show(s) : "<state>"; }
};

/// A state machine whose every state interprets dom-positions as
/// cod-positions (forward) and cod-directions as dom-directions (backward),
/// and whose state advances on each (position, direction) flow.
struct Coalgebra {
  PolyInterface dom, cod;
  StateSpace states;
  std::function<PolyMap(const State&)> act;
  std::function<State(const State&, const Value& pos, const Value& dir)> upd;
};

struct StepResult {
  Value out_pos;
  Value back_dir;
  State next;
};

/// Runs one flow through the machine; validates the position and direction
/// against the interfaces and names the failing validator on error.
StepResult step(const Coalgebra& c, const State& s, const Value& pos, const Value& dir);

// Pair and list states used by composite machines.
State pair_state(State a, State b);
const std::pair<State, State>& as_pair_state(const State& s);
State list_state(std::vector<State> items);
const std::vector<State>& as_list_state(const State& s);

/// One-state machine that always interprets via the given map.
Coalgebra singleton_coalgebra(const PolyMap& f);

/// States never change; each interprets via its assigned map.
Coalgebra static_coalgebra(StateSpace states,
                           std::function<PolyMap(const State&)> assignment);

Coalgebra identity_coalgebra(const PolyInterface& p);

Coalgebra empty_coalgebra(const PolyInterface& dom, const PolyInterface& cod);

/// Sequential composite: c interprets first, d interprets c's output. States
/// are pairs (c-state, d-state); on a flow, d sees c's output position and c
/// sees d's backward direction.
Coalgebra compose(const Coalgebra& c, const Coalgebra& d);

/// Parallel composite on the tensor interfaces; states are pairs.
Coalgebra tensor(const Coalgebra& c, const Coalgebra& d);

/// n-ary parallel composite with flat list states (avoids nested pairs when
/// a checker needs all components at once). For an empty list this is the
/// one-state machine on the unit interface.
Coalgebra tensor_many(const std::vector<Coalgebra>& cs);

struct FlowFailure {
  std::string state;
  std::string flow;
  std::string lhs;
  std::string rhs;
  std::string what;
};

struct MorphismReport {
  std::size_t checked = 0;
  std::vector<FlowFailure> failures;  // capped at kMaxFailures
  static constexpr std::size_t kMaxFailures = 8;

  bool passed() const { return failures.empty(); }
  std::string summary() const;
  void record(FlowFailure f);
  void merge(const MorphismReport& other);
};

/// Checks that f maps states of c to states of cprime compatibly: actions
/// agree on sampled positions and directions, and updating then mapping
/// equals mapping then updating. Both machines must share interfaces.
MorphismReport check_morphism(const std::function<State(const State&)>& f,
                              const Coalgebra& c, const Coalgebra& cprime,
                              std::size_t samples, Seed seed, double tol);

/// Morphism check over a pair of vertical interface maps phi: c.dom ->
/// cprime.dom and psi: c.cod -> cprime.cod; with identities it reduces to
/// check_morphism.
MorphismReport check_square(const PolyMap& phi, const PolyMap& psi, const Coalgebra& c,
                            const Coalgebra& cprime,
                            const std::function<State(const State&)>& f,
                            std::size_t samples, Seed seed, double tol);

/// Depth-truncated behavior: the map the state currently realizes plus, for
/// each probed flow, the subtree reached by updating along it.
struct BehaviorTree {
  PolyMap root_map;
  std::size_t depth = 0;
  struct Branch {
    Value pos;
    Value dir;
    std::shared_ptr<const BehaviorTree> child;
  };
  std::vector<Branch> branches;
};

/// Probe flows and per-child seeds derive deterministically from seed, so two
/// unfolds of equal-behaved states at the same seed probe identical flows.
BehaviorTree unfold(const Coalgebra& c, const State& s, std::size_t depth,
                    std::size_t probes_per_node, Seed seed);

/// Seed unfold assigns to the k-th branch's subtree; exposed so replay checks
/// can rebuild a recorded subtree with the identical probe stream.
inline Seed unfold_branch_seed(Seed node_seed, std::size_t k) {
  return mix_seed(mix_seed(node_seed, k), "sub");
}

/// Behavioral tree equality: root maps agree on sampled flows, branch flows
/// match, children compare recursively.
bool trees_equal(const BehaviorTree& a, const BehaviorTree& b, std::size_t probes,
                 Seed seed, double tol);

}  // namespace dynorg
