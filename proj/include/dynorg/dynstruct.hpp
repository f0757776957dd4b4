#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dynorg/coalg.hpp"

namespace dynorg {

/// An operad whose n-ary operations form a state machine interpreting n
/// parallel copies of the interface as one. Structure maps act on states;
/// the law checker verifies they are machine morphisms and satisfy the unit
/// and associativity identities.
struct DynamicOperad {
  PolyInterface interface;
  /// S_n, a machine from the n-fold tensor power of interface to interface.
  std::function<Coalgebra(std::size_t)> coalgebra;
  /// Distinguished unary state.
  std::function<State()> identitor;
  /// Substitution: outer in S_n, inners[i] in S_{m_i}, result in S_{sum m_i}.
  std::function<State(const State& outer, const std::vector<State>& inners)> compositor;
};

/// A PRO over the object monoid of naturals: a machine S_{m,n} for every
/// input/output arity pair, with identities, sequential composition, and
/// parallel product on states.
struct DynamicPRO {
  PolyInterface interface;
  std::function<Coalgebra(std::size_t m, std::size_t n)> coalgebra;
  std::function<State(std::size_t n)> identitor;  // in S_{n,n}
  /// (s in S_{l,m}, t in S_{m,n}) -> S_{l,n}; s interprets first.
  std::function<State(const State&, const State&)> compositor;
  /// (s in S_{m,n}, t in S_{m',n'}) -> S_{m+m',n+n'}.
  std::function<State(const State&, const State&)> productor;
};

/// A category presented the same way: hom machines, per-object identities,
/// and typed composition.
struct DynamicCategory {
  std::size_t object_count = 0;
  std::function<PolyInterface(std::size_t)> interface;
  std::function<Coalgebra(std::size_t a, std::size_t b)> hom;
  std::function<State(std::size_t a)> identitor;
  std::function<State(std::size_t a, std::size_t b, std::size_t c, const State&,
                      const State&)>
      compositor;
};

/// A morphism between PROs sharing arity structure: an interface map plus,
/// for each arity pair, a translation of states that must commute with
/// actions, updates, and all three structure maps.
struct PROMorphism {
  PolyMap map;
  std::function<std::function<State(const State&)>(std::size_t m, std::size_t n)>
      commutor;
};

// Named structure operations (thin, precondition-checked entry points).
State operad_compose(const DynamicOperad& o, const State& outer,
                     const std::vector<State>& inners);
State pro_identity(const DynamicPRO& p, std::size_t n);
State pro_compose(const DynamicPRO& p, const State& s, const State& t);
State pro_product(const DynamicPRO& p, const State& s, const State& t);

struct LawCounterexample {
  std::string context;
  std::string detail;
};

struct LawResult {
  std::string law;
  std::size_t checked = 0;
  std::vector<LawCounterexample> failures;  // capped at kMaxFailures
  static constexpr std::size_t kMaxFailures = 8;

  bool passed() const { return failures.empty(); }
  void record(std::string context, std::string detail);
};

struct LawReport {
  std::string structure;
  Seed seed = 0;
  std::size_t samples = 0;
  double tol = 0.0;
  std::vector<LawResult> laws;

  bool passed() const;
  const LawResult* find(std::string_view law) const;
  std::string summary() const;
  std::string json_string() const;
};

struct OperadLawConfig {
  std::size_t samples = 1000;
  Seed seed = 0;
  double tol = 1e-9;
  /// Enumerated substitution shapes keep their total arity within this bound.
  std::size_t max_total_arity = 4;
};

struct PROLawConfig {
  std::size_t samples = 500;
  Seed seed = 0;
  double tol = 1e-9;
  /// Each arity index ranges over [0, max_arity].
  std::size_t max_arity = 2;
};

struct CategoryLawConfig {
  std::size_t samples = 300;
  Seed seed = 0;
  double tol = 1e-9;
};

/// Sampled verification that the structure maps are machine morphisms and
/// satisfy the unit and associativity identities.
LawReport check_operad_laws(const DynamicOperad& o, const OperadLawConfig& cfg = {});

/// Sampled verification of identity, interchange, associativity, and unit
/// identities for both composition and product, plus the morphism conditions.
LawReport check_pro_laws(const DynamicPRO& p, const PROLawConfig& cfg = {});

LawReport check_category_laws(const DynamicCategory& c,
                              const CategoryLawConfig& cfg = {});

/// Verifies the commutor squares for each arity pair within budget and that
/// the translation preserves identitor, compositor, and productor images.
LawReport check_pro_morphism(const PROMorphism& h, const DynamicPRO& src,
                             const DynamicPRO& dst, const PROLawConfig& cfg = {});

/// Unfolds sampled states of the machine to depth-truncated behavior trees
/// and verifies that updating a state then unfolding reproduces the recorded
/// subtree: the bounded form of "states map to their behaviors".
LawReport terminal_unfold_check(const Coalgebra& c, std::size_t depth,
                                std::size_t probes, Seed seed);

/// A commutative-monoid-like structure on one interface: a monoid on
/// positions together with a distribution of directions over products.
struct Collective {
  PolyInterface interface;  // single factor
  Value unit_pos;
  std::function<Value(const Value&, const Value&)> mult_pos;
  /// (position I, position J, direction at mult_pos(I, J)) ->
  /// (direction at I, direction at J).
  std::function<std::pair<Value, Value>(const Value&, const Value&, const Value&)>
      distribute_dirs;
};

/// The induced operad: S_n is the single n-ary aggregation state whose action
/// multiplies positions and distributes directions. The laws hold exactly
/// when the collective's monoid and distribution data are coherent, which is
/// what check_operad_laws then verifies.
DynamicOperad collective_to_operad(const Collective& col);

/// The operad with S_0 the given machine (over the unit domain interface),
/// S_1 the identity machine, and every higher arity empty.
DynamicOperad nullary_operad(const Coalgebra& c);

/// Depth-truncated behavioral quotient of a PRO: states are base states
/// observed only through their depth-bounded behavior trees, compared by
/// tree agreement on shared probe flows. `include` translates a base state
/// into a behavior state at the truncation depth; together with the identity
/// interface map it forms the canonical morphism into the quotient.
struct TerminalPRO {
  DynamicPRO pro;
  std::function<State(const State&)> include;
};

TerminalPRO truncated_terminal_pro(const DynamicPRO& base, std::size_t depth,
                                   std::size_t probes, Seed seed);

}  // namespace dynorg
