#include <any>
#include <cmath>

#include "doctest.h"
#include "dynorg/coalg.hpp"
#include "dynorg/poly.hpp"
#include "dynorg/rng.hpp"
#include "dynorg/value.hpp"

using namespace dynorg;

namespace {

StateSpace real_states(std::string name) {
  StateSpace sp;
  sp.name = std::move(name);
  sp.sample = [](Seed seed) {
    SplitMix64 rng{seed};
    return State(rng.uniform(-2.0, 2.0));
  };
  sp.equal = [](const State& a, const State& b) {
    return approx_equal(std::any_cast<double>(a), std::any_cast<double>(b), 1e-9);
  };
  sp.show = [](const State& s) { return format_double(std::any_cast<double>(s)); };
  return sp;
}

/// State a: positions shift by a, directions pass back; a moves half a step
/// along the returned direction.
Coalgebra offset_machine(const PolyInterface& line) {
  Coalgebra c;
  c.dom = line;
  c.cod = line;
  c.states = real_states("offset");
  c.act = [line](const State& s) {
    const double a = std::any_cast<double>(s);
    PolyMap m;
    m.dom = line;
    m.cod = line;
    m.on_pos = [a](const Value& v) { return Value::real(v.as_real() + a); };
    m.on_dir = [](const Value&, const Value& d) { return d; };
    return m;
  };
  c.upd = [](const State& s, const Value&, const Value& dir) {
    return State(std::any_cast<double>(s) + 0.5 * dir.as_real());
  };
  return c;
}

/// State b: positions scale by b, directions pull back scaled by b; b moves
/// along the product of the flow.
Coalgebra scale_machine(const PolyInterface& line) {
  Coalgebra c;
  c.dom = line;
  c.cod = line;
  c.states = real_states("scale");
  c.act = [line](const State& s) {
    const double b = std::any_cast<double>(s);
    PolyMap m;
    m.dom = line;
    m.cod = line;
    m.on_pos = [b](const Value& v) { return Value::real(b * v.as_real()); };
    m.on_dir = [b](const Value&, const Value& d) { return Value::real(b * d.as_real()); };
    return m;
  };
  c.upd = [](const State& s, const Value& pos, const Value& dir) {
    return State(std::any_cast<double>(s) + 0.25 * pos.as_real() * dir.as_real());
  };
  return c;
}

}  // namespace

TEST_CASE("a sequential composite routes positions forward and directions backward") {
  const auto line = real_line_interface();
  const Coalgebra comp = compose(offset_machine(line), scale_machine(line));
  const State s = pair_state(State(2.0), State(3.0));

  // Forward: 1 -> 3 -> 9. Backward: 1 -> 3 -> 3. Updates: the offset sees the
  // scaled direction, the scale sees the shifted position.
  const StepResult r = step(comp, s, Value::real(1.0), Value::real(1.0));
  CHECK(r.out_pos.as_real() == doctest::Approx(9.0));
  CHECK(r.back_dir.as_real() == doctest::Approx(3.0));
  const auto& next = as_pair_state(r.next);
  CHECK(std::any_cast<double>(next.first) == doctest::Approx(3.5));
  CHECK(std::any_cast<double>(next.second) == doctest::Approx(3.75));
}

TEST_CASE("identity machines are units for composition, up to state re-bracketing") {
  const auto line = real_line_interface();
  const Coalgebra c = scale_machine(line);

  const auto right = compose(c, identity_coalgebra(line));
  const auto take_first = [](const State& s) { return as_pair_state(s).first; };
  CHECK(check_morphism(take_first, right, c, 200, 101, 1e-9).passed());

  const auto left = compose(identity_coalgebra(line), c);
  const auto take_second = [](const State& s) { return as_pair_state(s).second; };
  CHECK(check_morphism(take_second, left, c, 200, 102, 1e-9).passed());
}

TEST_CASE("composition is associative up to state re-bracketing") {
  const auto line = real_line_interface();
  const Coalgebra a = offset_machine(line);
  const Coalgebra b = scale_machine(line);
  const Coalgebra c = offset_machine(line);

  const auto left = compose(compose(a, b), c);
  const auto right = compose(a, compose(b, c));
  const auto reassoc = [](const State& s) {
    const auto& outer = as_pair_state(s);
    const auto& inner = as_pair_state(outer.first);
    return pair_state(inner.first, pair_state(inner.second, outer.second));
  };
  CHECK(check_morphism(reassoc, left, right, 200, 103, 1e-9).passed());
}

TEST_CASE("tensor and composition interchange up to state shuffling") {
  const auto line = real_line_interface();
  const Coalgebra a = offset_machine(line);
  const Coalgebra b = scale_machine(line);
  const Coalgebra c = scale_machine(line);
  const Coalgebra d = offset_machine(line);

  const auto lhs = tensor(compose(a, b), compose(c, d));
  const auto rhs = compose(tensor(a, c), tensor(b, d));
  const auto shuffle = [](const State& s) {
    const auto& top = as_pair_state(s);
    const auto& ab = as_pair_state(top.first);
    const auto& cd = as_pair_state(top.second);
    return pair_state(pair_state(ab.first, cd.first),
                      pair_state(ab.second, cd.second));
  };
  CHECK(check_morphism(shuffle, lhs, rhs, 200, 104, 1e-9).passed());
}

TEST_CASE("tensor_many interprets componentwise over flat list states") {
  const auto line = real_line_interface();
  const Coalgebra many = tensor_many({offset_machine(line), offset_machine(line),
                                      offset_machine(line)});
  const State s = list_state({State(1.0), State(2.0), State(3.0)});

  const Value pos = many.dom.pack(
      {Value::real(10.0), Value::real(20.0), Value::real(30.0)});
  const Value dir = many.cod.pack({Value::real(1.0), Value::real(2.0), Value::real(4.0)});
  const StepResult r = step(many, s, pos, dir);

  const auto outs = many.cod.unpack(r.out_pos);
  CHECK(outs[0].as_real() == doctest::Approx(11.0));
  CHECK(outs[1].as_real() == doctest::Approx(22.0));
  CHECK(outs[2].as_real() == doctest::Approx(33.0));

  const auto& next = as_list_state(r.next);
  CHECK(std::any_cast<double>(next[0]) == doctest::Approx(1.5));
  CHECK(std::any_cast<double>(next[1]) == doctest::Approx(3.0));
  CHECK(std::any_cast<double>(next[2]) == doctest::Approx(5.0));
}

TEST_CASE("a broken state map is caught and counterexamples are capped") {
  const auto line = real_line_interface();
  const Coalgebra c = offset_machine(line);
  Coalgebra drifted = offset_machine(line);
  drifted.upd = [](const State& s, const Value&, const Value& dir) {
    return State(std::any_cast<double>(s) + 0.5 * dir.as_real() + 1.0);
  };

  const auto ident = [](const State& s) { return s; };
  const MorphismReport rep = check_morphism(ident, c, drifted, 200, 105, 1e-9);
  CHECK(!rep.passed());
  CHECK(rep.failures.size() <= MorphismReport::kMaxFailures);
  CHECK(!rep.summary().empty());
}

TEST_CASE("unfolding is deterministic and replays from updated states") {
  const auto line = real_line_interface();
  const Coalgebra c = scale_machine(line);
  const State s(1.25);
  const Seed tree_seed = mix_seed(7, "tree");

  const BehaviorTree t = unfold(c, s, 2, 3, tree_seed);
  const BehaviorTree again = unfold(c, s, 2, 3, tree_seed);
  CHECK(trees_equal(t, again, 6, 901, 1e-12));

  REQUIRE(t.branches.size() == 3);
  for (std::size_t k = 0; k < t.branches.size(); ++k) {
    const auto& br = t.branches[k];
    const State moved = c.upd(s, br.pos, br.dir);
    const BehaviorTree replay = unfold(c, moved, 1, 3, unfold_branch_seed(tree_seed, k));
    CHECK(trees_equal(replay, *br.child, 6, 902 + k, 1e-12));
  }

  // Different states realize different behavior trees.
  const BehaviorTree other = unfold(c, State(2.5), 2, 3, tree_seed);
  CHECK(!trees_equal(t, other, 6, 903, 1e-12));
}
