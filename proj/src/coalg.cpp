#include "dynorg/coalg.hpp"

#include <sstream>
#include <stdexcept>

namespace dynorg {

namespace {

std::string flow_string(const Value& pos, const Value& dir) {
  return "(" + pos.to_string() + ", " + dir.to_string() + ")";
}

StateSpace pair_space(const StateSpace& a, const StateSpace& b) {
  StateSpace out;
  out.name = "(" + a.name + ", " + b.name + ")";
  if (!a.empty() && !b.empty()) {
    auto sa = a.sample, sb = b.sample;
    out.sample = [sa, sb](Seed seed) {
      return pair_state(sa(mix_seed(seed, "fst")), sb(mix_seed(seed, "snd")));
    };
  }
  auto ea = a.equal, eb = b.equal;
  out.equal = [ea, eb](const State& x, const State& y) {
    const auto& px = as_pair_state(x);
    const auto& py = as_pair_state(y);
    return ea(px.first, py.first) && eb(px.second, py.second);
  };
  StateSpace acopy = a, bcopy = b;
  out.show = [acopy, bcopy](const State& s) {
    const auto& p = as_pair_state(s);
    return "(" + acopy.describe(p.first) + ", " + bcopy.describe(p.second) + ")";
  };
  return out;
}

}  // namespace

StepResult step(const Coalgebra& c, const State& s, const Value& pos, const Value& dir) {
  if (!c.dom.validate_pos(pos))
    throw std::invalid_argument("step: position " + pos.to_string() +
                                " rejected by interface " + c.dom.name());
  const PolyMap m = c.act(s);
  const Value out = m.on_pos(pos);
  if (!c.cod.validate_dir(out, dir))
    throw std::invalid_argument("step: direction " + dir.to_string() +
                                " rejected by interface " + c.cod.name() +
                                " at position " + out.to_string());
  return StepResult{out, m.on_dir(pos, dir), c.upd(s, pos, dir)};
}

State pair_state(State a, State b) {
  return State(std::make_pair(std::move(a), std::move(b)));
}

const std::pair<State, State>& as_pair_state(const State& s) {
  const auto* p = std::any_cast<std::pair<State, State>>(&s);
  if (!p) throw std::invalid_argument("expected a pair state");
  return *p;
}

State list_state(std::vector<State> items) { return State(std::move(items)); }

const std::vector<State>& as_list_state(const State& s) {
  const auto* p = std::any_cast<std::vector<State>>(&s);
  if (!p) throw std::invalid_argument("expected a list state");
  return *p;
}

Coalgebra singleton_coalgebra(const PolyMap& f) {
  Coalgebra c;
  c.dom = f.dom;
  c.cod = f.cod;
  c.states.name = "singleton";
  c.states.sample = [](Seed) { return State(std::monostate{}); };
  c.states.equal = [](const State&, const State&) { return true; };
  c.states.show = [](const State&) { return std::string("*"); };
  c.act = [f](const State&) { return f; };
  c.upd = [](const State& s, const Value&, const Value&) { return s; };
  return c;
}

Coalgebra static_coalgebra(StateSpace states,
                           std::function<PolyMap(const State&)> assignment) {
  if (states.empty()) throw std::invalid_argument("static_coalgebra: empty state space");
  const PolyMap probe = assignment(states.sample(0));
  Coalgebra c;
  c.dom = probe.dom;
  c.cod = probe.cod;
  c.states = std::move(states);
  c.act = std::move(assignment);
  c.upd = [](const State& s, const Value&, const Value&) { return s; };
  return c;
}

Coalgebra identity_coalgebra(const PolyInterface& p) {
  Coalgebra c = singleton_coalgebra(identity_map(p));
  c.states.name = "id[" + p.name() + "]";
  return c;
}

Coalgebra empty_coalgebra(const PolyInterface& dom, const PolyInterface& cod) {
  Coalgebra c;
  c.dom = dom;
  c.cod = cod;
  c.states.name = "empty";
  c.states.sample = nullptr;
  c.states.equal = [](const State&, const State&) -> bool {
    throw std::logic_error("empty state space has no states to compare");
  };
  c.act = [](const State&) -> PolyMap {
    throw std::logic_error("empty state space has no states to act");
  };
  c.upd = [](const State&, const Value&, const Value&) -> State {
    throw std::logic_error("empty state space has no states to update");
  };
  return c;
}

Coalgebra compose(const Coalgebra& c, const Coalgebra& d) {
  if (!same_interface(c.cod, d.dom))
    throw std::invalid_argument("compose: interface mismatch, " + c.cod.name() + " vs " +
                                d.dom.name());
  Coalgebra out;
  out.dom = c.dom;
  out.cod = d.cod;
  out.states = pair_space(c.states, d.states);
  auto cact = c.act, dact = d.act;
  auto cupd = c.upd, dupd = d.upd;
  out.act = [cact, dact](const State& s) {
    const auto& p = as_pair_state(s);
    return compose_maps(cact(p.first), dact(p.second));
  };
  out.upd = [cact, dact, cupd, dupd](const State& s, const Value& pos,
                                     const Value& dir) {
    const auto& p = as_pair_state(s);
    const Value mid = cact(p.first).on_pos(pos);
    const Value back = dact(p.second).on_dir(mid, dir);
    return pair_state(cupd(p.first, pos, back), dupd(p.second, mid, dir));
  };
  return out;
}

Coalgebra tensor(const Coalgebra& c, const Coalgebra& d) {
  Coalgebra out;
  out.dom = tensor_interface(c.dom, d.dom);
  out.cod = tensor_interface(c.cod, d.cod);
  out.states = pair_space(c.states, d.states);
  const PolyInterface cdom = c.dom, ddom = d.dom, ccod = c.cod, dcod = d.cod;
  auto cact = c.act, dact = d.act;
  auto cupd = c.upd, dupd = d.upd;
  out.act = [cact, dact](const State& s) {
    const auto& p = as_pair_state(s);
    return tensor_maps(cact(p.first), dact(p.second));
  };
  out.upd = [=](const State& s, const Value& pos, const Value& dir) {
    const auto& p = as_pair_state(s);
    auto [pc, pd] = split_value(cdom, ddom, pos);
    auto [dc, dd] = split_value(ccod, dcod, dir);
    return pair_state(cupd(p.first, pc, dc), dupd(p.second, pd, dd));
  };
  return out;
}

Coalgebra tensor_many(const std::vector<Coalgebra>& cs) {
  Coalgebra out;
  out.dom = PolyInterface::unit();
  out.cod = PolyInterface::unit();
  std::vector<PolyInterface> doms, cods;
  bool any_empty = false;
  for (const auto& c : cs) {
    out.dom = tensor_interface(out.dom, c.dom);
    out.cod = tensor_interface(out.cod, c.cod);
    doms.push_back(c.dom);
    cods.push_back(c.cod);
    any_empty = any_empty || c.states.empty();
  }
  auto comps = std::make_shared<const std::vector<Coalgebra>>(cs);

  StateSpace space;
  space.name = "list[" + std::to_string(cs.size()) + "]";
  if (!any_empty) {
    space.sample = [comps](Seed seed) {
      std::vector<State> items;
      items.reserve(comps->size());
      for (std::size_t i = 0; i < comps->size(); ++i)
        items.push_back((*comps)[i].states.sample(mix_seed(seed, i)));
      return list_state(std::move(items));
    };
  }
  space.equal = [comps](const State& x, const State& y) {
    const auto& xs = as_list_state(x);
    const auto& ys = as_list_state(y);
    if (xs.size() != ys.size() || xs.size() != comps->size()) return false;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!(*comps)[i].states.equal(xs[i], ys[i])) return false;
    return true;
  };
  space.show = [comps](const State& s) {
    const auto& xs = as_list_state(s);
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i)
      out += (i ? ", " : "") + (*comps)[i].states.describe(xs[i]);
    return out + "]";
  };
  out.states = std::move(space);

  auto split_all = [](const std::vector<PolyInterface>& ifs, const Value& v) {
    std::vector<Value> parts;
    PolyInterface all;
    for (const auto& itf : ifs) all = tensor_interface(all, itf);
    const auto atoms = all.unpack(v);
    std::size_t off = 0;
    for (const auto& itf : ifs) {
      std::vector<Value> piece(atoms.begin() + off, atoms.begin() + off + itf.factor_count());
      parts.push_back(itf.pack(std::move(piece)));
      off += itf.factor_count();
    }
    return parts;
  };

  const PolyInterface dom_all = out.dom, cod_all = out.cod;
  out.act = [comps, doms, cods, dom_all, cod_all, split_all](const State& s) {
    const auto& xs = as_list_state(s);
    std::vector<PolyMap> maps;
    maps.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) maps.push_back((*comps)[i].act(xs[i]));
    PolyMap m;
    m.dom = dom_all;
    m.cod = cod_all;
    m.on_pos = [maps, doms, cods, cod_all, split_all](const Value& pos) {
      const auto parts = split_all(doms, pos);
      std::vector<Value> atoms;
      for (std::size_t i = 0; i < maps.size(); ++i) {
        auto sub = cods[i].unpack(maps[i].on_pos(parts[i]));
        atoms.insert(atoms.end(), sub.begin(), sub.end());
      }
      return cod_all.pack(std::move(atoms));
    };
    m.on_dir = [maps, doms, cods, dom_all, split_all](const Value& pos, const Value& dir) {
      const auto ppos = split_all(doms, pos);
      const auto pdir = split_all(cods, dir);
      std::vector<Value> atoms;
      for (std::size_t i = 0; i < maps.size(); ++i) {
        auto sub = doms[i].unpack(maps[i].on_dir(ppos[i], pdir[i]));
        atoms.insert(atoms.end(), sub.begin(), sub.end());
      }
      return dom_all.pack(std::move(atoms));
    };
    return m;
  };
  out.upd = [comps, doms, cods, split_all](const State& s, const Value& pos,
                                           const Value& dir) {
    const auto& xs = as_list_state(s);
    const auto ppos = split_all(doms, pos);
    const auto pdir = split_all(cods, dir);
    std::vector<State> next;
    next.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      next.push_back((*comps)[i].upd(xs[i], ppos[i], pdir[i]));
    return list_state(std::move(next));
  };
  return out;
}

std::string MorphismReport::summary() const {
  std::ostringstream os;
  os << "checked " << checked << " sampled flows, " << failures.size() << " failure(s)";
  if (!failures.empty()) {
    const auto& f = failures.front();
    os << "; first: " << f.what << " at state " << f.state << ", flow " << f.flow
       << ", lhs " << f.lhs << ", rhs " << f.rhs;
  }
  return os.str();
}

void MorphismReport::record(FlowFailure f) {
  if (failures.size() < kMaxFailures) failures.push_back(std::move(f));
}

void MorphismReport::merge(const MorphismReport& other) {
  checked += other.checked;
  for (const auto& f : other.failures) record(f);
}

MorphismReport check_morphism(const std::function<State(const State&)>& f,
                              const Coalgebra& c, const Coalgebra& cprime,
                              std::size_t samples, Seed seed, double tol) {
  if (!same_interface(c.dom, cprime.dom) || !same_interface(c.cod, cprime.cod))
    throw std::invalid_argument("check_morphism: machines must share interfaces");
  MorphismReport report;
  if (c.states.empty()) return report;  // vacuous
  for (std::size_t k = 0; k < samples; ++k) {
    const Seed sk = mix_seed(seed, k);
    const State s = c.states.sample(mix_seed(sk, "state"));
    const State fs = f(s);
    const Value pos = c.dom.sample_pos(mix_seed(sk, "pos"));
    const PolyMap ma = c.act(s);
    const PolyMap mb = cprime.act(fs);
    const Value ja = ma.on_pos(pos);
    const Value jb = mb.on_pos(pos);
    ++report.checked;
    if (!approx_equal(ja, jb, tol)) {
      report.record({c.states.describe(s), pos.to_string(), ja.to_string(),
                     jb.to_string(), "action disagrees on a position"});
      continue;
    }
    const Value dir = c.cod.sample_dir(ja, mix_seed(sk, "dir"));
    const Value da = ma.on_dir(pos, dir);
    const Value db = mb.on_dir(pos, dir);
    if (!approx_equal(da, db, tol)) {
      report.record({c.states.describe(s), flow_string(pos, dir), da.to_string(),
                     db.to_string(), "action disagrees on a direction"});
      continue;
    }
    const State lhs = f(c.upd(s, pos, dir));
    const State rhs = cprime.upd(fs, pos, dir);
    if (!cprime.states.equal(lhs, rhs)) {
      report.record({c.states.describe(s), flow_string(pos, dir),
                     cprime.states.describe(lhs), cprime.states.describe(rhs),
                     "update does not commute"});
    }
  }
  return report;
}

MorphismReport check_square(const PolyMap& phi, const PolyMap& psi, const Coalgebra& c,
                            const Coalgebra& cprime,
                            const std::function<State(const State&)>& f,
                            std::size_t samples, Seed seed, double tol) {
  if (!same_interface(phi.dom, c.dom) || !same_interface(phi.cod, cprime.dom) ||
      !same_interface(psi.dom, c.cod) || !same_interface(psi.cod, cprime.cod))
    throw std::invalid_argument("check_square: vertical maps do not match interfaces");
  MorphismReport report;
  if (c.states.empty()) return report;  // vacuous
  for (std::size_t k = 0; k < samples; ++k) {
    const Seed sk = mix_seed(seed, k);
    const State s = c.states.sample(mix_seed(sk, "state"));
    const State fs = f(s);
    const Value pos = c.dom.sample_pos(mix_seed(sk, "pos"));
    const PolyMap ma = c.act(s);
    const PolyMap mb = cprime.act(fs);
    const Value mid = ma.on_pos(pos);
    const Value top = psi.on_pos(mid);
    const Value bottom = mb.on_pos(phi.on_pos(pos));
    ++report.checked;
    if (!approx_equal(top, bottom, tol)) {
      report.record({c.states.describe(s), pos.to_string(), top.to_string(),
                     bottom.to_string(), "position routes disagree"});
      continue;
    }
    const Value dir = cprime.cod.sample_dir(top, mix_seed(sk, "dir"));
    const Value pulled = psi.on_dir(mid, dir);
    const Value via_c = ma.on_dir(pos, pulled);
    const Value via_cprime = phi.on_dir(pos, mb.on_dir(phi.on_pos(pos), dir));
    if (!approx_equal(via_c, via_cprime, tol)) {
      report.record({c.states.describe(s), flow_string(pos, dir), via_c.to_string(),
                     via_cprime.to_string(), "direction routes disagree"});
      continue;
    }
    const State lhs = f(c.upd(s, pos, pulled));
    const State rhs = cprime.upd(fs, phi.on_pos(pos), dir);
    if (!cprime.states.equal(lhs, rhs)) {
      report.record({c.states.describe(s), flow_string(pos, dir),
                     cprime.states.describe(lhs), cprime.states.describe(rhs),
                     "update does not commute"});
    }
  }
  return report;
}

BehaviorTree unfold(const Coalgebra& c, const State& s, std::size_t depth,
                    std::size_t probes_per_node, Seed seed) {
  BehaviorTree node;
  node.root_map = c.act(s);
  node.depth = depth;
  if (depth == 0) return node;
  node.branches.reserve(probes_per_node);
  for (std::size_t k = 0; k < probes_per_node; ++k) {
    const Seed sk = mix_seed(seed, k);
    const Value pos = c.dom.sample_pos(mix_seed(sk, "pos"));
    const Value out = node.root_map.on_pos(pos);
    const Value dir = c.cod.sample_dir(out, mix_seed(sk, "dir"));
    auto child = std::make_shared<BehaviorTree>(unfold(
        c, c.upd(s, pos, dir), depth - 1, probes_per_node, unfold_branch_seed(seed, k)));
    node.branches.push_back({pos, dir, std::move(child)});
  }
  return node;
}

bool trees_equal(const BehaviorTree& a, const BehaviorTree& b, std::size_t probes,
                 Seed seed, double tol) {
  if (a.depth != b.depth || a.branches.size() != b.branches.size()) return false;
  if (!maps_agree(a.root_map, b.root_map, probes, mix_seed(seed, "maps"), tol))
    return false;
  for (std::size_t k = 0; k < a.branches.size(); ++k) {
    const auto& ba = a.branches[k];
    const auto& bb = b.branches[k];
    if (!approx_equal(ba.pos, bb.pos, tol) || !approx_equal(ba.dir, bb.dir, tol))
      return false;
    if (!trees_equal(*ba.child, *bb.child, probes, mix_seed(seed, k), tol)) return false;
  }
  return true;
}

}  // namespace dynorg
