#include "dynorg/dynstruct.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "json.hpp"

namespace dynorg {

namespace {

std::string arity_list_string(const std::vector<std::size_t>& xs) {
  std::string out = "(";
  for (std::size_t i = 0; i < xs.size(); ++i)
    out += (i ? "," : "") + std::to_string(xs[i]);
  return out + ")";
}

std::size_t sum_of(const std::vector<std::size_t>& xs) {
  return std::accumulate(xs.begin(), xs.end(), std::size_t{0});
}

/// All lists with length <= max_len and entry sum <= max_total (entries may
/// be zero; includes the empty list).
std::vector<std::vector<std::size_t>> arity_lists(std::size_t max_total,
                                                  std::size_t max_len) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t)> go = [&](std::size_t remaining) {
    out.push_back(cur);
    if (cur.size() == max_len) return;
    for (std::size_t v = 0; v <= remaining; ++v) {
      cur.push_back(v);
      go(remaining - v);
      cur.pop_back();
    }
  };
  go(max_total);
  return out;
}

/// All len-tuples with entries in [0, max].
std::vector<std::vector<std::size_t>> grids(std::size_t len, std::size_t max) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(len, 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = 0;
    while (i < len && cur[i] == max) cur[i++] = 0;
    if (i == len) break;
    ++cur[i];
  }
  return out;
}

template <typename Body>
void run_family(LawReport& report, const std::string& name, std::size_t iterations,
                Body&& body) {
  LawResult result;
  result.law = name;
  for (std::size_t k = 0; k < iterations; ++k) {
    try {
      body(k, result);
    } catch (const std::exception& e) {
      result.record("iteration " + std::to_string(k),
                    std::string("exception: ") + e.what());
    }
  }
  report.laws.push_back(std::move(result));
}

void absorb(LawResult& result, const MorphismReport& rep, const std::string& context) {
  result.checked += rep.checked;
  for (const auto& f : rep.failures)
    result.record(context, f.what + "; state " + f.state + ", flow " + f.flow +
                               ", lhs " + f.lhs + ", rhs " + f.rhs);
}

/// Memoized family of machines indexed by one or two arities.
template <typename Key, typename Make>
class MachineCache {
 public:
  explicit MachineCache(Make make) : make_(std::move(make)) {}
  const Coalgebra& operator()(const Key& key) {
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, make_(key)).first;
    return it->second;
  }

 private:
  Make make_;
  std::map<Key, Coalgebra> cache_;
};

}  // namespace

State operad_compose(const DynamicOperad& o, const State& outer,
                     const std::vector<State>& inners) {
  if (!o.compositor) throw std::invalid_argument("operad_compose: missing compositor");
  return o.compositor(outer, inners);
}

State pro_identity(const DynamicPRO& p, std::size_t n) {
  if (!p.identitor) throw std::invalid_argument("pro_identity: missing identitor");
  return p.identitor(n);
}

State pro_compose(const DynamicPRO& p, const State& s, const State& t) {
  if (!p.compositor) throw std::invalid_argument("pro_compose: missing compositor");
  return p.compositor(s, t);
}

State pro_product(const DynamicPRO& p, const State& s, const State& t) {
  if (!p.productor) throw std::invalid_argument("pro_product: missing productor");
  return p.productor(s, t);
}

void LawResult::record(std::string context, std::string detail) {
  if (failures.size() < kMaxFailures)
    failures.push_back({std::move(context), std::move(detail)});
}

bool LawReport::passed() const {
  for (const auto& l : laws)
    if (!l.passed()) return false;
  return true;
}

const LawResult* LawReport::find(std::string_view law) const {
  for (const auto& l : laws)
    if (l.law == law) return &l;
  return nullptr;
}

std::string LawReport::summary() const {
  std::ostringstream os;
  os << structure << ": " << (passed() ? "all laws hold" : "LAW VIOLATIONS") << "\n";
  for (const auto& l : laws) {
    os << "  " << (l.passed() ? "ok  " : "FAIL") << " " << l.law << " (checked "
       << l.checked << ")";
    if (!l.failures.empty())
      os << " e.g. " << l.failures.front().context << ": " << l.failures.front().detail;
    os << "\n";
  }
  return os.str();
}

std::string LawReport::json_string() const {
  nlohmann::json j;
  j["structure"] = structure;
  j["seed"] = seed;
  j["samples"] = samples;
  j["tol"] = tol;
  j["passed"] = passed();
  j["laws"] = nlohmann::json::array();
  for (const auto& l : laws) {
    nlohmann::json jl;
    jl["law"] = l.law;
    jl["checked"] = l.checked;
    jl["passed"] = l.passed();
    jl["failures"] = nlohmann::json::array();
    for (const auto& f : l.failures)
      jl["failures"].push_back({{"context", f.context}, {"detail", f.detail}});
    j["laws"].push_back(jl);
  }
  return j.dump(2);
}

LawReport check_operad_laws(const DynamicOperad& o, const OperadLawConfig& cfg) {
  LawReport report;
  report.structure = "operad[" + o.interface.name() + "]";
  report.seed = cfg.seed;
  report.samples = cfg.samples;
  report.tol = cfg.tol;

  auto S = std::make_shared<MachineCache<std::size_t, std::function<Coalgebra(std::size_t)>>>(
      o.coalgebra);
  const PolyInterface p = o.interface;
  auto ident = o.identitor;
  auto comp = o.compositor;

  // The identity state interprets exactly like the one-state identity
  // machine, and stays fixed under every flow.
  {
    const Coalgebra idc = identity_coalgebra(p);
    run_family(report, "identity state is a machine morphism", cfg.samples,
               [&, ident](std::size_t k, LawResult& result) {
                 auto rep = check_morphism([ident](const State&) { return ident(); },
                                           idc, (*S)(1), 1,
                                           mix_seed(mix_seed(cfg.seed, "id-morph"), k),
                                           cfg.tol);
                 absorb(result, rep, "sample " + std::to_string(k));
               });
  }

  // Substitution is a machine morphism from (inners in parallel, then outer)
  // to the substituted machine, for every shape within the arity budget.
  {
    const auto shapes = arity_lists(cfg.max_total_arity, cfg.max_total_arity);
    struct Case {
      bool usable = false;
      Coalgebra src;
      std::size_t target = 0;
    };
    auto cases = std::make_shared<std::map<std::size_t, Case>>();
    auto get_case = [&, cases](std::size_t idx) -> const Case& {
      auto it = cases->find(idx);
      if (it != cases->end()) return it->second;
      const auto& shape = shapes[idx];
      Case c;
      c.target = sum_of(shape);
      bool ok = !(*S)(shape.size()).states.empty() && !(*S)(c.target).states.empty();
      std::vector<Coalgebra> inners;
      for (std::size_t m : shape) {
        inners.push_back((*S)(m));
        ok = ok && !inners.back().states.empty();
      }
      if (ok) c.src = compose(tensor_many(inners), (*S)(shape.size()));
      c.usable = ok;
      return cases->emplace(idx, std::move(c)).first->second;
    };
    auto f = [comp](const State& s) {
      const auto& pr = as_pair_state(s);
      return comp(pr.second, as_list_state(pr.first));
    };
    const std::size_t iters = std::max(cfg.samples, shapes.size());
    run_family(report, "substitution is a machine morphism", iters,
               [&](std::size_t k, LawResult& result) {
                 const std::size_t idx = k % shapes.size();
                 const Case& c = get_case(idx);
                 if (!c.usable) return;
                 auto rep = check_morphism(
                     f, c.src, (*S)(c.target), 1,
                     mix_seed(mix_seed(cfg.seed, "comp-morph"), k), cfg.tol);
                 absorb(result, rep,
                        "shape " + arity_list_string(shapes[idx]) + ", iteration " +
                            std::to_string(k));
               });
  }

  // Substituting identities into s gives back s.
  run_family(report, "identities are right units for substitution", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t n = 1 + k % cfg.max_total_arity;
               const Coalgebra& sn = (*S)(n);
               if (sn.states.empty()) return;
               const State s =
                   sn.states.sample(mix_seed(mix_seed(cfg.seed, "unit-right"), k));
               const std::vector<State> ids(n, ident());
               const State t = comp(s, ids);
               ++result.checked;
               if (!sn.states.equal(t, s))
                 result.record("arity " + std::to_string(n) + ", iteration " +
                                   std::to_string(k),
                               "substituting identities changed the state to " +
                                   sn.states.describe(t));
             });

  // Substituting s into the identity gives back s.
  run_family(report, "the identity is a left unit for substitution", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t n = k % (cfg.max_total_arity + 1);
               const Coalgebra& sn = (*S)(n);
               if (sn.states.empty()) return;
               const State s =
                   sn.states.sample(mix_seed(mix_seed(cfg.seed, "unit-left"), k));
               const State t = comp(ident(), {s});
               ++result.checked;
               if (!sn.states.equal(t, s))
                 result.record("arity " + std::to_string(n) + ", iteration " +
                                   std::to_string(k),
                               "substituting into the identity changed the state to " +
                                   sn.states.describe(t));
             });

  // Nested substitution agrees with flattened substitution.
  {
    struct Shape {
      std::vector<std::size_t> mids;
      std::vector<std::vector<std::size_t>> inners;
    };
    std::vector<Shape> shapes;
    for (const auto& mids : arity_lists(cfg.max_total_arity, cfg.max_total_arity)) {
      Shape shape;
      shape.mids = mids;
      shape.inners.assign(mids.size(), {});
      std::function<void(std::size_t, std::size_t)> assign = [&](std::size_t i,
                                                                 std::size_t budget) {
        if (i == mids.size()) {
          shapes.push_back(shape);
          return;
        }
        std::vector<std::size_t> cur;
        std::function<void(std::size_t, std::size_t)> go = [&](std::size_t j,
                                                               std::size_t rem) {
          if (j == mids[i]) {
            shape.inners[i] = cur;
            assign(i + 1, rem);
            return;
          }
          for (std::size_t v = 0; v <= rem; ++v) {
            cur.push_back(v);
            go(j + 1, rem - v);
            cur.pop_back();
          }
        };
        go(0, budget);
      };
      assign(0, cfg.max_total_arity);
    }
    const std::size_t iters = std::max(cfg.samples, shapes.size());
    run_family(
        report, "substitution is associative", iters,
        [&](std::size_t k, LawResult& result) {
          const Shape& shape = shapes[k % shapes.size()];
          const std::size_t n = shape.mids.size();
          if ((*S)(n).states.empty()) return;
          std::size_t total = 0;
          for (const auto& row : shape.inners) total += sum_of(row);
          const Coalgebra& starget = (*S)(total);
          if (starget.states.empty()) return;
          const Seed sk = mix_seed(mix_seed(cfg.seed, "assoc"), k);
          const State s = (*S)(n).states.sample(mix_seed(sk, "outer"));
          std::vector<State> ts;
          std::vector<State> flat;
          std::vector<State> fused;
          for (std::size_t i = 0; i < n; ++i) {
            const Coalgebra& smi = (*S)(shape.mids[i]);
            if (smi.states.empty()) return;
            ts.push_back(smi.states.sample(mix_seed(sk, i + 1)));
            std::vector<State> us;
            for (std::size_t j = 0; j < shape.inners[i].size(); ++j) {
              const Coalgebra& slij = (*S)(shape.inners[i][j]);
              if (slij.states.empty()) return;
              us.push_back(slij.states.sample(mix_seed(mix_seed(sk, i + 1), j + 1)));
              flat.push_back(us.back());
            }
            fused.push_back(comp(ts[i], us));
          }
          const State lhs = comp(comp(s, ts), flat);
          const State rhs = comp(s, fused);
          ++result.checked;
          if (!starget.states.equal(lhs, rhs))
            result.record("shape " + arity_list_string(shape.mids) + ", iteration " +
                              std::to_string(k),
                          "lhs " + starget.states.describe(lhs) + ", rhs " +
                              starget.states.describe(rhs));
        });
  }

  return report;
}

LawReport check_pro_laws(const DynamicPRO& p, const PROLawConfig& cfg) {
  LawReport report;
  report.structure = "pro[" + p.interface.name() + "]";
  report.seed = cfg.seed;
  report.samples = cfg.samples;
  report.tol = cfg.tol;

  using Key = std::pair<std::size_t, std::size_t>;
  auto S = std::make_shared<MachineCache<Key, std::function<Coalgebra(const Key&)>>>(
      [&p](const Key& k) { return p.coalgebra(k.first, k.second); });
  const PolyInterface iface = p.interface;
  auto ident = p.identitor;
  auto comp = p.compositor;
  auto prod = p.productor;
  const std::size_t top = cfg.max_arity;

  auto sample_state = [S](std::size_t m, std::size_t n, Seed seed,
                          State& out) -> bool {
    const Coalgebra& c = (*S)({m, n});
    if (c.states.empty()) return false;
    out = c.states.sample(seed);
    return true;
  };

  // Identity states interpret like the identity machine and stay fixed.
  run_family(report, "identity states are machine morphisms", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t n = k % (top + 1);
               const Coalgebra idc = identity_coalgebra(power_interface(iface, n));
               auto rep = check_morphism([ident, n](const State&) { return ident(n); },
                                         idc, (*S)({n, n}), 1,
                                         mix_seed(mix_seed(cfg.seed, "id-morph"), k),
                                         cfg.tol);
               absorb(result, rep,
                      "arity " + std::to_string(n) + ", iteration " + std::to_string(k));
             });

  // Sequential composition is a machine morphism from the composite machine.
  {
    const auto combos = grids(3, top);
    auto f = [comp](const State& s) {
      const auto& pr = as_pair_state(s);
      return comp(pr.first, pr.second);
    };
    auto cases = std::make_shared<std::map<std::size_t, Coalgebra>>();
    const std::size_t iters = std::max(cfg.samples, combos.size());
    run_family(report, "sequential composition is a machine morphism", iters,
               [&, cases](std::size_t k, LawResult& result) {
                 const std::size_t idx = k % combos.size();
                 const auto& c = combos[idx];
                 const std::size_t l = c[0], m = c[1], n = c[2];
                 if ((*S)({l, m}).states.empty() || (*S)({m, n}).states.empty() ||
                     (*S)({l, n}).states.empty())
                   return;
                 auto it = cases->find(idx);
                 if (it == cases->end())
                   it = cases->emplace(idx, compose((*S)({l, m}), (*S)({m, n}))).first;
                 auto rep = check_morphism(
                     f, it->second, (*S)({l, n}), 1,
                     mix_seed(mix_seed(cfg.seed, "comp-morph"), k), cfg.tol);
                 absorb(result, rep,
                        "arities " + arity_list_string({l, m, n}) + ", iteration " +
                            std::to_string(k));
               });
  }

  // Parallel product is a machine morphism from the tensor machine.
  {
    const auto combos = grids(4, top);
    auto f = [prod](const State& s) {
      const auto& pr = as_pair_state(s);
      return prod(pr.first, pr.second);
    };
    auto cases = std::make_shared<std::map<std::size_t, Coalgebra>>();
    const std::size_t iters = std::max(cfg.samples, combos.size());
    run_family(report, "parallel product is a machine morphism", iters,
               [&, cases](std::size_t k, LawResult& result) {
                 const std::size_t idx = k % combos.size();
                 const auto& c = combos[idx];
                 const std::size_t m = c[0], n = c[1], mp = c[2], np = c[3];
                 if ((*S)({m, n}).states.empty() || (*S)({mp, np}).states.empty() ||
                     (*S)({m + mp, n + np}).states.empty())
                   return;
                 auto it = cases->find(idx);
                 if (it == cases->end())
                   it = cases->emplace(idx, tensor((*S)({m, n}), (*S)({mp, np}))).first;
                 auto rep = check_morphism(
                     f, it->second, (*S)({m + mp, n + np}), 1,
                     mix_seed(mix_seed(cfg.seed, "prod-morph"), k), cfg.tol);
                 absorb(result, rep,
                        "arities " + arity_list_string({m, n, mp, np}) + ", iteration " +
                            std::to_string(k));
               });
  }

  // Products of identities are identities.
  {
    const auto combos = grids(2, top);
    run_family(report, "identities interchange with the product",
               std::max(cfg.samples, combos.size()),
               [&](std::size_t k, LawResult& result) {
                 const auto& c = combos[k % combos.size()];
                 const std::size_t n = c[0], np = c[1];
                 const State lhs = prod(ident(n), ident(np));
                 const State rhs = ident(n + np);
                 ++result.checked;
                 if (!(*S)({n + np, n + np}).states.equal(lhs, rhs))
                   result.record("arities " + arity_list_string({n, np}),
                                 "product of identities is not the identity");
               });
  }

  // Composition and product interchange.
  {
    const auto combos = grids(6, top);
    run_family(
        report, "composition interchanges with the product",
        std::max(cfg.samples, combos.size()),
        [&](std::size_t k, LawResult& result) {
          const auto& c = combos[k % combos.size()];
          const std::size_t l = c[0], m = c[1], n = c[2];
          const std::size_t lp = c[3], mp = c[4], np = c[5];
          const Seed sk = mix_seed(mix_seed(cfg.seed, "interchange"), k);
          State s, t, sp, tp;
          if (!sample_state(l, m, mix_seed(sk, 1), s) ||
              !sample_state(m, n, mix_seed(sk, 2), t) ||
              !sample_state(lp, mp, mix_seed(sk, 3), sp) ||
              !sample_state(mp, np, mix_seed(sk, 4), tp))
            return;
          const State lhs = comp(prod(s, sp), prod(t, tp));
          const State rhs = prod(comp(s, t), comp(sp, tp));
          const Coalgebra& target = (*S)({l + lp, n + np});
          ++result.checked;
          if (!target.states.equal(lhs, rhs))
            result.record("arities " + arity_list_string({l, m, n, lp, mp, np}) +
                              ", iteration " + std::to_string(k),
                          "lhs " + target.states.describe(lhs) + ", rhs " +
                              target.states.describe(rhs));
        });
  }

  // Sequential composition is associative.
  {
    const auto combos = grids(4, top);
    run_family(report, "sequential composition is associative",
               std::max(cfg.samples, combos.size()),
               [&](std::size_t k, LawResult& result) {
                 const auto& c = combos[k % combos.size()];
                 const std::size_t a = c[0], b = c[1], d = c[2], e = c[3];
                 const Seed sk = mix_seed(mix_seed(cfg.seed, "comp-assoc"), k);
                 State s, t, u;
                 if (!sample_state(a, b, mix_seed(sk, 1), s) ||
                     !sample_state(b, d, mix_seed(sk, 2), t) ||
                     !sample_state(d, e, mix_seed(sk, 3), u))
                   return;
                 const State lhs = comp(comp(s, t), u);
                 const State rhs = comp(s, comp(t, u));
                 const Coalgebra& target = (*S)({a, e});
                 ++result.checked;
                 if (!target.states.equal(lhs, rhs))
                   result.record("arities " + arity_list_string({a, b, d, e}) +
                                     ", iteration " + std::to_string(k),
                                 "lhs " + target.states.describe(lhs) + ", rhs " +
                                     target.states.describe(rhs));
               });
  }

  // Identities are units for sequential composition.
  {
    const auto combos = grids(2, top);
    run_family(report, "identities are units for composition",
               std::max(cfg.samples, combos.size()),
               [&](std::size_t k, LawResult& result) {
                 const auto& c = combos[k % combos.size()];
                 const std::size_t m = c[0], n = c[1];
                 State s;
                 if (!sample_state(m, n,
                                   mix_seed(mix_seed(cfg.seed, "comp-unit"), k), s))
                   return;
                 const Coalgebra& target = (*S)({m, n});
                 const State left = comp(ident(m), s);
                 const State right = comp(s, ident(n));
                 ++result.checked;
                 if (!target.states.equal(left, s))
                   result.record("arities " + arity_list_string({m, n}),
                                 "left identity changed the state");
                 else if (!target.states.equal(right, s))
                   result.record("arities " + arity_list_string({m, n}),
                                 "right identity changed the state");
               });
  }

  // Parallel product is associative.
  {
    const auto combos = grids(6, top);
    run_family(
        report, "parallel product is associative",
        std::max(cfg.samples, combos.size()),
        [&](std::size_t k, LawResult& result) {
          const auto& c = combos[k % combos.size()];
          const Seed sk = mix_seed(mix_seed(cfg.seed, "prod-assoc"), k);
          State s, t, u;
          if (!sample_state(c[0], c[1], mix_seed(sk, 1), s) ||
              !sample_state(c[2], c[3], mix_seed(sk, 2), t) ||
              !sample_state(c[4], c[5], mix_seed(sk, 3), u))
            return;
          const State lhs = prod(prod(s, t), u);
          const State rhs = prod(s, prod(t, u));
          const Coalgebra& target = (*S)({c[0] + c[2] + c[4], c[1] + c[3] + c[5]});
          ++result.checked;
          if (!target.states.equal(lhs, rhs))
            result.record("arities " + arity_list_string(c) + ", iteration " +
                              std::to_string(k),
                          "lhs " + target.states.describe(lhs) + ", rhs " +
                              target.states.describe(rhs));
        });
  }

  // The empty identity is a unit for the parallel product.
  {
    const auto combos = grids(2, top);
    run_family(report, "the empty identity is a unit for the product",
               std::max(cfg.samples, combos.size()),
               [&](std::size_t k, LawResult& result) {
                 const auto& c = combos[k % combos.size()];
                 const std::size_t m = c[0], n = c[1];
                 State s;
                 if (!sample_state(m, n,
                                   mix_seed(mix_seed(cfg.seed, "prod-unit"), k), s))
                   return;
                 const Coalgebra& target = (*S)({m, n});
                 const State left = prod(ident(0), s);
                 const State right = prod(s, ident(0));
                 ++result.checked;
                 if (!target.states.equal(left, s))
                   result.record("arities " + arity_list_string({m, n}),
                                 "left empty-product changed the state");
                 else if (!target.states.equal(right, s))
                   result.record("arities " + arity_list_string({m, n}),
                                 "right empty-product changed the state");
               });
  }

  return report;
}

LawReport check_category_laws(const DynamicCategory& cat, const CategoryLawConfig& cfg) {
  LawReport report;
  report.structure = "category[" + std::to_string(cat.object_count) + " objects]";
  report.seed = cfg.seed;
  report.samples = cfg.samples;
  report.tol = cfg.tol;
  if (cat.object_count == 0) return report;

  using Key = std::pair<std::size_t, std::size_t>;
  auto H = std::make_shared<MachineCache<Key, std::function<Coalgebra(const Key&)>>>(
      [&cat](const Key& k) { return cat.hom(k.first, k.second); });
  const std::size_t nobj = cat.object_count;
  auto ident = cat.identitor;
  auto comp = cat.compositor;

  run_family(report, "identity states are machine morphisms", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t a = k % nobj;
               const Coalgebra idc = identity_coalgebra(cat.interface(a));
               auto rep = check_morphism([ident, a](const State&) { return ident(a); },
                                         idc, (*H)({a, a}), 1,
                                         mix_seed(mix_seed(cfg.seed, "id-morph"), k),
                                         cfg.tol);
               absorb(result, rep,
                      "object " + std::to_string(a) + ", iteration " + std::to_string(k));
             });

  run_family(report, "composition is a machine morphism", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t a = k % nobj, b = (k / nobj) % nobj,
                                 c = (k / (nobj * nobj)) % nobj;
               if ((*H)({a, b}).states.empty() || (*H)({b, c}).states.empty() ||
                   (*H)({a, c}).states.empty())
                 return;
               const Coalgebra src = compose((*H)({a, b}), (*H)({b, c}));
               auto f = [comp, a, b, c](const State& s) {
                 const auto& pr = as_pair_state(s);
                 return comp(a, b, c, pr.first, pr.second);
               };
               auto rep =
                   check_morphism(f, src, (*H)({a, c}), 1,
                                  mix_seed(mix_seed(cfg.seed, "comp-morph"), k), cfg.tol);
               absorb(result, rep,
                      "objects " + arity_list_string({a, b, c}) + ", iteration " +
                          std::to_string(k));
             });

  run_family(report, "identities are units for composition", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t a = k % nobj, b = (k / nobj) % nobj;
               const Coalgebra& hab = (*H)({a, b});
               if (hab.states.empty()) return;
               const State s =
                   hab.states.sample(mix_seed(mix_seed(cfg.seed, "unit"), k));
               const State left = comp(a, a, b, ident(a), s);
               const State right = comp(a, b, b, s, ident(b));
               ++result.checked;
               if (!hab.states.equal(left, s))
                 result.record("objects " + arity_list_string({a, b}),
                               "left identity changed the state");
               else if (!hab.states.equal(right, s))
                 result.record("objects " + arity_list_string({a, b}),
                               "right identity changed the state");
             });

  run_family(report, "composition is associative", cfg.samples,
             [&](std::size_t k, LawResult& result) {
               const std::size_t a = k % nobj, b = (k / nobj) % nobj,
                                 c = (k / (nobj * nobj)) % nobj,
                                 d = (k / (nobj * nobj * nobj)) % nobj;
               if ((*H)({a, b}).states.empty() || (*H)({b, c}).states.empty() ||
                   (*H)({c, d}).states.empty())
                 return;
               const Seed sk = mix_seed(mix_seed(cfg.seed, "assoc"), k);
               const State f = (*H)({a, b}).states.sample(mix_seed(sk, 1));
               const State g = (*H)({b, c}).states.sample(mix_seed(sk, 2));
               const State h = (*H)({c, d}).states.sample(mix_seed(sk, 3));
               const State lhs = comp(a, c, d, comp(a, b, c, f, g), h);
               const State rhs = comp(a, b, d, f, comp(b, c, d, g, h));
               const Coalgebra& target = (*H)({a, d});
               ++result.checked;
               if (!target.states.equal(lhs, rhs))
                 result.record("objects " + arity_list_string({a, b, c, d}),
                               "lhs " + target.states.describe(lhs) + ", rhs " +
                                   target.states.describe(rhs));
             });

  return report;
}

LawReport check_pro_morphism(const PROMorphism& h, const DynamicPRO& src,
                             const DynamicPRO& dst, const PROLawConfig& cfg) {
  LawReport report;
  report.structure =
      "pro morphism[" + src.interface.name() + " -> " + dst.interface.name() + "]";
  report.seed = cfg.seed;
  report.samples = cfg.samples;
  report.tol = cfg.tol;
  const std::size_t top = cfg.max_arity;

  using Key = std::pair<std::size_t, std::size_t>;
  auto Ssrc = std::make_shared<MachineCache<Key, std::function<Coalgebra(const Key&)>>>(
      [&src](const Key& k) { return src.coalgebra(k.first, k.second); });
  auto Sdst = std::make_shared<MachineCache<Key, std::function<Coalgebra(const Key&)>>>(
      [&dst](const Key& k) { return dst.coalgebra(k.first, k.second); });

  // Commutor squares: translated states interpret through the interface map.
  {
    const auto combos = grids(2, top);
    run_family(report, "state translations form squares",
               std::max(cfg.samples, combos.size()),
               [&](std::size_t k, LawResult& result) {
                 const auto& c = combos[k % combos.size()];
                 const std::size_t m = c[0], n = c[1];
                 if ((*Ssrc)({m, n}).states.empty()) return;
                 auto rep = check_square(
                     power_map(h.map, m), power_map(h.map, n), (*Ssrc)({m, n}),
                     (*Sdst)({m, n}), h.commutor(m, n), 1,
                     mix_seed(mix_seed(cfg.seed, "square"), k), cfg.tol);
                 absorb(result, rep,
                        "arities " + arity_list_string({m, n}) + ", iteration " +
                            std::to_string(k));
               });
  }

  run_family(report, "identities are preserved", std::max<std::size_t>(cfg.samples, 1),
             [&](std::size_t k, LawResult& result) {
               const std::size_t n = k % (top + 1);
               const State lhs = h.commutor(n, n)(src.identitor(n));
               const State rhs = dst.identitor(n);
               ++result.checked;
               if (!(*Sdst)({n, n}).states.equal(lhs, rhs))
                 result.record("arity " + std::to_string(n),
                               "translated identity differs from the identity");
             });

  {
    const auto combos = grids(3, top);
    run_family(
        report, "sequential composites are preserved",
        std::max(cfg.samples, combos.size()), [&](std::size_t k, LawResult& result) {
          const auto& c = combos[k % combos.size()];
          const std::size_t l = c[0], m = c[1], n = c[2];
          if ((*Ssrc)({l, m}).states.empty() || (*Ssrc)({m, n}).states.empty()) return;
          const Seed sk = mix_seed(mix_seed(cfg.seed, "comp-pres"), k);
          const State s = (*Ssrc)({l, m}).states.sample(mix_seed(sk, 1));
          const State t = (*Ssrc)({m, n}).states.sample(mix_seed(sk, 2));
          const State lhs = h.commutor(l, n)(src.compositor(s, t));
          const State rhs = dst.compositor(h.commutor(l, m)(s), h.commutor(m, n)(t));
          ++result.checked;
          if (!(*Sdst)({l, n}).states.equal(lhs, rhs))
            result.record("arities " + arity_list_string({l, m, n}),
                          "translated composite differs");
        });
  }

  {
    const auto combos = grids(4, top);
    run_family(
        report, "parallel products are preserved", std::max(cfg.samples, combos.size()),
        [&](std::size_t k, LawResult& result) {
          const auto& c = combos[k % combos.size()];
          const std::size_t m = c[0], n = c[1], mp = c[2], np = c[3];
          if ((*Ssrc)({m, n}).states.empty() || (*Ssrc)({mp, np}).states.empty())
            return;
          const Seed sk = mix_seed(mix_seed(cfg.seed, "prod-pres"), k);
          const State s = (*Ssrc)({m, n}).states.sample(mix_seed(sk, 1));
          const State t = (*Ssrc)({mp, np}).states.sample(mix_seed(sk, 2));
          const State lhs = h.commutor(m + mp, n + np)(src.productor(s, t));
          const State rhs = dst.productor(h.commutor(m, n)(s), h.commutor(mp, np)(t));
          ++result.checked;
          if (!(*Sdst)({m + mp, n + np}).states.equal(lhs, rhs))
            result.record("arities " + arity_list_string({m, n, mp, np}),
                          "translated product differs");
        });
  }

  return report;
}

LawReport terminal_unfold_check(const Coalgebra& c, std::size_t depth,
                                std::size_t probes, Seed seed) {
  LawReport report;
  report.structure =
      "terminal unfold[" + (c.states.name.empty() ? "machine" : c.states.name) + "]";
  report.seed = seed;
  report.samples = probes;
  report.tol = 1e-9;
  const double tol = 1e-9;

  LawResult result;
  result.law = "updating then unfolding reproduces the recorded subtree";
  if (!c.states.empty() && depth > 0) {
    for (std::size_t r = 0; r < 3; ++r) {
      try {
        const State s = c.states.sample(mix_seed(mix_seed(seed, "root"), r));
        const Seed tree_seed = mix_seed(mix_seed(seed, "tree"), r);
        const BehaviorTree t = unfold(c, s, depth, probes, tree_seed);
        for (std::size_t k = 0; k < t.branches.size(); ++k) {
          const auto& br = t.branches[k];
          const State s2 = c.upd(s, br.pos, br.dir);
          const BehaviorTree replay =
              unfold(c, s2, depth - 1, probes, unfold_branch_seed(tree_seed, k));
          ++result.checked;
          if (!trees_equal(replay, *br.child, 6,
                           mix_seed(mix_seed(seed, "cmp"), r * probes + k), tol))
            result.record("root " + std::to_string(r) + ", branch " + std::to_string(k),
                          "replayed subtree differs from the recorded one");
        }
      } catch (const std::exception& e) {
        result.record("root " + std::to_string(r), std::string("exception: ") + e.what());
      }
    }
  }
  report.laws.push_back(std::move(result));
  return report;
}

DynamicOperad collective_to_operad(const Collective& col) {
  if (col.interface.factor_count() != 1)
    throw std::invalid_argument("collective_to_operad: interface must be atomic");
  if (!col.interface.validate_pos(col.unit_pos))
    throw std::invalid_argument("collective_to_operad: unit position is invalid");
  const PolyInterface p = col.interface;
  const Value unit = col.unit_pos;
  auto mult = col.mult_pos;
  auto dist = col.distribute_dirs;

  auto aggregate_map = [p, unit, mult, dist](std::size_t n) {
    PolyMap m;
    const PolyInterface dom = power_interface(p, n);
    m.dom = dom;
    m.cod = p;
    m.on_pos = [dom, unit, mult, n](const Value& pos) {
      if (n == 0) return unit;
      const auto parts = dom.unpack(pos);
      Value acc = parts[0];
      for (std::size_t i = 1; i < parts.size(); ++i) acc = mult(acc, parts[i]);
      return acc;
    };
    m.on_dir = [dom, mult, dist, n](const Value& pos, const Value& dir) {
      if (n == 0) return Value::tuple({});
      const auto parts = dom.unpack(pos);
      std::vector<Value> prefix{parts[0]};  // prefix[i] = parts[0] * ... * parts[i]
      for (std::size_t i = 1; i < n; ++i) prefix.push_back(mult(prefix.back(), parts[i]));
      std::vector<Value> dirs(n, Value::unit());
      Value d = dir;
      for (std::size_t i = n; i-- > 1;) {
        auto [head, tail] = dist(prefix[i - 1], parts[i], d);
        dirs[i] = tail;
        d = head;
      }
      dirs[0] = d;
      return dom.pack(std::move(dirs));
    };
    return m;
  };

  DynamicOperad o;
  o.interface = p;
  o.coalgebra = [aggregate_map](std::size_t n) {
    Coalgebra c = singleton_coalgebra(aggregate_map(n));
    c.states.name = "aggregate[" + std::to_string(n) + "]";
    return c;
  };
  o.identitor = []() { return State(std::monostate{}); };
  o.compositor = [](const State&, const std::vector<State>&) {
    return State(std::monostate{});
  };
  return o;
}

DynamicOperad nullary_operad(const Coalgebra& c) {
  if (c.dom.factor_count() != 0)
    throw std::invalid_argument(
        "nullary_operad: the machine must take the unit domain interface");
  const PolyInterface p = c.cod;
  DynamicOperad o;
  o.interface = p;
  o.coalgebra = [c, p](std::size_t n) -> Coalgebra {
    if (n == 0) return c;
    if (n == 1) return identity_coalgebra(p);
    return empty_coalgebra(power_interface(p, n), p);
  };
  o.identitor = []() { return State(std::monostate{}); };
  o.compositor = [](const State& outer, const std::vector<State>& inners) -> State {
    if (inners.empty()) return outer;       // outer is the sole constant
    if (inners.size() == 1) return inners[0];  // outer is the identity
    throw std::logic_error("nullary_operad: no operations of arity two or more");
  };
  return o;
}

namespace {
struct BehaviorState {
  State base;
  std::size_t remaining = 0;
};
}  // namespace

TerminalPRO truncated_terminal_pro(const DynamicPRO& base, std::size_t depth,
                                   std::size_t probes, Seed seed) {
  const std::size_t cmp_probes = std::max<std::size_t>(1, std::min<std::size_t>(probes, 4));
  DynamicPRO out;
  out.interface = base.interface;
  out.coalgebra = [base, depth, cmp_probes, seed](std::size_t m, std::size_t n) {
    auto bc = std::make_shared<const Coalgebra>(base.coalgebra(m, n));
    Coalgebra t;
    t.dom = bc->dom;
    t.cod = bc->cod;
    t.states.name = "behavior[" + bc->states.name + "]";
    if (!bc->states.empty()) {
      t.states.sample = [bc, depth](Seed sd) {
        return State(BehaviorState{bc->states.sample(sd), depth});
      };
    }
    t.states.equal = [bc, cmp_probes, seed](const State& x, const State& y) {
      const auto& rx = std::any_cast<const BehaviorState&>(x);
      const auto& ry = std::any_cast<const BehaviorState&>(y);
      const std::size_t d = std::min(rx.remaining, ry.remaining);
      // Shared probe seed: equal-behaved states unfold along identical flows.
      const Seed probe_seed = mix_seed(seed, "behavior-eq");
      const BehaviorTree ta = unfold(*bc, rx.base, d, cmp_probes, probe_seed);
      const BehaviorTree tb = unfold(*bc, ry.base, d, cmp_probes, probe_seed);
      return trees_equal(ta, tb, 6, mix_seed(seed, "behavior-cmp"), 1e-9);
    };
    t.states.show = [bc](const State& s) {
      const auto& r = std::any_cast<const BehaviorState&>(s);
      return "behavior(" + bc->states.describe(r.base) + " to depth " +
             std::to_string(r.remaining) + ")";
    };
    t.act = [bc](const State& s) {
      return bc->act(std::any_cast<const BehaviorState&>(s).base);
    };
    t.upd = [bc](const State& s, const Value& pos, const Value& dir) {
      const auto& r = std::any_cast<const BehaviorState&>(s);
      return State(BehaviorState{bc->upd(r.base, pos, dir),
                                 r.remaining == 0 ? 0 : r.remaining - 1});
    };
    return t;
  };
  out.identitor = [base, depth](std::size_t n) {
    return State(BehaviorState{base.identitor(n), depth});
  };
  out.compositor = [base](const State& a, const State& b) {
    const auto& ra = std::any_cast<const BehaviorState&>(a);
    const auto& rb = std::any_cast<const BehaviorState&>(b);
    return State(BehaviorState{base.compositor(ra.base, rb.base),
                               std::min(ra.remaining, rb.remaining)});
  };
  out.productor = [base](const State& a, const State& b) {
    const auto& ra = std::any_cast<const BehaviorState&>(a);
    const auto& rb = std::any_cast<const BehaviorState&>(b);
    return State(BehaviorState{base.productor(ra.base, rb.base),
                               std::min(ra.remaining, rb.remaining)});
  };

  TerminalPRO result;
  result.pro = std::move(out);
  result.include = [depth](const State& s) { return State(BehaviorState{s, depth}); };
  return result;
}

}  // namespace dynorg
