#include "dynorg/poly.hpp"

#include <stdexcept>

namespace dynorg {

PolyInterface::PolyInterface(PolyAtom atom) {
  if (!atom.validate_pos || !atom.validate_dir || !atom.sample_pos || !atom.sample_dir)
    throw std::invalid_argument("PolyInterface: atom '" + atom.name +
                                "' is missing a validator or sampler");
  factors_.push_back(std::make_shared<const PolyAtom>(std::move(atom)));
}

std::string PolyInterface::name() const {
  if (factors_.empty()) return "1";
  if (factors_.size() == 1) return factors_[0]->name;
  std::string out = factors_[0]->name;
  for (std::size_t i = 1; i < factors_.size(); ++i) out += "*" + factors_[i]->name;
  return out;
}

double PolyInterface::tol() const {
  double t = 1e-9;
  for (const auto& f : factors_) t = std::max(t, f->tol);
  return t;
}

Value PolyInterface::pack(std::vector<Value> parts) const {
  if (parts.size() != factors_.size())
    throw std::invalid_argument("PolyInterface::pack: expected " +
                                std::to_string(factors_.size()) + " parts, got " +
                                std::to_string(parts.size()));
  if (factors_.size() == 1) return std::move(parts[0]);
  return Value::tuple(std::move(parts));
}

std::vector<Value> PolyInterface::unpack(const Value& v) const {
  if (factors_.size() == 1) return {v};
  const auto& items = v.as_tuple();
  if (items.size() != factors_.size())
    throw std::invalid_argument("PolyInterface::unpack: interface " + name() +
                                " expects a " + std::to_string(factors_.size()) +
                                "-tuple, got " + v.to_string());
  return items;
}

bool PolyInterface::validate_pos(const Value& pos) const {
  if (factors_.size() == 1) return factors_[0]->validate_pos(pos);
  if (!pos.is_tuple() || pos.as_tuple().size() != factors_.size()) return false;
  const auto& items = pos.as_tuple();
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (!factors_[i]->validate_pos(items[i])) return false;
  return true;
}

bool PolyInterface::validate_dir(const Value& pos, const Value& dir) const {
  if (!validate_pos(pos)) return false;
  if (factors_.size() == 1) return factors_[0]->validate_dir(pos, dir);
  if (!dir.is_tuple() || dir.as_tuple().size() != factors_.size()) return false;
  const auto& ps = pos.as_tuple();
  const auto& ds = dir.as_tuple();
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (!factors_[i]->validate_dir(ps[i], ds[i])) return false;
  return true;
}

Value PolyInterface::sample_pos(Seed seed) const {
  std::vector<Value> parts;
  parts.reserve(factors_.size());
  for (std::size_t i = 0; i < factors_.size(); ++i)
    parts.push_back(factors_[i]->sample_pos(mix_seed(seed, i)));
  return pack(std::move(parts));
}

Value PolyInterface::sample_dir(const Value& pos, Seed seed) const {
  const auto ps = unpack(pos);
  std::vector<Value> parts;
  parts.reserve(factors_.size());
  for (std::size_t i = 0; i < factors_.size(); ++i)
    parts.push_back(factors_[i]->sample_dir(ps[i], mix_seed(seed, i)));
  return pack(std::move(parts));
}

PolyInterface tensor_interface(const PolyInterface& p, const PolyInterface& q) {
  PolyInterface out;
  out.factors_ = p.factors_;
  out.factors_.insert(out.factors_.end(), q.factors_.begin(), q.factors_.end());
  return out;
}

PolyInterface power_interface(const PolyInterface& p, std::size_t n) {
  PolyInterface out;
  for (std::size_t i = 0; i < n; ++i) out = tensor_interface(out, p);
  return out;
}

bool same_interface(const PolyInterface& p, const PolyInterface& q) {
  if (p.factor_count() != q.factor_count()) return false;
  for (std::size_t i = 0; i < p.factor_count(); ++i)
    if (p.factor(i).name != q.factor(i).name) return false;
  return true;
}

std::pair<Value, Value> split_value(const PolyInterface& p, const PolyInterface& q,
                                    const Value& v) {
  const auto parts = tensor_interface(p, q).unpack(v);
  std::vector<Value> left(parts.begin(), parts.begin() + p.factor_count());
  std::vector<Value> right(parts.begin() + p.factor_count(), parts.end());
  return {p.pack(std::move(left)), q.pack(std::move(right))};
}

Value join_values(const PolyInterface& p, const PolyInterface& q, const Value& a,
                  const Value& b) {
  auto parts = p.unpack(a);
  auto rest = q.unpack(b);
  parts.insert(parts.end(), rest.begin(), rest.end());
  return tensor_interface(p, q).pack(std::move(parts));
}

PolyMap identity_map(const PolyInterface& p) {
  PolyMap m;
  m.dom = p;
  m.cod = p;
  m.on_pos = [](const Value& pos) { return pos; };
  m.on_dir = [](const Value&, const Value& dir) { return dir; };
  return m;
}

PolyMap compose_maps(const PolyMap& f, const PolyMap& g) {
  if (!same_interface(f.cod, g.dom))
    throw std::invalid_argument("compose_maps: interface mismatch, " + f.cod.name() +
                                " vs " + g.dom.name());
  PolyMap m;
  m.dom = f.dom;
  m.cod = g.cod;
  auto f_pos = f.on_pos;
  auto g_pos = g.on_pos;
  auto f_dir = f.on_dir;
  auto g_dir = g.on_dir;
  m.on_pos = [f_pos, g_pos](const Value& pos) { return g_pos(f_pos(pos)); };
  m.on_dir = [f_pos, f_dir, g_dir](const Value& pos, const Value& dir) {
    return f_dir(pos, g_dir(f_pos(pos), dir));
  };
  return m;
}

PolyMap tensor_maps(const PolyMap& f, const PolyMap& g) {
  PolyMap m;
  m.dom = tensor_interface(f.dom, g.dom);
  m.cod = tensor_interface(f.cod, g.cod);
  const PolyInterface fdom = f.dom, gdom = g.dom, fcod = f.cod, gcod = g.cod;
  auto f_pos = f.on_pos;
  auto g_pos = g.on_pos;
  auto f_dir = f.on_dir;
  auto g_dir = g.on_dir;
  m.on_pos = [=](const Value& pos) {
    auto [a, b] = split_value(fdom, gdom, pos);
    return join_values(fcod, gcod, f_pos(a), g_pos(b));
  };
  m.on_dir = [=](const Value& pos, const Value& dir) {
    auto [a, b] = split_value(fdom, gdom, pos);
    auto [da, db] = split_value(fcod, gcod, dir);
    return join_values(fdom, gdom, f_dir(a, da), g_dir(b, db));
  };
  return m;
}

PolyMap power_map(const PolyMap& f, std::size_t n) {
  PolyMap out = identity_map(PolyInterface::unit());
  for (std::size_t i = 0; i < n; ++i) out = tensor_maps(out, f);
  return out;
}

bool maps_agree(const PolyMap& f, const PolyMap& g, std::size_t probes, Seed seed,
                double tol) {
  if (!same_interface(f.dom, g.dom) || !same_interface(f.cod, g.cod)) return false;
  for (std::size_t k = 0; k < probes; ++k) {
    const Seed sk = mix_seed(seed, k);
    const Value pos = f.dom.sample_pos(mix_seed(sk, "pos"));
    const Value fj = f.on_pos(pos);
    const Value gj = g.on_pos(pos);
    if (!approx_equal(fj, gj, tol)) return false;
    const Value dir = f.cod.sample_dir(fj, mix_seed(sk, "dir"));
    if (!approx_equal(f.on_dir(pos, dir), g.on_dir(pos, dir), tol)) return false;
  }
  return true;
}

PolyInterface real_line_interface(const std::string& name) {
  PolyAtom atom;
  atom.name = name;
  atom.validate_pos = [](const Value& v) { return v.is_real(); };
  atom.validate_dir = [](const Value&, const Value& d) { return d.is_real(); };
  atom.sample_pos = [](Seed s) {
    SplitMix64 g{s};
    return Value::real(g.uniform(-2.0, 2.0));
  };
  atom.sample_dir = [](const Value&, Seed s) {
    SplitMix64 g{s};
    return Value::real(g.uniform(-1.0, 1.0));
  };
  return PolyInterface(std::move(atom));
}

PolyInterface trivial_interface() {
  PolyAtom atom;
  atom.name = "y";
  atom.validate_pos = [](const Value& v) { return v.is_unit(); };
  atom.validate_dir = [](const Value&, const Value& d) { return d.is_unit(); };
  atom.sample_pos = [](Seed) { return Value::unit(); };
  atom.sample_dir = [](const Value&, Seed) { return Value::unit(); };
  return PolyInterface(std::move(atom));
}

}  // namespace dynorg
