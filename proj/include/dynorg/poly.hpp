#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynorg/rng.hpp"
#include "dynorg/value.hpp"

namespace dynorg {

/// One atomic interface: recognizers and seeded samplers for its positions
/// and for the directions available at each position. Position sets are kept
/// semantic (validator + sampler) rather than materialized, so interfaces over
/// continuous carriers cost nothing.
struct PolyAtom {
  std::string name;
  double tol = 1e-9;
  std::function<bool(const Value&)> validate_pos;
  std::function<bool(const Value&, const Value&)> validate_dir;
  std::function<Value(Seed)> sample_pos;
  std::function<Value(const Value&, Seed)> sample_dir;
};

/// A monomial-indexed interface, stored in flattened tensor form as a list of
/// atomic factors. Positions (and directions) of a k-factor interface are
/// flat k-tuples; a single factor uses bare values and zero factors use the
/// empty tuple. With this representation the tensor unit and associators are
/// identities, so re-associating maps never appear in composites.
class PolyInterface {
 public:
  PolyInterface() = default;  // the tensor unit: zero factors
  explicit PolyInterface(PolyAtom atom);

  static PolyInterface unit() { return PolyInterface(); }

  std::size_t factor_count() const { return factors_.size(); }
  bool is_unit() const { return factors_.empty(); }
  const PolyAtom& factor(std::size_t i) const { return *factors_.at(i); }

  std::string name() const;
  double tol() const;

  bool validate_pos(const Value& pos) const;
  bool validate_dir(const Value& pos, const Value& dir) const;
  Value sample_pos(Seed seed) const;
  Value sample_dir(const Value& pos, Seed seed) const;

  /// Canonical packing of one value per factor into a position/direction.
  Value pack(std::vector<Value> parts) const;
  /// Inverse of pack; throws if the shape does not match.
  std::vector<Value> unpack(const Value& v) const;

  friend PolyInterface tensor_interface(const PolyInterface& p, const PolyInterface& q);

 private:
  std::vector<std::shared_ptr<const PolyAtom>> factors_;
};

PolyInterface tensor_interface(const PolyInterface& p, const PolyInterface& q);
PolyInterface power_interface(const PolyInterface& p, std::size_t n);

/// Interfaces are compared by factor names; builders give the stock
/// interfaces stable names so structurally equal interfaces compare equal.
bool same_interface(const PolyInterface& p, const PolyInterface& q);

/// Splits a position/direction of tensor_interface(p, q) into its p- and
/// q-components; join_values is the inverse.
std::pair<Value, Value> split_value(const PolyInterface& p, const PolyInterface& q,
                                    const Value& v);
Value join_values(const PolyInterface& p, const PolyInterface& q, const Value& a,
                  const Value& b);

/// A map of interfaces: forward on positions and, at each domain position,
/// backward on the codomain's directions.
struct PolyMap {
  PolyInterface dom, cod;
  std::function<Value(const Value&)> on_pos;
  /// (domain position I, direction of cod at on_pos(I)) -> direction of dom at I.
  std::function<Value(const Value&, const Value&)> on_dir;
};

PolyMap identity_map(const PolyInterface& p);

/// Diagrammatic composite: f first, then g. Requires f.cod == g.dom.
PolyMap compose_maps(const PolyMap& f, const PolyMap& g);

/// Componentwise tensor of maps on the flattened representation.
PolyMap tensor_maps(const PolyMap& f, const PolyMap& g);

/// n-fold tensor power of a map (identity of the unit interface for n = 0).
PolyMap power_map(const PolyMap& f, std::size_t n);

/// Behavioral comparison on sampled positions and directions.
bool maps_agree(const PolyMap& f, const PolyMap& g, std::size_t probes, Seed seed,
                double tol);

/// Stock interface: positions and directions are reals (sampled from bounded
/// ranges for probing purposes only).
PolyInterface real_line_interface(const std::string& name = "t");

/// Stock interface with a single position and a single direction.
PolyInterface trivial_interface();

}  // namespace dynorg
