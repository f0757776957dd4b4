#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace dynorg {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

/// Absolute-or-relative comparison: |a-b| <= tol * max(1, |a|, |b|).
bool approx_equal(double a, double b, double tol);

/// Strictly relative comparison: |a-b| <= tol * max(|a|, |b|).
bool rel_equal(double a, double b, double tol);

/// Tolerance used when validating that distribution entries sum to one.
inline constexpr double kDistSumTol = 1e-9;

/// Universal carrier for interface positions and directions. Keeping a single
/// union lets the generic law checkers treat every instance uniformly; the
/// domain modules convert to typed data at their boundaries.
class Value {
 public:
  struct Unit {};

  struct Outcome {
    std::size_t index = 0;
    std::size_t arity = 1;
  };

  enum class Kind { unit, real, real_vec, outcome, dist, tuple };

  Value() : rep_(Unit{}) {}

  static Value unit() { return Value(); }
  static Value real(double x);
  static Value real_vec(std::vector<double> xs);
  static Value outcome(std::size_t index, std::size_t arity);
  /// Validates entries in (0, 1] summing to one within kDistSumTol.
  static Value dist(std::vector<double> probs);
  static Value tuple(std::vector<Value> items);

  Kind kind() const;
  bool is_unit() const { return kind() == Kind::unit; }
  bool is_real() const { return kind() == Kind::real; }
  bool is_real_vec() const { return kind() == Kind::real_vec; }
  bool is_outcome() const { return kind() == Kind::outcome; }
  bool is_dist() const { return kind() == Kind::dist; }
  bool is_tuple() const { return kind() == Kind::tuple; }

  // Accessors throw std::invalid_argument on a kind mismatch.
  double as_real() const;
  const std::vector<double>& as_real_vec() const;
  const Outcome& as_outcome() const;
  const std::vector<double>& as_dist() const;
  const std::vector<Value>& as_tuple() const;

  std::string to_string() const;

  friend bool approx_equal(const Value& a, const Value& b, double tol);

 private:
  struct DistRep {
    std::vector<double> probs;
  };
  using Rep = std::variant<Unit, double, std::vector<double>, Outcome, DistRep,
                           std::vector<Value>>;

  explicit Value(Rep rep) : rep_(std::move(rep)) {}

  Rep rep_;
};

/// Structural comparison; scalars compared with approx_equal, outcomes exactly.
bool approx_equal(const Value& a, const Value& b, double tol);

}  // namespace dynorg
