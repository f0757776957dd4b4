#include "dynorg/value.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dynorg {

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

bool approx_equal(double a, double b, double tol) {
  if (a == b) return true;
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= tol * scale;
}

bool rel_equal(double a, double b, double tol) {
  if (a == b) return true;
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= tol * scale;
}

Value Value::real(double x) { return Value(Rep(x)); }

Value Value::real_vec(std::vector<double> xs) { return Value(Rep(std::move(xs))); }

Value Value::outcome(std::size_t index, std::size_t arity) {
  if (arity == 0) throw std::invalid_argument("Value::outcome: arity must be positive");
  if (index >= arity) throw std::invalid_argument("Value::outcome: index out of range");
  return Value(Rep(Outcome{index, arity}));
}

Value Value::dist(std::vector<double> probs) {
  if (probs.empty()) throw std::invalid_argument("Value::dist: empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0) || p > 1.0 || !std::isfinite(p))
      throw std::invalid_argument("Value::dist: entries must lie in (0, 1]");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > kDistSumTol)
    throw std::invalid_argument("Value::dist: entries must sum to 1, got " +
                                format_double(sum));
  return Value(Rep(DistRep{std::move(probs)}));
}

Value Value::tuple(std::vector<Value> items) { return Value(Rep(std::move(items))); }

Value::Kind Value::kind() const {
  switch (rep_.index()) {
    case 0: return Kind::unit;
    case 1: return Kind::real;
    case 2: return Kind::real_vec;
    case 3: return Kind::outcome;
    case 4: return Kind::dist;
    default: return Kind::tuple;
  }
}

namespace {
[[noreturn]] void kind_error(const char* want, const Value& v) {
  throw std::invalid_argument(std::string("Value: expected ") + want + ", got " +
                              v.to_string());
}
}  // namespace

double Value::as_real() const {
  if (auto* x = std::get_if<double>(&rep_)) return *x;
  kind_error("real", *this);
}

const std::vector<double>& Value::as_real_vec() const {
  if (auto* xs = std::get_if<std::vector<double>>(&rep_)) return *xs;
  kind_error("real_vec", *this);
}

const Value::Outcome& Value::as_outcome() const {
  if (auto* o = std::get_if<Outcome>(&rep_)) return *o;
  kind_error("outcome", *this);
}

const std::vector<double>& Value::as_dist() const {
  if (auto* d = std::get_if<DistRep>(&rep_)) return d->probs;
  kind_error("dist", *this);
}

const std::vector<Value>& Value::as_tuple() const {
  if (auto* t = std::get_if<std::vector<Value>>(&rep_)) return *t;
  kind_error("tuple", *this);
}

std::string Value::to_string() const {
  std::ostringstream os;
  switch (kind()) {
    case Kind::unit:
      os << "()";
      break;
    case Kind::real:
      os << format_double(as_real());
      break;
    case Kind::real_vec: {
      os << "vec[";
      const auto& xs = as_real_vec();
      for (std::size_t i = 0; i < xs.size(); ++i)
        os << (i ? "," : "") << format_double(xs[i]);
      os << "]";
      break;
    }
    case Kind::outcome: {
      const auto& o = as_outcome();
      os << o.index << "/" << o.arity;
      break;
    }
    case Kind::dist: {
      os << "dist[";
      const auto& ps = as_dist();
      for (std::size_t i = 0; i < ps.size(); ++i)
        os << (i ? "," : "") << format_double(ps[i]);
      os << "]";
      break;
    }
    case Kind::tuple: {
      os << "(";
      const auto& ts = as_tuple();
      for (std::size_t i = 0; i < ts.size(); ++i)
        os << (i ? "," : "") << ts[i].to_string();
      os << ")";
      break;
    }
  }
  return os.str();
}

namespace {
bool vec_approx(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!approx_equal(a[i], b[i], tol)) return false;
  return true;
}
}  // namespace

bool approx_equal(const Value& a, const Value& b, double tol) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::unit:
      return true;
    case Value::Kind::real:
      return approx_equal(a.as_real(), b.as_real(), tol);
    case Value::Kind::real_vec:
      return vec_approx(a.as_real_vec(), b.as_real_vec(), tol);
    case Value::Kind::outcome:
      return a.as_outcome().index == b.as_outcome().index &&
             a.as_outcome().arity == b.as_outcome().arity;
    case Value::Kind::dist:
      return vec_approx(a.as_dist(), b.as_dist(), tol);
    case Value::Kind::tuple: {
      const auto& xs = a.as_tuple();
      const auto& ys = b.as_tuple();
      if (xs.size() != ys.size()) return false;
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (!approx_equal(xs[i], ys[i], tol)) return false;
      return true;
    }
  }
  return false;
}

}  // namespace dynorg
