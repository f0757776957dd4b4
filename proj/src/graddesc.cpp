#include "dynorg/graddesc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dynorg::gd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<double> slice(const std::vector<double>& x, std::size_t offset,
                          std::size_t len) {
  return std::vector<double>(x.begin() + offset, x.begin() + offset + len);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<double> DiffFn::eval(const std::vector<double>& x) const {
  if (x.size() != in_)
    throw std::invalid_argument(describe() + ": expected " + std::to_string(in_) +
                                " inputs, got " + std::to_string(x.size()));
  switch (op_) {
    case Op::identity:
      return x;
    case Op::affine: {
      std::vector<double> y(out_, 0.0);
      for (std::size_t i = 0; i < out_; ++i) {
        double acc = b_.empty() ? 0.0 : b_[i];
        for (std::size_t j = 0; j < in_; ++j) acc += w_.at(i, j) * x[j];
        y[i] = acc;
      }
      return y;
    }
    case Op::tanh_: {
      std::vector<double> y(out_);
      for (std::size_t i = 0; i < out_; ++i) y[i] = std::tanh(x[i]);
      return y;
    }
    case Op::sigmoid: {
      std::vector<double> y(out_);
      for (std::size_t i = 0; i < out_; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
      return y;
    }
    case Op::relu: {
      std::vector<double> y(out_);
      for (std::size_t i = 0; i < out_; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      return y;
    }
    case Op::hadamard: {
      std::vector<double> y(out_);
      for (std::size_t i = 0; i < out_; ++i) y[i] = x[i] * x[out_ + i];
      return y;
    }
    case Op::sum: {
      double acc = 0.0;
      for (double v : x) acc += v;
      return {acc};
    }
    case Op::proj:
      return slice(x, offset_, out_);
    case Op::pair: {
      const auto left = lhs_->eval(slice(x, 0, lhs_->in_dim()));
      const auto right = rhs_->eval(slice(x, lhs_->in_dim(), rhs_->in_dim()));
      return concat(left, right);
    }
    case Op::seq:
      return rhs_->eval(lhs_->eval(x));
  }
  throw std::logic_error("DiffFn::eval: unreachable");
}

std::vector<double> DiffFn::vjp(const std::vector<double>& x,
                                const std::vector<double>& dy) const {
  if (x.size() != in_)
    throw std::invalid_argument(describe() + ": expected " + std::to_string(in_) +
                                " inputs, got " + std::to_string(x.size()));
  if (dy.size() != out_)
    throw std::invalid_argument(describe() + ": expected " + std::to_string(out_) +
                                " cotangents, got " + std::to_string(dy.size()));
  switch (op_) {
    case Op::identity:
      return dy;
    case Op::affine: {
      std::vector<double> dx(in_, 0.0);
      for (std::size_t i = 0; i < out_; ++i)
        for (std::size_t j = 0; j < in_; ++j) dx[j] += w_.at(i, j) * dy[i];
      return dx;
    }
    case Op::tanh_: {
      std::vector<double> dx(in_);
      for (std::size_t i = 0; i < in_; ++i) {
        const double t = std::tanh(x[i]);
        dx[i] = (1.0 - t * t) * dy[i];
      }
      return dx;
    }
    case Op::sigmoid: {
      std::vector<double> dx(in_);
      for (std::size_t i = 0; i < in_; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        dx[i] = s * (1.0 - s) * dy[i];
      }
      return dx;
    }
    case Op::relu: {
      std::vector<double> dx(in_);
      for (std::size_t i = 0; i < in_; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      return dx;
    }
    case Op::hadamard: {
      std::vector<double> dx(in_, 0.0);
      for (std::size_t i = 0; i < out_; ++i) {
        dx[i] = x[out_ + i] * dy[i];
        dx[out_ + i] = x[i] * dy[i];
      }
      return dx;
    }
    case Op::sum: {
      return std::vector<double>(in_, dy[0]);
    }
    case Op::proj: {
      std::vector<double> dx(in_, 0.0);
      for (std::size_t i = 0; i < out_; ++i) dx[offset_ + i] = dy[i];
      return dx;
    }
    case Op::pair: {
      const auto left = lhs_->vjp(slice(x, 0, lhs_->in_dim()), slice(dy, 0, lhs_->out_dim()));
      const auto right = rhs_->vjp(slice(x, lhs_->in_dim(), rhs_->in_dim()),
                                   slice(dy, lhs_->out_dim(), rhs_->out_dim()));
      return concat(left, right);
    }
    case Op::seq: {
      const auto mid = lhs_->eval(x);
      return lhs_->vjp(x, rhs_->vjp(mid, dy));
    }
  }
  throw std::logic_error("DiffFn::vjp: unreachable");
}

double DiffFn::relu_margin(const std::vector<double>& x) const {
  switch (op_) {
    case Op::relu: {
      double m = kInf;
      for (double v : x) m = std::min(m, std::abs(v));
      return m;
    }
    case Op::pair:
      return std::min(lhs_->relu_margin(slice(x, 0, lhs_->in_dim())),
                      rhs_->relu_margin(slice(x, lhs_->in_dim(), rhs_->in_dim())));
    case Op::seq:
      return std::min(lhs_->relu_margin(x), rhs_->relu_margin(lhs_->eval(x)));
    default:
      return kInf;
  }
}

std::string DiffFn::describe() const {
  switch (op_) {
    case Op::identity:
      return "identity(" + std::to_string(in_) + ")";
    case Op::affine:
      return "affine(" + std::to_string(out_) + "x" + std::to_string(in_) + ")";
    case Op::tanh_:
      return "tanh(" + std::to_string(in_) + ")";
    case Op::sigmoid:
      return "sigmoid(" + std::to_string(in_) + ")";
    case Op::relu:
      return "relu(" + std::to_string(in_) + ")";
    case Op::hadamard:
      return "hadamard(" + std::to_string(out_) + ")";
    case Op::sum:
      return "sum(" + std::to_string(in_) + ")";
    case Op::proj:
      return "proj[" + std::to_string(offset_) + ".." +
             std::to_string(offset_ + out_) + "](" + std::to_string(in_) + ")";
    case Op::pair:
      return "pair(" + lhs_->describe() + ", " + rhs_->describe() + ")";
    case Op::seq:
      return "seq(" + lhs_->describe() + ", " + rhs_->describe() + ")";
  }
  return "<fn>";
}

namespace {
FnPtr make_fn(DiffFn f) { return std::make_shared<const DiffFn>(std::move(f)); }
}  // namespace

FnPtr fn_identity(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::identity;
  f.in_ = f.out_ = n;
  return make_fn(std::move(f));
}

FnPtr fn_affine(Matrix w, std::vector<double> b) {
  require(w.data.size() == w.rows * w.cols, "fn_affine: matrix shape mismatch");
  require(b.empty() || b.size() == w.rows,
          "fn_affine: offset length must match the row count");
  DiffFn f;
  f.op_ = DiffFn::Op::affine;
  f.in_ = w.cols;
  f.out_ = w.rows;
  f.w_ = std::move(w);
  f.b_ = std::move(b);
  return make_fn(std::move(f));
}

FnPtr fn_tanh(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::tanh_;
  f.in_ = f.out_ = n;
  return make_fn(std::move(f));
}

FnPtr fn_sigmoid(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::sigmoid;
  f.in_ = f.out_ = n;
  return make_fn(std::move(f));
}

FnPtr fn_relu(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::relu;
  f.in_ = f.out_ = n;
  return make_fn(std::move(f));
}

FnPtr fn_hadamard(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::hadamard;
  f.in_ = 2 * n;
  f.out_ = n;
  return make_fn(std::move(f));
}

FnPtr fn_sum(std::size_t n) {
  DiffFn f;
  f.op_ = DiffFn::Op::sum;
  f.in_ = n;
  f.out_ = 1;
  return make_fn(std::move(f));
}

FnPtr fn_proj(std::size_t in, std::size_t offset, std::size_t len) {
  require(offset + len <= in, "fn_proj: slice outside the input");
  DiffFn f;
  f.op_ = DiffFn::Op::proj;
  f.in_ = in;
  f.out_ = len;
  f.offset_ = offset;
  return make_fn(std::move(f));
}

FnPtr fn_pair(FnPtr f, FnPtr g) {
  require(f && g, "fn_pair: null component");
  DiffFn h;
  h.op_ = DiffFn::Op::pair;
  h.in_ = f->in_dim() + g->in_dim();
  h.out_ = f->out_dim() + g->out_dim();
  h.lhs_ = std::move(f);
  h.rhs_ = std::move(g);
  return make_fn(std::move(h));
}

FnPtr fn_seq(FnPtr f, FnPtr g) {
  require(f && g, "fn_seq: null component");
  require(f->out_dim() == g->in_dim(),
          "fn_seq: " + f->describe() + " feeds " + std::to_string(f->out_dim()) +
              " values but " + g->describe() + " expects " +
              std::to_string(g->in_dim()));
  DiffFn h;
  h.op_ = DiffFn::Op::seq;
  h.in_ = f->in_dim();
  h.out_ = g->out_dim();
  h.lhs_ = std::move(f);
  h.rhs_ = std::move(g);
  return make_fn(std::move(h));
}

Descent descender_step(const GDState& s, const std::vector<double>& x,
                       const std::vector<double>& feedback, double eps) {
  require(s.fn != nullptr, "descender_step: state has no function");
  require(s.theta.size() == s.params, "descender_step: parameter count mismatch");
  require(x.size() == s.input_dim(), "descender_step: wrong input length");
  require(feedback.size() == s.output_dim(), "descender_step: wrong feedback length");
  const std::vector<double> full = concat(s.theta, x);
  Descent d;
  d.out = s.fn->eval(full);
  const std::vector<double> grad = s.fn->vjp(full, feedback);
  d.back = slice(grad, s.params, s.input_dim());
  d.next = s;
  for (std::size_t i = 0; i < s.params; ++i) d.next.theta[i] += eps * grad[i];
  return d;
}

GDState gd_identitor(std::size_t n) { return GDState{0, fn_identity(n), {}}; }

GDState gd_compositor(const GDState& s, const GDState& t, Corruption corruption) {
  require(s.fn && t.fn, "gd_compositor: state has no function");
  require(t.input_dim() == s.output_dim(),
          "gd_compositor: the first learner emits " + std::to_string(s.output_dim()) +
              " values but the second expects " + std::to_string(t.input_dim()));
  GDState out;
  out.params = s.params + t.params;
  out.fn = fn_seq(fn_pair(fn_identity(t.params), s.fn), t.fn);
  out.theta = corruption == Corruption::compositor_param_order
                  ? concat(s.theta, t.theta)
                  : concat(t.theta, s.theta);
  return out;
}

GDState gd_productor(const GDState& s, const GDState& t) {
  require(s.fn && t.fn, "gd_productor: state has no function");
  const std::size_t ps = s.params, pt = t.params;
  const std::size_t m = s.input_dim(), mp = t.input_dim();
  // Route (theta_s, theta_t, x, x') to ((theta_s, x), (theta_t, x')).
  Matrix perm = Matrix::zeros(ps + pt + m + mp, ps + pt + m + mp);
  for (std::size_t i = 0; i < ps; ++i) perm.at(i, i) = 1.0;
  for (std::size_t i = 0; i < m; ++i) perm.at(ps + i, ps + pt + i) = 1.0;
  for (std::size_t i = 0; i < pt; ++i) perm.at(ps + m + i, ps + i) = 1.0;
  for (std::size_t i = 0; i < mp; ++i) perm.at(ps + m + pt + i, ps + pt + m + i) = 1.0;
  GDState out;
  out.params = ps + pt;
  out.fn = fn_seq(fn_affine(std::move(perm), {}), fn_pair(s.fn, t.fn));
  out.theta = concat(s.theta, t.theta);
  return out;
}

GDState param_linear(std::size_t in, std::size_t out, std::vector<double> theta,
                     bool bias) {
  const std::size_t p = out * in + (bias ? out : 0);
  require(theta.size() == p, "param_linear: expected " + std::to_string(p) +
                                 " parameters, got " + std::to_string(theta.size()));
  const std::size_t k = p;  // one product per weight, one constant slot per bias

  // First stage pairs every weight with its input coordinate (and every bias
  // with the constant 1); the product stage multiplies the pairs; the last
  // stage sums each output row.
  Matrix a1 = Matrix::zeros(2 * k, p + in);
  std::vector<double> c1(2 * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) a1.at(i, i) = 1.0;
  for (std::size_t j = 0; j < out; ++j)
    for (std::size_t i = 0; i < in; ++i) a1.at(k + j * in + i, p + i) = 1.0;
  if (bias)
    for (std::size_t j = 0; j < out; ++j) c1[k + out * in + j] = 1.0;

  Matrix a2 = Matrix::zeros(out, k);
  for (std::size_t j = 0; j < out; ++j) {
    for (std::size_t i = 0; i < in; ++i) a2.at(j, j * in + i) = 1.0;
    if (bias) a2.at(j, out * in + j) = 1.0;
  }

  GDState state;
  state.params = p;
  state.fn = fn_seq(fn_seq(fn_affine(std::move(a1), std::move(c1)), fn_hadamard(k)),
                    fn_affine(std::move(a2), {}));
  state.theta = std::move(theta);
  return state;
}

PolyInterface gd_interface() {
  PolyAtom atom;
  atom.name = "signal";
  atom.tol = 1e-9;
  atom.validate_pos = [](const Value& v) { return v.is_real(); };
  atom.validate_dir = [](const Value&, const Value& d) { return d.is_real(); };
  atom.sample_pos = [](Seed seed) {
    SplitMix64 rng{seed};
    return Value::real(rng.uniform(-2.0, 2.0));
  };
  atom.sample_dir = [](const Value&, Seed seed) {
    SplitMix64 rng{seed};
    return Value::real(rng.uniform(-1.0, 1.0));
  };
  return PolyInterface(atom);
}

namespace {

std::vector<double> to_reals(const PolyInterface& iface, const Value& v) {
  const auto parts = iface.unpack(v);
  std::vector<double> out;
  out.reserve(parts.size());
  for (const Value& p : parts) out.push_back(p.as_real());
  return out;
}

Value from_reals(const PolyInterface& iface, const std::vector<double>& xs) {
  std::vector<Value> vs;
  vs.reserve(xs.size());
  for (double x : xs) vs.push_back(Value::real(x));
  return iface.pack(std::move(vs));
}

std::vector<double> random_theta(std::size_t count, SplitMix64& rng) {
  std::vector<double> t(count);
  for (double& v : t) v = 0.7 * rng.normal();
  return t;
}

GDState sample_learner(std::size_t m, std::size_t n, Seed seed) {
  SplitMix64 rng{seed};
  auto layer = [&rng](std::size_t i, std::size_t o) {
    std::vector<double> theta = random_theta(o * i + o, rng);
    return param_linear(i, o, std::move(theta), true);
  };
  const std::size_t arch = rng.index(3);
  if (arch == 0) return layer(m, n);
  auto act = [&rng](std::size_t dim) {
    return GDState{0, rng.index(2) == 0 ? fn_tanh(dim) : fn_sigmoid(dim), {}};
  };
  if (arch == 1) return gd_compositor(layer(m, n), act(n));
  const std::size_t h = 1 + rng.index(2);
  return gd_compositor(gd_compositor(layer(m, h), act(h)), layer(h, n));
}

}  // namespace

bool behaviorally_equal(const GDState& a, const GDState& b, double eps, Seed seed,
                        std::size_t update_steps, std::size_t probes, double tol) {
  if (!a.fn || !b.fn) return false;
  if (a.theta.size() != a.params || b.theta.size() != b.params) return false;
  if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim()) return false;
  const std::size_t m = a.input_dim(), n = a.output_dim();
  GDState x = a, y = b;
  for (std::size_t step = 0; step <= update_steps; ++step) {
    for (std::size_t j = 0; j < probes; ++j) {
      SplitMix64 rng{mix_seed(mix_seed(mix_seed(seed, "probe"), step), j)};
      std::vector<double> u(m), d(n);
      for (double& v : u) v = rng.uniform(-2.0, 2.0);
      for (double& v : d) v = rng.uniform(-1.0, 1.0);
      const Descent rx = descender_step(x, u, d, 0.0);
      const Descent ry = descender_step(y, u, d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (!approx_equal(rx.out[i], ry.out[i], tol)) return false;
      for (std::size_t i = 0; i < m; ++i)
        if (!approx_equal(rx.back[i], ry.back[i], tol)) return false;
    }
    if (step < update_steps) {
      SplitMix64 rng{mix_seed(mix_seed(seed, "advance"), step)};
      std::vector<double> u(m), d(n);
      for (double& v : u) v = rng.uniform(-2.0, 2.0);
      for (double& v : d) v = rng.uniform(-1.0, 1.0);
      x = descender_step(x, u, d, eps).next;
      y = descender_step(y, u, d, eps).next;
    }
  }
  return true;
}

DynamicPRO gd_pro(double eps, Corruption corruption) {
  const PolyInterface p = gd_interface();
  DynamicPRO pro;
  pro.interface = p;
  pro.coalgebra = [p, eps, corruption](std::size_t m, std::size_t n) {
    const PolyInterface dom = power_interface(p, m);
    const PolyInterface cod = power_interface(p, n);
    Coalgebra c;
    c.dom = dom;
    c.cod = cod;
    c.states.name =
        "learner[" + std::to_string(m) + "->" + std::to_string(n) + "]";
    c.states.sample = [m, n](Seed seed) { return State(sample_learner(m, n, seed)); };
    c.states.equal = [eps](const State& a, const State& b) {
      return behaviorally_equal(std::any_cast<const GDState&>(a),
                                std::any_cast<const GDState&>(b), eps,
                                mix_seed(0x6d0e5u, "learner-eq"));
    };
    c.states.show = [](const State& s) {
      const auto& g = std::any_cast<const GDState&>(s);
      return "learner(params=" + std::to_string(g.params) + ", " +
             std::to_string(g.input_dim()) + "->" + std::to_string(g.output_dim()) +
             ")";
    };
    c.act = [dom, cod, corruption](const State& s) {
      const GDState g = std::any_cast<GDState>(s);
      PolyMap mp;
      mp.dom = dom;
      mp.cod = cod;
      mp.on_pos = [dom, cod, g](const Value& pos) {
        return from_reals(cod, g.fn->eval(concat(g.theta, to_reals(dom, pos))));
      };
      mp.on_dir = [dom, cod, g, corruption](const Value& pos, const Value& dir) {
        const Descent d =
            descender_step(g, to_reals(dom, pos), to_reals(cod, dir), 0.0);
        std::vector<double> back = d.back;
        if (corruption == Corruption::vjp_sign)
          for (double& v : back) v = -v;
        return from_reals(dom, back);
      };
      return mp;
    };
    c.upd = [dom, cod, eps](const State& s, const Value& pos, const Value& dir) {
      const auto& g = std::any_cast<const GDState&>(s);
      return State(
          descender_step(g, to_reals(dom, pos), to_reals(cod, dir), eps).next);
    };
    return c;
  };
  pro.identitor = [](std::size_t n) { return State(gd_identitor(n)); };
  pro.compositor = [corruption](const State& a, const State& b) {
    return State(gd_compositor(std::any_cast<const GDState&>(a),
                               std::any_cast<const GDState&>(b), corruption));
  };
  pro.productor = [](const State& a, const State& b) {
    return State(gd_productor(std::any_cast<const GDState&>(a),
                              std::any_cast<const GDState&>(b)));
  };
  return pro;
}

DynamicCategory gd_category(double eps) {
  const DynamicPRO p = gd_pro(eps);
  DynamicCategory cat;
  cat.object_count = 1;
  cat.interface = [iface = gd_interface()](std::size_t) { return iface; };
  cat.hom = [p](std::size_t, std::size_t) { return p.coalgebra(1, 1); };
  cat.identitor = [p](std::size_t) { return p.identitor(1); };
  cat.compositor = [p](std::size_t, std::size_t, std::size_t, const State& s,
                       const State& t) { return p.compositor(s, t); };
  return cat;
}

namespace {

std::size_t diagram_in(const Diagram& d) {
  switch (d.kind) {
    case Diagram::Kind::generator:
      return d.state.input_dim();
    case Diagram::Kind::sequence:
      return diagram_in(*d.children.front());
    case Diagram::Kind::parallel: {
      std::size_t total = 0;
      for (const auto& c : d.children) total += diagram_in(*c);
      return total;
    }
  }
  return 0;
}

std::size_t diagram_out(const Diagram& d) {
  switch (d.kind) {
    case Diagram::Kind::generator:
      return d.state.output_dim();
    case Diagram::Kind::sequence:
      return diagram_out(*d.children.back());
    case Diagram::Kind::parallel: {
      std::size_t total = 0;
      for (const auto& c : d.children) total += diagram_out(*c);
      return total;
    }
  }
  return 0;
}

void layout_rec(const Diagram& d, std::size_t base, std::vector<ParamSlot>& out) {
  switch (d.kind) {
    case Diagram::Kind::generator:
      out.push_back({d.name, base, d.state.params});
      return;
    case Diagram::Kind::sequence: {
      std::size_t offset = base;
      for (std::size_t i = d.children.size(); i-- > 0;) {
        layout_rec(*d.children[i], offset, out);
        offset += diagram_param_count(*d.children[i]);
      }
      return;
    }
    case Diagram::Kind::parallel: {
      std::size_t offset = base;
      for (const auto& c : d.children) {
        layout_rec(*c, offset, out);
        offset += diagram_param_count(*c);
      }
      return;
    }
  }
}

}  // namespace

DiagramPtr diagram_generator(std::string name, GDState state) {
  require(state.fn != nullptr, "diagram: generator '" + name + "' has no function");
  require(state.theta.size() == state.params,
          "diagram: generator '" + name + "' has a parameter count mismatch");
  Diagram d;
  d.kind = Diagram::Kind::generator;
  d.name = std::move(name);
  d.state = std::move(state);
  return std::make_shared<const Diagram>(std::move(d));
}

DiagramPtr diagram_sequence(std::vector<DiagramPtr> children) {
  require(!children.empty(), "diagram: a sequence needs at least one child");
  for (std::size_t i = 0; i + 1 < children.size(); ++i) {
    require(children[i] && children[i + 1], "diagram: null child");
    require(diagram_out(*children[i]) == diagram_in(*children[i + 1]),
            "diagram: sequence stage " + std::to_string(i) + " emits " +
                std::to_string(diagram_out(*children[i])) + " values but stage " +
                std::to_string(i + 1) + " expects " +
                std::to_string(diagram_in(*children[i + 1])));
  }
  Diagram d;
  d.kind = Diagram::Kind::sequence;
  d.children = std::move(children);
  return std::make_shared<const Diagram>(std::move(d));
}

DiagramPtr diagram_parallel(std::vector<DiagramPtr> children) {
  require(!children.empty(), "diagram: a parallel block needs at least one child");
  for (const auto& c : children) require(c != nullptr, "diagram: null child");
  Diagram d;
  d.kind = Diagram::Kind::parallel;
  d.children = std::move(children);
  return std::make_shared<const Diagram>(std::move(d));
}

std::size_t diagram_param_count(const Diagram& d) {
  if (d.kind == Diagram::Kind::generator) return d.state.params;
  std::size_t total = 0;
  for (const auto& c : d.children) total += diagram_param_count(*c);
  return total;
}

GDState compile_diagram(const Diagram& d, Corruption corruption) {
  switch (d.kind) {
    case Diagram::Kind::generator:
      return d.state;
    case Diagram::Kind::sequence: {
      GDState acc = compile_diagram(*d.children.front(), corruption);
      for (std::size_t i = 1; i < d.children.size(); ++i)
        acc = gd_compositor(acc, compile_diagram(*d.children[i], corruption), corruption);
      return acc;
    }
    case Diagram::Kind::parallel: {
      GDState acc = compile_diagram(*d.children.front(), corruption);
      for (std::size_t i = 1; i < d.children.size(); ++i)
        acc = gd_productor(acc, compile_diagram(*d.children[i], corruption));
      return acc;
    }
  }
  throw std::logic_error("compile_diagram: unreachable");
}

std::vector<ParamSlot> composite_param_layout(const Diagram& d) {
  std::vector<ParamSlot> out;
  layout_rec(d, 0, out);
  return out;
}

struct Network::Node {
  Diagram::Kind kind = Diagram::Kind::generator;
  GDState state;  // generator only
  std::vector<std::shared_ptr<Node>> children;
  std::size_t in = 0;
  std::size_t out = 0;
};

namespace {

std::shared_ptr<Network::Node> build_node(const Diagram& d) {
  auto node = std::make_shared<Network::Node>();
  node->kind = d.kind;
  node->in = diagram_in(d);
  node->out = diagram_out(d);
  if (d.kind == Diagram::Kind::generator) {
    node->state = d.state;
  } else {
    for (const auto& c : d.children) node->children.push_back(build_node(*c));
  }
  return node;
}

std::vector<double> node_forward(const Network::Node& node, const std::vector<double>& x) {
  switch (node.kind) {
    case Diagram::Kind::generator:
      return node.state.fn->eval(concat(node.state.theta, x));
    case Diagram::Kind::sequence: {
      std::vector<double> cur = x;
      for (const auto& c : node.children) cur = node_forward(*c, cur);
      return cur;
    }
    case Diagram::Kind::parallel: {
      std::vector<double> out;
      std::size_t off = 0;
      for (const auto& c : node.children) {
        const auto part = node_forward(*c, slice(x, off, c->in));
        out.insert(out.end(), part.begin(), part.end());
        off += c->in;
      }
      return out;
    }
  }
  throw std::logic_error("Network: unreachable");
}

Network::Echo node_step(Network::Node& node, const std::vector<double>& x,
                        const std::vector<double>& fb, double eps) {
  switch (node.kind) {
    case Diagram::Kind::generator: {
      Descent d = descender_step(node.state, x, fb, eps);
      node.state = std::move(d.next);
      return {std::move(d.out), std::move(d.back)};
    }
    case Diagram::Kind::sequence: {
      // Forward first with everyone's pre-update parameters, then walk the
      // feedback backward, updating as we go.
      std::vector<std::vector<double>> inputs{x};
      for (const auto& c : node.children)
        inputs.push_back(node_forward(*c, inputs.back()));
      std::vector<double> fb_cur = fb;
      for (std::size_t i = node.children.size(); i-- > 0;)
        fb_cur = node_step(*node.children[i], inputs[i], fb_cur, eps).back;
      return {std::move(inputs.back()), std::move(fb_cur)};
    }
    case Diagram::Kind::parallel: {
      Network::Echo echo;
      std::size_t xoff = 0, foff = 0;
      for (const auto& c : node.children) {
        auto part = node_step(*c, slice(x, xoff, c->in), slice(fb, foff, c->out), eps);
        echo.out.insert(echo.out.end(), part.out.begin(), part.out.end());
        echo.back.insert(echo.back.end(), part.back.begin(), part.back.end());
        xoff += c->in;
        foff += c->out;
      }
      return echo;
    }
  }
  throw std::logic_error("Network: unreachable");
}

void node_params(const Network::Node& node, std::vector<double>& out) {
  switch (node.kind) {
    case Diagram::Kind::generator:
      out.insert(out.end(), node.state.theta.begin(), node.state.theta.end());
      return;
    case Diagram::Kind::sequence:
      for (std::size_t i = node.children.size(); i-- > 0;)
        node_params(*node.children[i], out);
      return;
    case Diagram::Kind::parallel:
      for (const auto& c : node.children) node_params(*c, out);
      return;
  }
}

}  // namespace

Network::Network(DiagramPtr d, double eps) : eps_(eps) {
  require(d != nullptr, "Network: null diagram");
  root_ = build_node(*d);
}

std::size_t Network::input_dim() const { return root_->in; }
std::size_t Network::output_dim() const { return root_->out; }

std::vector<double> Network::forward(const std::vector<double>& x) const {
  require(x.size() == root_->in, "Network: wrong input length");
  return node_forward(*root_, x);
}

Network::Echo Network::step(const std::vector<double>& x,
                            const std::vector<double>& feedback) {
  require(x.size() == root_->in, "Network: wrong input length");
  require(feedback.size() == root_->out, "Network: wrong feedback length");
  return node_step(*root_, x, feedback, eps_);
}

std::vector<double> Network::flat_params() const {
  std::vector<double> out;
  node_params(*root_, out);
  return out;
}

namespace {

/// Splits "affine(4) -> tanh -> affine" into trimmed stage tokens.
std::vector<std::string> split_stages(const std::string& spec) {
  std::vector<std::string> stages;
  std::size_t pos = 0;
  while (true) {
    const std::size_t arrow = spec.find("->", pos);
    std::string tok = arrow == std::string::npos ? spec.substr(pos)
                                                 : spec.substr(pos, arrow - pos);
    const auto first = tok.find_first_not_of(" \t");
    const auto last = tok.find_last_not_of(" \t");
    require(first != std::string::npos, "fn_spec: empty stage in '" + spec + "'");
    stages.push_back(tok.substr(first, last - first + 1));
    if (arrow == std::string::npos) break;
    pos = arrow + 2;
  }
  return stages;
}

/// Parses a stage token like "affine" or "affine(4)" into a head and an
/// optional width argument.
std::pair<std::string, std::optional<std::size_t>> parse_stage(const std::string& tok) {
  const std::size_t open = tok.find('(');
  if (open == std::string::npos) return {tok, std::nullopt};
  require(tok.back() == ')', "fn_spec: malformed stage '" + tok + "'");
  const std::string head = tok.substr(0, open);
  const std::string arg = tok.substr(open + 1, tok.size() - open - 2);
  std::size_t width = 0;
  try {
    std::size_t used = 0;
    width = std::stoul(arg, &used);
    require(used == arg.size(), "fn_spec: malformed width in '" + tok + "'");
  } catch (const std::logic_error&) {
    throw std::invalid_argument("fn_spec: malformed width in '" + tok + "'");
  }
  return {head, width};
}

}  // namespace

GDState learner_from_spec(std::size_t m, std::size_t n, const std::string& fn_spec,
                          std::vector<double> theta) {
  std::optional<GDState> acc;
  std::size_t width = m;
  for (const std::string& tok : split_stages(fn_spec)) {
    const auto [head, arg] = parse_stage(tok);
    GDState stage;
    if (head == "affine" || head == "linear") {
      const std::size_t h = arg.value_or(n);
      const bool bias = head == "affine";
      const std::size_t count = h * width + (bias ? h : 0);
      stage = param_linear(width, h, std::vector<double>(count, 0.0), bias);
      width = h;
    } else if (head == "tanh") {
      stage = GDState{0, fn_tanh(width), {}};
    } else if (head == "sigmoid") {
      stage = GDState{0, fn_sigmoid(width), {}};
    } else if (head == "relu") {
      stage = GDState{0, fn_relu(width), {}};
    } else if (head == "id") {
      stage = gd_identitor(width);
    } else {
      throw std::invalid_argument("fn_spec: unknown stage '" + tok + "'");
    }
    acc = acc ? gd_compositor(*acc, stage) : std::move(stage);
  }
  require(acc.has_value(), "fn_spec: at least one stage required");
  require(width == n, "fn_spec: stages end at width " + std::to_string(width) +
                          ", expected " + std::to_string(n));
  require(theta.size() == acc->params,
          "fn_spec: p0 needs " + std::to_string(acc->params) + " values, got " +
              std::to_string(theta.size()));
  acc->theta = std::move(theta);
  return *acc;
}

namespace {

using StateTable = std::map<std::string, GDState>;

StateTable parse_states(const nlohmann::json& j) {
  require(j.is_object(), "diagram: states must be a JSON object");
  StateTable out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& name = it.key();
    const auto& def = it.value();
    require(def.is_object() && def.contains("m") && def.contains("n") &&
                def.contains("M") && def.contains("fn_spec") && def.contains("p0"),
            "diagram: state '" + name + "' needs m, n, M, fn_spec, and p0");
    const auto m = def.at("m").get<std::size_t>();
    const auto n = def.at("n").get<std::size_t>();
    auto p0 = def.at("p0").get<std::vector<double>>();
    require(def.at("M").get<std::size_t>() == p0.size(),
            "diagram: state '" + name + "': M does not match p0's length");
    for (double v : p0)
      require(std::isfinite(v), "diagram: state '" + name + "': p0 must be finite");
    out.emplace(name,
                learner_from_spec(m, n, def.at("fn_spec").get<std::string>(),
                                  std::move(p0)));
  }
  return out;
}

DiagramPtr parse_diagram(const nlohmann::json& j, const StateTable& states) {
  require(j.is_object(), "diagram: nodes must be JSON objects");
  const int keys = static_cast<int>(j.contains("id")) + j.contains("gen") +
                   j.contains("seq") + j.contains("par");
  require(keys == 1, "diagram: nodes need exactly one of id, gen, seq, or par");
  if (j.contains("id")) {
    const auto n = j.at("id").get<std::size_t>();
    require(n >= 1, "diagram: id nodes need a positive wire count");
    return diagram_generator("id" + std::to_string(n), gd_identitor(n));
  }
  if (j.contains("gen")) {
    const std::string name = j.at("gen").get<std::string>();
    const auto it = states.find(name);
    require(it != states.end(), "diagram: unknown generator '" + name + "'");
    return diagram_generator(name, it->second);
  }
  const bool seq = j.contains("seq");
  const auto& arr = seq ? j.at("seq") : j.at("par");
  require(arr.is_array() && !arr.empty(), "diagram: seq/par needs a non-empty array");
  std::vector<DiagramPtr> children;
  for (const auto& cj : arr) children.push_back(parse_diagram(cj, states));
  return seq ? diagram_sequence(std::move(children))
             : diagram_parallel(std::move(children));
}

/// The document either holds the node under "diagram" next to the "states"
/// table, or is the node itself.
DiagramPtr parse_diagram_doc(const nlohmann::json& j) {
  require(j.is_object(), "diagram: document must be a JSON object");
  StateTable states;
  if (j.contains("states")) states = parse_states(j.at("states"));
  return parse_diagram(j.contains("diagram") ? j.at("diagram") : j, states);
}

}  // namespace

DiagramPtr Diagram::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("diagram: invalid JSON: ") + e.what());
  }
  try {
    return parse_diagram_doc(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("diagram: ") + e.what());
  }
}

TrainScenario TrainScenario::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("training: invalid JSON: ") + e.what());
  }
  try {
    require(j.is_object() && j.contains("diagram") && j.contains("data") &&
                j.contains("steps"),
            "training: diagram, data, and steps are required");
    TrainScenario sc;
    sc.diagram = parse_diagram_doc(j);
    sc.eps = j.value("eps", 0.01);
    require(std::isfinite(sc.eps) && sc.eps > 0.0, "training: eps must be positive");
    sc.steps = j.at("steps").get<std::size_t>();
    const std::size_t in = diagram_in(*sc.diagram), out = diagram_out(*sc.diagram);
    for (const auto& sj : j.at("data")) {
      require(sj.is_object() && sj.contains("x") && sj.contains("y"),
              "training: samples need x and y");
      Sample s;
      s.x = sj.at("x").get<std::vector<double>>();
      s.y = sj.at("y").get<std::vector<double>>();
      require(s.x.size() == in && s.y.size() == out,
              "training: sample dimensions do not match the diagram");
      sc.data.push_back(std::move(s));
    }
    require(!sc.data.empty(), "training: at least one sample required");
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("training: ") + e.what());
  }
}

double dataset_loss(const GDState& s, const std::vector<Sample>& data) {
  require(!data.empty(), "dataset_loss: no samples");
  double total = 0.0;
  for (const auto& sample : data) {
    const auto out = s.fn->eval(concat(s.theta, sample.x));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = out[i] - sample.y[i];
      total += 0.5 * e * e;
    }
  }
  return total / static_cast<double>(data.size());
}

std::string TrainReport::history_csv() const {
  std::ostringstream os;
  os << "step,loss,param_norm\n";
  for (std::size_t i = 0; i < loss_history.size(); ++i) {
    const double norm = i < param_norm_history.size() ? param_norm_history[i] : 0.0;
    os << i << "," << format_double(loss_history[i]) << "," << format_double(norm)
       << "\n";
  }
  return os.str();
}

TrainReport train(const Diagram& d, const std::vector<Sample>& data, double eps,
                  std::size_t steps, TrainMode mode) {
  require(!data.empty(), "train: at least one sample required");
  const std::size_t in = diagram_in(d), out = diagram_out(d);
  for (const auto& s : data)
    require(s.x.size() == in && s.y.size() == out,
            "train: sample dimensions do not match the diagram");

  GDState comp = compile_diagram(d);
  std::optional<Network> net;
  if (mode != TrainMode::composed)
    net.emplace(std::make_shared<const Diagram>(d), eps);

  auto net_loss = [&]() {
    double total = 0.0;
    for (const auto& s : data) {
      const auto y = net->forward(s.x);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - s.y[i];
        total += 0.5 * e * e;
      }
    }
    return total / static_cast<double>(data.size());
  };
  auto current_loss = [&]() {
    return mode == TrainMode::stepwise ? net_loss() : dataset_loss(comp, data);
  };
  auto current_norm = [&]() {
    const std::vector<double> th =
        mode == TrainMode::stepwise ? net->flat_params() : comp.theta;
    double sq = 0.0;
    for (double v : th) sq += v * v;
    return std::sqrt(sq);
  };

  TrainReport rep;
  rep.loss_history.reserve(steps + 1);
  rep.param_norm_history.reserve(steps + 1);
  rep.loss_history.push_back(current_loss());
  rep.param_norm_history.push_back(current_norm());
  rep.initial_loss = rep.loss_history.front();

  for (std::size_t k = 0; k < steps; ++k) {
    const Sample& s = data[k % data.size()];
    std::vector<double> out_c, out_s;
    if (mode != TrainMode::stepwise) {
      out_c = comp.fn->eval(concat(comp.theta, s.x));
      std::vector<double> fb(out);
      for (std::size_t i = 0; i < out; ++i) fb[i] = s.y[i] - out_c[i];
      comp = descender_step(comp, s.x, fb, eps).next;
    }
    if (mode != TrainMode::composed) {
      out_s = net->forward(s.x);
      std::vector<double> fb(out);
      for (std::size_t i = 0; i < out; ++i) fb[i] = s.y[i] - out_s[i];
      net->step(s.x, fb);
    }
    if (mode == TrainMode::both)
      for (std::size_t i = 0; i < out; ++i)
        rep.max_divergence = std::max(rep.max_divergence, std::abs(out_c[i] - out_s[i]));
    rep.loss_history.push_back(current_loss());
    rep.param_norm_history.push_back(current_norm());
  }
  rep.final_loss = rep.loss_history.back();
  if (mode != TrainMode::stepwise) rep.params_composed = comp.theta;
  if (mode != TrainMode::composed) rep.params_stepwise = net->flat_params();
  if (mode == TrainMode::both) {
    for (std::size_t i = 0; i < rep.params_composed.size(); ++i)
      rep.max_divergence = std::max(
          rep.max_divergence, std::abs(rep.params_composed[i] - rep.params_stepwise[i]));
  }
  return rep;
}

}  // namespace dynorg::gd
