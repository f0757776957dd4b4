#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dynorg/coalg.hpp"
#include "dynorg/dynstruct.hpp"
#include "dynorg/poly.hpp"
#include "dynorg/rng.hpp"
#include "dynorg/value.hpp"

namespace dynorg::gd {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  static Matrix zeros(std::size_t rows, std::size_t cols) {
    return Matrix{rows, cols, std::vector<double>(rows * cols, 0.0)};
  }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

class DiffFn;
using FnPtr = std::shared_ptr<const DiffFn>;

/// An immutable differentiable map R^in -> R^out built from a fixed grammar:
/// affine maps, elementwise nonlinearities, coordinatewise products, sums,
/// slices, parallel pairing, and sequential composition. `vjp` pulls a
/// cotangent at the output back to one at the input.
class DiffFn {
 public:
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

  std::vector<double> eval(const std::vector<double>& x) const;
  std::vector<double> vjp(const std::vector<double>& x,
                          const std::vector<double>& dy) const;

  /// Distance from the nearest rectifier kink along this evaluation:
  /// min |coordinate| over every relu input reached while evaluating at x
  /// (infinity when no relu is reached). Small margins flag points where
  /// finite differences straddle the kink.
  double relu_margin(const std::vector<double>& x) const;

  std::string describe() const;

  friend FnPtr fn_identity(std::size_t n);
  friend FnPtr fn_affine(Matrix w, std::vector<double> b);
  friend FnPtr fn_tanh(std::size_t n);
  friend FnPtr fn_sigmoid(std::size_t n);
  friend FnPtr fn_relu(std::size_t n);
  friend FnPtr fn_hadamard(std::size_t n);
  friend FnPtr fn_sum(std::size_t n);
  friend FnPtr fn_proj(std::size_t in, std::size_t offset, std::size_t len);
  friend FnPtr fn_pair(FnPtr f, FnPtr g);
  friend FnPtr fn_seq(FnPtr f, FnPtr g);

 private:
  enum class Op { identity, affine, tanh_, sigmoid, relu, hadamard, sum, proj, pair, seq };

  DiffFn() = default;

  Op op_ = Op::identity;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Matrix w_;                // affine
  std::vector<double> b_;   // affine
  std::size_t offset_ = 0;  // proj
  FnPtr lhs_;               // pair/seq
  FnPtr rhs_;               // pair/seq
};

FnPtr fn_identity(std::size_t n);
/// y = w x + b; b may be empty for a zero offset.
FnPtr fn_affine(Matrix w, std::vector<double> b);
FnPtr fn_tanh(std::size_t n);
FnPtr fn_sigmoid(std::size_t n);
FnPtr fn_relu(std::size_t n);
/// R^{2n} -> R^n, y_i = x_i * x_{n+i}.
FnPtr fn_hadamard(std::size_t n);
/// R^n -> R^1, y = sum_i x_i.
FnPtr fn_sum(std::size_t n);
/// R^in -> R^len picking coordinates [offset, offset + len).
FnPtr fn_proj(std::size_t in, std::size_t offset, std::size_t len);
/// (x, y) -> (f(x), g(y)) on concatenated coordinates.
FnPtr fn_pair(FnPtr f, FnPtr g);
/// g after f; requires f's output dimension to equal g's input dimension.
FnPtr fn_seq(FnPtr f, FnPtr g);

/// A learner: a map R^{params + inputs} -> R^outputs whose first `params`
/// coordinates are the trainable parameters, plus their current values.
struct GDState {
  std::size_t params = 0;
  FnPtr fn;
  std::vector<double> theta;

  std::size_t input_dim() const { return fn->in_dim() - params; }
  std::size_t output_dim() const { return fn->out_dim(); }
};

struct Descent {
  std::vector<double> out;   // fn(theta, x)
  std::vector<double> back;  // input cotangent passed upstream
  GDState next;              // theta moved by eps along its cotangent
};

/// One interaction: evaluate, pull the feedback covector back through fn,
/// hand the input block upstream, and move the parameters a step of size eps
/// along their block (feedback pointing away from the target descends when
/// callers feed target minus output).
Descent descender_step(const GDState& s, const std::vector<double>& x,
                       const std::vector<double>& feedback, double eps);

enum class Corruption {
  none,
  /// The composite of two learners keeps its wiring but concatenates the
  /// parameter vectors in the wrong order.
  compositor_param_order,
  /// The machine negates the cotangent it passes upstream.
  vjp_sign,
};

/// The do-nothing learner on n wires.
GDState gd_identitor(std::size_t n);

/// Runs s then t; parameters concatenate as (t's, s's).
GDState gd_compositor(const GDState& s, const GDState& t,
                      Corruption corruption = Corruption::none);

/// Runs s and t side by side; parameters concatenate as (s's, t's).
GDState gd_productor(const GDState& s, const GDState& t);

/// A fully trainable affine layer y = W x (+ b when bias): parameters are W
/// row-major followed by b, assembled from the primitive grammar so the same
/// machinery differentiates through it.
GDState param_linear(std::size_t in, std::size_t out, std::vector<double> theta,
                     bool bias = true);

/// Wires (positions and feedback are real numbers).
PolyInterface gd_interface();

/// The PRO of learners: S_{m,n} holds GDStates with m inputs and n outputs;
/// actions evaluate and backpropagate, updates take one gradient step of
/// size eps. States are compared by bounded behavioral probing, not by
/// parameter layout.
DynamicPRO gd_pro(double eps, Corruption corruption = Corruption::none);

/// True when both learners produce matching outputs and upstream cotangents
/// along shared probe inputs and keep matching through a few shared update
/// steps of size eps.
bool behaviorally_equal(const GDState& a, const GDState& b, double eps, Seed seed,
                        std::size_t update_steps = 3, std::size_t probes = 5,
                        double tol = 1e-9);

/// The one-object category of single-wire learners: the hom machine is
/// S_{1,1} of gd_pro(eps) with the same identity and composition.
DynamicCategory gd_category(double eps);

/// A wiring diagram of learners: a generator holds an initial GDState;
/// sequence and parallel nodes combine children left to right.
struct Diagram;
using DiagramPtr = std::shared_ptr<const Diagram>;

struct Diagram {
  enum class Kind { generator, sequence, parallel };
  Kind kind = Kind::generator;
  std::string name;  // generator label used in parameter layouts
  GDState state;     // generator only
  std::vector<DiagramPtr> children;

  /// Parses a diagram document. Nodes follow the grammar {"id": n} |
  /// {"gen": name} | {"seq": [d, d, ...]} | {"par": [d, d, ...]}; generator
  /// names resolve through a sibling "states" table of the form
  /// {name: {m, n, M, fn_spec, p0}}. The node may sit under a "diagram" key
  /// next to the table or be the document itself. Throws
  /// std::invalid_argument on malformed input.
  static DiagramPtr from_json(const std::string& text);
};

DiagramPtr diagram_generator(std::string name, GDState state);
DiagramPtr diagram_sequence(std::vector<DiagramPtr> children);
DiagramPtr diagram_parallel(std::vector<DiagramPtr> children);

/// Builds one learner from a stage chain such as "affine(4) -> tanh ->
/// affine". Stages: affine(h) and linear(h) are trained layers (with and
/// without bias) of output width h, which defaults to the learner's output
/// width when omitted; tanh, sigmoid, relu, and id are fixed width-preserving
/// activations. Stages compose left to right; theta must have exactly the
/// chain's parameter count and lists the later stages' parameters first,
/// each layer as its weight matrix in row-major order followed by its bias.
GDState learner_from_spec(std::size_t m, std::size_t n, const std::string& fn_spec,
                          std::vector<double> theta);

std::size_t diagram_param_count(const Diagram& d);

/// Folds the diagram into a single learner with gd_compositor and
/// gd_productor (left fold in child order).
GDState compile_diagram(const Diagram& d, Corruption corruption = Corruption::none);

/// Where each generator's parameters land inside the compiled learner's
/// parameter vector: sequences reverse child order, parallels keep it.
struct ParamSlot {
  std::string generator;
  std::size_t offset = 0;
  std::size_t count = 0;
};
std::vector<ParamSlot> composite_param_layout(const Diagram& d);

/// Interprets the diagram stepwise: every generator keeps its own GDState,
/// values flow forward through the wiring and feedback flows backward, and
/// each generator updates locally. This is the many-machine reading of the
/// same diagram that compile_diagram collapses into one machine.
class Network {
 public:
  Network(DiagramPtr d, double eps);

  std::size_t input_dim() const;
  std::size_t output_dim() const;

  std::vector<double> forward(const std::vector<double>& x) const;

  struct Echo {
    std::vector<double> out;
    std::vector<double> back;
  };
  /// Forward pass, backward pass, and local updates in one round.
  Echo step(const std::vector<double>& x, const std::vector<double>& feedback);

  /// Current parameters arranged exactly like the compiled learner's theta.
  std::vector<double> flat_params() const;

  struct Node;  // wiring-tree node; defined with the implementation

 private:
  std::shared_ptr<Node> root_;
  double eps_ = 0.0;
};

struct Sample {
  std::vector<double> x;
  std::vector<double> y;
};

enum class TrainMode { composed, stepwise, both };

struct TrainScenario {
  DiagramPtr diagram;
  std::vector<Sample> data;
  double eps = 0.01;
  std::size_t steps = 0;

  /// Parses {states, diagram, data, eps, steps}; throws
  /// std::invalid_argument on malformed input (including eps <= 0 and
  /// samples whose dimensions do not match the diagram).
  static TrainScenario from_json(const std::string& text);
};

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Mean dataset loss before training and after each step (steps+1 entries).
  std::vector<double> loss_history;
  /// Euclidean norm of the composed parameter vector alongside each loss.
  std::vector<double> param_norm_history;
  std::vector<double> params_composed;
  std::vector<double> params_stepwise;
  /// Largest output or parameter gap observed between the two readings
  /// (zero unless mode is `both`).
  double max_divergence = 0.0;

  /// CSV with columns step, loss, param_norm; row 0 is the initial state.
  std::string history_csv() const;
};

/// Cycles through the samples, feeding back target minus output (so the mean
/// squared error descends). Mode `both` runs the compiled learner and the
/// stepwise network side by side and records their largest divergence.
TrainReport train(const Diagram& d, const std::vector<Sample>& data, double eps,
                  std::size_t steps, TrainMode mode = TrainMode::both);

/// Mean over the dataset of half the squared output error.
double dataset_loss(const GDState& s, const std::vector<Sample>& data);

}  // namespace dynorg::gd
