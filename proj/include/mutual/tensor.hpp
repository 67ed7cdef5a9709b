#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mutual/rng.hpp"

namespace mutual {

using ParamId = int;

struct Param {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> data;
};

// Named, shaped, learned tensors (row-major float64).
class ParameterStore {
 public:
  ParamId add(std::string name, int rows, int cols);
  std::size_t size() const { return params_.size(); }
  Param& operator[](ParamId id) { return params_.at(static_cast<std::size_t>(id)); }
  const Param& operator[](ParamId id) const { return params_.at(static_cast<std::size_t>(id)); }
  std::optional<ParamId> find(const std::string& name) const;
  std::size_t num_values() const;
  void init_uniform(Rng& rng, double lo, double hi);
  void fill(double v);

 private:
  std::vector<Param> params_;
};

// Gradient buffers laid out like a ParameterStore. Backward passes add into
// them; zero() must be called explicitly between steps.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& store);
  void zero();
  std::vector<double>& operator[](ParamId id) { return g_.at(static_cast<std::size_t>(id)); }
  const std::vector<double>& operator[](ParamId id) const { return g_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return g_.size(); }
  void add(const Gradients& other);
  void scale(double s);

 private:
  std::vector<std::vector<double>> g_;
};

class AdaGrad {
 public:
  explicit AdaGrad(const ParameterStore& store, double lr = 0.5, double eps = 1e-8, double initial_accumulator = 0.0);
  // accum += g^2; theta -= lr * g / (sqrt(accum) + eps)
  void step(ParameterStore& store, const Gradients& grads);
  const std::vector<double>& accumulator(ParamId id) const { return accum_.at(static_cast<std::size_t>(id)); }
  double lr() const { return lr_; }

 private:
  double lr_, eps_;
  std::vector<std::vector<double>> accum_;
};

using Var = int;

// Reverse-mode tape over row-major float64 matrices. A "vector" is a
// 1 x n matrix. Values live in one arena; parameters are read in place from
// the store and their gradients are written to a Gradients buffer.
class Tape {
 public:
  explicit Tape(const ParameterStore* store = nullptr);

  void clear();
  std::size_t mark() const { return nodes_.size(); }
  // Drops every node recorded after `mark` (used to discard sampling work).
  void truncate(std::size_t mark);

  Var param(ParamId id);
  Var constant(std::span<const double> values, int rows, int cols);
  Var vector(std::span<const double> values) { return constant(values, 1, static_cast<int>(values.size())); }
  Var zeros(int rows, int cols);

  // Copy of the value of v.
  std::vector<double> value(Var v) const;
  // View of the value of v; invalidated by the next recorded op.
  std::span<const double> data(Var v) const;
  double scalar(Var v) const { return data(v)[0]; }
  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  int size(Var v) const { return node(v).rows * node(v).cols; }

  // y = A x, A: r x c, x: c
  Var matvec(Var A, Var x);
  // y = A^T x, A: r x c, x: r
  Var matvec_t(Var A, Var x);
  // C = A B^T, A: n x d, B: o x d
  Var matmul_nt(Var A, Var B);
  // C = A B, A: n x o, B: o x d
  Var matmul(Var A, Var B);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var one_minus(Var a);
  // Adds vector b to every row of A.
  Var add_row(Var A, Var b);
  // Multiplies every element of a by the 1 x 1 value s.
  Var mul_scalar(Var a, Var s);
  Var concat(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice(Var a, int offset, int length);
  Var row(Var A, int r);
  Var stack_rows(std::span<const Var> rows);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  // Elementwise max over equally shaped inputs; ties go to the first.
  Var max_over(std::span<const Var> parts);
  Var softmax(Var a, double temperature = 1.0);
  Var dot(Var a, Var b);
  Var sum(Var a);
  // -log softmax(z)[target]; entries with mask[i] == false are excluded.
  Var cross_entropy(Var logits, int target, std::span<const bool> mask = {});

  // Graph aggregation: out[v] = max over edges (v -> u, label) of
  // tanh(P[u] + Q[label]); rows with no edges are zero. Edges are CSR:
  // offsets has n_out + 1 entries.
  Var gather_max_tanh(Var P, Var Q, std::span<const int> offsets, std::span<const int> targets,
                      std::span<const int> labels);

  // Accumulates d loss / d param into grads. loss must be 1 x 1.
  void backward(Var loss, Gradients& grads);

 private:
  enum class Op : std::uint8_t {
    param, constant, matvec, matvec_t, matmul_nt, matmul, add, sub, mul, scale, one_minus, add_row, mul_scalar,
    concat, concat_cols, slice, row, stack_rows, sigmoid, tanh, exp, max_over, softmax, dot, sum, cross_entropy,
    gather_max_tanh
  };
  struct Node {
    Op op;
    int rows, cols;
    std::size_t off;   // value (and gradient) offset in the arena
    int a = -1, b = -1;
    int aux = 0;       // param id, offset, row, target...
    double s = 0.0;    // scale / temperature
    std::size_t ints = 0, n_ints = 0;  // extra integer data in ints_
  };

  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v)); }
  Var push(Op op, int rows, int cols, int a = -1, int b = -1);
  double* val(Var v);
  const double* cval(Var v) const;
  std::size_t push_ints(std::span<const int> xs);
  void check_same(Var a, Var b, const char* op) const;

  const ParameterStore* store_;
  std::vector<Node> nodes_;
  std::vector<double> arena_;
  std::vector<int> ints_;
  std::vector<Var> param_vars_;
  std::vector<double> grad_;
};

struct LstmParams {
  ParamId Wx = -1, Wh = -1, b = -1;
  int input = 0, hidden = 0;
};

LstmParams add_lstm(ParameterStore& store, const std::string& prefix, int input, int hidden);

struct LstmState {
  Var h, c;
};

// Gates ordered input, forget, output, candidate in the stacked weights.
LstmState lstm_step(Tape& tape, const LstmParams& p, Var x, LstmState prev);

// Named tensors with shapes, for checkpoints.
nlohmann::json tensors_to_json(const ParameterStore& store);
// Copies values into existing, identically shaped parameters.
void tensors_from_json(const nlohmann::json& j, ParameterStore& store);

}  // namespace mutual
