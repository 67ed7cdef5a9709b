#include "mutual/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mutual/error.hpp"
#include "mutual/kernels.hpp"

namespace mutual {

// ---------------------------------------------------------------- storage

ParamId ParameterStore::add(std::string name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw UsageError("parameter '" + name + "' has an empty shape");
  if (find(name)) throw UsageError("duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)});
  return static_cast<ParamId>(params_.size()) - 1;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<ParamId>(i);
  return std::nullopt;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

void ParameterStore::init_uniform(Rng& rng, double lo, double hi) {
  for (auto& p : params_)
    for (auto& x : p.data) x = rng.uniform(lo, hi);
}

void ParameterStore::fill(double v) {
  for (auto& p : params_) std::fill(p.data.begin(), p.data.end(), v);
}

Gradients::Gradients(const ParameterStore& store) {
  g_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) g_.emplace_back(store[static_cast<ParamId>(i)].data.size(), 0.0);
}

void Gradients::zero() {
  for (auto& g : g_) std::fill(g.begin(), g.end(), 0.0);
}

void Gradients::add(const Gradients& other) {
  if (other.g_.size() != g_.size()) throw UsageError("Gradients::add: layout mismatch");
  for (std::size_t i = 0; i < g_.size(); ++i)
    for (std::size_t j = 0; j < g_[i].size(); ++j) g_[i][j] += other.g_[i][j];
}

void Gradients::scale(double s) {
  for (auto& g : g_)
    for (auto& x : g) x *= s;
}

AdaGrad::AdaGrad(const ParameterStore& store, double lr, double eps, double initial_accumulator)
    : lr_(lr), eps_(eps) {
  if (initial_accumulator < 0.0) throw UsageError("AdaGrad: negative initial accumulator");
  for (std::size_t i = 0; i < store.size(); ++i)
    accum_.emplace_back(store[static_cast<ParamId>(i)].data.size(), initial_accumulator);
}

void AdaGrad::step(ParameterStore& store, const Gradients& grads) {
  if (grads.size() != accum_.size()) throw UsageError("AdaGrad::step: layout mismatch");
  for (std::size_t i = 0; i < accum_.size(); ++i) {
    auto& theta = store[static_cast<ParamId>(i)].data;
    const auto& g = grads[static_cast<ParamId>(i)];
    auto& acc = accum_[i];
    for (std::size_t j = 0; j < acc.size(); ++j) {
      if (g[j] == 0.0) continue;
      acc[j] += g[j] * g[j];
      theta[j] -= lr_ * g[j] / (std::sqrt(acc[j]) + eps_);
    }
  }
}

// ---------------------------------------------------------------- tape

Tape::Tape(const ParameterStore* store) : store_(store) {}

void Tape::clear() {
  nodes_.clear();
  arena_.clear();
  ints_.clear();
  param_vars_.clear();
}

void Tape::truncate(std::size_t mark) {
  if (mark >= nodes_.size()) return;
  arena_.resize(nodes_[mark].off);
  std::size_t ints_end = 0;
  for (std::size_t i = 0; i < mark; ++i) ints_end = std::max(ints_end, nodes_[i].ints + nodes_[i].n_ints);
  ints_.resize(ints_end);
  nodes_.resize(mark);
  for (auto& pv : param_vars_)
    if (pv >= static_cast<Var>(mark)) pv = -1;
}

Var Tape::push(Op op, int rows, int cols, int a, int b) {
  Node n{op, rows, cols, arena_.size(), a, b};
  arena_.resize(arena_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
  nodes_.push_back(n);
  return static_cast<Var>(nodes_.size()) - 1;
}

double* Tape::val(Var v) { return arena_.data() + nodes_[static_cast<std::size_t>(v)].off; }

const double* Tape::cval(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v)];
  if (n.op == Op::param) return (*store_)[n.aux].data.data();
  return arena_.data() + n.off;
}

std::span<const double> Tape::data(Var v) const {
  return {cval(v), static_cast<std::size_t>(node(v).rows) * node(v).cols};
}

std::vector<double> Tape::value(Var v) const {
  auto d = data(v);
  return {d.begin(), d.end()};
}

std::size_t Tape::push_ints(std::span<const int> xs) {
  const std::size_t at = ints_.size();
  ints_.insert(ints_.end(), xs.begin(), xs.end());
  return at;
}

void Tape::check_same(Var a, Var b, const char* op) const {
  if (node(a).rows != node(b).rows || node(a).cols != node(b).cols)
    throw UsageError(std::string(op) + ": shape mismatch");
}

Var Tape::param(ParamId id) {
  if (!store_) throw UsageError("Tape::param: tape has no parameter store");
  if (param_vars_.size() < store_->size()) param_vars_.resize(store_->size(), -1);
  auto& cached = param_vars_.at(static_cast<std::size_t>(id));
  if (cached >= 0) return cached;
  const Param& p = (*store_)[id];
  // The arena slot is only used for the gradient.
  Var v = push(Op::param, p.rows, p.cols);
  nodes_.back().aux = id;
  cached = v;
  return v;
}

Var Tape::constant(std::span<const double> values, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != values.size()) throw UsageError("constant: shape mismatch");
  Var v = push(Op::constant, rows, cols);
  std::copy(values.begin(), values.end(), val(v));
  return v;
}

Var Tape::zeros(int rows, int cols) { return push(Op::constant, rows, cols); }

Var Tape::matvec(Var A, Var x) {
  const int r = rows(A), c = cols(A);
  if (size(x) != c) throw UsageError("matvec: shape mismatch");
  Var y = push(Op::matvec, 1, r, A, x);
  kernels::matvec(cval(A), cval(x), val(y), r, c);
  return y;
}

Var Tape::matvec_t(Var A, Var x) {
  const int r = rows(A), c = cols(A);
  if (size(x) != r) throw UsageError("matvec_t: shape mismatch");
  Var y = push(Op::matvec_t, 1, c, A, x);
  kernels::matvec_t(cval(A), cval(x), val(y), r, c);
  return y;
}

Var Tape::matmul_nt(Var A, Var B) {
  const int n = rows(A), d = cols(A), o = rows(B);
  if (cols(B) != d) throw UsageError("matmul_nt: shape mismatch");
  Var C = push(Op::matmul_nt, n, o, A, B);
  kernels::matmul_nt(cval(A), cval(B), val(C), n, d, o);
  return C;
}

Var Tape::matmul(Var A, Var B) {
  const int n = rows(A), o = cols(A), d = cols(B);
  if (rows(B) != o) throw UsageError("matmul: shape mismatch");
  Var C = push(Op::matmul, n, d, A, B);
  kernels::matmul_nn(cval(A), cval(B), val(C), n, o, d);
  return C;
}

Var Tape::add(Var a, Var b) {
  check_same(a, b, "add");
  Var y = push(Op::add, rows(a), cols(a), a, b);
  const double *x = cval(a), *z = cval(b);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = x[i] + z[i];
  return y;
}

Var Tape::sub(Var a, Var b) {
  check_same(a, b, "sub");
  Var y = push(Op::sub, rows(a), cols(a), a, b);
  const double *x = cval(a), *z = cval(b);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = x[i] - z[i];
  return y;
}

Var Tape::mul(Var a, Var b) {
  check_same(a, b, "mul");
  Var y = push(Op::mul, rows(a), cols(a), a, b);
  const double *x = cval(a), *z = cval(b);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = x[i] * z[i];
  return y;
}

Var Tape::scale(Var a, double s) {
  Var y = push(Op::scale, rows(a), cols(a), a);
  nodes_.back().s = s;
  const double* x = cval(a);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = x[i] * s;
  return y;
}

Var Tape::one_minus(Var a) {
  Var y = push(Op::one_minus, rows(a), cols(a), a);
  const double* x = cval(a);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = 1.0 - x[i];
  return y;
}

Var Tape::add_row(Var A, Var b) {
  const int r = rows(A), c = cols(A);
  if (size(b) != c) throw UsageError("add_row: shape mismatch");
  Var y = push(Op::add_row, r, c, A, b);
  const double *x = cval(A), *z = cval(b);
  double* o = val(y);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) o[i * c + j] = x[i * c + j] + z[j];
  return y;
}

Var Tape::mul_scalar(Var a, Var s) {
  if (size(s) != 1) throw UsageError("mul_scalar: scalar operand must be 1 x 1");
  Var y = push(Op::mul_scalar, rows(a), cols(a), a, s);
  const double* x = cval(a);
  const double k = cval(s)[0];
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = x[i] * k;
  return y;
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  int total = 0;
  for (Var p : parts) total += size(p);
  Var y = push(Op::concat, 1, total);
  nodes_.back().ints = push_ints(parts);
  nodes_.back().n_ints = parts.size();
  double* o = val(y);
  for (Var p : parts) {
    auto v = data(p);
    o = std::copy(v.begin(), v.end(), o);
  }
  return y;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const int r = rows(parts[0]);
  int total = 0;
  for (Var p : parts) {
    if (rows(p) != r) throw UsageError("concat_cols: row count mismatch");
    total += cols(p);
  }
  Var y = push(Op::concat_cols, r, total);
  nodes_.back().ints = push_ints(parts);
  nodes_.back().n_ints = parts.size();
  double* o = val(y);
  int at = 0;
  for (Var p : parts) {
    const int c = cols(p);
    const double* x = cval(p);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) o[i * total + at + j] = x[i * c + j];
    at += c;
  }
  return y;
}

Var Tape::slice(Var a, int offset, int length) {
  if (offset < 0 || length <= 0 || offset + length > size(a)) throw UsageError("slice: out of range");
  Var y = push(Op::slice, 1, length, a);
  nodes_.back().aux = offset;
  const double* x = cval(a) + offset;
  std::copy(x, x + length, val(y));
  return y;
}

Var Tape::row(Var A, int r) {
  if (r < 0 || r >= rows(A)) throw UsageError("row: index out of range");
  const int c = cols(A);
  Var y = push(Op::row, 1, c, A);
  nodes_.back().aux = r;
  const double* x = cval(A) + static_cast<long>(r) * c;
  std::copy(x, x + c, val(y));
  return y;
}

Var Tape::stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("stack_rows: no inputs");
  const int c = size(parts[0]);
  for (Var p : parts)
    if (size(p) != c) throw UsageError("stack_rows: width mismatch");
  Var y = push(Op::stack_rows, static_cast<int>(parts.size()), c);
  nodes_.back().ints = push_ints(parts);
  nodes_.back().n_ints = parts.size();
  double* o = val(y);
  for (Var p : parts) {
    auto v = data(p);
    o = std::copy(v.begin(), v.end(), o);
  }
  return y;
}

Var Tape::sigmoid(Var a) {
  Var y = push(Op::sigmoid, rows(a), cols(a), a);
  const double* x = cval(a);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

Var Tape::tanh(Var a) {
  Var y = push(Op::tanh, rows(a), cols(a), a);
  const double* x = cval(a);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = std::tanh(x[i]);
  return y;
}

Var Tape::exp(Var a) {
  Var y = push(Op::exp, rows(a), cols(a), a);
  const double* x = cval(a);
  double* o = val(y);
  for (int i = 0, n = size(y); i < n; ++i) o[i] = std::exp(x[i]);
  return y;
}

Var Tape::max_over(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("max_over: no inputs");
  for (Var p : parts) check_same(p, parts[0], "max_over");
  Var y = push(Op::max_over, rows(parts[0]), cols(parts[0]));
  const int n = size(y);
  auto& nd = nodes_.back();
  nd.ints = push_ints(parts);
  nd.n_ints = parts.size();
  // argmax per element follows the input list
  std::vector<int> arg(static_cast<std::size_t>(n), 0);
  double* o = val(y);
  for (int i = 0; i < n; ++i) {
    double best = cval(parts[0])[i];
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const double x = cval(parts[k])[i];
      if (x > best) {
        best = x;
        arg[static_cast<std::size_t>(i)] = static_cast<int>(k);
      }
    }
    o[i] = best;
  }
  push_ints(arg);
  nodes_.back().n_ints += arg.size();
  return y;
}

Var Tape::softmax(Var a, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("softmax: temperature must be positive");
  Var y = push(Op::softmax, rows(a), cols(a), a);
  nodes_.back().s = temperature;
  const double* x = cval(a);
  double* o = val(y);
  const int n = size(y);
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[i] / temperature);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += (o[i] = std::exp(x[i] / temperature - m));
  for (int i = 0; i < n; ++i) o[i] /= z;
  return y;
}

Var Tape::dot(Var a, Var b) {
  if (size(a) != size(b)) throw UsageError("dot: size mismatch");
  Var y = push(Op::dot, 1, 1, a, b);
  const double *x = cval(a), *z = cval(b);
  double s = 0.0;
  for (int i = 0, n = size(a); i < n; ++i) s += x[i] * z[i];
  val(y)[0] = s;
  return y;
}

Var Tape::sum(Var a) {
  Var y = push(Op::sum, 1, 1, a);
  const double* x = cval(a);
  double s = 0.0;
  for (int i = 0, n = size(a); i < n; ++i) s += x[i];
  val(y)[0] = s;
  return y;
}

Var Tape::cross_entropy(Var logits, int target, std::span<const bool> mask) {
  const int n = size(logits);
  if (target < 0 || target >= n) throw UsageError("cross_entropy: target out of range");
  if (!mask.empty() && (static_cast<int>(mask.size()) != n || !mask[static_cast<std::size_t>(target)]))
    throw UsageError("cross_entropy: bad mask");
  Var y = push(Op::cross_entropy, 1, 1, logits);
  nodes_.back().aux = target;
  if (!mask.empty()) {
    std::vector<int> m(mask.begin(), mask.end());
    nodes_.back().ints = push_ints(m);
    nodes_.back().n_ints = m.size();
  }
  const double* z = cval(logits);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (mask.empty() || mask[static_cast<std::size_t>(i)]) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    if (mask.empty() || mask[static_cast<std::size_t>(i)]) s += std::exp(z[i] - mx);
  val(y)[0] = std::log(s) + mx - z[target];
  return y;
}

Var Tape::gather_max_tanh(Var P, Var Q, std::span<const int> offsets, std::span<const int> targets,
                          std::span<const int> labels) {
  const int o = cols(P);
  if (cols(Q) != o) throw UsageError("gather_max_tanh: width mismatch");
  if (offsets.empty() || targets.size() != labels.size() ||
      static_cast<std::size_t>(offsets.back()) != targets.size())
    throw UsageError("gather_max_tanh: malformed adjacency");
  const int n_out = static_cast<int>(offsets.size()) - 1;
  Var y = push(Op::gather_max_tanh, n_out, o, P, Q);
  // ints layout: offsets | targets | labels | argmax edge per output element
  std::vector<int> arg(static_cast<std::size_t>(n_out) * o, -1);
  const double *p = cval(P), *q = cval(Q);
  double* out = val(y);
  for (int v = 0; v < n_out; ++v) {
    for (int k = offsets[static_cast<std::size_t>(v)]; k < offsets[static_cast<std::size_t>(v) + 1]; ++k) {
      const int u = targets[static_cast<std::size_t>(k)], l = labels[static_cast<std::size_t>(k)];
      if (u < 0 || u >= rows(P) || l < 0 || l >= rows(Q)) throw UsageError("gather_max_tanh: index out of range");
      for (int j = 0; j < o; ++j) {
        const double t = std::tanh(p[u * o + j] + q[l * o + j]);
        auto& a = arg[static_cast<std::size_t>(v) * o + j];
        if (a < 0 || t > out[v * o + j]) {
          out[v * o + j] = t;
          a = k;
        }
      }
    }
  }
  auto& nd = nodes_.back();
  nd.ints = push_ints(offsets);
  push_ints(targets);
  push_ints(labels);
  push_ints(arg);
  nd.n_ints = offsets.size() + targets.size() + labels.size() + arg.size();
  return y;
}

void Tape::backward(Var loss, Gradients& grads) {
  if (size(loss) != 1) throw UsageError("backward: loss must be a scalar");
  grad_.assign(arena_.size(), 0.0);
  auto G = [&](Var v) { return grad_.data() + nodes_[static_cast<std::size_t>(v)].off; };
  G(loss)[0] = 1.0;
  for (Var v = loss; v >= 0; --v) {
    const Node& nd = nodes_[static_cast<std::size_t>(v)];
    const double* g = G(v);
    const int n = nd.rows * nd.cols;
    switch (nd.op) {
      case Op::constant:
        break;
      case Op::param: {
        auto& dst = grads[nd.aux];
        for (int i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] += g[i];
        break;
      }
      case Op::matvec: {
        const int r = rows(nd.a), c = cols(nd.a);
        kernels::outer_acc(G(nd.a), g, cval(nd.b), r, c);
        std::vector<double> t(static_cast<std::size_t>(c));
        kernels::matvec_t(cval(nd.a), g, t.data(), r, c);
        double* gx = G(nd.b);
        for (int j = 0; j < c; ++j) gx[j] += t[static_cast<std::size_t>(j)];
        break;
      }
      case Op::matvec_t: {
        const int r = rows(nd.a), c = cols(nd.a);
        kernels::outer_acc(G(nd.a), cval(nd.b), g, r, c);
        std::vector<double> t(static_cast<std::size_t>(r));
        kernels::matvec(cval(nd.a), g, t.data(), r, c);
        double* gx = G(nd.b);
        for (int i = 0; i < r; ++i) gx[i] += t[static_cast<std::size_t>(i)];
        break;
      }
      case Op::matmul_nt: {
        // C = A B^T: dA = dC B, dB = dC^T A
        const int N = rows(nd.a), d = cols(nd.a), o = rows(nd.b);
        std::vector<double> t(static_cast<std::size_t>(N) * d);
        kernels::matmul_nn(g, cval(nd.b), t.data(), N, o, d);
        double* ga = G(nd.a);
        for (std::size_t i = 0; i < t.size(); ++i) ga[i] += t[i];
        kernels::matmul_tn_acc(g, cval(nd.a), G(nd.b), N, o, d);
        break;
      }
      case Op::matmul: {
        // C = A B: dA = dC B^T, dB = A^T dC
        const int N = rows(nd.a), o = cols(nd.a), d = cols(nd.b);
        std::vector<double> t(static_cast<std::size_t>(N) * o);
        kernels::matmul_nt(g, cval(nd.b), t.data(), N, d, o);
        double* ga = G(nd.a);
        for (std::size_t i = 0; i < t.size(); ++i) ga[i] += t[i];
        kernels::matmul_tn_acc(cval(nd.a), g, G(nd.b), N, o, d);
        break;
      }
      case Op::add: {
        double *ga = G(nd.a), *gb = G(nd.b);
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        for (int i = 0; i < n; ++i) gb[i] += g[i];
        break;
      }
      case Op::sub: {
        double *ga = G(nd.a), *gb = G(nd.b);
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        for (int i = 0; i < n; ++i) gb[i] -= g[i];
        break;
      }
      case Op::mul: {
        double *ga = G(nd.a), *gb = G(nd.b);
        const double *a = cval(nd.a), *b = cval(nd.b);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * b[i];
        for (int i = 0; i < n; ++i) gb[i] += g[i] * a[i];
        break;
      }
      case Op::scale: {
        double* ga = G(nd.a);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * nd.s;
        break;
      }
      case Op::one_minus: {
        double* ga = G(nd.a);
        for (int i = 0; i < n; ++i) ga[i] -= g[i];
        break;
      }
      case Op::add_row: {
        double *ga = G(nd.a), *gb = G(nd.b);
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        for (int i = 0; i < nd.rows; ++i)
          for (int j = 0; j < nd.cols; ++j) gb[j] += g[i * nd.cols + j];
        break;
      }
      case Op::mul_scalar: {
        double *ga = G(nd.a), *gs = G(nd.b);
        const double* a = cval(nd.a);
        const double k = cval(nd.b)[0];
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          ga[i] += g[i] * k;
          acc += g[i] * a[i];
        }
        gs[0] += acc;
        break;
      }
      case Op::concat:
      case Op::stack_rows: {
        const double* src = g;
        for (std::size_t k = 0; k < nd.n_ints; ++k) {
          const Var p = ints_[nd.ints + k];
          double* gp = G(p);
          for (int i = 0, m = size(p); i < m; ++i) gp[i] += *src++;
        }
        break;
      }
      case Op::concat_cols: {
        int at = 0;
        for (std::size_t k = 0; k < nd.n_ints; ++k) {
          const Var p = ints_[nd.ints + k];
          const int c = cols(p);
          double* gp = G(p);
          for (int i = 0; i < nd.rows; ++i)
            for (int j = 0; j < c; ++j) gp[i * c + j] += g[i * nd.cols + at + j];
          at += c;
        }
        break;
      }
      case Op::slice: {
        double* ga = G(nd.a) + nd.aux;
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        break;
      }
      case Op::row: {
        double* ga = G(nd.a) + static_cast<long>(nd.aux) * nd.cols;
        for (int i = 0; i < n; ++i) ga[i] += g[i];
        break;
      }
      case Op::sigmoid: {
        double* ga = G(nd.a);
        const double* y = cval(v);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::tanh: {
        double* ga = G(nd.a);
        const double* y = cval(v);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::exp: {
        double* ga = G(nd.a);
        const double* y = cval(v);
        for (int i = 0; i < n; ++i) ga[i] += g[i] * y[i];
        break;
      }
      case Op::max_over: {
        const std::size_t k = nd.n_ints - static_cast<std::size_t>(n);
        for (int i = 0; i < n; ++i) {
          const Var p = ints_[nd.ints + static_cast<std::size_t>(ints_[nd.ints + k + static_cast<std::size_t>(i)])];
          G(p)[i] += g[i];
        }
        break;
      }
      case Op::softmax: {
        double* ga = G(nd.a);
        const double* y = cval(v);
        double dotp = 0.0;
        for (int i = 0; i < n; ++i) dotp += g[i] * y[i];
        for (int i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - dotp) / nd.s;
        break;
      }
      case Op::dot: {
        double *ga = G(nd.a), *gb = G(nd.b);
        const double *a = cval(nd.a), *b = cval(nd.b);
        for (int i = 0, m = size(nd.a); i < m; ++i) {
          ga[i] += g[0] * b[i];
          gb[i] += g[0] * a[i];
        }
        break;
      }
      case Op::sum: {
        double* ga = G(nd.a);
        for (int i = 0, m = size(nd.a); i < m; ++i) ga[i] += g[0];
        break;
      }
      case Op::cross_entropy: {
        const int m = size(nd.a);
        const double* z = cval(nd.a);
        auto on = [&](int i) { return nd.n_ints == 0 || ints_[nd.ints + static_cast<std::size_t>(i)] != 0; };
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i)
          if (on(i)) mx = std::max(mx, z[i]);
        double s = 0.0;
        for (int i = 0; i < m; ++i)
          if (on(i)) s += std::exp(z[i] - mx);
        double* ga = G(nd.a);
        for (int i = 0; i < m; ++i)
          if (on(i)) ga[i] += g[0] * std::exp(z[i] - mx) / s;
        ga[nd.aux] -= g[0];
        break;
      }
      case Op::gather_max_tanh: {
        const int o = nd.cols, n_out = nd.rows;
        const std::size_t n_edges = (nd.n_ints - static_cast<std::size_t>(n_out + 1) - static_cast<std::size_t>(n)) / 2;
        const int* targets = ints_.data() + nd.ints + n_out + 1;
        const int* labels = targets + n_edges;
        const int* arg = labels + n_edges;
        const double* y = cval(v);
        double *gp = G(nd.a), *gq = G(nd.b);
        for (int i = 0; i < n; ++i) {
          const int k = arg[i];
          if (k < 0) continue;
          const int j = i % o;
          const double d = g[i] * (1.0 - y[i] * y[i]);
          gp[targets[k] * o + j] += d;
          gq[labels[k] * o + j] += d;
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------- LSTM

LstmParams add_lstm(ParameterStore& store, const std::string& prefix, int input, int hidden) {
  LstmParams p;
  p.input = input;
  p.hidden = hidden;
  p.Wx = store.add(prefix + ".Wx", 4 * hidden, input);
  p.Wh = store.add(prefix + ".Wh", 4 * hidden, hidden);
  p.b = store.add(prefix + ".b", 1, 4 * hidden);
  return p;
}

LstmState lstm_step(Tape& tape, const LstmParams& p, Var x, LstmState prev) {
  if (tape.size(x) != p.input || tape.size(prev.h) != p.hidden || tape.size(prev.c) != p.hidden)
    throw UsageError("lstm_step: shape mismatch");
  const int H = p.hidden;
  Var gates = tape.add(tape.add(tape.matvec(tape.param(p.Wx), x), tape.matvec(tape.param(p.Wh), prev.h)),
                       tape.param(p.b));
  Var i = tape.sigmoid(tape.slice(gates, 0, H));
  Var f = tape.sigmoid(tape.slice(gates, H, H));
  Var o = tape.sigmoid(tape.slice(gates, 2 * H, H));
  Var g = tape.tanh(tape.slice(gates, 3 * H, H));
  Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

// ---------------------------------------------------------------- IO

nlohmann::json tensors_to_json(const ParameterStore& store) {
  auto arr = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Param& p = store[static_cast<ParamId>(i)];
    arr.push_back({{"name", p.name}, {"shape", {p.rows, p.cols}}, {"data", p.data}});
  }
  return arr;
}

void tensors_from_json(const nlohmann::json& j, ParameterStore& store) {
  if (!j.is_array()) throw DataError("checkpoint tensors must be an array");
  if (j.size() != store.size()) throw DataError("checkpoint has " + std::to_string(j.size()) + " tensors, model expects " +
                                                std::to_string(store.size()));
  for (const auto& t : j) {
    const auto name = t.at("name").get<std::string>();
    auto id = store.find(name);
    if (!id) throw DataError("checkpoint tensor '" + name + "' unknown to the model");
    Param& p = store[*id];
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape != std::vector<int>{p.rows, p.cols}) throw DataError("checkpoint tensor '" + name + "' has wrong shape");
    auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != p.data.size()) throw DataError("checkpoint tensor '" + name + "' has wrong size");
    p.data = std::move(data);
  }
}

}  // namespace mutual
