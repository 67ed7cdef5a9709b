#pragma once

// Every tape op wrapped for finite-difference checks on random shapes.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace mutual::testing {

// Reduces an op output to a scalar with fixed random weights so that every
// output element receives a distinct upstream gradient.
inline Var reduce(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(static_cast<std::size_t>(t.size(y)));
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return t.dot(y, t.constant(w, t.rows(y), t.cols(y)));
}

// Declares a parameter on first use and returns its tape variable.
inline Var P(Tape& t, ParameterStore& s, const std::string& name, int r, int c) {
  auto id = s.find(name);
  if (!id) id = s.add(name, r, c);
  return t.param(*id);
}

using OpBuilder = std::function<Var(Tape&, ParameterStore&, Rng&, int, int)>;

struct OpCase {
  std::string name;
  OpBuilder op;
};

struct OpCheck {
  double max_rel_err = 0.0;
  std::string worst;
};

// Worst relative error of `op` over `trials` random shapes up to 8 x 8.
inline OpCheck check_random_shapes(const std::string& name, int trials, const OpBuilder& op) {
  Rng shapes(std::hash<std::string>{}(name));
  OpCheck out;
  for (int trial = 0; trial < trials; ++trial) {
    const int r = shapes.uniform_int(1, 8), c = shapes.uniform_int(1, 8);
    const std::uint64_t seed = shapes.next();
    ParameterStore store;
    // Declare parameters once through a dry run.
    {
      Rng rng(seed);
      Tape probe(&store);
      op(probe, store, rng, r, c);
    }
    Rng init(seed + 1);
    store.init_uniform(init, -1.0, 1.0);
    auto res = grad_check(store, [&](Tape& t) {
      Rng rng(seed);
      return reduce(t, op(t, store, rng, r, c), seed + 2);
    });
    if (res.max_rel_err >= out.max_rel_err) {
      out.max_rel_err = res.max_rel_err;
      out.worst = "r=" + std::to_string(r) + " c=" + std::to_string(c) + " " + res.worst;
    }
  }
  return out;
}

inline std::vector<OpCase> all_op_cases() {
  std::vector<OpCase> cases;

  cases.push_back({"matvec", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.matvec(P(t, s, "A", r, c), P(t, s, "x", 1, c));
  }});
  cases.push_back({"matvec_t", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.matvec_t(P(t, s, "A", r, c), P(t, s, "x", 1, r));
  }});
  cases.push_back({"matmul_nt", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.matmul_nt(P(t, s, "A", r, c), P(t, s, "B", (r % 3) + 1, c));
  }});
  cases.push_back({"matmul", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.matmul(P(t, s, "A", r, c), P(t, s, "B", c, (r % 3) + 1));
  }});
  cases.push_back({"add_sub_mul", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    Var a = P(t, s, "a", r, c), b = P(t, s, "b", r, c);
    return t.mul(t.add(a, b), t.sub(a, t.one_minus(b)));
  }});
  cases.push_back({"scale", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.scale(P(t, s, "a", r, c), -1.7);
  }});
  cases.push_back({"add_row", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.add_row(P(t, s, "A", r, c), P(t, s, "b", 1, c));
  }});
  cases.push_back({"mul_scalar", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    return t.mul_scalar(P(t, s, "a", r, c), P(t, s, "k", 1, 1));
  }});
  cases.push_back({"concat_slice", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    std::vector<Var> parts{P(t, s, "a", 1, r), P(t, s, "b", 1, c), P(t, s, "a", 1, r)};
    Var cat = t.concat(parts);
    return t.slice(cat, r / 2, c);
  }});
  cases.push_back({"concat_cols_row", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    std::vector<Var> parts{P(t, s, "a", r, c), P(t, s, "b", r, 2)};
    Var cat = t.concat_cols(parts);
    std::vector<Var> rows{t.row(cat, 0), t.row(cat, r - 1)};
    return t.stack_rows(rows);
  }});
  cases.push_back({"sigmoid_tanh_exp", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    Var a = P(t, s, "a", r, c);
    return t.add(t.sigmoid(a), t.mul(t.tanh(a), t.exp(a)));
  }});
  cases.push_back({"max_over", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    std::vector<Var> parts{P(t, s, "a", r, c), P(t, s, "b", r, c), P(t, s, "c", r, c)};
    return t.max_over(parts);
  }});
  cases.push_back({"softmax", [](Tape& t, ParameterStore& s, Rng&, int, int c) {
    return t.softmax(P(t, s, "a", 1, c), 0.5);
  }});
  cases.push_back({"dot_sum", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    Var a = P(t, s, "a", r, c), b = P(t, s, "b", r, c);
    return t.add(t.dot(a, b), t.sum(a));
  }});
  cases.push_back({"cross_entropy", [](Tape& t, ParameterStore& s, Rng&, int r, int c) {
    const int n = r + c;
    std::vector<bool> mask(static_cast<std::size_t>(n), true);
    mask[0] = false;
    std::unique_ptr<bool[]> m(new bool[static_cast<std::size_t>(n)]);
    for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(i)];
    Var z = P(t, s, "z", 1, n);
    return t.add(t.cross_entropy(z, n - 1, std::span<const bool>(m.get(), static_cast<std::size_t>(n))),
                 t.cross_entropy(z, 0));
  }});
  cases.push_back({"gather_max_tanh", [](Tape& t, ParameterStore& s, Rng& rng, int r, int c) {
    const int labels = 3;
    Var Pm = P(t, s, "P", r, c), Q = P(t, s, "Q", labels, c);
    std::vector<int> offsets{0}, targets, labs;
    for (int v = 0; v < r; ++v) {
      const int deg = v == 0 ? 0 : rng.uniform_int(1, 3);  // node 0 isolated
      for (int k = 0; k < deg; ++k) {
        targets.push_back(rng.uniform_int(0, r - 1));
        labs.push_back(rng.uniform_int(0, labels - 1));
      }
      offsets.push_back(static_cast<int>(targets.size()));
    }
    return t.gather_max_tanh(Pm, Q, offsets, targets, labs);
  }});
  return cases;
}

}  // namespace mutual::testing
