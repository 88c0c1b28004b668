#pragma once

// Reverse-mode tape for unrolled closed-loop rollouts.
//
// Scalars are recorded as Wengert-list nodes with up to two parents. A whole
// network evaluation is recorded as one call block whose reverse pass is
// delegated to Mlp::backward, so weight gradients never live on the tape.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "clcs/nnet.hpp"

namespace clcs::ad {

class Tape;

/// A taped scalar. Values built from plain doubles are constants (no tape).
struct Var {
  double v = 0.0;
  int id = -1;
  Tape* tape = nullptr;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are the point
  Var(double value, int node, Tape* t) : v(value), id(node), tape(t) {}

  bool is_constant() const { return tape == nullptr; }
};

class Tape {
 public:
  Var leaf(double v);
  Var unary(const Var& a, double value, double da);
  Var binary(const Var& a, const Var& b, double value, double da, double db);

  /// Records net(x). `param_grad` (may be empty) receives dL/dparams of this
  /// call during backward(); it must outlive the reverse pass.
  std::vector<Var> mlp(const nnet::Mlp& net, std::span<const Var> x,
                       std::span<double> param_grad);

  /// Reverse sweep seeded with d(out)/d(out) = seed.
  void backward(const Var& out, double seed = 1.0);
  double adjoint(const Var& v) const;
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    int a = -1, b = -1;
    double da = 0.0, db = 0.0;
    int call = -1;
  };
  struct Call {
    const nnet::Mlp* net = nullptr;
    std::vector<int> inputs;
    int first_out = 0;
    nnet::ForwardCache cache;
    std::span<double> param_grad;
  };

  int push(Node n);

  std::vector<Node> nodes_;
  std::vector<Call> calls_;
  std::vector<double> adj_;
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var tanh(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
Var sigmoid(const Var& a);
inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Value-selected clamp: the gradient flows through whichever branch is taken.
template <class S>
S clamp_value(const S& x, double lo, double hi) {
  if (value_of(x) < lo) return S(lo);
  if (value_of(x) > hi) return S(hi);
  return x;
}

}  // namespace clcs::ad
