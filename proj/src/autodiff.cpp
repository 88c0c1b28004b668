#include "clcs/autodiff.hpp"

#include <algorithm>

#include "clcs/error.hpp"

namespace clcs::ad {
namespace {

Tape* tape_of(const Var& a, const Var& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw Error(Errc::invalid_argument, "mixing variables from different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(double v) { return {v, push(Node{}), this}; }

Var Tape::unary(const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  return {value, push(Node{a.id, -1, da, 0.0, -1}), this};
}

Var Tape::binary(const Var& a, const Var& b, double value, double da, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  return {value, push(Node{a.id, b.id, da, db, -1}), this};
}

std::vector<Var> Tape::mlp(const nnet::Mlp& net, std::span<const Var> x,
                           std::span<double> param_grad) {
  Call call;
  call.net = &net;
  call.param_grad = param_grad;
  std::vector<double> xv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xv[i] = x[i].v;
    call.inputs.push_back(x[i].id);
  }
  net.forward(xv, call.cache);
  const auto& out = call.cache.activations.back();
  const int call_id = static_cast<int>(calls_.size());
  call.first_out = static_cast<int>(nodes_.size());
  std::vector<Var> result;
  result.reserve(out.size());
  for (double v : out) result.emplace_back(v, push(Node{-1, -1, 0.0, 0.0, call_id}), this);
  calls_.push_back(std::move(call));
  return result;
}

void Tape::backward(const Var& out, double seed) {
  adj_.assign(nodes_.size(), 0.0);
  if (out.is_constant()) return;
  adj_[static_cast<std::size_t>(out.id)] = seed;
  std::vector<double> d_out, d_in;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.call >= 0) {
      Call& c = calls_[static_cast<std::size_t>(n.call)];
      const std::size_t n_out = c.net->output_size();
      d_out.assign(adj_.begin() + c.first_out,
                   adj_.begin() + c.first_out + static_cast<std::ptrdiff_t>(n_out));
      i = c.first_out;  // loop decrement moves past the call block
      const bool any = std::any_of(d_out.begin(), d_out.end(),
                                   [](double g) { return g != 0.0; });
      if (!any) continue;
      d_in.assign(c.inputs.size(), 0.0);
      c.net->backward(c.cache, d_out, c.param_grad, d_in);
      for (std::size_t k = 0; k < c.inputs.size(); ++k) {
        if (c.inputs[k] >= 0) adj_[static_cast<std::size_t>(c.inputs[k])] += d_in[k];
      }
      continue;
    }
    const double g = adj_[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    if (n.a >= 0) adj_[static_cast<std::size_t>(n.a)] += n.da * g;
    if (n.b >= 0) adj_[static_cast<std::size_t>(n.b)] += n.db * g;
  }
}

double Tape::adjoint(const Var& v) const {
  if (v.is_constant() || static_cast<std::size_t>(v.id) >= adj_.size()) return 0.0;
  return adj_[static_cast<std::size_t>(v.id)];
}

void Tape::clear() {
  nodes_.clear();
  calls_.clear();
  adj_.clear();
}

Var operator+(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  if (!t) return Var(a.v + b.v);
  return t->binary(a, b, a.v + b.v, 1.0, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  if (!t) return Var(a.v - b.v);
  return t->binary(a, b, a.v - b.v, 1.0, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  if (!t) return Var(a.v * b.v);
  return t->binary(a, b, a.v * b.v, b.v, a.v);
}

Var operator/(const Var& a, const Var& b) {
  Tape* t = tape_of(a, b);
  const double q = a.v / b.v;
  if (!t) return Var(q);
  return t->binary(a, b, q, 1.0 / b.v, -q / b.v);
}

Var operator-(const Var& a) {
  if (!a.tape) return Var(-a.v);
  return a.tape->unary(a, -a.v, -1.0);
}

Var tanh(const Var& a) {
  const double y = std::tanh(a.v);
  if (!a.tape) return Var(y);
  return a.tape->unary(a, y, 1.0 - y * y);
}

Var exp(const Var& a) {
  const double y = std::exp(a.v);
  if (!a.tape) return Var(y);
  return a.tape->unary(a, y, y);
}

Var sqrt(const Var& a) {
  const double y = std::sqrt(a.v);
  if (!a.tape) return Var(y);
  return a.tape->unary(a, y, y > 0.0 ? 0.5 / y : 0.0);
}

Var abs(const Var& a) {
  const double y = std::abs(a.v);
  if (!a.tape) return Var(y);
  return a.tape->unary(a, y, a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0));
}

Var sigmoid(const Var& a) {
  const double y = 1.0 / (1.0 + std::exp(-a.v));
  if (!a.tape) return Var(y);
  return a.tape->unary(a, y, y * (1.0 - y));
}

}  // namespace clcs::ad
