#pragma once

#include <cstdint>
#include <vector>

#include "stib/matrix.hpp"

namespace stib {

enum class Op : std::uint8_t {
  constant,
  param,
  matmul,
  add,
  sub,
  elementwise_mul,
  scalar_mul,
  tanh,
  exp,
  log,
  square,
  clamp,
  sum,
  mean,
  concat_cols,
  slice_cols,
  transpose,
  logdet,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::constant;
  std::uint32_t a = 0;  // first parent
  std::uint32_t b = 0;  // second parent (binary ops only)
  Matrix value;
  Matrix adjoint;     // same shape as value; filled by backward
  double s0 = 0.0;    // scalar-mul factor / clamp lo
  double s1 = 0.0;    // clamp hi
  std::uint32_t c0 = 0, c1 = 0;  // slice-cols range [c0, c1)
  Matrix chol;        // logdet: cached Cholesky factor of the input
  bool needs_grad = false;
};

// Reverse-mode differentiation record. Built fresh per minibatch; parents
// always precede their consumers, and backward walks ids in strictly
// decreasing order. Confined to one thread.
class Tape {
 public:
  using Id = std::uint32_t;

  Id constant(Matrix v);
  // Like constant, but adjoints are retained in the gradient map.
  Id param(Matrix v);

  Id matmul(Id x, Id y);
  Id add(Id x, Id y);
  Id sub(Id x, Id y);
  Id elementwise_mul(Id x, Id y);
  Id scalar_mul(Id x, double s);
  Id tanh(Id x);
  Id exp(Id x);
  Id log(Id x);
  Id square(Id x);
  Id clamp(Id x, double lo, double hi);
  Id sum(Id x);
  Id mean(Id x);
  Id concat_cols(Id x, Id y);
  Id slice_cols(Id x, std::size_t c0, std::size_t c1);
  Id transpose(Id x);
  // Input must be symmetric within 1e-9 absolute and positive definite.
  Id logdet(Id x);

  const Matrix& value(Id id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  bool is_param(Id id) const { return nodes_[id].op == Op::param; }

  // Accumulates adjoints from a scalar (1x1) root; the root's adjoint is
  // set to exactly 1. Throws ShapeError for non-scalar roots.
  void backward(Id root);

  // Valid after backward; zero matrix for nodes the root does not reach.
  const Matrix& adjoint(Id id) const;

 private:
  Id push(Node n);
  void check_finite(Id id) const;
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace stib
