#include "stib/tape.hpp"

#include <cmath>

#include "stib/linalg.hpp"

namespace stib {

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::param: return "param";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::elementwise_mul: return "elementwise-mul";
    case Op::scalar_mul: return "scalar-mul";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::square: return "square";
    case Op::clamp: return "clamp";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::concat_cols: return "concat-cols";
    case Op::slice_cols: return "slice-cols";
    case Op::transpose: return "transpose";
    case Op::logdet: return "logdet";
  }
  return "?";
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  const Id id = static_cast<Id>(nodes_.size() - 1);
  check_finite(id);
  return id;
}

void Tape::check_finite(Id id) const {
  const Node& n = nodes_[id];
  if (!all_finite(n.value))
    throw DomainError(std::string(op_name(n.op)) +
                      ": produced non-finite values (node " + std::to_string(id) +
                      ")");
}

Tape::Id Tape::constant(Matrix v) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(v);
  return push(std::move(n));
}

Tape::Id Tape::param(Matrix v) {
  Node n;
  n.op = Op::param;
  n.value = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id x, Id y) {
  Node n;
  n.op = Op::matmul;
  n.a = x;
  n.b = y;
  n.value = stib::matmul(nodes_[x].value, nodes_[y].value);
  n.needs_grad = nodes_[x].needs_grad || nodes_[y].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add(Id x, Id y) {
  Node n;
  n.op = Op::add;
  n.a = x;
  n.b = y;
  n.value = stib::add(nodes_[x].value, nodes_[y].value);
  n.needs_grad = nodes_[x].needs_grad || nodes_[y].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id x, Id y) {
  Node n;
  n.op = Op::sub;
  n.a = x;
  n.b = y;
  n.value = stib::sub(nodes_[x].value, nodes_[y].value);
  n.needs_grad = nodes_[x].needs_grad || nodes_[y].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::elementwise_mul(Id x, Id y) {
  Node n;
  n.op = Op::elementwise_mul;
  n.a = x;
  n.b = y;
  n.value = hadamard(nodes_[x].value, nodes_[y].value);
  n.needs_grad = nodes_[x].needs_grad || nodes_[y].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::scalar_mul(Id x, double s) {
  if (!std::isfinite(s)) throw DomainError("scalar-mul: non-finite scalar");
  Node n;
  n.op = Op::scalar_mul;
  n.a = x;
  n.s0 = s;
  n.value = scale(nodes_[x].value, s);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id x) {
  Node n;
  n.op = Op::tanh;
  n.a = x;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = std::tanh(v);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::exp(Id x) {
  Node n;
  n.op = Op::exp;
  n.a = x;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = std::exp(v);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::log(Id x) {
  const Matrix& in = nodes_[x].value;
  for (double v : in.data)
    if (!(v > 0.0))
      throw DomainError("log: non-positive entry " + std::to_string(v));
  Node n;
  n.op = Op::log;
  n.a = x;
  n.value = in;
  for (double& v : n.value.data) v = std::log(v);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::square(Id x) {
  Node n;
  n.op = Op::square;
  n.a = x;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = v * v;
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::clamp(Id x, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  Node n;
  n.op = Op::clamp;
  n.a = x;
  n.s0 = lo;
  n.s1 = hi;
  n.value = nodes_[x].value;
  for (double& v : n.value.data) v = std::min(hi, std::max(lo, v));
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sum(Id x) {
  Node n;
  n.op = Op::sum;
  n.a = x;
  n.value = Matrix(1, 1, stib::sum(nodes_[x].value));
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mean(Id x) {
  Node n;
  n.op = Op::mean;
  n.a = x;
  n.value = Matrix(1, 1, stib::mean(nodes_[x].value));
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(Id x, Id y) {
  Node n;
  n.op = Op::concat_cols;
  n.a = x;
  n.b = y;
  n.value = stib::concat_cols(nodes_[x].value, nodes_[y].value);
  n.needs_grad = nodes_[x].needs_grad || nodes_[y].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id x, std::size_t c0, std::size_t c1) {
  Node n;
  n.op = Op::slice_cols;
  n.a = x;
  n.c0 = static_cast<std::uint32_t>(c0);
  n.c1 = static_cast<std::uint32_t>(c1);
  n.value = stib::slice_cols(nodes_[x].value, c0, c1);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::transpose(Id x) {
  Node n;
  n.op = Op::transpose;
  n.a = x;
  n.value = stib::transpose(nodes_[x].value);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::logdet(Id x) {
  Node n;
  n.op = Op::logdet;
  n.a = x;
  n.chol = cholesky(nodes_[x].value, 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < n.chol.rows; ++i) s += std::log(n.chol(i, i));
  n.value = Matrix(1, 1, 2.0 * s);
  n.needs_grad = nodes_[x].needs_grad;
  return push(std::move(n));
}

void Tape::backward(Id root) {
  if (root >= nodes_.size()) throw ShapeError("backward: bad root id");
  {
    const Matrix& rv = nodes_[root].value;
    if (rv.rows != 1 || rv.cols != 1)
      throw ShapeError("backward: root must be scalar (1x1), got " +
                       rv.shape_str());
  }
  for (Id i = 0; i <= root; ++i)
    nodes_[i].adjoint = Matrix(nodes_[i].value.rows, nodes_[i].value.cols);
  nodes_[root].adjoint(0, 0) = 1.0;

  std::vector<bool> touched(root + 1, false);
  touched[root] = true;

  for (Id i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!touched[i] || !n.needs_grad) continue;
    const Matrix& g = n.adjoint;
    auto reach = [&](Id p) { touched[p] = true; };
    switch (n.op) {
      case Op::constant:
      case Op::param:
        break;
      case Op::matmul: {
        if (nodes_[n.a].needs_grad) {
          accumulate(nodes_[n.a].adjoint, matmul_nt(g, nodes_[n.b].value));
          reach(n.a);
        }
        if (nodes_[n.b].needs_grad) {
          accumulate(nodes_[n.b].adjoint, matmul_tn(nodes_[n.a].value, g));
          reach(n.b);
        }
        break;
      }
      case Op::add: {
        if (nodes_[n.a].needs_grad) {
          accumulate(nodes_[n.a].adjoint, g);
          reach(n.a);
        }
        if (nodes_[n.b].needs_grad) {
          accumulate(nodes_[n.b].adjoint, g);
          reach(n.b);
        }
        break;
      }
      case Op::sub: {
        if (nodes_[n.a].needs_grad) {
          accumulate(nodes_[n.a].adjoint, g);
          reach(n.a);
        }
        if (nodes_[n.b].needs_grad) {
          accumulate(nodes_[n.b].adjoint, scale(g, -1.0));
          reach(n.b);
        }
        break;
      }
      case Op::elementwise_mul: {
        if (nodes_[n.a].needs_grad) {
          accumulate(nodes_[n.a].adjoint, hadamard(g, nodes_[n.b].value));
          reach(n.a);
        }
        if (nodes_[n.b].needs_grad) {
          accumulate(nodes_[n.b].adjoint, hadamard(g, nodes_[n.a].value));
          reach(n.b);
        }
        break;
      }
      case Op::scalar_mul: {
        accumulate(nodes_[n.a].adjoint, scale(g, n.s0));
        reach(n.a);
        break;
      }
      case Op::tanh: {
        Matrix d = n.value;  // 1 - tanh(x)^2 from the cached output
        for (std::size_t k = 0; k < d.data.size(); ++k)
          d.data[k] = g.data[k] * (1.0 - d.data[k] * d.data[k]);
        accumulate(nodes_[n.a].adjoint, d);
        reach(n.a);
        break;
      }
      case Op::exp: {
        accumulate(nodes_[n.a].adjoint, hadamard(g, n.value));
        reach(n.a);
        break;
      }
      case Op::log: {
        Matrix d = nodes_[n.a].value;
        for (std::size_t k = 0; k < d.data.size(); ++k)
          d.data[k] = g.data[k] / d.data[k];
        accumulate(nodes_[n.a].adjoint, d);
        reach(n.a);
        break;
      }
      case Op::square: {
        Matrix d = nodes_[n.a].value;
        for (std::size_t k = 0; k < d.data.size(); ++k)
          d.data[k] = g.data[k] * 2.0 * d.data[k];
        accumulate(nodes_[n.a].adjoint, d);
        reach(n.a);
        break;
      }
      case Op::clamp: {
        Matrix d = nodes_[n.a].value;
        for (std::size_t k = 0; k < d.data.size(); ++k)
          d.data[k] = (d.data[k] >= n.s0 && d.data[k] <= n.s1) ? g.data[k] : 0.0;
        accumulate(nodes_[n.a].adjoint, d);
        reach(n.a);
        break;
      }
      case Op::sum: {
        const double gv = g(0, 0);
        Matrix& pa = nodes_[n.a].adjoint;
        for (double& v : pa.data) v += gv;
        reach(n.a);
        break;
      }
      case Op::mean: {
        const double gv = g(0, 0) / static_cast<double>(nodes_[n.a].value.size());
        Matrix& pa = nodes_[n.a].adjoint;
        for (double& v : pa.data) v += gv;
        reach(n.a);
        break;
      }
      case Op::concat_cols: {
        const std::size_t ca = nodes_[n.a].value.cols;
        const std::size_t cb = nodes_[n.b].value.cols;
        if (nodes_[n.a].needs_grad) {
          accumulate(nodes_[n.a].adjoint, stib::slice_cols(g, 0, ca));
          reach(n.a);
        }
        if (nodes_[n.b].needs_grad) {
          accumulate(nodes_[n.b].adjoint, stib::slice_cols(g, ca, ca + cb));
          reach(n.b);
        }
        break;
      }
      case Op::slice_cols: {
        Matrix& pa = nodes_[n.a].adjoint;
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < g.cols; ++c) pa(r, n.c0 + c) += g(r, c);
        reach(n.a);
        break;
      }
      case Op::transpose: {
        accumulate(nodes_[n.a].adjoint, stib::transpose(g));
        reach(n.a);
        break;
      }
      case Op::logdet: {
        // d logdet(A) / dA = A^{-T}; symmetric input gives a symmetric
        // gradient, computed from the cached factor.
        Matrix inv = spd_inverse_from_cholesky(n.chol);
        accumulate(nodes_[n.a].adjoint, scale(inv, g(0, 0)));
        reach(n.a);
        break;
      }
    }
  }
  ran_backward_ = true;
}

const Matrix& Tape::adjoint(Id id) const {
  if (!ran_backward_) throw Error("adjoint: backward has not run");
  return nodes_[id].adjoint;
}

}  // namespace stib
