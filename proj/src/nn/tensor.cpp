#include "ivope/nn/tensor.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "ivope/error.hpp"

namespace ivope::nn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
}

// Builds the result node. The backward closure is only kept when some input
// needs a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> inputs, std::function<void(Node& self)> backward) {
  Tensor out(std::move(value), false);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  Node* self = out.node().get();
  self->requires_grad = true;
  for (auto& t : inputs) self->parents.push_back(t.node());
  self->backward = [self, fn = std::move(backward)]() { fn(*self); };
  return out;
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void accumulate(Node& n, const Matrix& g) {
  if (n.requires_grad) n.grad += g;
}

}  // namespace

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw InvalidArgument("item() requires a 1x1 tensor");
  return node_->value(0, 0);
}

std::vector<Matrix> gradient(const Tensor& loss, const std::vector<Tensor>& params) {
  if (loss.rows() != 1 || loss.cols() != 1) throw InvalidArgument("gradient: loss must be a 1x1 tensor");
  std::vector<Node*> order;
  if (loss.requires_grad()) {
    // Iterative post-order DFS over nodes that carry gradients.
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* n : order) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    loss.node()->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward) (*it)->backward();
  }
  std::unordered_set<Node*> in_graph(order.begin(), order.end());
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    Node* n = p.node().get();
    if (in_graph.count(n))
      out.push_back(n->grad);
    else
      out.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw InvalidArgument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
  return make_result(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.grad.noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.value.transpose() * self.grad;
  });
}

Tensor transpose(const Tensor& a) {
  return make_result(a.value().transpose(), {a}, [](Node& self) { accumulate(parent(self, 0), self.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    accumulate(pa, self.grad.cwiseProduct(pb.value));
    accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("add_row: row has wrong shape");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return make_result(std::move(v), {a, row}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("mul_row: row has wrong shape");
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return make_result(std::move(v), {a, row}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pr = parent(self, 1);
    if (pa.requires_grad) pa.grad.array() += self.grad.array().rowwise() * pr.value.row(0).array();
    if (pr.requires_grad) pr.grad += self.grad.cwiseProduct(pa.value).colwise().sum();
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw InvalidArgument("mul_col: column has wrong shape");
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return make_result(std::move(v), {a, col}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pc = parent(self, 1);
    if (pa.requires_grad) pa.grad.array() += self.grad.array().colwise() * pc.value.col(0).array();
    if (pc.requires_grad) pc.grad += self.grad.cwiseProduct(pa.value).rowwise().sum();
  });
}

Tensor scale(const Tensor& a, double c) {
  return make_result(c * a.value(), {a}, [c](Node& self) { accumulate(parent(self, 0), c * self.grad); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_result(a.value().array() + c, {a}, [](Node& self) { accumulate(parent(self, 0), self.grad); });
}

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.array() += (pa.value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

Tensor elu(const Tensor& a) {
  Matrix v = (a.value().array() > 0.0).select(a.value().array(), a.value().array().exp() - 1.0);
  return make_result(std::move(v), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad)
      pa.grad.array() += self.grad.array() * (pa.value.array() > 0.0).select(1.0, pa.value.array().exp());
  });
}

Tensor square(const Tensor& a) {
  return make_result(a.value().array().square(), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.array() += 2.0 * pa.value.array() * self.grad.array();
  });
}

Tensor exp(const Tensor& a) {
  return make_result(a.value().array().exp(), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.array() += self.grad.array() * self.value.array();
  });
}

Tensor log(const Tensor& a) {
  return make_result(a.value().array().log(), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.array() += self.grad.array() / pa.value.array();
  });
}

Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result(std::move(v), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.array() += self.grad(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw InvalidArgument("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor sum_squares(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return make_result(std::move(v), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad += (2.0 * self.grad(0, 0)) * pa.value;
  });
}

Tensor row_mean(const Tensor& a) {
  const auto k = static_cast<double>(a.cols());
  return make_result(a.value().rowwise().mean(), {a}, [k](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.colwise() += self.grad.col(0) / k;
  });
}

Tensor layer_norm(const Tensor& a, double epsilon) {
  const Eigen::Index k = a.cols();
  const Eigen::VectorXd mu = a.value().rowwise().mean();
  Matrix centered = a.value().colwise() - mu;
  const Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(k)) + epsilon).rsqrt().matrix();
  Matrix y = centered.array().colwise() * inv_std.array();
  return make_result(y, {a}, [inv_std, k](Node& self) {
    Node& pa = parent(self, 0);
    if (!pa.requires_grad) return;
    const Matrix& yv = self.value;
    const Eigen::VectorXd mean_g = self.grad.rowwise().mean();
    const Eigen::VectorXd mean_gy = self.grad.cwiseProduct(yv).rowwise().sum() / static_cast<double>(k);
    Matrix dx = self.grad;
    dx.colwise() -= mean_g;
    dx -= (yv.array().colwise() * mean_gy.array()).matrix();
    pa.grad.array() += dx.array().colwise() * inv_std.array();
  });
}

Tensor logsumexp_rows(const Tensor& a) {
  const Eigen::VectorXd m = a.value().rowwise().maxCoeff();
  const Eigen::VectorXd lse =
      m.array() + (a.value().colwise() - m).array().exp().rowwise().sum().log();
  return make_result(Matrix(lse), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (!pa.requires_grad) return;
    const Matrix soft = (pa.value.colwise() - self.value.col(0)).array().exp();
    pa.grad.array() += soft.array().colwise() * self.grad.col(0).array();
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  const Eigen::VectorXd m = a.value().rowwise().maxCoeff();
  const Eigen::VectorXd lse =
      m.array() + (a.value().colwise() - m).array().exp().rowwise().sum().log();
  Matrix v = a.value().colwise() - lse;
  return make_result(std::move(v), {a}, [](Node& self) {
    Node& pa = parent(self, 0);
    if (!pa.requires_grad) return;
    const Matrix soft = self.value.array().exp();
    const Eigen::VectorXd gsum = self.grad.rowwise().sum();
    pa.grad += self.grad - (soft.array().colwise() * gsum.array()).matrix();
  });
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& index) {
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw InvalidArgument("pick: index length differs from rows");
  Matrix v(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const auto j = static_cast<Eigen::Index>(index[static_cast<std::size_t>(i)]);
    if (j >= a.cols()) throw InvalidArgument("pick: index out of range");
    v(i, 0) = a.value()(i, j);
  }
  return make_result(std::move(v), {a}, [index](Node& self) {
    Node& pa = parent(self, 0);
    if (!pa.requires_grad) return;
    for (Eigen::Index i = 0; i < pa.grad.rows(); ++i)
      pa.grad(i, static_cast<Eigen::Index>(index[static_cast<std::size_t>(i)])) += self.grad(i, 0);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw InvalidArgument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(v), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->grad += self.grad.middleCols(at, c);
      at += c;
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw InvalidArgument("slice_cols: range out of bounds");
  return make_result(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad.middleCols(start, count) += self.grad;
  });
}

Tensor append_ones(const Tensor& a) {
  return concat_cols({a, Tensor::constant(Matrix::Ones(a.rows(), 1))});
}

Tensor ridge_solve(const Tensor& a, const Tensor& b, double lambda) {
  if (a.rows() != b.rows()) throw InvalidArgument("ridge_solve: row counts differ");
  if (!(lambda > 0.0)) throw InvalidArgument("ridge_solve: lambda must be positive");
  const double c = lambda * static_cast<double>(a.rows());
  Matrix gram = a.value().transpose() * a.value();
  gram.diagonal().array() += c;
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(gram);
  if (llt->info() != Eigen::Success) throw NumericalError("ridge_solve: Cholesky factorization failed", std::nan(""));
  Matrix w = llt->solve(a.value().transpose() * b.value());
  if (!w.allFinite()) throw NumericalError("ridge_solve: non-finite solution", std::nan(""));
  return make_result(std::move(w), {a, b}, [llt](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const Matrix g = llt->solve(self.grad);
    if (pb.requires_grad) pb.grad.noalias() += pa.value * g;
    if (pa.requires_grad) {
      const Matrix resid = pb.value - pa.value * self.value;
      pa.grad.noalias() += resid * g.transpose();
      pa.grad.noalias() -= pa.value * (g * self.value.transpose());
    }
  });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

}  // namespace ivope::nn
