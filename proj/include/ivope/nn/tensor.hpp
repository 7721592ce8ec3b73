#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace ivope::nn {

using Matrix = Eigen::MatrixXd;

/// Graph node. `backward` reads `grad` and accumulates into the parents.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
};

/// Dense 64-bit matrix with a reverse-mode tape. Rows are batch entries.
/// Copies share the underlying node.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }

  const Matrix& value() const { return node_->value; }
  /// In-place access for optimizers. Must not be used on interior nodes.
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// d loss / d p for every p in `params`. The loss must be 1x1. Parameters not
/// reachable from the loss (or detached) receive a zero gradient.
std::vector<Matrix> gradient(const Tensor& loss, const std::vector<Tensor>& params);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a + 1 b for a 1 x k row b.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a .* (1 g) for a 1 x k row g.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// a .* (c 1^T) for an n x 1 column c.
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_squares(const Tensor& a);
/// Row-wise mean, n x 1.
Tensor row_mean(const Tensor& a);
/// Row-wise standardization to zero mean and unit variance.
Tensor layer_norm(const Tensor& a, double epsilon = 1e-5);
Tensor log_softmax_rows(const Tensor& a);
/// Row-wise log-sum-exp, n x 1.
Tensor logsumexp_rows(const Tensor& a);
/// out(i) = a(i, index[i]), n x 1.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& index);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Append a constant column of ones.
Tensor append_ones(const Tensor& a);
/// W = (A^T A + n lambda I)^{-1} A^T B with n = rows(A); differentiable in A and B.
Tensor ridge_solve(const Tensor& a, const Tensor& b, double lambda);
Tensor detach(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

}  // namespace ivope::nn
