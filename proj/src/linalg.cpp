#include "ivope/linalg.hpp"

#include <cmath>
#include <limits>

#include "ivope/error.hpp"

namespace ivope::linalg {

double condition_estimate(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
  if (diag.size() == 0) return 1.0;
  const double lo = diag.minCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return diag.maxCoeff() / lo;
}

double condition_estimate(const Eigen::MatrixXd& a) { return condition_estimate(a.colPivHouseholderQr()); }

Eigen::MatrixXd solve_guarded(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::string& what,
                              double guard) {
  if (a.rows() != a.cols()) throw InvalidArgument(what + ": system matrix is not square");
  if (a.rows() != b.rows()) throw InvalidArgument(what + ": right-hand side has wrong row count");
  if (!a.allFinite() || !b.allFinite()) throw NumericalError(what + ": non-finite entries", std::nan(""));
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  const double cond = condition_estimate(qr);
  if (!(cond <= guard)) {
    throw NumericalError(what + ": matrix is singular or ill-conditioned (condition estimate " + std::to_string(cond) +
                             "); consider adding a ridge term",
                         cond);
  }
  return qr.solve(b);
}

Eigen::MatrixXd ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("ridge: lambda must be positive");
  if (x.rows() != y.rows()) throw InvalidArgument("ridge: row counts differ");
  const auto n = static_cast<double>(x.rows());
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += n * lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("ridge: Cholesky factorization failed", std::nan(""));
  return llt.solve(x.transpose() * y);
}

}  // namespace ivope::linalg
