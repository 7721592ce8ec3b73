#pragma once

#include <string>

#include <Eigen/Dense>

namespace ivope::linalg {

inline constexpr double kConditionGuard = 1e12;

/// Ratio of the largest to the smallest |R_ii| of a column-pivoted QR. A
/// cheap lower-bound style estimate of the 2-norm condition number.
double condition_estimate(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr);
double condition_estimate(const Eigen::MatrixXd& a);

/// Solve a X = b for square a by column-pivoted QR. Throws NumericalError
/// (carrying the estimate) when the condition estimate exceeds `guard`.
Eigen::MatrixXd solve_guarded(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::string& what,
                              double guard = kConditionGuard);

/// argmin_W mean_i |y_i - W^T x_i|^2 + lambda |W|_F^2, i.e.
/// (X^T X + n lambda I)^{-1} X^T Y. Requires lambda > 0.
Eigen::MatrixXd ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda);

}  // namespace ivope::linalg
