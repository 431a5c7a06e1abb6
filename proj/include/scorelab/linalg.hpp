#pragma once

#include <Eigen/Dense>

namespace scorelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Largest condition number accepted by the SPD routines.
inline constexpr double kMaxCondition = 1e12;

/// Eigenvalue-based condition number of a symmetric matrix; infinity when the
/// smallest eigenvalue is not positive.
double spd_condition(const Mat& a);

/// Inverse of a symmetric positive-definite matrix via Cholesky. Throws
/// SingularMatrixError when the matrix is not SPD or is worse conditioned than
/// kMaxCondition.
Mat spd_inverse(const Mat& a);

/// Solves a x = b for SPD a with the same checks as spd_inverse.
Mat spd_solve(const Mat& a, const Mat& b);

/// Spectral norm of a symmetric matrix.
double sym_op_norm(const Mat& a);

/// Sample covariance (rows are observations), normalized by n - 1.
Mat sample_covariance(const Mat& rows);

}  // namespace scorelab
