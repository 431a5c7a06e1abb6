#include "scorelab/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "scorelab/errors.hpp"

namespace scorelab {

double spd_condition(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

namespace {

Eigen::LLT<Mat> checked_llt(const Mat& a) {
  if (a.rows() != a.cols()) throw SingularMatrixError("matrix is not square");
  const double cond = spd_condition(a);
  if (!(cond <= kMaxCondition)) {
    std::ostringstream msg;
    msg << "matrix is singular or ill-conditioned (condition " << cond << " > " << kMaxCondition
        << ")";
    throw SingularMatrixError(msg.str());
  }
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("Cholesky factorization failed");
  return llt;
}

}  // namespace

Mat spd_inverse(const Mat& a) {
  return checked_llt(a).solve(Mat::Identity(a.rows(), a.cols()));
}

Mat spd_solve(const Mat& a, const Mat& b) { return checked_llt(a).solve(b); }

double sym_op_norm(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Mat sample_covariance(const Mat& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Mat centered = rows.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
}

}  // namespace scorelab
