#include "gradcritic/linalg.hpp"

#include <cmath>
#include <sstream>

#include "gradcritic/errors.hpp"

namespace gradcritic {

double relative_residual(const Mat& a, const Mat& x, const Mat& b) {
  double scale = a.norm() * x.norm() + b.norm();
  if (scale == 0.0) return 0.0;
  return (a * x - b).norm() / scale;
}

Mat solve_checked(const Mat& a, const Mat& b, double residual_tol) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw ConfigError("solve_checked: shape mismatch");
  Eigen::PartialPivLU<Mat> lu(a);
  Mat x = lu.solve(b);
  double res = relative_residual(a, x, b);
  if (!x.allFinite() || !(res <= residual_tol)) {
    std::ostringstream msg;
    msg << "linear solve failed: relative residual " << res << ", rcond " << lu.rcond();
    throw SingularMatrixError(msg.str(), lu.rcond());
  }
  return x;
}

Mat solve_td(const Mat& a, const Mat& b, SingularPolicy policy, SolveInfo* info,
             double rcond_min, double residual_tol) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n) throw ConfigError("solve_td: shape mismatch");
  SolveInfo local;
  SolveInfo& out = info ? *info : local;
  out = SolveInfo{};

  std::vector<int> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.row(i).cwiseAbs().maxCoeff() == 0.0)
      out.pinned.push_back(static_cast<int>(i));
    else
      keep.push_back(static_cast<int>(i));
  }
  const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
  Mat x = Mat::Zero(n, b.cols());
  if (m == 0) {
    out.rcond = 0.0;
    if (policy == SingularPolicy::Throw) throw SingularMatrixError("solve_td: A is zero", 0.0);
    return x;
  }
  Mat ar(m, m);
  Mat br(m, b.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    br.row(i) = b.row(keep[i]);
    for (Eigen::Index j = 0; j < m; ++j) ar(i, j) = a(keep[i], keep[j]);
  }

  Eigen::PartialPivLU<Mat> lu(ar);
  out.rcond = lu.rcond();
  Mat sys = ar;
  if (!(out.rcond >= rcond_min)) {
    if (policy == SingularPolicy::Throw) {
      std::ostringstream msg;
      msg << "singular A: rcond " << out.rcond;
      throw SingularMatrixError(msg.str(), out.rcond);
    }
    out.ridge = 1e-8 * std::abs(ar.trace()) / static_cast<double>(m);
    if (out.ridge == 0.0) out.ridge = 1e-8;
    sys.diagonal().array() += out.ridge;
    out.regularized = true;
    lu.compute(sys);
  }
  Mat xr = lu.solve(br);
  out.residual = relative_residual(sys, xr, br);
  if (!xr.allFinite() || !(out.residual <= residual_tol)) {
    std::ostringstream msg;
    msg << "TD solve residual " << out.residual << " exceeds tolerance";
    throw SingularMatrixError(msg.str(), out.rcond);
  }
  for (Eigen::Index i = 0; i < m; ++i) x.row(keep[i]) = xr.row(i);
  return x;
}

int numerical_rank(const Mat& m, double tol) {
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Mat> qr(m);
  qr.setThreshold(tol);
  return static_cast<int>(qr.rank());
}

}  // namespace gradcritic
