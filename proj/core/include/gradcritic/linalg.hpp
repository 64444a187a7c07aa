#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gradcritic {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class SingularPolicy { Ridge, Throw };

struct SolveInfo {
  double rcond = 0.0;
  bool regularized = false;
  double ridge = 0.0;
  double residual = 0.0;
  // Indices of rows/columns of A that were all-zero and pinned to 0.
  std::vector<int> pinned;
};

// Solves A X = B by LU with partial pivoting and checks the relative residual.
Mat solve_checked(const Mat& a, const Mat& b, double residual_tol = 1e-9);

// Solver for TD-style systems. Rows of A that are identically zero (features
// never active on the sampled pairs) are dropped together with the matching
// columns and their solution rows are pinned to zero. If the reduced
// system has rcond below rcond_min it is either ridge-regularized with
// 1e-8 * |trace| / n or rejected.
Mat solve_td(const Mat& a, const Mat& b, SingularPolicy policy, SolveInfo* info = nullptr,
             double rcond_min = 1e-12, double residual_tol = 1e-9);

double relative_residual(const Mat& a, const Mat& x, const Mat& b);

// Numerical rank with relative threshold tol (column-pivoted QR).
int numerical_rank(const Mat& m, double tol = 1e-10);

}  // namespace gradcritic
