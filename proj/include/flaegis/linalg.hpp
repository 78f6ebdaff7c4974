#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flaegis::linalg {

class EigenNonConvergence : public std::runtime_error {
public:
  explicit EigenNonConvergence(double residual)
    : std::runtime_error("jacobi_eigen: no convergence, off-diagonal norm " +
                         std::to_string(residual))
    , residual_(residual)
  {
  }
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

struct SymmetricEigen {
  Eigen::VectorXd values;  // ascending
  Eigen::MatrixXd vectors; // column j pairs with values[j]
};

/// Cyclic Jacobi rotations. Converged when the off-diagonal Frobenius norm
/// drops to `rel_tol * ||A||_F`. Each eigenvector is sign-normalized so its
/// largest-magnitude component is positive.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, double rel_tol = 1e-10,
                            int max_sweeps = 100);

} // namespace flaegis::linalg
