#pragma once

#include <Eigen/Dense>

#include "mvseg/error.hpp"

namespace mvseg {

// Solves min_W ||X W - Y||^2 + lambda ||W||^2 through the normal equations.
// X is samples x inputs, Y is samples x outputs; returns inputs x outputs.
inline Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double lambda) {
  require(X.rows() == Y.rows() && X.rows() > 0, "ridge regression needs matching, nonempty samples");
  require(lambda >= 0, "ridge coefficient must be non-negative");
  Eigen::MatrixXd gram = X.transpose() * X;
  gram.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error("ridge regression: factorization failed");
  return solver.solve(X.transpose() * Y);
}

}  // namespace mvseg
