#pragma once

#include <Eigen/Core>

#include <limits>

namespace acr {

using Index = Eigen::Index;

/* Row-major aliases; everything in the model is row-major so that a token
   sequence is one row per token and reshapes are free. */
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;
using Vector = Eigen::VectorXd;

template <typename Scalar = double>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

}  // namespace acr
