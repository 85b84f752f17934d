#pragma once

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>

#include "mgkd/errors.hpp"

namespace mgkd::numcore {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = DenseMatrix<double>;
using VectorXd = Vector<double>;
using RowVectorXd = RowVector<double>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Checked matrix product. Throws DimensionError when the inner sizes differ
/// and NumericError when the product overflows.
template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b)
    -> DenseMatrix<typename A::Scalar> {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.rows(), a.cols()) + " times " +
                         shape_string(b.rows(), b.cols()));
  }
  DenseMatrix<typename A::Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  if (!out.allFinite()) throw NumericError("matmul: non-finite product");
  return out;
}

/// Copies the listed rows of `m` into a new matrix, preserving order.
template <typename Derived>
auto gather_rows(const Eigen::MatrixBase<Derived>& m, std::span<const std::size_t> rows)
    -> DenseMatrix<typename Derived::Scalar> {
  DenseMatrix<typename Derived::Scalar> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> gather(const Vector<Scalar>& v, std::span<const std::size_t> rows) {
  Vector<Scalar> out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
  }
  return out;
}

template <std::floating_point Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(z)) without overflow.
template <std::floating_point Scalar>
Scalar softplus(Scalar z) {
  if (z > Scalar(0)) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

/// log(sigmoid(z)).
template <std::floating_point Scalar>
Scalar log_sigmoid(Scalar z) {
  return -softplus(-z);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) -> Vector<typename Derived::Scalar> {
  using S = typename Derived::Scalar;
  return z.unaryExpr([](S v) { return sigmoid(v); });
}

}  // namespace mgkd::numcore
