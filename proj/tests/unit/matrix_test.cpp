#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mgkd/numcore/matrix.hpp"

namespace mgkd::numcore {
namespace {

MatrixXd m22(double a, double b, double c, double d) {
  MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const MatrixXd a = m22(1, 2, 3, 4);
  EXPECT_EQ(matmul(a, MatrixXd::Identity(2, 2)), a);
}

TEST(Matmul, ZeroMatrixGivesZero) {
  EXPECT_EQ(matmul(m22(1, 2, 3, 4), MatrixXd::Zero(2, 2)), MatrixXd::Zero(2, 2));
}

TEST(Matmul, HandComputedColumnProduct) {
  MatrixXd b(2, 1);
  b << 5, 6;
  const MatrixXd c = matmul(m22(1, 2, 3, 4), b);
  ASSERT_EQ(c.rows(), 2);
  ASSERT_EQ(c.cols(), 1);
  EXPECT_EQ(c(0, 0), 17.0);
  EXPECT_EQ(c(1, 0), 39.0);
}

TEST(Matmul, InnerSizeMismatchThrows) {
  EXPECT_THROW(matmul(MatrixXd::Ones(2, 3), MatrixXd::Ones(2, 3)), DimensionError);
}

TEST(Matmul, OverflowIsReported) {
  const double big = std::numeric_limits<double>::max();
  EXPECT_THROW(matmul(m22(big, big, 0, 0), m22(big, 0, big, 0)), NumericError);
}

TEST(Matmul, StoresRowMajor) {
  const MatrixXd a = m22(1, 2, 3, 4);
  EXPECT_EQ(a.data()[1], 2.0);
  EXPECT_EQ(a.data()[2], 3.0);
}

TEST(Gather, RowsFollowIndexOrder) {
  MatrixXd m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const std::vector<std::size_t> idx{2, 0, 2};
  const MatrixXd g = gather_rows(m, idx);
  MatrixXd want(3, 2);
  want << 5, 6, 1, 2, 5, 6;
  EXPECT_EQ(g, want);

  VectorXd v(3);
  v << 10, 20, 30;
  const VectorXd gv = gather(v, idx);
  EXPECT_EQ(gv[0], 30.0);
  EXPECT_EQ(gv[1], 10.0);
}

TEST(Sigmoid, ClosedFormsAndExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-1000.0)));
  EXPECT_NEAR(log_sigmoid(-1000.0), -1000.0, 1e-9);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
}

TEST(Sigmoid, VectorFormMatchesScalar) {
  VectorXd z(4);
  z << -3, -0.5, 0, 7;
  const VectorXd p = sigmoid(z);
  for (Eigen::Index i = 0; i < z.size(); ++i) EXPECT_EQ(p[i], sigmoid(z[i]));
}

TEST(AllFinite, DetectsNan) {
  MatrixXd m = MatrixXd::Zero(2, 2);
  EXPECT_TRUE(all_finite(m));
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(all_finite(m));
}

}  // namespace
}  // namespace mgkd::numcore
