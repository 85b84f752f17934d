#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>

#include "loss_fixtures.hpp"
#include "mgkd/losses.hpp"
#include "mgkd/numcore/matrix.hpp"

namespace mgkd::losses {
namespace {

using numcore::sigmoid;

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Two-class KL((1-a, a) || (1-b, b)), written out directly.
double kl2(double a, double b) { return a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b)); }

VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double scale = 2.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

bool bitwise_equal(const LossValue& a, const LossValue& b) {
  return a.value == b.value && a.grad_logit == b.grad_logit && a.grad_repr.rows() == b.grad_repr.rows() &&
         a.grad_repr.cols() == b.grad_repr.cols() && a.grad_repr == b.grad_repr;
}

TEST(KlHard, NearPerfectPredictionIsClamped) {
  const auto l = kl_hard(vec({1}), vec({1.0}));
  EXPECT_NEAR(l.value, -std::log(1 - 1e-7), 1e-15);
  EXPECT_NEAR(l.value, 1e-7, 1e-12);
}

TEST(KlHard, ClosedForm) {
  EXPECT_NEAR(kl_hard(vec({1}), vec({0.8})).value, 0.22314355131420976, 1e-12);
  EXPECT_NEAR(kl_hard(vec({1, 0}), vec({0.8, 0.2})).value, 0.22314355131420976, 1e-12);
}

TEST(KlHard, GradientIsWeightedResidual) {
  const VectorXd w = vec({2, 3});
  const auto l = kl_hard(vec({1, 0}), vec({0.8, 0.4}), &w);
  EXPECT_NEAR(l.grad_logit[0], 2 * (0.8 - 1) / 2, 1e-15);
  EXPECT_NEAR(l.grad_logit[1], 3 * 0.4 / 2, 1e-15);
  EXPECT_FALSE(l.has_repr_grad());
}

TEST(KlHard, LengthMismatch) {
  EXPECT_THROW(kl_hard(vec({1, 0}), vec({0.5})), DimensionError);
  const VectorXd w = vec({1});
  EXPECT_THROW(kl_hard(vec({1, 0}), vec({0.5, 0.5}), &w), DimensionError);
}

TEST(KlSoft, IdenticalLogitsGiveZero) {
  const VectorXd z = random_vector(20, 1);
  for (double tau : {1.0, 2.5, 7.0}) {
    const auto l = kl_soft(z, z, tau);
    EXPECT_EQ(l.value, 0.0);
    EXPECT_TRUE(l.grad_logit.isZero(0.0));
  }
}

TEST(KlSoft, TwoClassClosedForm) {
  const auto l = kl_soft(vec({logit(0.9)}), vec({0.0}), 1.0);
  const double want = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  EXPECT_NEAR(want, 0.36806, 5e-6);
  EXPECT_NEAR(l.value, want, 1e-12);
}

TEST(KlSoft, MatchesDirectKlAtTemperature) {
  const VectorXd t = random_vector(50, 2);
  const VectorXd s = random_vector(50, 3);
  for (double tau : {1.0, 2.5, 4.0}) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) sum += kl2(sigmoid(t[i] / tau), sigmoid(s[i] / tau));
    EXPECT_NEAR(kl_soft(t, s, tau).value, tau * tau * sum / 50, 1e-12);
  }
}

TEST(KlSoft, LargeTemperatureApproachesTaylorLimit) {
  const double zt = 1.3, zs = -0.4;
  const double limit = (zt - zs) * (zt - zs) / 8.0;
  double previous_gap = 1e9;
  for (double tau : {10.0, 30.0, 100.0}) {
    const double gap = std::abs(kl_soft(vec({zt}), vec({zs}), tau).value - limit);
    // Next-order term shrinks like 1/tau^2.
    EXPECT_LT(gap, 0.5 * limit / (tau * tau) * 10);
    EXPECT_LT(gap, previous_gap);
    previous_gap = gap;
  }
}

TEST(KlSoft, TemperatureBelowOneRejected) {
  EXPECT_THROW(kl_soft(vec({0}), vec({0}), 0.5), ConfigError);
}

TEST(LabelLoss, BoundariesAreBitwise) {
  const VectorXd y = vec({1, 0, 0, 1, 0});
  const VectorXd zs = random_vector(5, 4);
  const VectorXd zt = random_vector(5, 5);
  const VectorXd p = numcore::sigmoid(zs);
  const auto hard = kl_hard(y, p);
  const auto soft = kl_soft(zt, zs, 2.5);
  EXPECT_TRUE(bitwise_equal(label_loss(y, p, zt, zs, 2.5, 0.0), hard));
  EXPECT_TRUE(bitwise_equal(label_loss(y, p, zt, zs, 2.5, 1.0), soft));
}

TEST(LabelLoss, Linearity) {
  LossValue hard{0.2, vec({0.1}), {}};
  LossValue soft{0.4, vec({-0.3}), {}};
  const auto l = label_loss(hard, soft, 0.5);
  EXPECT_NEAR(l.value, 0.3, 1e-15);
  EXPECT_NEAR(l.grad_logit[0], -0.1, 1e-15);
  EXPECT_THROW(label_loss(hard, soft, 1.5), ConfigError);
  EXPECT_THROW(label_loss(hard, soft, -0.1), ConfigError);
}

TEST(FeatLoss, AlignedRepresentationsGiveZero) {
  MatrixXd h(2, 3);
  h << 1, 2, 3, -1, 0.5, 2;
  EXPECT_EQ(feat_loss(h, h, FeatMetric::kMse).value, 0.0);
  EXPECT_NEAR(feat_loss(h, h, FeatMetric::kCosine).value, 0.0, 1e-15);
}

TEST(FeatLoss, ClosedForms) {
  MatrixXd t(1, 2), s(1, 2);
  t << 1, 0;
  s << 0, 1;
  const auto mse = feat_loss(t, s, FeatMetric::kMse);
  EXPECT_EQ(mse.value, 1.0);
  EXPECT_EQ(mse.grad_repr(0, 0), -1.0);
  EXPECT_EQ(mse.grad_repr(0, 1), 1.0);
  EXPECT_TRUE(mse.grad_logit.isZero(0.0));
  EXPECT_EQ(feat_loss(t, s, FeatMetric::kCosine).value, 1.0);
}

TEST(FeatLoss, Errors) {
  EXPECT_THROW(feat_loss(MatrixXd::Ones(2, 3), MatrixXd::Ones(2, 4), FeatMetric::kMse), DimensionError);
  MatrixXd s = MatrixXd::Ones(3, 2);
  s.row(2).setZero();
  try {
    feat_loss(MatrixXd::Ones(3, 2), s, FeatMetric::kCosine);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(SelfLoss, SnapshotEqualToCurrentGivesZero) {
  const VectorXd z = random_vector(10, 6);
  EXPECT_EQ(self_loss(z, z, 2.5).value, 0.0);
}

TEST(SelfLoss, ClosedFormAtUnitTemperature) {
  EXPECT_NEAR(self_loss(vec({0.0}), vec({logit(0.9)}), 1.0).value, 0.36806, 5e-6);
}

TEST(SelfLoss, TemperatureTwoSoftensTheDivergence) {
  const VectorXd snap = vec({logit(0.9)});
  const VectorXd cur = vec({0.0});
  const double t1 = self_loss(cur, snap, 1.0).value;
  const double t2 = self_loss(cur, snap, 2.0).value;
  // The KL between the softened distributions shrinks; the tau^2 factor
  // multiplies it back up above the tau = 1 value for this pair.
  EXPECT_LT(t2 / 4.0, t1);
  EXPECT_NEAR(t2 / 4.0, kl2(sigmoid(logit(0.9) / 2), 0.5), 1e-12);
  EXPECT_GT(t2, t1);
}

TEST(SelfLoss, MissingSnapshotIsStateError) {
  EXPECT_THROW(self_loss(vec({0.0}), std::nullopt, 2.0), StateError);
}

TEST(DistillTotal, ZeroWeightsReduceToLabelBitwise) {
  const auto label = kl_hard(vec({1, 0}), vec({0.7, 0.2}));
  MatrixXd ht(2, 2), hs(2, 2);
  ht << 1, 2, 3, 4;
  hs << 0, 1, 2, 5;
  const auto feat = feat_loss(ht, hs, FeatMetric::kMse);
  const auto self = kl_soft(vec({1, -1}), vec({0.3, 0.2}), 2.0);
  const auto total = distill_total(label, feat, self, 0.0, 0.0);
  EXPECT_EQ(total.value, label.value);
  EXPECT_EQ(total.grad_logit, label.grad_logit);
  EXPECT_TRUE(bitwise_equal(distill_total(label, std::nullopt, std::nullopt, 0.25, 0.1), label));
}

TEST(DistillTotal, Arithmetic) {
  const LossValue label{0.3, vec({0.0}), {}};
  const LossValue feat{0.2, vec({0.0}), {}};
  const LossValue self{0.1, vec({0.0}), {}};
  EXPECT_NEAR(distill_total(label, feat, self, 0.25, 0.1).value, 0.36, 1e-15);
}

TEST(DistillTotal, LinearInWeights) {
  const LossValue label{0.3, vec({0.5}), {}};
  const LossValue feat{0.2, vec({-0.25}), MatrixXd::Constant(1, 2, 0.75)};
  const LossValue self{0.1, vec({0.125}), {}};
  for (double beta : {0.0, 0.5, 2.0}) {
    for (double lambda : {0.0, 0.25, 4.0}) {
      const auto t = distill_total(label, feat, self, beta, lambda);
      EXPECT_EQ(t.value, 0.3 + beta * 0.2 + lambda * 0.1);
      EXPECT_EQ(t.grad_logit[0], 0.5 - beta * 0.25 + lambda * 0.125);
      EXPECT_EQ(t.grad_repr(0, 1), beta * 0.75);
    }
  }
  EXPECT_THROW(distill_total(label, feat, self, -0.1, 0.0), ConfigError);
  EXPECT_THROW(distill_total(label, feat, self, 0.0, -0.1), ConfigError);
}

TEST(Reweight, InversePriors) {
  const ClassPriors p(0.9, 0.1);
  const VectorXd w = reweight(vec({1, 0}), p);
  EXPECT_NEAR(w[0], 10.0, 1e-12);
  EXPECT_NEAR(w[1], 10.0 / 9.0, 1e-12);
  EXPECT_NEAR(ClassPriors(1 - 0.072, 0.072).weight(1), 13.89, 0.005);
}

TEST(Reweight, BalancedPriorsDoubleTheLoss) {
  const VectorXd y = vec({1, 0, 1, 0});
  const VectorXd p = vec({0.7, 0.1, 0.4, 0.6});
  const VectorXd w = reweight(y, ClassPriors(0.5, 0.5));
  EXPECT_TRUE((w.array() == 2.0).all());
  EXPECT_NEAR(kl_hard(y, p, &w).value, 2.0 * kl_hard(y, p).value, 1e-15);
}

TEST(Reweight, PriorsValidation) {
  EXPECT_THROW(ClassPriors(0.5, 0.6), ConfigError);
  EXPECT_THROW(ClassPriors(1.0, 0.0), ConfigError);
  const auto p = ClassPriors::from_labels(vec({1, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(p.positive(), 0.25);
  EXPECT_THROW(ClassPriors::from_labels(vec({0, 0})), DataError);
}

TEST(Focal, GammaZeroIsCrossEntropyBitwise) {
  const VectorXd y = vec({1, 0, 1, 0, 1});
  const VectorXd p = numcore::sigmoid(random_vector(5, 8));
  const VectorXd w = vec({1, 2, 3, 4, 5});
  EXPECT_TRUE(bitwise_equal(focal_loss(y, p, 0.0), kl_hard(y, p)));
  EXPECT_TRUE(bitwise_equal(focal_loss(y, p, 0.0, &w), kl_hard(y, p, &w)));
}

TEST(Focal, ClosedForms) {
  EXPECT_NEAR(focal_loss(vec({1}), vec({0.9}), 2.0).value, 0.01 * -std::log(0.9), 1e-12);
  EXPECT_NEAR(focal_loss(vec({1}), vec({0.9}), 2.0).value, 0.0010536, 1e-7);
  EXPECT_NEAR(focal_loss(vec({1}), vec({0.5}), 2.0).value, 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(focal_loss(vec({0}), vec({0.5}), 2.0).value, 0.17329, 1e-5);
  EXPECT_THROW(focal_loss(vec({1}), vec({0.5}), -1.0), ConfigError);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(10);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd zs = random_vector(30, 100 + trial, 4.0);
    const VectorXd zt = random_vector(30, 200 + trial, 4.0);
    VectorXd y(30);
    for (Eigen::Index i = 0; i < 30; ++i) y[i] = coin(rng) ? 1.0 : 0.0;
    const VectorXd p = numcore::sigmoid(zs);
    EXPECT_GE(kl_hard(y, p).value, 0.0);
    EXPECT_GE(focal_loss(y, p, 2.0).value, 0.0);
    EXPECT_GE(kl_soft(zt, zs, 2.5).value, 0.0);
    EXPECT_GE(self_loss(zs, zt, 1.0).value, 0.0);
  }
}

TEST(Losses, HardTermSwitch) {
  const VectorXd y = vec({1, 0, 0});
  const VectorXd p = vec({0.6, 0.3, 0.2});
  const ClassPriors pr(2.0 / 3, 1.0 / 3);
  const VectorXd w = reweight(y, pr);
  EXPECT_TRUE(bitwise_equal(hard_loss(HardTerm::kCe, y, p, 2.0, std::nullopt), kl_hard(y, p)));
  EXPECT_TRUE(bitwise_equal(hard_loss(HardTerm::kReweighted, y, p, 2.0, pr), kl_hard(y, p, &w)));
  EXPECT_TRUE(bitwise_equal(hard_loss(HardTerm::kFocal, y, p, 2.0, std::nullopt), focal_loss(y, p, 2.0)));
  EXPECT_TRUE(bitwise_equal(hard_loss(HardTerm::kReweightedFocal, y, p, 2.0, pr), focal_loss(y, p, 2.0, &w)));
  EXPECT_THROW(hard_loss(HardTerm::kReweighted, y, p, 2.0, std::nullopt), ConfigError);
  EXPECT_EQ(parse_hard_term("reweighted_focal"), HardTerm::kReweightedFocal);
  EXPECT_EQ(parse_feat_metric("cosine"), FeatMetric::kCosine);
  EXPECT_THROW(parse_hard_term("hinge"), ConfigError);
}

// Perturbing the teacher changes the loss but never adds gradient channels
// for teacher quantities: every returned gradient is shaped like the student.
TEST(Losses, TeacherIsDetached) {
  auto f = testing::make_grad_fixture({8, 8}, 16, 5);
  const auto loss = testing::all_losses().back().fn;
  const auto cache = testing::student_pass(f.student, f);
  const auto before = loss(cache, f);

  f.teacher.parameters().encoder[0].weights.array() += 0.05;
  const auto t = f.teacher.forward_eval(f.x_in);
  f.teacher_logits = t.logits;
  f.teacher_repr = t.representation();
  const auto after = loss(cache, f);

  EXPECT_NE(before.value, after.value);
  EXPECT_EQ(after.grad_logit.size(), cache.logits.size());
  EXPECT_EQ(after.grad_repr.rows(), cache.representation().rows());
  EXPECT_EQ(after.grad_repr.cols(), cache.representation().cols());
  const auto grads = f.student.backward(cache, after.grad_logit, after.grad_repr);
  EXPECT_TRUE(grads.same_shape(f.student.parameters()));
}

}  // namespace
}  // namespace mgkd::losses
