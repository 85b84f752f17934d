#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mgkd/losses.hpp"
#include "mgkd/numcore/grad_check.hpp"

namespace mgkd::testing {

using numcore::ForwardCache;
using numcore::MatrixXd;
using numcore::MlpModel;
using numcore::VectorXd;

/// A student, a frozen teacher of the same architecture and one batch of data.
struct GradFixture {
  MlpModel student;
  MlpModel teacher;
  MatrixXd x_pre;
  MatrixXd x_in;
  VectorXd y;
  VectorXd snapshot_logits;
  VectorXd teacher_logits;
  MatrixXd teacher_repr;
  std::uint64_t dropout_seed = 99;
};

inline GradFixture make_grad_fixture(std::vector<std::size_t> hidden, std::size_t samples, std::size_t input_dim,
                                     double dropout = 0.0, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  GradFixture f;
  f.student = MlpModel::he_uniform({input_dim, hidden, dropout}, rng);
  f.teacher = MlpModel::he_uniform({input_dim, hidden, dropout}, rng);
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(samples);
  const auto d = static_cast<Eigen::Index>(input_dim);
  f.x_pre.resize(n, d);
  f.x_in.resize(n, d);
  f.y.resize(n);
  f.snapshot_logits.resize(n);
  for (Eigen::Index i = 0; i < f.x_pre.size(); ++i) f.x_pre.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < f.x_in.size(); ++i) f.x_in.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.y[i] = i % 3 == 0 ? 1.0 : 0.0;
    f.snapshot_logits[i] = 1.5 * normal(rng);
  }
  const auto t = f.teacher.forward_eval(f.x_in);
  f.teacher_logits = t.logits;
  f.teacher_repr = t.representation();
  return f;
}

using LossFn = std::function<losses::LossValue(const ForwardCache<double>&, const GradFixture&)>;

struct NamedLoss {
  std::string name;
  LossFn fn;
};

/// Every loss the trainer can compose, evaluated on the student's forward pass.
inline std::vector<NamedLoss> all_losses() {
  using namespace losses;
  const ClassPriors priors(2.0 / 3.0, 1.0 / 3.0);
  std::vector<NamedLoss> out;
  out.push_back({"kl_hard", [](const auto& c, const auto& f) { return kl_hard(f.y, c.probs); }});
  out.push_back({"kl_hard_weighted", [priors](const auto& c, const auto& f) {
                   const VectorXd w = reweight(f.y, priors);
                   return kl_hard(f.y, c.probs, &w);
                 }});
  out.push_back({"kl_soft_tau1", [](const auto& c, const auto& f) { return kl_soft(f.teacher_logits, c.logits, 1.0); }});
  out.push_back({"kl_soft_tau2.5", [](const auto& c, const auto& f) { return kl_soft(f.teacher_logits, c.logits, 2.5); }});
  out.push_back({"feat_mse", [](const auto& c, const auto& f) {
                   return feat_loss(f.teacher_repr, c.representation(), FeatMetric::kMse);
                 }});
  out.push_back({"feat_cosine", [](const auto& c, const auto& f) {
                   return feat_loss(f.teacher_repr, c.representation(), FeatMetric::kCosine);
                 }});
  out.push_back({"self_tau2.5", [](const auto& c, const auto& f) {
                   return self_loss(c.logits, std::optional<VectorXd>(f.snapshot_logits), 2.5);
                 }});
  out.push_back({"focal_gamma0", [](const auto& c, const auto& f) { return focal_loss(f.y, c.probs, 0.0); }});
  out.push_back({"focal_gamma2", [](const auto& c, const auto& f) { return focal_loss(f.y, c.probs, 2.0); }});
  out.push_back({"distill_total", [priors](const auto& c, const auto& f) {
                   const VectorXd w = reweight(f.y, priors);
                   const auto label = label_loss(f.y, c.probs, f.teacher_logits, c.logits, 2.5, 0.2, &w);
                   const auto feat = feat_loss(f.teacher_repr, c.representation(), FeatMetric::kMse);
                   const auto self = self_loss(c.logits, std::optional<VectorXd>(f.snapshot_logits), 2.5);
                   return distill_total(label, feat, self, 0.25, 0.1);
                 }});
  return out;
}

/// Runs the student forward in train mode with a freshly seeded generator so
/// dropout masks are identical across the perturbed evaluations.
inline ForwardCache<double> student_pass(const MlpModel& model, const GradFixture& f) {
  std::mt19937_64 rng(f.dropout_seed);
  return model.forward(f.x_pre, numcore::Mode::kTrain, rng);
}

inline numcore::Gradients analytic_gradient(const LossFn& loss, const GradFixture& f) {
  const auto cache = student_pass(f.student, f);
  const auto value = loss(cache, f);
  return f.student.backward(cache, value.grad_logit, value.grad_repr);
}

inline numcore::GradCheckReport check_loss_gradient(const LossFn& loss, const GradFixture& f,
                                                    const numcore::GradCheckOptions& opts = {}) {
  const std::function<double(const MlpModel&)> value = [&](const MlpModel& m) {
    return loss(student_pass(m, f), f).value;
  };
  return numcore::grad_check(value, f.student, analytic_gradient(loss, f), opts);
}

}  // namespace mgkd::testing
