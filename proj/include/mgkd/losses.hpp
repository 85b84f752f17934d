#pragma once

#include <optional>
#include <string_view>

#include "mgkd/numcore/matrix.hpp"

// Training objectives for teacher and student. Every loss returns its value
// together with the gradient with respect to the student's logits z and,
// where it depends on it, the student's representation H. Gradients are
// already divided by the batch size, so the trainer only adds them up.
namespace mgkd::losses {

using numcore::MatrixXd;
using numcore::VectorXd;

inline constexpr double kProbClamp = 1e-7;

struct LossValue {
  double value = 0.0;
  VectorXd grad_logit;  // one entry per sample
  MatrixXd grad_repr;   // N x d, or empty when the loss does not touch H

  bool has_repr_grad() const { return grad_repr.size() != 0; }
};

/// Class proportions estimated on the training split.
class ClassPriors {
 public:
  ClassPriors(double negative, double positive);
  static ClassPriors from_labels(const VectorXd& y);

  double negative() const { return pi0_; }
  double positive() const { return pi1_; }
  double weight(int label) const { return label == 1 ? 1.0 / pi1_ : 1.0 / pi0_; }

 private:
  double pi0_;
  double pi1_;
};

enum class FeatMetric { kMse, kCosine };
enum class HardTerm { kCe, kReweighted, kFocal, kReweightedFocal };

FeatMetric parse_feat_metric(std::string_view s);
HardTerm parse_hard_term(std::string_view s);
std::string_view to_string(FeatMetric m);
std::string_view to_string(HardTerm h);

/// Per-sample weights w_i = 1 / pi_{y_i}.
VectorXd reweight(const VectorXd& y, const ClassPriors& priors);

/// KL((1-y, y) || (1-p, p)) for binary y, i.e. cross-entropy. Mean over the
/// batch of weight_i * CE_i; gradient weight_i * (p_i - y_i) / N.
LossValue kl_hard(const VectorXd& y, const VectorXd& p, const VectorXd* weights = nullptr);

/// mean weight_i * (1 - p_t)^gamma * (-ln p_t). gamma = 0 reproduces kl_hard bit for bit.
LossValue focal_loss(const VectorXd& y, const VectorXd& p, double gamma, const VectorXd* weights = nullptr);

/// tau^2 * mean KL(sigmoid(z_t / tau) || sigmoid(z_s / tau)) over the two-class
/// distributions. The teacher side is a constant.
LossValue kl_soft(const VectorXd& teacher_logits, const VectorXd& student_logits, double tau);

/// (1 - alpha) * hard + alpha * soft.
LossValue label_loss(const LossValue& hard, const LossValue& soft, double alpha);
LossValue label_loss(const VectorXd& y, const VectorXd& p, const VectorXd& teacher_logits,
                     const VectorXd& student_logits, double tau, double alpha, const VectorXd* weights = nullptr);

/// Representation alignment D(H_t, H_s); the teacher side is a constant.
LossValue feat_loss(const MatrixXd& h_teacher, const MatrixXd& h_student, FeatMetric metric);

/// Self-distillation against logits stored from an earlier epoch.
/// Throws StateError when no snapshot is available.
LossValue self_loss(const VectorXd& student_logits, const std::optional<VectorXd>& snapshot_logits, double tau);

/// label + beta * feat + lambda * self, with absent parts counting as zero.
LossValue distill_total(const LossValue& label, const std::optional<LossValue>& feat,
                        const std::optional<LossValue>& self, double beta, double lambda);

/// The configured hard term: CE, re-weighted CE, focal or re-weighted focal.
LossValue hard_loss(HardTerm term, const VectorXd& y, const VectorXd& p, double gamma,
                    const std::optional<ClassPriors>& priors);

}  // namespace mgkd::losses
