#include "mgkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgkd/errors.hpp"

namespace mgkd::losses {
namespace {

using numcore::log_sigmoid;
using numcore::sigmoid;

void require_same_length(const VectorXd& a, const VectorXd& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

void check_weights(const VectorXd* weights, Eigen::Index n, const char* what) {
  if (weights != nullptr && weights->size() != n) {
    throw DimensionError(std::string(what) + ": " + std::to_string(weights->size()) + " weights for " +
                         std::to_string(n) + " samples");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// out += scale * term, where an empty matrix stands for zero.
void add_scaled(MatrixXd& out, const MatrixXd& term, double scale) {
  if (term.size() == 0) return;
  if (out.size() == 0) {
    out = scale * term;
  } else {
    if (out.rows() != term.rows() || out.cols() != term.cols()) {
      throw DimensionError("loss combination: representation gradients differ in shape");
    }
    out += scale * term;
  }
}

}  // namespace

ClassPriors::ClassPriors(double negative, double positive) : pi0_(negative), pi1_(positive) {
  if (!(negative > 0.0 && negative < 1.0 && positive > 0.0 && positive < 1.0) ||
      std::abs(negative + positive - 1.0) > 1e-12) {
    throw ConfigError("ClassPriors: proportions must lie in (0, 1) and sum to 1");
  }
}

ClassPriors ClassPriors::from_labels(const VectorXd& y) {
  if (y.size() == 0) throw DataError("ClassPriors: no labels");
  const double positives = y.sum();
  const double n = static_cast<double>(y.size());
  if (positives <= 0.0 || positives >= n) throw DataError("ClassPriors: training labels contain a single class");
  const double pi1 = positives / n;
  return ClassPriors(1.0 - pi1, pi1);
}

FeatMetric parse_feat_metric(std::string_view s) {
  if (s == "mse") return FeatMetric::kMse;
  if (s == "cosine") return FeatMetric::kCosine;
  throw ConfigError("unknown feat_metric '" + std::string(s) + "' (expected mse|cosine)");
}

HardTerm parse_hard_term(std::string_view s) {
  if (s == "ce") return HardTerm::kCe;
  if (s == "reweighted") return HardTerm::kReweighted;
  if (s == "focal") return HardTerm::kFocal;
  if (s == "reweighted_focal") return HardTerm::kReweightedFocal;
  throw ConfigError("unknown hard_term '" + std::string(s) + "' (expected ce|reweighted|focal|reweighted_focal)");
}

std::string_view to_string(FeatMetric m) { return m == FeatMetric::kMse ? "mse" : "cosine"; }

std::string_view to_string(HardTerm h) {
  switch (h) {
    case HardTerm::kCe: return "ce";
    case HardTerm::kReweighted: return "reweighted";
    case HardTerm::kFocal: return "focal";
    case HardTerm::kReweightedFocal: return "reweighted_focal";
  }
  return "ce";
}

VectorXd reweight(const VectorXd& y, const ClassPriors& priors) {
  VectorXd w(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) w[i] = priors.weight(y[i] == 1.0 ? 1 : 0);
  return w;
}

LossValue kl_hard(const VectorXd& y, const VectorXd& p, const VectorXd* weights) {
  require_same_length(y, p, "kl_hard");
  check_weights(weights, y.size(), "kl_hard");
  const Eigen::Index n = y.size();
  LossValue out;
  out.grad_logit.resize(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pc = clamp_prob(p[i]);
    const double pt = y[i] == 1.0 ? pc : 1.0 - pc;
    const double ce = -std::log(pt);
    const double w = weights != nullptr ? (*weights)[i] : 1.0;
    sum += w * ce;
    out.grad_logit[i] = w * (pc - y[i]) / static_cast<double>(n);
  }
  out.value = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return out;
}

LossValue focal_loss(const VectorXd& y, const VectorXd& p, double gamma, const VectorXd* weights) {
  if (!(gamma >= 0.0)) throw ConfigError("focal_loss: gamma must be >= 0");
  require_same_length(y, p, "focal_loss");
  check_weights(weights, y.size(), "focal_loss");
  const Eigen::Index n = y.size();
  LossValue out;
  out.grad_logit.resize(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pc = clamp_prob(p[i]);
    const bool positive = y[i] == 1.0;
    const double pt = positive ? pc : 1.0 - pc;
    const double sign = positive ? 1.0 : -1.0;
    const double ce = -std::log(pt);
    const double modulation = std::pow(1.0 - pt, gamma);
    const double w = weights != nullptr ? (*weights)[i] : 1.0;
    sum += w * (modulation * ce);
    // d/dz of (1-pt)^g * (-ln pt) with dpt/dz = sign * pt * (1 - pt).
    const double grad = (pc - y[i]) * modulation + sign * gamma * pt * modulation * std::log(pt);
    out.grad_logit[i] = w * grad / static_cast<double>(n);
  }
  out.value = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return out;
}

LossValue kl_soft(const VectorXd& teacher_logits, const VectorXd& student_logits, double tau) {
  if (!(tau >= 1.0)) throw ConfigError("kl_soft: temperature must be >= 1");
  require_same_length(teacher_logits, student_logits, "kl_soft");
  const Eigen::Index n = student_logits.size();
  LossValue out;
  out.grad_logit.resize(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = teacher_logits[i] / tau;
    const double b = student_logits[i] / tau;
    const double pt = sigmoid(a);
    const double ps = sigmoid(b);
    const double kl = pt * (log_sigmoid(a) - log_sigmoid(b)) + (1.0 - pt) * (log_sigmoid(-a) - log_sigmoid(-b));
    sum += std::max(kl, 0.0);
    // tau^2 * (ps - pt) / tau
    out.grad_logit[i] = tau * (ps - pt) / static_cast<double>(n);
  }
  out.value = n > 0 ? tau * tau * sum / static_cast<double>(n) : 0.0;
  return out;
}

LossValue label_loss(const LossValue& hard, const LossValue& soft, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("label_loss: alpha must lie in [0, 1]");
  require_same_length(hard.grad_logit, soft.grad_logit, "label_loss");
  LossValue out;
  out.value = (1.0 - alpha) * hard.value + alpha * soft.value;
  out.grad_logit = (1.0 - alpha) * hard.grad_logit + alpha * soft.grad_logit;
  add_scaled(out.grad_repr, hard.grad_repr, 1.0 - alpha);
  add_scaled(out.grad_repr, soft.grad_repr, alpha);
  return out;
}

LossValue label_loss(const VectorXd& y, const VectorXd& p, const VectorXd& teacher_logits,
                     const VectorXd& student_logits, double tau, double alpha, const VectorXd* weights) {
  return label_loss(kl_hard(y, p, weights), kl_soft(teacher_logits, student_logits, tau), alpha);
}

LossValue feat_loss(const MatrixXd& h_teacher, const MatrixXd& h_student, FeatMetric metric) {
  if (h_teacher.rows() != h_student.rows() || h_teacher.cols() != h_student.cols()) {
    throw DimensionError("feat_loss: teacher representation is " +
                         numcore::shape_string(h_teacher.rows(), h_teacher.cols()) + ", student is " +
                         numcore::shape_string(h_student.rows(), h_student.cols()));
  }
  const Eigen::Index n = h_student.rows();
  LossValue out;
  out.grad_logit = VectorXd::Zero(n);
  if (n == 0 || h_student.cols() == 0) {
    out.grad_repr = MatrixXd::Zero(n, h_student.cols());
    return out;
  }

  if (metric == FeatMetric::kMse) {
    const double count = static_cast<double>(h_student.size());
    const MatrixXd diff = h_student - h_teacher;
    out.value = diff.squaredNorm() / count;
    out.grad_repr = (2.0 / count) * diff;
    return out;
  }

  out.grad_repr.resize(n, h_student.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto t = h_teacher.row(i);
    const auto s = h_student.row(i);
    const double nt = t.norm();
    const double ns = s.norm();
    if (nt == 0.0 || ns == 0.0) {
      throw NumericError("feat_loss: cosine distance undefined for zero-norm row " + std::to_string(i) +
                         (nt == 0.0 ? " (teacher)" : " (student)"));
    }
    const double cos = t.dot(s) / (nt * ns);
    sum += 1.0 - cos;
    out.grad_repr.row(i) = -(t / (nt * ns) - cos * s / (ns * ns)) / static_cast<double>(n);
  }
  out.value = sum / static_cast<double>(n);
  return out;
}

LossValue self_loss(const VectorXd& student_logits, const std::optional<VectorXd>& snapshot_logits, double tau) {
  if (!snapshot_logits) throw StateError("self_loss: no snapshot from a previous epoch");
  return kl_soft(*snapshot_logits, student_logits, tau);
}

LossValue distill_total(const LossValue& label, const std::optional<LossValue>& feat,
                        const std::optional<LossValue>& self, double beta, double lambda) {
  if (!(beta >= 0.0)) throw ConfigError("distill_total: beta must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("distill_total: lambda must be >= 0");
  LossValue out = label;
  if (feat) {
    require_same_length(out.grad_logit, feat->grad_logit, "distill_total");
    out.value += beta * feat->value;
    out.grad_logit += beta * feat->grad_logit;
    add_scaled(out.grad_repr, feat->grad_repr, beta);
  }
  if (self) {
    require_same_length(out.grad_logit, self->grad_logit, "distill_total");
    out.value += lambda * self->value;
    out.grad_logit += lambda * self->grad_logit;
    add_scaled(out.grad_repr, self->grad_repr, lambda);
  }
  return out;
}

LossValue hard_loss(HardTerm term, const VectorXd& y, const VectorXd& p, double gamma,
                    const std::optional<ClassPriors>& priors) {
  const bool weighted = term == HardTerm::kReweighted || term == HardTerm::kReweightedFocal;
  VectorXd weights;
  if (weighted) {
    if (!priors) throw ConfigError("hard_loss: re-weighting needs class priors");
    weights = reweight(y, *priors);
  }
  const VectorXd* w = weighted ? &weights : nullptr;
  switch (term) {
    case HardTerm::kCe:
    case HardTerm::kReweighted:
      return kl_hard(y, p, w);
    case HardTerm::kFocal:
    case HardTerm::kReweightedFocal:
      return focal_loss(y, p, gamma, w);
  }
  return kl_hard(y, p, w);
}

}  // namespace mgkd::losses
