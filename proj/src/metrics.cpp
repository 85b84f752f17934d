#include "mgkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "mgkd/errors.hpp"

namespace mgkd::metrics {
namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts validate(const ScoredSet& s, const char* what) {
  if (s.scores.size() != s.labels.size()) throw DimensionError(std::string(what) + ": scores and labels differ in length");
  if (s.scores.size() == 0) throw MetricError(std::string(what) + ": empty input");
  if (!s.scores.allFinite()) throw MetricError(std::string(what) + ": non-finite score");
  ClassCounts c;
  for (Eigen::Index i = 0; i < s.labels.size(); ++i) {
    if (s.labels[i] == 1.0) {
      ++c.pos;
    } else if (s.labels[i] == 0.0) {
      ++c.neg;
    } else {
      throw MetricError(std::string(what) + ": label outside {0,1} at row " + std::to_string(i));
    }
  }
  return c;
}

ClassCounts validate_two_class(const ScoredSet& s, const char* what) {
  ClassCounts c = validate(s, what);
  if (c.pos == 0 || c.neg == 0) throw MetricError(std::string(what) + ": needs at least one positive and one negative");
  return c;
}

std::vector<std::size_t> ascending_order(const VectorXd& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  return order;
}

}  // namespace

double auc(const ScoredSet& s) {
  const ClassCounts c = validate_two_class(s, "auc");
  const std::vector<std::size_t> order = ascending_order(s.scores);
  const std::size_t n = order.size();
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    const double v = s.scores[static_cast<Eigen::Index>(order[i])];
    while (j < n && s.scores[static_cast<Eigen::Index>(order[j])] == v) ++j;
    // Rows i..j-1 share ranks i+1..j; each gets the midrank.
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[static_cast<Eigen::Index>(order[k])] == 1.0) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(c.pos);
  const double n0 = static_cast<double>(c.neg);
  return (positive_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

double ks(const ScoredSet& s) {
  const ClassCounts c = validate_two_class(s, "ks");
  const std::vector<std::size_t> order = ascending_order(s.scores);
  const std::size_t n = order.size();
  std::size_t below_pos = 0;
  std::size_t below_neg = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < n;) {
    const double v = s.scores[static_cast<Eigen::Index>(order[i])];
    while (i < n && s.scores[static_cast<Eigen::Index>(order[i])] == v) {
      if (s.labels[static_cast<Eigen::Index>(order[i])] == 1.0) {
        ++below_pos;
      } else {
        ++below_neg;
      }
      ++i;
    }
    const double gap = std::abs(static_cast<double>(below_pos) / static_cast<double>(c.pos) -
                                static_cast<double>(below_neg) / static_cast<double>(c.neg));
    best = std::max(best, gap);
  }
  return best;
}

std::size_t top_k_count(std::size_t n, double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ConfigError("recall_at_k: k_percent must lie in (0, 100]");
  // k * n is exact for integral k; the small slack absorbs representation error otherwise.
  const double raw = k_percent * static_cast<double>(n) / 100.0;
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(std::max<std::size_t>(count, n == 0 ? 0 : 1), n);
}

double recall_at_k(const ScoredSet& s, double k_percent) {
  const ClassCounts c = validate(s, "recall_at_k");
  if (c.pos == 0) throw MetricError("recall_at_k: no positives");
  const std::size_t n = static_cast<std::size_t>(s.scores.size());
  const std::size_t cutoff = top_k_count(n, k_percent);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[static_cast<Eigen::Index>(a)] > s.scores[static_cast<Eigen::Index>(b)];
  });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (s.labels[static_cast<Eigen::Index>(order[i])] == 1.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(c.pos);
}

EvalReport evaluate(const ScoredSet& s, double k_percent, std::string split, std::uint64_t seed, std::string mode) {
  const ClassCounts c = validate_two_class(s, "evaluate");
  EvalReport r;
  r.auc = auc(s);
  r.ks = ks(s);
  r.recall_at_k = recall_at_k(s, k_percent);
  r.k_percent = k_percent;
  r.n_pos = c.pos;
  r.n_neg = c.neg;
  r.split = std::move(split);
  r.seed = seed;
  r.mode = std::move(mode);
  return r;
}

}  // namespace mgkd::metrics
