#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mgkd/numcore/matrix.hpp"

namespace mgkd::metrics {

using numcore::VectorXd;

/// Scores with binary labels (1 = default). AUC and KS need both classes.
struct ScoredSet {
  VectorXd scores;
  VectorXd labels;
};

/// Rank-sum AUC: (sum of positive ranks - n1(n1+1)/2) / (n1 n0), ranks
/// ascending from 1 with midranks for ties.
double auc(const ScoredSet& s);

/// max over observed thresholds x of |F1(x) - F0(x)| for the empirical CDFs.
double ks(const ScoredSet& s);

/// Fraction of all positives found in the top ceil(k% * n) rows by score.
/// Ties at the cutoff are broken by original row index (earlier rows first).
double recall_at_k(const ScoredSet& s, double k_percent = 10.0);

/// Number of rows in the top k_percent slice of n rows.
std::size_t top_k_count(std::size_t n, double k_percent);

struct EvalReport {
  double auc = 0.0;
  double ks = 0.0;
  double recall_at_k = 0.0;
  double k_percent = 10.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::string split;
  std::uint64_t seed = 0;
  std::string mode;

  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const ScoredSet& s, double k_percent = 10.0, std::string split = "test",
                    std::uint64_t seed = 0, std::string mode = "");

}  // namespace mgkd::metrics
