#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mgkd/errors.hpp"
#include "mgkd/numcore/mlp.hpp"

namespace mgkd::numcore {

struct GradCheckOptions {
  double eps = 1e-5;
  // Above this many parameters only `subsample` randomly chosen entries are probed.
  std::size_t full_check_limit = 10'000;
  std::size_t subsample = 2'000;
  // Denominator floor so that entries with |gradient| ~ 0 are judged absolutely.
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Compares `analytic` against central differences of `loss` around `model`.
/// Relative error per entry is |a - n| / max(|a| + |n|, floor).
template <typename Scalar>
GradCheckReport grad_check(const std::function<Scalar(const Mlp<Scalar>&)>& loss, Mlp<Scalar> model,
                           const MlpParameters<Scalar>& analytic, const GradCheckOptions& opts = {}) {
  if (!(opts.eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  if (!model.parameters().same_shape(analytic)) {
    throw DimensionError("grad_check: analytic gradient does not match the model");
  }

  struct Entry {
    std::size_t tensor;
    Eigen::Index index;
  };
  std::vector<DenseMatrix<Scalar>*> tensors;
  std::vector<std::string> names;
  model.parameters().for_each([&](const std::string& name, DenseMatrix<Scalar>& t) {
    tensors.push_back(&t);
    names.push_back(name);
  });
  std::vector<const DenseMatrix<Scalar>*> grads;
  analytic.for_each([&](const std::string&, const DenseMatrix<Scalar>& t) { grads.push_back(&t); });

  std::vector<Entry> entries;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    for (Eigen::Index i = 0; i < tensors[k]->size(); ++i) entries.push_back({k, i});
  }
  if (entries.size() > opts.full_check_limit) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(std::min(opts.subsample, entries.size()));
  }

  GradCheckReport report;
  for (const Entry& e : entries) {
    Scalar& theta = tensors[e.tensor]->data()[e.index];
    const Scalar saved = theta;
    theta = saved + static_cast<Scalar>(opts.eps);
    const double plus = static_cast<double>(loss(model));
    theta = saved - static_cast<Scalar>(opts.eps);
    const double minus = static_cast<double>(loss(model));
    theta = saved;

    const double numeric = (plus - minus) / (2.0 * opts.eps);
    const double a = static_cast<double>(grads[e.tensor]->data()[e.index]);
    const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), opts.floor);
    if (!(rel <= report.max_relative_error)) {
      report.max_relative_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
      report.worst_parameter = names[e.tensor] + "[" + std::to_string(e.index) + "]";
    }
    ++report.checked;
  }
  return report;
}

}  // namespace mgkd::numcore
