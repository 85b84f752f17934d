#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mgkd/errors.hpp"
#include "mgkd/numcore/mlp.hpp"

namespace mgkd::numcore {

template <typename Scalar>
struct AdamState {
  MlpParameters<Scalar> first_moment;
  MlpParameters<Scalar> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const Mlp<Scalar>& model)
      : first_moment(model.parameters().zeros_like()), second_moment(model.parameters().zeros_like()) {}
};

/// One Adam update. Weight decay is the coupled L2 form: weight_decay * theta
/// is added to the gradient before the moment updates.
template <typename Scalar>
void adam_step(Mlp<Scalar>& model, const MlpParameters<Scalar>& grads, AdamState<Scalar>& state, double lr,
               double weight_decay) {
  auto& params = model.parameters();
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw DimensionError("adam_step: gradient or optimizer state does not match the model");
  }
  grads.for_each([](const std::string& name, const DenseMatrix<Scalar>& g) {
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient in " + name);
  });

  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  // Walk the four parameter sets in lockstep; for_each visits tensors in a fixed order.
  std::vector<DenseMatrix<Scalar>*> theta, m, v;
  std::vector<const DenseMatrix<Scalar>*> g;
  params.for_each([&](const std::string&, DenseMatrix<Scalar>& t) { theta.push_back(&t); });
  state.first_moment.for_each([&](const std::string&, DenseMatrix<Scalar>& t) { m.push_back(&t); });
  state.second_moment.for_each([&](const std::string&, DenseMatrix<Scalar>& t) { v.push_back(&t); });
  grads.for_each([&](const std::string&, const DenseMatrix<Scalar>& t) { g.push_back(&t); });

  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto th = theta[k]->array();
    auto grad = (g[k]->array() + static_cast<Scalar>(weight_decay) * th).eval();
    m[k]->array() = b1 * m[k]->array() + (Scalar(1) - b1) * grad;
    v[k]->array() = b2 * v[k]->array() + (Scalar(1) - b2) * grad.square();
    th -= static_cast<Scalar>(lr) * (m[k]->array() / static_cast<Scalar>(bias1)) /
          ((v[k]->array() / static_cast<Scalar>(bias2)).sqrt() + static_cast<Scalar>(state.epsilon));
  }
}

}  // namespace mgkd::numcore
