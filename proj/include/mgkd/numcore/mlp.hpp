#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mgkd/errors.hpp"
#include "mgkd/numcore/matrix.hpp"

namespace mgkd::numcore {

/// Affine map x -> x * weights + bias. Bias is stored as a 1 x out matrix so
/// every parameter tensor of the network has the same type.
template <typename Scalar>
struct Dense {
  DenseMatrix<Scalar> weights;  // in x out
  DenseMatrix<Scalar> bias;     // 1 x out

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out)
      : weights(DenseMatrix<Scalar>::Zero(in, out)), bias(DenseMatrix<Scalar>::Zero(1, out)) {}

  Eigen::Index in_dim() const { return weights.rows(); }
  Eigen::Index out_dim() const { return weights.cols(); }
};

/// Every trainable tensor of an Mlp. Also used for gradients and for the Adam
/// moment accumulators, which mirror the parameter shapes exactly.
template <typename Scalar>
struct MlpParameters {
  std::vector<Dense<Scalar>> encoder;
  Dense<Scalar> classifier;  // d x 1 weights, 1 x 1 bias

  MlpParameters zeros_like() const {
    MlpParameters out;
    out.encoder.reserve(encoder.size());
    for (const auto& layer : encoder) out.encoder.emplace_back(layer.in_dim(), layer.out_dim());
    out.classifier = Dense<Scalar>(classifier.in_dim(), classifier.out_dim());
    return out;
  }

  std::size_t tensor_count() const { return 2 * encoder.size() + 2; }

  /// Calls f(name, tensor) for every tensor in a fixed order:
  /// encoder[0].weights, encoder[0].bias, ..., classifier.weights, classifier.bias.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      f(tensor_name(i, true), encoder[i].weights);
      f(tensor_name(i, false), encoder[i].bias);
    }
    f(std::string("classifier.weights"), classifier.weights);
    f(std::string("classifier.bias"), classifier.bias);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<MlpParameters*>(this)->for_each(
        [&](const std::string& name, DenseMatrix<Scalar>& t) { f(name, std::as_const(t)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const DenseMatrix<Scalar>& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  bool same_shape(const MlpParameters& other) const {
    if (encoder.size() != other.encoder.size()) return false;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      if (encoder[i].weights.rows() != other.encoder[i].weights.rows() ||
          encoder[i].weights.cols() != other.encoder[i].weights.cols() ||
          encoder[i].bias.cols() != other.encoder[i].bias.cols()) {
        return false;
      }
    }
    return classifier.weights.rows() == other.classifier.weights.rows() &&
           classifier.weights.cols() == other.classifier.weights.cols();
  }

  bool operator==(const MlpParameters& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      if (encoder[i].weights != other.encoder[i].weights || encoder[i].bias != other.encoder[i].bias) return false;
    }
    return classifier.weights == other.classifier.weights && classifier.bias == other.classifier.bias;
  }

 private:
  static std::string tensor_name(std::size_t layer, bool weights) {
    return "encoder[" + std::to_string(layer) + (weights ? "].weights" : "].bias");
  }
};

struct MlpShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  double dropout_rate = 0.0;

  /// Width of the representation H fed to the classifier.
  std::size_t repr_dim() const { return hidden_dims.empty() ? input_dim : hidden_dims.back(); }

  bool operator==(const MlpShape&) const = default;
};

enum class Mode { kTrain, kEval };

/// Intermediate values of one forward pass, kept for backpropagation.
/// An empty dropout mask stands for the identity (always the case in eval mode).
template <typename Scalar>
struct ForwardCache {
  Mode mode = Mode::kEval;
  DenseMatrix<Scalar> input;
  std::vector<DenseMatrix<Scalar>> pre_activations;
  std::vector<DenseMatrix<Scalar>> activations;  // after ReLU and dropout
  std::vector<DenseMatrix<Scalar>> masks;
  Vector<Scalar> logits;
  Vector<Scalar> probs;

  /// H = g(x): the encoder output the classifier consumed.
  const DenseMatrix<Scalar>& representation() const {
    return activations.empty() ? input : activations.back();
  }
  Eigen::Index batch_size() const { return input.rows(); }
};

/// Feed-forward ReLU network split into an encoder g (the hidden stack) and a
/// single-logit classifier h, so that forward(x) = sigmoid(h(g(x))).
/// With no hidden layers the encoder is the identity and the model is
/// logistic regression.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = DenseMatrix<Scalar>;
  using Vec = Vector<Scalar>;

  Mlp() = default;

  /// All-zero parameters.
  explicit Mlp(MlpShape shape) : shape_(std::move(shape)) {
    if (shape_.input_dim == 0) throw ConfigError("Mlp: input_dim must be positive");
    if (!(shape_.dropout_rate >= 0.0 && shape_.dropout_rate < 1.0)) {
      throw ConfigError("Mlp: dropout_rate must lie in [0, 1)");
    }
    auto in = static_cast<Eigen::Index>(shape_.input_dim);
    for (std::size_t width : shape_.hidden_dims) {
      if (width == 0) throw ConfigError("Mlp: hidden width must be positive");
      params_.encoder.emplace_back(in, static_cast<Eigen::Index>(width));
      in = static_cast<Eigen::Index>(width);
    }
    params_.classifier = Dense<Scalar>(in, 1);
  }

  /// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  static Mlp he_uniform(MlpShape shape, std::mt19937_64& rng) {
    Mlp model(std::move(shape));
    auto init = [&rng](Dense<Scalar>& layer) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
        layer.weights.data()[i] = static_cast<Scalar>(dist(rng));
      }
    };
    for (auto& layer : model.params_.encoder) init(layer);
    init(model.params_.classifier);
    return model;
  }

  const MlpShape& shape() const { return shape_; }
  std::size_t input_dim() const { return shape_.input_dim; }
  std::size_t repr_dim() const { return shape_.repr_dim(); }
  MlpParameters<Scalar>& parameters() { return params_; }
  const MlpParameters<Scalar>& parameters() const { return params_; }

  ForwardCache<Scalar> forward(const Eigen::Ref<const Matrix>& x, Mode mode, std::mt19937_64& rng) const {
    return run_forward(x, mode, &rng);
  }

  /// Deterministic evaluation-mode pass; dropout is the identity.
  ForwardCache<Scalar> forward_eval(const Eigen::Ref<const Matrix>& x) const {
    return run_forward(x, Mode::kEval, nullptr);
  }

  Vec predict(const Eigen::Ref<const Matrix>& x) const { return forward_eval(x).probs; }

  /// Reverse accumulation. grad_logit is dL/dz per row; grad_repr is dL/dH,
  /// injected at the encoder output on top of the classifier path. An empty
  /// grad_repr means zero.
  MlpParameters<Scalar> backward(const ForwardCache<Scalar>& cache, const Eigen::Ref<const Vec>& grad_logit,
                                 const Eigen::Ref<const Matrix>& grad_repr) const {
    check_cache(cache);
    const Eigen::Index n = cache.batch_size();
    if (grad_logit.size() != n) {
      throw DimensionError("backward: grad_logit has " + std::to_string(grad_logit.size()) +
                           " entries for a batch of " + std::to_string(n));
    }
    const Matrix& h = cache.representation();
    const bool has_repr_grad = grad_repr.size() != 0;
    if (has_repr_grad && (grad_repr.rows() != h.rows() || grad_repr.cols() != h.cols())) {
      throw DimensionError("backward: grad_repr is " + shape_string(grad_repr.rows(), grad_repr.cols()) +
                           ", representation is " + shape_string(h.rows(), h.cols()));
    }

    MlpParameters<Scalar> grads = params_.zeros_like();
    grads.classifier.weights.noalias() = h.transpose() * grad_logit;
    grads.classifier.bias(0, 0) = grad_logit.sum();

    if (params_.encoder.empty()) return grads;

    Matrix upstream = grad_logit * params_.classifier.weights.transpose();
    if (has_repr_grad) upstream += grad_repr;

    for (std::size_t l = params_.encoder.size(); l-- > 0;) {
      const auto active = cache.pre_activations[l].array() > Scalar(0);
      if (cache.masks[l].size() != 0) {
        upstream.array() *= active.select(cache.masks[l].array(), Scalar(0));
      } else {
        upstream.array() *= active.template cast<Scalar>();
      }
      const Matrix& layer_in = l == 0 ? cache.input : cache.activations[l - 1];
      grads.encoder[l].weights.noalias() = layer_in.transpose() * upstream;
      grads.encoder[l].bias = upstream.colwise().sum();
      if (l > 0) upstream = upstream * params_.encoder[l].weights.transpose();
    }
    return grads;
  }

 private:
  ForwardCache<Scalar> run_forward(const Eigen::Ref<const Matrix>& x, Mode mode, std::mt19937_64* rng) const {
    if (static_cast<std::size_t>(x.cols()) != shape_.input_dim) {
      throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                           std::to_string(shape_.input_dim));
    }
    const bool dropout = mode == Mode::kTrain && shape_.dropout_rate > 0.0;
    if (dropout && rng == nullptr) throw StateError("forward: train mode with dropout needs a generator");

    ForwardCache<Scalar> cache;
    cache.mode = mode;
    cache.input = x;
    const std::size_t layers = params_.encoder.size();
    cache.pre_activations.reserve(layers);
    cache.activations.reserve(layers);
    cache.masks.resize(layers);

    // Bernoulli(keep) from 16-bit slices of raw 64-bit draws, four per draw.
    const auto drop_threshold = static_cast<std::uint32_t>(std::lround(shape_.dropout_rate * 65536.0));
    const Scalar keep_scale = Scalar(1) / Scalar(1.0 - shape_.dropout_rate);

    for (std::size_t l = 0; l < layers; ++l) {
      const Matrix& in = l == 0 ? cache.input : cache.activations.back();
      Matrix pre(in.rows(), params_.encoder[l].out_dim());
      pre.noalias() = in * params_.encoder[l].weights;
      pre.rowwise() += params_.encoder[l].bias.row(0);
      Matrix act(pre.rows(), pre.cols());
      if (!dropout) {
        act = pre.cwiseMax(Scalar(0));
      } else {
        Matrix mask(act.rows(), act.cols());
        fill_dropout_mask(mask, *rng, drop_threshold, keep_scale);
        act.array() = pre.array().cwiseMax(Scalar(0)) * mask.array();
        cache.masks[l] = std::move(mask);
      }
      cache.pre_activations.push_back(std::move(pre));
      cache.activations.push_back(std::move(act));
    }

    const Matrix& h = cache.representation();
    cache.logits.resize(h.rows());
    cache.logits.noalias() = h * params_.classifier.weights.col(0);
    cache.logits.array() += params_.classifier.bias(0, 0);
    cache.probs = sigmoid(cache.logits);
    if (!cache.logits.allFinite()) throw NumericError("forward: non-finite logits");
    return cache;
  }

  // Each 64-bit draw yields four 16-bit uniforms, lowest bits first. Slices are
  // staged in a small buffer so the comparison loop vectorizes.
  static void fill_dropout_mask(Matrix& mask, std::mt19937_64& rng, std::uint32_t threshold, Scalar keep_scale) {
    constexpr Eigen::Index kChunk = 4096;
    std::array<std::uint16_t, kChunk> slices;
    Scalar* out = mask.data();
    const Eigen::Index size = mask.size();
    for (Eigen::Index start = 0; start < size; start += kChunk) {
      const Eigen::Index count = std::min(kChunk, size - start);
      for (Eigen::Index w = 0; w < (count + 3) / 4; ++w) {
        const std::uint64_t bits = rng();
        for (int k = 0; k < 4; ++k) slices[4 * w + k] = static_cast<std::uint16_t>(bits >> (16 * k));
      }
      for (Eigen::Index k = 0; k < count; ++k) {
        out[start + k] = slices[k] >= threshold ? keep_scale : Scalar(0);
      }
    }
  }

  void check_cache(const ForwardCache<Scalar>& cache) const {
    const std::size_t layers = params_.encoder.size();
    if (cache.pre_activations.size() != layers || cache.activations.size() != layers ||
        cache.masks.size() != layers) {
      throw StateError("backward: cache was produced by a model with a different depth");
    }
    if (static_cast<std::size_t>(cache.input.cols()) != shape_.input_dim) {
      throw StateError("backward: cache input width does not match the model");
    }
    for (std::size_t l = 0; l < layers; ++l) {
      if (cache.pre_activations[l].cols() != params_.encoder[l].out_dim()) {
        throw StateError("backward: cache layer " + std::to_string(l) + " width does not match the model");
      }
    }
    if (cache.logits.size() != cache.batch_size()) throw StateError("backward: cache has no logits");
  }

  MlpShape shape_;
  MlpParameters<Scalar> params_;
};

using MlpModel = Mlp<double>;
using Gradients = MlpParameters<double>;

}  // namespace mgkd::numcore
