#ifndef CIP_ENCODER_HPP
#define CIP_ENCODER_HPP

#include "cip/numeric.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cip {

enum class Activation { identity, relu };

inline std::string_view to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

/// Layer widths D -> hidden... -> n and one activation per weight layer.
struct MlpSpec {
  std::vector<int> layer_dims;
  std::vector<Activation> activations;

  static MlpSpec make(std::vector<int> dims, Activation hidden = Activation::relu,
                      Activation final_activation = Activation::identity) {
    MlpSpec spec;
    spec.layer_dims = std::move(dims);
    if (spec.layer_dims.size() >= 2) {
      spec.activations.assign(spec.layer_dims.size() - 1, hidden);
      spec.activations.back() = final_activation;
    }
    spec.validate();
    return spec;
  }

  std::size_t num_layers() const { return activations.size(); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  void validate() const {
    if (layer_dims.size() < 2) throw std::invalid_argument("MlpSpec: need input and output dims");
    for (int w : layer_dims)
      if (w < 1) throw std::invalid_argument("MlpSpec: layer widths must be positive");
    if (activations.size() != layer_dims.size() - 1)
      throw std::invalid_argument("MlpSpec: one activation per layer required");
  }
};

/// y = act(W x + b), W is out x in.
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

template <typename Scalar>
using MlpParams = std::vector<DenseLayer<Scalar>>;

/// Activations recorded by a forward pass, one column per input.
template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> inputs;          // input to each layer
  std::vector<Matrix<Scalar>> pre_activation;  // W x + b per layer
};

template <typename Scalar>
struct MlpBackward {
  MlpParams<Scalar> param_grads;
  Matrix<Scalar> grad_in;
};

template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  Mlp(MlpSpec spec, MlpParams<Scalar> params) : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (params_.size() != spec_.num_layers())
      throw std::invalid_argument("Mlp: parameter count does not match spec");
    for (std::size_t l = 0; l < params_.size(); ++l) {
      const auto& p = params_[l];
      if (p.weights.rows() != spec_.layer_dims[l + 1] || p.weights.cols() != spec_.layer_dims[l] ||
          p.bias.size() != spec_.layer_dims[l + 1]) {
        throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has wrong shape");
      }
      if (!p.weights.allFinite() || !p.bias.allFinite())
        throw std::invalid_argument("Mlp: non-finite parameters");
    }
  }

  /// Zero-mean Gaussian weights with the given stddev, zero biases.
  template <typename Rng>
  static Mlp gaussian(const MlpSpec& spec, Scalar stddev, Rng& rng) {
    spec.validate();
    std::normal_distribution<Scalar> normal(Scalar(0), stddev);
    MlpParams<Scalar> params;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      DenseLayer<Scalar> layer{Matrix<Scalar>(spec.layer_dims[l + 1], spec.layer_dims[l]),
                               Vector<Scalar>::Zero(spec.layer_dims[l + 1])};
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) layer.weights(i, j) = normal(rng);
      params.push_back(std::move(layer));
    }
    return Mlp(spec, std::move(params));
  }

  /// He-style init: per-layer stddev sqrt(2 / fan_in).
  template <typename Rng>
  static Mlp he(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    MlpParams<Scalar> params;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      std::normal_distribution<Scalar> normal(Scalar(0),
                                              std::sqrt(Scalar(2) / Scalar(spec.layer_dims[l])));
      DenseLayer<Scalar> layer{Matrix<Scalar>(spec.layer_dims[l + 1], spec.layer_dims[l]),
                               Vector<Scalar>::Zero(spec.layer_dims[l + 1])};
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) layer.weights(i, j) = normal(rng);
      params.push_back(std::move(layer));
    }
    return Mlp(spec, std::move(params));
  }

  const MlpSpec& spec() const { return spec_; }
  const MlpParams<Scalar>& params() const { return params_; }
  MlpParams<Scalar>& params() { return params_; }

  /// Embeds each column of `input` (D x M) into an n x M matrix.
  Matrix<Scalar> forward(const Eigen::Ref<const Matrix<Scalar>>& input,
                         MlpCache<Scalar>* cache = nullptr) const {
    if (input.rows() != spec_.input_dim()) {
      throw DimensionError("Mlp::forward: input dim " + std::to_string(input.rows()) +
                           ", expected " + std::to_string(spec_.input_dim()));
    }
    if (cache) {
      cache->inputs.clear();
      cache->pre_activation.clear();
    }
    Matrix<Scalar> x = input;
    for (std::size_t l = 0; l < params_.size(); ++l) {
      Matrix<Scalar> z = params_[l].weights * x;
      z.colwise() += params_[l].bias;
      if (cache) {
        cache->inputs.push_back(std::move(x));
        cache->pre_activation.push_back(z);
      }
      x = spec_.activations[l] == Activation::relu ? Matrix<Scalar>(z.cwiseMax(Scalar(0)))
                                                   : std::move(z);
    }
    return x;
  }

  FeatureVector<Scalar> forward_one(const Eigen::Ref<const Vector<Scalar>>& input,
                                    MlpCache<Scalar>* cache = nullptr) const {
    return forward(Matrix<Scalar>(input), cache).col(0);
  }

  /// Gradients of sum_columns <grad_out, forward(input)> w.r.t. parameters
  /// and input, given the cache from the matching forward pass.
  MlpBackward<Scalar> backward(const MlpCache<Scalar>& cache,
                               const Eigen::Ref<const Matrix<Scalar>>& grad_out) const {
    if (cache.inputs.size() != params_.size() || cache.pre_activation.size() != params_.size())
      throw std::invalid_argument("Mlp::backward: cache does not match network depth");
    const Eigen::Index m = cache.inputs.front().cols();
    if (grad_out.rows() != spec_.output_dim() || grad_out.cols() != m)
      throw std::invalid_argument("Mlp::backward: grad_out shape does not match cached forward");

    MlpBackward<Scalar> out;
    out.param_grads.resize(params_.size());
    Matrix<Scalar> delta = grad_out;
    for (std::size_t l = params_.size(); l-- > 0;) {
      if (spec_.activations[l] == Activation::relu) {
        delta = (cache.pre_activation[l].array() > Scalar(0)).select(delta, Scalar(0));
      }
      out.param_grads[l].weights.noalias() = delta * cache.inputs[l].transpose();
      out.param_grads[l].bias = delta.rowwise().sum();
      delta = params_[l].weights.transpose() * delta;
    }
    out.grad_in = std::move(delta);
    return out;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index count = 0;
    for (const auto& p : params_) count += p.weights.size() + p.bias.size();
    return count;
  }

  /// Parameters packed layer by layer (weights column-major, then bias).
  Vector<Scalar> flatten() const { return flatten(params_); }

  static Vector<Scalar> flatten(const MlpParams<Scalar>& params) {
    Eigen::Index count = 0;
    for (const auto& p : params) count += p.weights.size() + p.bias.size();
    Vector<Scalar> flat(count);
    Eigen::Index at = 0;
    for (const auto& p : params) {
      flat.segment(at, p.weights.size()) = p.weights.reshaped();
      at += p.weights.size();
      flat.segment(at, p.bias.size()) = p.bias;
      at += p.bias.size();
    }
    return flat;
  }

  void assign(const Eigen::Ref<const Vector<Scalar>>& flat) {
    if (flat.size() != parameter_count()) throw DimensionError("Mlp::assign: size mismatch");
    Eigen::Index at = 0;
    for (auto& p : params_) {
      p.weights.reshaped() = flat.segment(at, p.weights.size());
      at += p.weights.size();
      p.bias = flat.segment(at, p.bias.size());
      at += p.bias.size();
    }
  }

 private:
  MlpSpec spec_;
  MlpParams<Scalar> params_;
};

}  // namespace cip

#endif  // CIP_ENCODER_HPP
