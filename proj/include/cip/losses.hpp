#ifndef CIP_LOSSES_HPP
#define CIP_LOSSES_HPP

#include "cip/numeric.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cip {

// Class indices are 0-based in-process (label k on disk is class k-1).

/// One learnable direction per class, stored as the columns of an n x K matrix.
template <typename Scalar>
class CenterlineBank {
 public:
  CenterlineBank() = default;

  explicit CenterlineBank(Matrix<Scalar> centers) : centers_(std::move(centers)) {
    if (centers_.cols() < 2) throw std::invalid_argument("CenterlineBank: need at least 2 classes");
    if (centers_.rows() < 1) throw std::invalid_argument("CenterlineBank: empty dimension");
    if (!centers_.allFinite()) throw std::invalid_argument("CenterlineBank: non-finite centerline");
  }

  /// Gaussian(0, stddev) initialization.
  template <typename Rng>
  static CenterlineBank gaussian(Eigen::Index dim, Eigen::Index num_classes, Scalar stddev,
                                 Rng& rng) {
    std::normal_distribution<Scalar> normal(Scalar(0), stddev);
    Matrix<Scalar> c(dim, num_classes);
    for (Eigen::Index k = 0; k < num_classes; ++k)
      for (Eigen::Index t = 0; t < dim; ++t) c(t, k) = normal(rng);
    return CenterlineBank(std::move(c));
  }

  Eigen::Index dim() const { return centers_.rows(); }
  Eigen::Index num_classes() const { return centers_.cols(); }

  auto centerline(Eigen::Index k) const { return centers_.col(k); }
  const Matrix<Scalar>& centers() const { return centers_; }
  Matrix<Scalar>& centers() { return centers_; }

 private:
  Matrix<Scalar> centers_;
};

/// M labelled features (columns) plus optional back-references to the rows
/// they came from, so the trainer can route feature gradients.
template <typename Scalar>
struct LabeledBatch {
  Eigen::Ref<const Matrix<Scalar>> features;
  std::span<const int> labels;
  std::span<const std::size_t> sources = {};

  Eigen::Index size() const { return features.cols(); }
  Eigen::Index dim() const { return features.rows(); }
  auto feature(Eigen::Index i) const { return features.col(i); }
  int label(Eigen::Index i) const { return labels[static_cast<std::size_t>(i)]; }
};

namespace detail {

template <typename Scalar>
void check_batch(const LabeledBatch<Scalar>& batch) {
  if (static_cast<std::size_t>(batch.size()) != batch.labels.size()) {
    throw std::invalid_argument("LabeledBatch: " + std::to_string(batch.labels.size()) +
                                " labels for " + std::to_string(batch.size()) + " features");
  }
  if (!batch.sources.empty() && batch.sources.size() != batch.labels.size()) {
    throw std::invalid_argument("LabeledBatch: back-reference count mismatch");
  }
}

template <typename Scalar>
void check_batch(const LabeledBatch<Scalar>& batch, Eigen::Index num_classes, Eigen::Index dim) {
  check_batch(batch);
  require_same_size(batch.dim(), dim, "LabeledBatch vs centerlines");
  for (int y : batch.labels) {
    if (y < 0 || y >= num_classes) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
}

template <typename Scalar>
void check_bank(const LabeledBatch<Scalar>& batch, const CenterlineBank<Scalar>& bank) {
  check_batch(batch, bank.num_classes(), bank.dim());
}

inline void check_stability_constant(double d) {
  if (!(d > 0)) throw std::invalid_argument("stability constant d must be > 0");
}

inline void check_class(Eigen::Index k, Eigen::Index num_classes) {
  if (k < 0 || k >= num_classes) {
    throw std::out_of_range("class index " + std::to_string(k) + " outside [0, " +
                            std::to_string(num_classes) + ")");
  }
}

template <typename Scalar>
Scalar positive_part(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward values

/// Cluster (pull) loss: sum_i 1 / ((f_i . c_{y_i})_+ + d).
///
/// The product is clipped at zero so that the value is the antiderivative of
/// the clipped gradient used in backprop. Bounded in (0, M/d].
template <typename Scalar>
Scalar cluster_forward(const LabeledBatch<Scalar>& batch, const CenterlineBank<Scalar>& bank,
                       Scalar d) {
  detail::check_stability_constant(d);
  detail::check_bank(batch, bank);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const Scalar s = dot(batch.feature(i), bank.centerline(batch.label(i)));
    acc += Scalar(1) / (detail::positive_part(s) + d);
  }
  return acc;
}

/// Unclipped cluster loss, singular at f . c = -d. Diagnostics only.
template <typename Scalar>
Scalar cluster_forward_unclipped(const LabeledBatch<Scalar>& batch,
                                 const CenterlineBank<Scalar>& bank, Scalar d) {
  detail::check_stability_constant(d);
  detail::check_bank(batch, bank);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    acc += Scalar(1) / (dot(batch.feature(i), bank.centerline(batch.label(i))) + d);
  }
  return acc;
}

/// Ortho (push) loss against the other classes' centerlines.
template <typename Scalar>
Scalar ortho_forward(const LabeledBatch<Scalar>& batch, const CenterlineBank<Scalar>& bank) {
  detail::check_bank(batch, bank);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index k = 0; k < bank.num_classes(); ++k) {
      if (k == batch.label(i)) continue;
      acc += detail::positive_part(dot(batch.feature(i), bank.centerline(k)));
    }
  }
  return acc;
}

/// Batch Ortho loss over ordered cross-class feature pairs (each unordered
/// pair contributes twice).
template <typename Scalar>
Scalar ortho_batch_forward(const LabeledBatch<Scalar>& batch) {
  detail::check_batch(batch);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
      if (batch.label(j) == batch.label(i)) continue;
      acc += detail::positive_part(dot(batch.feature(i), batch.feature(j)));
    }
  }
  return acc;
}

enum class OrthoVariant { centerline, batch };

/// Which terms an objective uses and how they are weighted:
///   total = cluster + lambda * ortho + softmax_weight * softmax + center_weight * center
struct LossConfig {
  bool use_cluster = true;
  bool use_ortho = true;
  bool use_softmax = false;
  bool use_center = false;
  double lambda = 1.0;
  double d = 2.0;
  double softmax_weight = 0.1;
  double center_weight = 0.0003;
  OrthoVariant ortho_variant = OrthoVariant::centerline;

  bool uses_centerlines() const {
    return use_cluster || (use_ortho && ortho_variant == OrthoVariant::centerline);
  }

  void validate() const {
    if (!(d > 0) || !std::isfinite(d)) throw std::invalid_argument("loss: d must be > 0");
    if (!(lambda >= 0) || !std::isfinite(lambda))
      throw std::invalid_argument("loss: lambda must be >= 0");
    if (!(softmax_weight >= 0)) throw std::invalid_argument("loss: softmax_weight must be >= 0");
    if (!(center_weight >= 0)) throw std::invalid_argument("loss: center_weight must be >= 0");
    if (!use_cluster && !use_ortho && !use_softmax && !use_center)
      throw std::invalid_argument("loss: no loss term enabled");
  }
};

/// Named loss combinations. Softmax gets weight 1 when it is the main term.
///   cip, cip_batch, cluster, ortho, cip+softmax, cip+center, softmax,
///   center+softmax
inline LossConfig loss_preset(std::string_view name) {
  LossConfig c;
  if (name == "cip") return c;
  if (name == "cip_batch") {
    c.ortho_variant = OrthoVariant::batch;
    return c;
  }
  if (name == "cluster") {
    c.use_ortho = false;
    return c;
  }
  if (name == "ortho") {
    c.use_cluster = false;
    return c;
  }
  if (name == "cip+softmax") {
    c.use_softmax = true;
    return c;
  }
  if (name == "cip+center") {
    c.use_center = true;
    return c;
  }
  if (name == "softmax" || name == "center+softmax") {
    c.use_cluster = c.use_ortho = false;
    c.use_softmax = true;
    c.softmax_weight = 1.0;
    c.use_center = name == "center+softmax";
    return c;
  }
  throw std::invalid_argument("unknown loss preset '" + std::string(name) + "'");
}

inline constexpr std::array<std::string_view, 8> kLossPresets{
    "cip", "cip_batch", "cluster", "ortho", "cip+softmax", "cip+center", "softmax", "center+softmax"};

/// CIP objective: cluster + lambda * ortho (centerline or batch variant).
template <typename Scalar>
Scalar cip_forward(const LabeledBatch<Scalar>& batch, const CenterlineBank<Scalar>& bank,
                   const LossConfig& cfg) {
  cfg.validate();
  const Scalar d = static_cast<Scalar>(cfg.d);
  const Scalar cluster = cluster_forward(batch, bank, d);
  const Scalar ortho = cfg.ortho_variant == OrthoVariant::centerline ? ortho_forward(batch, bank)
                                                                     : ortho_batch_forward(batch);
  return cluster + static_cast<Scalar>(cfg.lambda) * ortho;
}

// ---------------------------------------------------------------------------
// Feature gradients

/// Surrogate cluster gradient: -c / ((f . c)_+ + d)^2. Bounded by |c| / d^2.
template <typename DerivedF, typename DerivedC>
FeatureVector<typename DerivedF::Scalar> cluster_grad_feature(
    const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedC>& c,
    typename DerivedF::Scalar d) {
  using Scalar = typename DerivedF::Scalar;
  const Scalar denom = detail::positive_part(dot(f, c)) + d;
  return -c / (denom * denom);
}

/// True derivative of the unclipped cluster term: -c / (f . c + d)^2.
/// Throws inside the guard band |f . c + d| < 1e-9.
template <typename DerivedF, typename DerivedC>
FeatureVector<typename DerivedF::Scalar> cluster_grad_feature_origin(
    const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedC>& c,
    typename DerivedF::Scalar d) {
  using Scalar = typename DerivedF::Scalar;
  const Scalar denom = dot(f, c) + d;
  if (std::abs(denom) < Scalar(1e-9)) {
    throw std::domain_error("cluster_grad_feature_origin: f.c + d is singular");
  }
  return -c / (denom * denom);
}

/// Sum of the other-class centerlines that f has a strictly positive product with.
template <typename DerivedF, typename Scalar>
FeatureVector<Scalar> ortho_grad_feature(const Eigen::MatrixBase<DerivedF>& f,
                                         const CenterlineBank<Scalar>& bank, int own_label) {
  detail::check_class(own_label, bank.num_classes());
  detail::require_same_size(f.size(), bank.dim(), "ortho_grad_feature");
  FeatureVector<Scalar> g = FeatureVector<Scalar>::Zero(bank.dim());
  for (Eigen::Index k = 0; k < bank.num_classes(); ++k) {
    if (k == own_label) continue;
    if (dot(f, bank.centerline(k)) > Scalar(0)) g += bank.centerline(k);
  }
  return g;
}

/// Gradient of the batch Ortho loss w.r.t. feature i. The factor 2 comes
/// from f_i sitting on both sides of the ordered-pair sum.
template <typename Scalar>
FeatureVector<Scalar> ortho_batch_grad_feature(const LabeledBatch<Scalar>& batch,
                                               Eigen::Index i) {
  detail::check_batch(batch);
  if (i < 0 || i >= batch.size()) throw std::out_of_range("ortho_batch_grad_feature: index");
  FeatureVector<Scalar> g = FeatureVector<Scalar>::Zero(batch.dim());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    if (batch.label(j) == batch.label(i)) continue;
    if (dot(batch.feature(i), batch.feature(j)) > Scalar(0)) g += batch.feature(j);
  }
  return Scalar(2) * g;
}

// ---------------------------------------------------------------------------
// Centerline gradients

/// Surrogate cluster gradient for centerline k, summed over its batch members.
template <typename Scalar>
FeatureVector<Scalar> cluster_grad_centerline(const LabeledBatch<Scalar>& batch,
                                              const CenterlineBank<Scalar>& bank,
                                              Eigen::Index class_index, Scalar d) {
  detail::check_stability_constant(d);
  detail::check_bank(batch, bank);
  detail::check_class(class_index, bank.num_classes());
  const auto c = bank.centerline(class_index);
  FeatureVector<Scalar> g = FeatureVector<Scalar>::Zero(bank.dim());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    if (batch.label(j) != class_index) continue;
    const Scalar denom = detail::positive_part(dot(batch.feature(j), c)) + d;
    g -= batch.feature(j) / (denom * denom);
  }
  return g;
}

/// Averaged Ortho gradient for centerline k: the sum of violating
/// other-class features divided by (1 + number of violators).
template <typename Scalar>
FeatureVector<Scalar> ortho_grad_centerline(const LabeledBatch<Scalar>& batch,
                                            const CenterlineBank<Scalar>& bank,
                                            Eigen::Index class_index) {
  detail::check_bank(batch, bank);
  detail::check_class(class_index, bank.num_classes());
  const auto c = bank.centerline(class_index);
  FeatureVector<Scalar> sum = FeatureVector<Scalar>::Zero(bank.dim());
  int violators = 0;
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    if (batch.label(j) == class_index) continue;
    if (dot(batch.feature(j), c) > Scalar(0)) {
      sum += batch.feature(j);
      ++violators;
    }
  }
  return sum / Scalar(1 + violators);
}

// ---------------------------------------------------------------------------
// Baselines

/// Linear classifier logits = W f + b, W is K x n.
template <typename Scalar>
struct LinearClassifier {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
};

template <typename Scalar>
struct SoftmaxResult {
  Scalar value{};
  Matrix<Scalar> feature_grads;  // n x M
  Matrix<Scalar> weight_grad;    // K x n
  Vector<Scalar> bias_grad;      // K
};

/// Mean cross-entropy of a linear classifier over the batch.
template <typename Scalar>
SoftmaxResult<Scalar> softmax_ce(const LabeledBatch<Scalar>& batch,
                                 const LinearClassifier<Scalar>& clf) {
  detail::check_batch(batch, clf.num_classes(), clf.dim());
  detail::require_same_size(clf.bias.size(), clf.num_classes(), "softmax_ce bias");
  const Eigen::Index m = batch.size();
  SoftmaxResult<Scalar> out;
  out.feature_grads = Matrix<Scalar>::Zero(batch.dim(), m);
  out.weight_grad = Matrix<Scalar>::Zero(clf.num_classes(), clf.dim());
  out.bias_grad = Vector<Scalar>::Zero(clf.num_classes());
  if (m == 0) return out;

  const Scalar inv_m = Scalar(1) / Scalar(m);
  Scalar total(0);
  for (Eigen::Index i = 0; i < m; ++i) {
    Vector<Scalar> logits = clf.weights * batch.feature(i) + clf.bias;
    const Scalar shift = logits.maxCoeff();
    Vector<Scalar> p = (logits.array() - shift).exp().matrix();
    const Scalar z = p.sum();
    p /= z;
    const int y = batch.label(i);
    total += -(logits(y) - shift - std::log(z));
    // dL/dlogits = p - onehot(y)
    p(y) -= Scalar(1);
    p *= inv_m;
    out.feature_grads.col(i) = clf.weights.transpose() * p;
    out.weight_grad.noalias() += p * batch.feature(i).transpose();
    out.bias_grad += p;
  }
  out.value = total * inv_m;
  return out;
}

template <typename Scalar>
struct CenterLossResult {
  Scalar value{};
  Matrix<Scalar> feature_grads;  // n x M
  Matrix<Scalar> center_grads;   // n x K, mean-style update direction
};

/// Center loss 1/2 sum_i |f_i - c_{y_i}|^2 over point centers (n x K).
/// Center gradient is the per-class mean-style update
/// sum_{y_i = k} (c_k - f_i) / (1 + n_k).
template <typename Scalar>
CenterLossResult<Scalar> center_loss(const LabeledBatch<Scalar>& batch,
                                     const Matrix<Scalar>& centers) {
  detail::check_batch(batch, centers.cols(), centers.rows());
  CenterLossResult<Scalar> out;
  out.feature_grads = Matrix<Scalar>::Zero(batch.dim(), batch.size());
  out.center_grads = Matrix<Scalar>::Zero(centers.rows(), centers.cols());
  Vector<Scalar> counts = Vector<Scalar>::Zero(centers.cols());
  Scalar total(0);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const int y = batch.label(i);
    const Vector<Scalar> diff = batch.feature(i) - centers.col(y);
    total += Scalar(0.5) * diff.squaredNorm();
    out.feature_grads.col(i) = diff;
    out.center_grads.col(y) -= diff;
    counts(y) += Scalar(1);
  }
  for (Eigen::Index k = 0; k < centers.cols(); ++k) out.center_grads.col(k) /= Scalar(1) + counts(k);
  out.value = total;
  return out;
}

template <typename Scalar>
struct TripletResult {
  Scalar value{};
  FeatureVector<Scalar> grad_anchor;
  FeatureVector<Scalar> grad_positive;
  FeatureVector<Scalar> grad_negative;
};

/// max(0, |a-p|^2 - |a-n|^2 + margin) with subgradients (zero when inactive).
template <typename Scalar>
TripletResult<Scalar> triplet_loss(const FeatureVector<Scalar>& anchor,
                                   const FeatureVector<Scalar>& positive,
                                   const FeatureVector<Scalar>& negative, Scalar margin = 1) {
  if (!(margin > Scalar(0))) throw std::invalid_argument("triplet_loss: margin must be > 0");
  detail::require_same_size(anchor.size(), positive.size(), "triplet_loss");
  detail::require_same_size(anchor.size(), negative.size(), "triplet_loss");
  const FeatureVector<Scalar> ap = anchor - positive;
  const FeatureVector<Scalar> an = anchor - negative;
  const Scalar hinge = ap.squaredNorm() - an.squaredNorm() + margin;
  TripletResult<Scalar> out;
  out.grad_anchor = FeatureVector<Scalar>::Zero(anchor.size());
  out.grad_positive = FeatureVector<Scalar>::Zero(anchor.size());
  out.grad_negative = FeatureVector<Scalar>::Zero(anchor.size());
  if (hinge <= Scalar(0)) return out;
  out.value = hinge;
  out.grad_anchor = Scalar(2) * (negative - positive);
  out.grad_positive = Scalar(-2) * ap;
  out.grad_negative = Scalar(2) * an;
  return out;
}

/// d/dw (w . f / |w|) = f/|w| - (w . f) w / |w|^3. Blows up as |w| -> 0,
/// unlike the plain inner-product gradient f.
template <typename DerivedW, typename DerivedF>
FeatureVector<typename DerivedW::Scalar> normalized_weight_gradient(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedF>& f) {
  using Scalar = typename DerivedW::Scalar;
  detail::require_same_size(w.size(), f.size(), "normalized_weight_gradient");
  const Scalar norm = w.norm();
  if (norm == Scalar(0)) throw std::domain_error("normalized_weight_gradient: zero weight");
  return f / norm - (dot(w, f) / (norm * norm * norm)) * w;
}

/// Gradient of w . f w.r.t. w.
template <typename DerivedW, typename DerivedF>
FeatureVector<typename DerivedW::Scalar> inner_product_weight_gradient(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedF>& f) {
  detail::require_same_size(w.size(), f.size(), "inner_product_weight_gradient");
  return f;
}

// ---------------------------------------------------------------------------
// Combined objective

/// Scalar loss terms and gradients for one batch. Term values are
/// unweighted; gradients already carry the configured weights.
template <typename Scalar>
struct LossReport {
  Scalar total{};
  std::map<std::string, Scalar> per_term;
  std::map<std::string, Scalar> weights;
  Matrix<Scalar> feature_grads;      // n x M
  Matrix<Scalar> center_grads;       // n x K (centerline bank)
  Matrix<Scalar> classifier_weight_grad;
  Vector<Scalar> classifier_bias_grad;
  Matrix<Scalar> center_point_grads;  // n x K (center-loss centers)
};

/// Parameters an objective may read besides the features.
template <typename Scalar>
struct ObjectiveParams {
  const CenterlineBank<Scalar>* bank = nullptr;
  const LinearClassifier<Scalar>* classifier = nullptr;
  const Matrix<Scalar>* center_points = nullptr;
};

template <typename Scalar>
LossReport<Scalar> evaluate_objective(const LabeledBatch<Scalar>& batch,
                                      const ObjectiveParams<Scalar>& params,
                                      const LossConfig& cfg) {
  cfg.validate();
  detail::check_batch(batch);
  const Eigen::Index n = batch.dim();
  const Eigen::Index m = batch.size();
  const Scalar d = static_cast<Scalar>(cfg.d);
  const Scalar lambda = static_cast<Scalar>(cfg.lambda);

  if (cfg.uses_centerlines() && params.bank == nullptr)
    throw std::invalid_argument("evaluate_objective: centerline bank required");
  if (cfg.use_softmax && params.classifier == nullptr)
    throw std::invalid_argument("evaluate_objective: classifier required");
  if (cfg.use_center && params.center_points == nullptr)
    throw std::invalid_argument("evaluate_objective: center points required");

  const Eigen::Index k_bank = params.bank ? params.bank->num_classes() : 0;
  LossReport<Scalar> r;
  r.feature_grads = Matrix<Scalar>::Zero(n, m);
  r.center_grads = Matrix<Scalar>::Zero(n, k_bank);
  if (params.classifier) {
    r.classifier_weight_grad = Matrix<Scalar>::Zero(params.classifier->num_classes(), n);
    r.classifier_bias_grad = Vector<Scalar>::Zero(params.classifier->num_classes());
  }
  if (params.center_points) {
    r.center_point_grads = Matrix<Scalar>::Zero(n, params.center_points->cols());
  }

  if (cfg.use_cluster) {
    const auto& bank = *params.bank;
    r.per_term["cluster"] = cluster_forward(batch, bank, d);
    r.weights["cluster"] = Scalar(1);
    for (Eigen::Index i = 0; i < m; ++i) {
      r.feature_grads.col(i) += cluster_grad_feature(batch.feature(i),
                                                     bank.centerline(batch.label(i)), d);
    }
    for (Eigen::Index k = 0; k < k_bank; ++k) {
      r.center_grads.col(k) += cluster_grad_centerline(batch, bank, k, d);
    }
  }

  if (cfg.use_ortho && cfg.ortho_variant == OrthoVariant::centerline) {
    const auto& bank = *params.bank;
    r.per_term["ortho"] = ortho_forward(batch, bank);
    r.weights["ortho"] = lambda;
    for (Eigen::Index i = 0; i < m; ++i) {
      r.feature_grads.col(i) += lambda * ortho_grad_feature(batch.feature(i), bank, batch.label(i));
    }
    for (Eigen::Index k = 0; k < k_bank; ++k) {
      r.center_grads.col(k) += lambda * ortho_grad_centerline(batch, bank, k);
    }
  } else if (cfg.use_ortho) {
    r.per_term["ortho_batch"] = ortho_batch_forward(batch);
    r.weights["ortho_batch"] = lambda;
    for (Eigen::Index i = 0; i < m; ++i) {
      r.feature_grads.col(i) += lambda * ortho_batch_grad_feature(batch, i);
    }
  }

  if (cfg.use_softmax) {
    const Scalar w = static_cast<Scalar>(cfg.softmax_weight);
    auto sm = softmax_ce(batch, *params.classifier);
    r.per_term["softmax"] = sm.value;
    r.weights["softmax"] = w;
    r.feature_grads += w * sm.feature_grads;
    r.classifier_weight_grad += w * sm.weight_grad;
    r.classifier_bias_grad += w * sm.bias_grad;
  }

  if (cfg.use_center) {
    const Scalar w = static_cast<Scalar>(cfg.center_weight);
    auto cl = center_loss(batch, *params.center_points);
    r.per_term["center"] = cl.value;
    r.weights["center"] = w;
    r.feature_grads += w * cl.feature_grads;
    // The mean-style center update is applied unweighted, as a rate of its own.
    r.center_point_grads += cl.center_grads;
  }

  Scalar total(0);
  for (const auto& [name, value] : r.per_term) total += r.weights.at(name) * value;
  r.total = total;
  return r;
}

}  // namespace cip

#endif  // CIP_LOSSES_HPP
