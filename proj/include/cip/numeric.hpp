#ifndef CIP_NUMERIC_HPP
#define CIP_NUMERIC_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace cip {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// An embedding f_i. Dimension is fixed per experiment.
template <typename Scalar>
using FeatureVector = Vector<Scalar>;

/// Column-stacked features: one embedding per column (n x M).
template <typename Scalar>
using FeatureMatrix = Matrix<Scalar>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

/// Inner-product similarity, accumulated left to right.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot(const Eigen::MatrixBase<DerivedA>& f,
                              const Eigen::MatrixBase<DerivedB>& g) {
  detail::require_same_size(f.size(), g.size(), "dot");
  typename DerivedA::Scalar acc(0);
  for (Eigen::Index t = 0; t < f.size(); ++t) acc += f(t) * g(t);
  return acc;
}

/// 1 - cos(f, g); in [0, 2]. Undefined for a zero vector.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_distance(const Eigen::MatrixBase<DerivedA>& f,
                                          const Eigen::MatrixBase<DerivedB>& g) {
  using Scalar = typename DerivedA::Scalar;
  detail::require_same_size(f.size(), g.size(), "cosine_distance");
  const Scalar nf = f.norm();
  const Scalar ng = g.norm();
  if (nf == Scalar(0) || ng == Scalar(0)) {
    throw std::domain_error("cosine_distance: zero-norm input");
  }
  Scalar cosine = dot(f, g) / (nf * ng);
  cosine = std::clamp(cosine, Scalar(-1), Scalar(1));
  return Scalar(1) - cosine;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& f,
                                            const Eigen::MatrixBase<DerivedB>& g) {
  return typename DerivedA::Scalar(1) - cosine_distance(f, g);
}

template <typename Scalar>
struct ShapeDescriptor {
  FeatureVector<Scalar> components;
  int source_view_count = 0;
};

/// Component-wise mean of view features, one view per column.
template <typename Derived>
ShapeDescriptor<typename Derived::Scalar> mean_pool(const Eigen::MatrixBase<Derived>& views) {
  using Scalar = typename Derived::Scalar;
  if (views.cols() == 0) throw std::invalid_argument("mean_pool: empty view list");
  FeatureVector<Scalar> sum = FeatureVector<Scalar>::Zero(views.rows());
  for (Eigen::Index v = 0; v < views.cols(); ++v) sum += views.col(v);
  return {sum / Scalar(views.cols()), static_cast<int>(views.cols())};
}

/// List form; all views must share a dimension.
template <typename Scalar>
ShapeDescriptor<Scalar> mean_pool(std::span<const FeatureVector<Scalar>> views) {
  if (views.empty()) throw std::invalid_argument("mean_pool: empty view list");
  FeatureVector<Scalar> sum = FeatureVector<Scalar>::Zero(views.front().size());
  for (const auto& v : views) {
    detail::require_same_size(v.size(), sum.size(), "mean_pool");
    sum += v;
  }
  return {sum / Scalar(views.size()), static_cast<int>(views.size())};
}

/// Shortest text that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("failed to format number");
  return std::string(buf, ptr);
}

}  // namespace cip

#endif  // CIP_NUMERIC_HPP
