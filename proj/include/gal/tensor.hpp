#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gal/errors.hpp"

namespace gal {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major N-d array. Gradient storage is only populated by a backward
/// pass through a Graph that recorded this tensor as a leaf.
template <typename Scalar>
struct Tensor {
  using Vector = VectorX<Scalar>;

  Shape shape;
  Vector data;
  bool requires_grad = false;
  std::optional<Vector> grad;

  Tensor() = default;

  explicit Tensor(Shape s, Scalar fill = Scalar(0))
      : shape(std::move(s)), data(Vector::Constant(numel(shape), fill)) {
    validate_shape();
  }

  Tensor(Shape s, Vector values) : shape(std::move(s)), data(std::move(values)) {
    validate_shape();
    if (data.size() != numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape));
    }
  }

  static Tensor parameter(Shape s) {
    Tensor t(std::move(s));
    t.requires_grad = true;
    return t;
  }

  Index size() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }
  Index dim(Index axis) const { return shape.at(static_cast<std::size_t>(axis)); }

  Scalar& operator[](Index i) { return data[i]; }
  Scalar operator[](Index i) const { return data[i]; }

  // [C,H,W] access.
  Scalar& at(Index c, Index v, Index u) { return data[(c * shape[1] + v) * shape[2] + u]; }
  Scalar at(Index c, Index v, Index u) const { return data[(c * shape[1] + v) * shape[2] + u]; }

  void zero_grad() { grad.reset(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape, data.template cast<Other>().eval());
    out.requires_grad = requires_grad;
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }

 private:
  void validate_shape() const {
    for (Index e : shape) {
      if (e <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
    }
  }
};

}  // namespace gal
