#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hldet::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 64-bit floats. All graph arithmetic runs in
/// doubles; feature files hold f32 and are promoted when tensors are built.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), values(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> v);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor row(std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  /// Size of the last axis (1 for scalars).
  std::size_t last_dim() const { return shape.empty() ? 1 : shape.back(); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

}  // namespace hldet::ad
