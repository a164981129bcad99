#include "hldet/tensor.hpp"

#include <cmath>

#include "hldet/error.hpp"

namespace hldet::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_numel(shape)) {
    throw ContractError("tensor value count " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::row(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace hldet::ad
