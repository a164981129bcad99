#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hldet/tensor.hpp"

namespace hldet::ad {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const;
};

/// Flat named collection of trainable tensors plus Adam moment state.
/// Iteration order is the parameter name order (std::map), which keeps every
/// update and checkpoint byte-reproducible.
class ParamStore {
 public:
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  void insert(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& params() { return params_; }

  /// Total number of trainable scalars (Adam state excluded).
  std::size_t total_size() const;

  /// First/second moment accumulators, created as zeros on first access.
  Tensor& moment1(const std::string& name);
  Tensor& moment2(const std::string& name);
  const std::map<std::string, Tensor>& moment1_map() const { return m_; }
  const std::map<std::string, Tensor>& moment2_map() const { return v_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t t) { step_ = t; }

  /// Binary checkpoint ("HLPS"): magic, u32 version, then one record per
  /// tensor: u32 name length, UTF-8 name, u32 rank, u64 dims, f64 values,
  /// all little-endian. Adam moments are stored under the reserved prefixes
  /// "adam.m." / "adam.v." and the step counter under "adam.t".
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::int64_t step_ = 0;
};

/// One bias-corrected Adam update over every parameter. Gradients must be
/// keyed exactly like the parameters; a missing key is a contract error.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               const AdamConfig& config);

}  // namespace hldet::ad
