#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tpcap/tensor.hpp"

namespace tpcap {

// One named weight block. Declared with shape + trainable flag first; storage
// is materialized separately so parameter accounting can run at paper
// dimensions without allocating multi-GB frozen backbones.
struct Parameter {
  std::string name;
  std::vector<int> shape;  // [rows, cols]
  bool trainable = false;
  bool materialized = false;
  Mat value;
  Mat grad;
  Mat adam_m, adam_v;  // optimizer state, allocated on first update

  int rows() const { return shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }
  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void zero_grad() {
    if (grad.numel() > 0) grad.fill(0.0);
  }
};

class ParameterRegistry {
 public:
  // Declares a parameter; the name must be unique within the registry.
  Parameter& declare(const std::string& name, std::vector<int> shape,
                     bool trainable);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const {
    return index_.count(name) > 0;
  }

  const std::vector<std::unique_ptr<Parameter>>& entries() const {
    return entries_;
  }

  int64_t trainable_count() const;
  std::vector<std::string> frozen_names() const;

  // FNV-1a over the little-endian float32 serialization of every frozen,
  // materialized parameter, in declaration order.
  uint64_t frozen_checksum() const;
  uint64_t param_checksum(const std::string& name) const;

  void zero_grads();

  // Gaussian init (quantized to the f32 grid) for a declared parameter.
  static void init_gaussian(Parameter& p, Rng& rng, double std);
  static void init_zeros(Parameter& p);

 private:
  std::vector<std::unique_ptr<Parameter>> entries_;
  std::unordered_map<std::string, Parameter*> index_;
};

std::vector<unsigned char> f32_bytes(const Mat& m);

}  // namespace tpcap
