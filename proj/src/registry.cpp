#include "tpcap/registry.hpp"

#include <cstring>

namespace tpcap {

Parameter& ParameterRegistry::declare(const std::string& name,
                                      std::vector<int> shape, bool trainable) {
  if (index_.count(name)) {
    throw ConfigError("parameter declared twice: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->shape = std::move(shape);
  p->trainable = trainable;
  Parameter& ref = *p;
  index_[name] = p.get();
  entries_.push_back(std::move(p));
  return ref;
}

Parameter& ParameterRegistry::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

int64_t ParameterRegistry::trainable_count() const {
  int64_t total = 0;
  for (const auto& p : entries_) {
    if (p->trainable) total += p->numel();
  }
  return total;
}

std::vector<std::string> ParameterRegistry::frozen_names() const {
  std::vector<std::string> names;
  for (const auto& p : entries_) {
    if (!p->trainable) names.push_back(p->name);
  }
  return names;
}

std::vector<unsigned char> f32_bytes(const Mat& m) {
  std::vector<unsigned char> out(m.data.size() * 4);
  for (size_t i = 0; i < m.data.size(); ++i) {
    const float f = static_cast<float>(m.data[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out[i * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
    out[i * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    out[i * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    out[i * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
  }
  return out;
}

uint64_t ParameterRegistry::frozen_checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : entries_) {
    if (p->trainable || !p->materialized) continue;
    h = fnv1a64(p->name, h);
    auto bytes = f32_bytes(p->value);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

uint64_t ParameterRegistry::param_checksum(const std::string& name) const {
  const Parameter& p = get(name);
  auto bytes = f32_bytes(p.value);
  return fnv1a64(bytes.data(), bytes.size());
}

void ParameterRegistry::zero_grads() {
  for (const auto& p : entries_) p->zero_grad();
}

void ParameterRegistry::init_gaussian(Parameter& p, Rng& rng, double std) {
  p.value = Mat(p.rows(), p.cols());
  for (double& x : p.value.data) x = quantize_f32(rng.gauss(0.0, std));
  p.grad = Mat(p.rows(), p.cols());
  p.materialized = true;
}

void ParameterRegistry::init_zeros(Parameter& p) {
  p.value = Mat(p.rows(), p.cols());
  p.grad = Mat(p.rows(), p.cols());
  p.materialized = true;
}

}  // namespace tpcap
