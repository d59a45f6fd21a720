#pragma once

#include <vector>

#include "tpcap/registry.hpp"

namespace tpcap {

// Linear warmup from min_lr to init_lr over [0, warmup_steps], then cosine
// decay back to min_lr at total_steps.
double lr_at_step(int step, int total_steps, double init_lr, double min_lr,
                  int warmup_steps);

// AdamW over a fixed set of trainable parameters. Updated weights are snapped
// to the float32 grid so checkpoints round-trip bit-exactly.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, double weight_decay);

  void step(double lr);
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  double weight_decay_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int64_t t_ = 0;
};

// All trainable registry parameters, in declaration order.
std::vector<Parameter*> trainable_params(ParameterRegistry& reg);

}  // namespace tpcap
