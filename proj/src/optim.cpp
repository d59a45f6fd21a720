#include "tpcap/optim.hpp"

#include <cmath>

namespace tpcap {

double lr_at_step(int step, int total_steps, double init_lr, double min_lr,
                  int warmup_steps) {
  if (step < 0 || step > total_steps) {
    throw InputError("lr_at_step: step out of range: " + std::to_string(step));
  }
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw InputError("lr_at_step: warmup_steps must be in [0, total)");
  }
  if (step <= warmup_steps) {
    if (warmup_steps == 0) return init_lr;
    return min_lr + (init_lr - min_lr) *
                        (static_cast<double>(step) / warmup_steps);
  }
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return min_lr +
         0.5 * (init_lr - min_lr) * (1.0 + std::cos(3.14159265358979323846 * t));
}

AdamW::AdamW(std::vector<Parameter*> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
  for (Parameter* p : params_) {
    if (!p->trainable) {
      throw ConfigError("AdamW given a frozen parameter: " + p->name);
    }
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params_) {
    if (p->adam_m.numel() == 0) {
      p->adam_m = Mat(p->rows(), p->cols());
      p->adam_v = Mat(p->rows(), p->cols());
    }
    // query tokens are embeddings; they never get decayed
    const bool decay = weight_decay_ > 0.0 &&
                       p->name.find("query_tokens") == std::string::npos;
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = p->grad.data[i];
      double& m = p->adam_m.data[i];
      double& v = p->adam_v.data[i];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      double upd = mhat / (std::sqrt(vhat) + eps_);
      if (decay) upd += weight_decay_ * p->value.data[i];
      p->value.data[i] = quantize_f32(p->value.data[i] - lr * upd);
    }
  }
}

std::vector<Parameter*> trainable_params(ParameterRegistry& reg) {
  std::vector<Parameter*> out;
  for (const auto& p : reg.entries()) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

}  // namespace tpcap
