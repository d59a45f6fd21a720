#pragma once

#include <cstdint>
#include <string>

#include "tpcap/autograd.hpp"
#include "tpcap/config.hpp"

namespace tpcap {

// One stage's projection d_v -> d_llm.
//   l    single trainable linear d_v -> d_llm
//   s    as l, but one layer object shared by both stages
//   dl   trainable d_v -> d_h followed by trainable d_h -> d_llm
//   hdl  trainable d_v -> d_h followed by a frozen d_h -> d_llm
//   ours hdl with the trigger layer (and the frozen layer) shared across
//        stages
struct ProjectorStack {
  ProjectorVariant variant = ProjectorVariant::L;
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;  // null for l/s
  Parameter* b2 = nullptr;

  Var project(Tape& t, Var x) const;
  bool two_layer() const { return w2 != nullptr; }
};

struct TriggerProjectors {
  ProjectorStack ta1;
  ProjectorStack ta2;
};

TriggerProjectors declare_projectors(ParameterRegistry& reg,
                                     const ModelDims& dims,
                                     const Variants& variants);
void init_projectors(const TriggerProjectors& proj, const ModelDims& dims,
                     Rng& rng);

// Closed-form trainable parameter count for a configuration: projector
// weights and biases under the sharing rules, image and entity query tokens,
// and any trainable purification attention. Every linear carries a bias.
int64_t count_trainable_params(const ModelDims& dims, const Variants& variants);

// CLI variant-pair names: ours | l | s | dl | l-hdl | hdl-l
void parse_variant_pair(const std::string& name, Variants& variants);

// JSON report for the params subcommand: trainable count plus the declared
// feature shapes for the chosen dimension profile (no model instantiation).
json params_report(const std::string& dims_profile,
                   const std::string& variant_pair);

}  // namespace tpcap
