#include "tpcap/projector.hpp"

#include <cmath>

namespace tpcap {

Var ProjectorStack::project(Tape& t, Var x) const {
  Var h = t.affine(x, *w1, *b1);
  if (two_layer()) h = t.affine(h, *w2, *b2);
  return h;
}

namespace {

ProjectorStack declare_stage(ParameterRegistry& reg, const ModelDims& d,
                             ProjectorVariant v, const std::string& stage) {
  ProjectorStack s;
  s.variant = v;
  switch (v) {
    case ProjectorVariant::L:
      s.w1 = &reg.declare("projector." + stage + ".w", {d.d_v, d.d_llm}, true);
      s.b1 = &reg.declare("projector." + stage + ".b", {1, d.d_llm}, true);
      break;
    case ProjectorVariant::DL:
      s.w1 = &reg.declare("projector." + stage + ".l1.w", {d.d_v, d.d_h}, true);
      s.b1 = &reg.declare("projector." + stage + ".l1.b", {1, d.d_h}, true);
      s.w2 =
          &reg.declare("projector." + stage + ".l2.w", {d.d_h, d.d_llm}, true);
      s.b2 = &reg.declare("projector." + stage + ".l2.b", {1, d.d_llm}, true);
      break;
    case ProjectorVariant::HDL:
      s.w1 = &reg.declare("projector." + stage + ".trigger.w", {d.d_v, d.d_h},
                          true);
      s.b1 =
          &reg.declare("projector." + stage + ".trigger.b", {1, d.d_h}, true);
      s.w2 = &reg.declare("projector." + stage + ".frozen.w", {d.d_h, d.d_llm},
                          false);
      s.b2 =
          &reg.declare("projector." + stage + ".frozen.b", {1, d.d_llm}, false);
      break;
    case ProjectorVariant::S:
    case ProjectorVariant::Ours:
      throw ConfigError("shared variants are declared once, not per stage");
  }
  return s;
}

}  // namespace

TriggerProjectors declare_projectors(ParameterRegistry& reg,
                                     const ModelDims& d,
                                     const Variants& variants) {
  TriggerProjectors proj;
  if (variants.ta1 == ProjectorVariant::S) {
    // one linear object used by both stages
    ProjectorStack s;
    s.variant = ProjectorVariant::S;
    s.w1 = &reg.declare("projector.shared.w", {d.d_v, d.d_llm}, true);
    s.b1 = &reg.declare("projector.shared.b", {1, d.d_llm}, true);
    proj.ta1 = s;
    proj.ta2 = s;
    return proj;
  }
  if (variants.ta1 == ProjectorVariant::Ours) {
    // shared trainable trigger feeding a shared frozen projector
    ProjectorStack s;
    s.variant = ProjectorVariant::Ours;
    s.w1 = &reg.declare("projector.shared.trigger.w", {d.d_v, d.d_h}, true);
    s.b1 = &reg.declare("projector.shared.trigger.b", {1, d.d_h}, true);
    s.w2 = &reg.declare("projector.shared.frozen.w", {d.d_h, d.d_llm}, false);
    s.b2 = &reg.declare("projector.shared.frozen.b", {1, d.d_llm}, false);
    proj.ta1 = s;
    proj.ta2 = s;
    return proj;
  }
  proj.ta1 = declare_stage(reg, d, variants.ta1, "ta1");
  proj.ta2 = declare_stage(reg, d, variants.ta2, "ta2");
  return proj;
}

namespace {

void init_stack(const ProjectorStack& s, const ModelDims& d, Rng& rng) {
  ParameterRegistry::init_gaussian(*s.w1, rng, 0.02);
  ParameterRegistry::init_zeros(*s.b1);
  if (s.two_layer()) {
    if (s.w2->trainable) {
      ParameterRegistry::init_gaussian(*s.w2, rng, 0.02);
    } else {
      // frozen stand-in for the pretrained projector: a fixed, norm-preserving
      // random map
      ParameterRegistry::init_gaussian(*s.w2, rng,
                                       1.0 / std::sqrt(double(d.d_h)));
    }
    ParameterRegistry::init_zeros(*s.b2);
  }
}

}  // namespace

void init_projectors(const TriggerProjectors& proj, const ModelDims& dims,
                     Rng& rng) {
  init_stack(proj.ta1, dims, rng);
  if (proj.ta2.w1 != proj.ta1.w1) init_stack(proj.ta2, dims, rng);
}

namespace {

int64_t stage_trainable(const ModelDims& d, ProjectorVariant v) {
  const int64_t dv = d.d_v, dh = d.d_h, dllm = d.d_llm;
  switch (v) {
    case ProjectorVariant::L:
    case ProjectorVariant::S:
      return dv * dllm + dllm;
    case ProjectorVariant::DL:
      return dv * dh + dh + dh * dllm + dllm;
    case ProjectorVariant::HDL:
    case ProjectorVariant::Ours:
      return dv * dh + dh;
  }
  return 0;
}

}  // namespace

int64_t count_trainable_params(const ModelDims& d, const Variants& v) {
  int64_t total = 0;
  const bool shared = v.ta1 == ProjectorVariant::S ||
                      v.ta1 == ProjectorVariant::Ours;
  if (shared) {
    total += stage_trainable(d, v.ta1);
  } else {
    total += stage_trainable(d, v.ta1) + stage_trainable(d, v.ta2);
  }
  total += static_cast<int64_t>(d.n_iq) * d.d_v;  // image query tokens
  const int64_t attn_block = 4 * (static_cast<int64_t>(d.d_v) * d.d_v + d.d_v);
  switch (v.purification) {
    case Purification::Mp:
      total += static_cast<int64_t>(d.n_eq) * d.d_v;  // entity query tokens
      break;                                          // attention is frozen
    case Purification::Refine:
      total += static_cast<int64_t>(d.n_eq) * d.d_v + attn_block;
      break;
    case Purification::Fusion:
      total += 3 * attn_block;  // two self-attentions + one cross-attention
      break;
    case Purification::None:
      break;
  }
  return total;
}

json params_report(const std::string& dims_profile,
                   const std::string& variant_pair) {
  ModelDims dims;
  if (dims_profile == "paper") {
    dims = paper_dims();
  } else if (dims_profile == "toy") {
    dims = toy_config().dims;
  } else {
    throw ConfigError("unknown dims profile: " + dims_profile);
  }
  Variants variants;
  parse_variant_pair(variant_pair, variants);
  json j;
  j["dims"] = dims_profile;
  j["variant"] = variant_pair;
  j["trainable_params"] = count_trainable_params(dims, variants);
  j["shapes"] = {{"patch_features", {dims.n_patches(), dims.d_enc}},
                 {"visual_features", {dims.n_iq, dims.d_v}},
                 {"entity_features", {dims.n_eq, dims.d_v}}};
  return j;
}

void parse_variant_pair(const std::string& name, Variants& variants) {
  if (name == "ours") {
    variants.ta1 = variants.ta2 = ProjectorVariant::Ours;
  } else if (name == "l") {
    variants.ta1 = variants.ta2 = ProjectorVariant::L;
  } else if (name == "s") {
    variants.ta1 = variants.ta2 = ProjectorVariant::S;
  } else if (name == "dl") {
    variants.ta1 = variants.ta2 = ProjectorVariant::DL;
  } else if (name == "l-hdl") {
    variants.ta1 = ProjectorVariant::L;
    variants.ta2 = ProjectorVariant::HDL;
  } else if (name == "hdl-l") {
    variants.ta1 = ProjectorVariant::HDL;
    variants.ta2 = ProjectorVariant::L;
  } else {
    throw ConfigError("unknown projector variant pair: " + name);
  }
}

}  // namespace tpcap
