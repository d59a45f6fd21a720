#include "tpcap/purification.hpp"

#include <cmath>

namespace tpcap {

void Purifier::setup(ParameterRegistry& reg, const ModelDims& d,
                     Purification k) {
  kind = k;
  dims = d;
  text_w = &reg.declare("purify.text_proj.w", {d.d_llm, d.d_v}, false);
  text_b = &reg.declare("purify.text_proj.b", {1, d.d_v}, false);
  switch (kind) {
    case Purification::Mp:
      entity_query_tokens =
          &reg.declare("tpcap.entity_query_tokens", {d.n_eq, d.d_v}, true);
      mp_self = declare_attention(reg, "purify.mp.self", d.d_v, false);
      mp_cross = declare_attention(reg, "purify.mp.cross", d.d_v, false);
      break;
    case Purification::Fusion:
      fu_self_text =
          declare_attention(reg, "purify.fusion.self_text", d.d_v, true);
      fu_self_vis =
          declare_attention(reg, "purify.fusion.self_vis", d.d_v, true);
      fu_cross = declare_attention(reg, "purify.fusion.cross", d.d_v, true);
      break;
    case Purification::Refine:
      entity_query_tokens =
          &reg.declare("tpcap.entity_query_tokens", {d.n_eq, d.d_v}, true);
      re_cross = declare_attention(reg, "purify.refine.cross", d.d_v, true);
      break;
    case Purification::None:
      break;
  }
}

void Purifier::init(Rng& rng) {
  const double frozen_std = 1.0 / std::sqrt(double(dims.d_v));
  ParameterRegistry::init_gaussian(*text_w, rng,
                                   1.0 / std::sqrt(double(dims.d_llm)));
  ParameterRegistry::init_zeros(*text_b);
  switch (kind) {
    case Purification::Mp:
      ParameterRegistry::init_gaussian(*entity_query_tokens, rng, 0.02);
      init_attention(mp_self, rng, frozen_std);
      init_attention(mp_cross, rng, frozen_std);
      break;
    case Purification::Fusion:
      init_attention(fu_self_text, rng, 0.02);
      init_attention(fu_self_vis, rng, 0.02);
      init_attention(fu_cross, rng, 0.02);
      break;
    case Purification::Refine:
      ParameterRegistry::init_gaussian(*entity_query_tokens, rng, 0.02);
      init_attention(re_cross, rng, 0.02);
      break;
    case Purification::None:
      break;
  }
}

Var Purifier::embed_entity_info(Tape& t, const TinyLm& lm,
                                const std::vector<int>& entity_ids) const {
  std::vector<int> ids = entity_ids;
  if (ids.empty()) {
    // the feat placeholder row doubles as the null-entity embedding; it was
    // trained into the table during backbone pretraining
    ids.push_back(Tokenizer::kFeat);
  }
  Var emb = lm.embed_ids(t, ids);
  return t.affine(emb, *text_w, *text_b);
}

Var Purifier::forward(Tape& t, const TinyLm& lm,
                      const std::vector<int>& entity_ids,
                      Var visual_features) const {
  if (t.value(visual_features).cols != dims.d_v) {
    throw ShapeError("purify: visual feature width mismatch");
  }
  switch (kind) {
    case Purification::Mp: {
      Var queries = t.param(*entity_query_tokens);
      Var seq = t.concat_rows({queries, visual_features});
      Var mixed = t.add(seq, attention(t, seq, seq, mp_self, 1, false));
      Var q = t.slice_rows(mixed, 0, dims.n_eq);
      Var text = embed_entity_info(t, lm, entity_ids);
      return t.add(q, attention(t, q, text, mp_cross, 1, false));
    }
    case Purification::Fusion: {
      Var text = embed_entity_info(t, lm, entity_ids);
      Var text2 =
          t.add(text, attention(t, text, text, fu_self_text, 1, false));
      Var vis2 = t.add(visual_features,
                       attention(t, visual_features, visual_features,
                                 fu_self_vis, 1, false));
      return t.add(vis2, attention(t, vis2, text2, fu_cross, 1, false));
    }
    case Purification::Refine: {
      Var queries = t.param(*entity_query_tokens);
      Var text = embed_entity_info(t, lm, entity_ids);
      return t.add(queries, attention(t, queries, text, re_cross, 1, false));
    }
    case Purification::None:
      return embed_entity_info(t, lm, entity_ids);
  }
  throw ConfigError("purify: unknown variant");
}

}  // namespace tpcap
