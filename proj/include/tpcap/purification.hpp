#pragma once

#include <vector>

#include "tpcap/autograd.hpp"
#include "tpcap/backbones.hpp"
#include "tpcap/config.hpp"

namespace tpcap {

// Converts variable-length entity-related token ids into an entity feature
// block aligned with the visual features. Three designs:
//   mp      frozen self-attention over [T_e; F_v], keep the T_e rows, then
//           frozen cross-attention from those rows into the embedded entity
//           text. Output: n_eq x d_v. Only T_e trains.
//   fusion  trainable self-attention over the entity text and over F_v, then
//           trainable cross-attention with the visual rows as queries.
//           Output: n_iq x d_v (no query tokens involved).
//   refine  T_e cross-attends (trainable) into the entity text only.
//           Output: n_eq x d_v.
//   none    raw embedded entity text, variable length.
struct Purifier {
  Purification kind = Purification::Mp;
  ModelDims dims;
  Parameter* entity_query_tokens = nullptr;  // mp / refine
  AttnParams mp_self, mp_cross;              // frozen
  AttnParams fu_self_text, fu_self_vis, fu_cross;  // trainable
  AttnParams re_cross;                             // trainable
  Parameter* text_w = nullptr;  // frozen d_llm -> d_v entity text map
  Parameter* text_b = nullptr;

  void setup(ParameterRegistry& reg, const ModelDims& d, Purification kind);
  void init(Rng& rng);

  // Embedded entity text: frozen LM table lookup then the frozen linear map.
  // Empty entity info substitutes the learned feat-placeholder row so
  // cross-attention always has at least one key.
  Var embed_entity_info(Tape& t, const TinyLm& lm,
                        const std::vector<int>& entity_ids) const;

  // Entity feature block in d_v, rows fixed by the variant (len(I_e) rows for
  // `none`).
  Var forward(Tape& t, const TinyLm& lm, const std::vector<int>& entity_ids,
              Var visual_features) const;
};

}  // namespace tpcap
