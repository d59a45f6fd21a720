#pragma once

#include <string>
#include <vector>

#include "tpcap/autograd.hpp"
#include "tpcap/config.hpp"
#include "tpcap/data.hpp"
#include "tpcap/tokenizer.hpp"

namespace tpcap {

// Frozen toy vision encoder: seeded random patch embedding plus one frozen
// self-attention block. Output shape: n_patches x d_enc.
struct VisionEncoder {
  ModelDims dims;
  Parameter* patch_w = nullptr;
  Parameter* patch_b = nullptr;
  Parameter* pos = nullptr;
  Parameter* cls = nullptr;  // only when dims.patch_cls
  AttnParams attn;

  void setup(ParameterRegistry& reg, const ModelDims& d);
  void init(Rng& rng);
  Mat encode(const Image& img) const;
};

// Q-Former style compressor: frozen input projection d_enc -> d_v and one
// frozen cross-attention block read by trainable image query tokens.
struct FeatureCompressor {
  ModelDims dims;
  Parameter* in_w = nullptr;
  Parameter* in_b = nullptr;
  AttnParams cross;

  void setup(ParameterRegistry& reg, const ModelDims& d);
  void init(Rng& rng);
  // patches: n_patches x d_enc, query_tokens: n_iq x d_v -> n_iq x d_v
  Var forward(Tape& t, Var patches, Var query_tokens) const;
};

// Tiny pre-LN causal transformer LM. Trainable only during backbone
// pretraining; frozen afterwards.
struct TinyLm {
  struct Block {
    Parameter *ln1_g, *ln1_b, *ln2_g, *ln2_b;
    AttnParams attn;
    Parameter *mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;
  };
  ModelDims dims;
  Parameter* embed_table = nullptr;
  Parameter* pos = nullptr;
  std::vector<Block> blocks;
  Parameter *final_g = nullptr, *final_b = nullptr;
  Parameter *head_w = nullptr, *head_b = nullptr;

  void setup(ParameterRegistry& reg, const ModelDims& d, bool trainable);
  void init(Rng& rng);
  Var embed_ids(Tape& t, const std::vector<int>& ids) const;
  // embeddings: len x d_llm -> logits len x vocab (causal)
  Var forward(Tape& t, Var embeddings) const;
};

struct BackboneNet {
  VisionEncoder encoder;
  FeatureCompressor compressor;
  TinyLm lm;

  void setup(ParameterRegistry& reg, const ModelDims& dims, bool lm_trainable);
  void init(Rng& rng);
};

struct BackboneModel {
  ModelDims dims;
  Tokenizer tokenizer;
  ParameterRegistry registry;
  BackboneNet net;
};

// Builds tokenizer from the train split (plus prompt words), pretrains the LM
// on LP1/LP2-format sequences whose feature slots are filled with
// feat-placeholder tokens, freezes everything, and writes a checkpoint.
// Returns the held-out per-token NLL.
double pretrain_backbone(const CaptionCorpus& train_corpus,
                         const RunConfig& cfg, const std::string& out_dir);

// Loads a backbone checkpoint with every parameter frozen.
BackboneModel load_backbone(const std::string& dir);

}  // namespace tpcap
