#pragma once

#include <string>
#include <vector>

#include "tpcap/backbones.hpp"
#include "tpcap/projector.hpp"
#include "tpcap/prompts.hpp"
#include "tpcap/purification.hpp"

namespace tpcap {

struct AssembledPrompt {
  Var embeddings;  // length x d_llm
  int feature_begin = 0;
  int feature_end = 0;
  int length = 0;
};

// Splices projected feature blocks between the tokenized prefix and suffix.
// Blocks must already be projected to d_llm.
AssembledPrompt assemble_prompt(Tape& t, const TinyLm& lm,
                                const Tokenizer& tok,
                                const PromptTemplate& tpl,
                                const std::vector<Var>& feature_blocks);

// Per-step argmax over admissible ids (pad, bos and the feature placeholder
// are masked; ties break to the lowest id). Stops at eos or max_len. The
// returned ids exclude eos.
std::vector<int> greedy_decode(const TinyLm& lm, const Mat& prompt_embeddings,
                               int max_len);

struct TpcapModel {
  ModelDims dims;
  Variants variants;
  TrainParams train_cfg;
  Tokenizer tokenizer;
  ParameterRegistry registry;
  BackboneNet net;
  TriggerProjectors projectors;
  Purifier purifier;
  Parameter* image_query_tokens = nullptr;

  // ---- inference (no gradients) ----
  Mat visual_features(const Image& img) const;
  // TA1 / TA2 share one code path parameterized by (template, blocks,
  // projector); decoding is non-differentiable.
  std::vector<int> stage_generate(const PromptTemplate& tpl,
                                  const std::vector<Mat>& blocks_dv,
                                  const ProjectorStack& proj,
                                  int max_len) const;
  std::vector<int> ta1_generate(const Mat& visual) const;
  std::vector<int> ta2_generate(const Mat& visual, const Mat& entity) const;

  struct CaptionResult {
    std::string caption;
    std::string entity_info;
    std::vector<int> caption_ids;
    std::vector<int> entity_ids;
  };
  CaptionResult caption_image(const Image& img) const;

  // ---- differentiable path (entity ids held fixed) ----
  // Visual features on the gradient tape.
  Var visual_features(Tape& t, const Image& img) const;
  // Eq.-style training loss: per-sample summed NLL of the caption given the
  // assembled LP2 prompt. caption_ids must end with eos.
  Var training_loss(Tape& t, const Image& img,
                    const std::vector<int>& caption_ids,
                    const std::vector<int>& entity_ids) const;

  // Entity ids for the current weights (empty when TA1 is disabled).
  std::vector<int> compute_entity_ids(const Mat& visual) const;
};

// Teacher-forced caption NLL (summed over caption tokens, Eq.-6 style).
Var caption_loss(Tape& t, const TinyLm& lm, const AssembledPrompt& prompt,
                 const std::vector<int>& caption_ids);

// Builds a TPCap model on top of a frozen backbone checkpoint. TPCap-specific
// parameters are seeded from cfg.train.seed.
TpcapModel build_tpcap(const BackboneModel& backbone, const RunConfig& cfg);
TpcapModel build_tpcap(const std::string& backbone_dir, const RunConfig& cfg);

// Full-model checkpoints (backbone + TPCap weights + vocab).
void save_tpcap(const TpcapModel& model, const RunConfig& cfg,
                const std::string& dir, const json& metrics);
TpcapModel load_tpcap(const std::string& dir);
RunConfig tpcap_checkpoint_config(const std::string& dir);

// Declares the full parameter set (frozen backbone + TPCap modules) without
// materializing any weights; used for parameter accounting audits at paper
// dimensions.
void declare_tpcap_registry(ParameterRegistry& reg, const ModelDims& dims,
                            const Variants& variants);

}  // namespace tpcap
