#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpcap/common.hpp"

namespace tpcap {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class ProjectorVariant { L, S, DL, HDL, Ours };
enum class Purification { Mp, Fusion, Refine, None };

ProjectorVariant projector_variant_from_string(const std::string& s);
std::string to_string(ProjectorVariant v);
Purification purification_from_string(const std::string& s);
std::string to_string(Purification p);

struct ModelDims {
  int image_size = 32;
  int patch_size = 8;
  int channels = 3;
  int d_enc = 32;
  int d_v = 32;
  int d_h = 48;
  int d_llm = 64;
  int lm_layers = 2;
  int lm_heads = 2;
  int lm_mlp_ratio = 4;
  int n_iq = 8;
  int n_eq = 4;
  int max_seq_len = 160;
  bool patch_cls = false;  // paper encoder prepends a class token
  int vocab_size = 0;      // resolved from the tokenizer; paper echo: 32000

  int grid_patches() const {
    return (image_size / patch_size) * (image_size / patch_size);
  }
  int n_patches() const { return grid_patches() + (patch_cls ? 1 : 0); }
};

struct Variants {
  ProjectorVariant ta1 = ProjectorVariant::Ours;
  ProjectorVariant ta2 = ProjectorVariant::Ours;
  Purification purification = Purification::Mp;
  bool ta1_enabled = true;
};

struct TrainParams {
  double init_lr = 1e-4;
  double min_lr = 8e-5;
  double warmup_frac = 0.05;
  int warmup_steps = -1;  // >= 0 overrides warmup_frac
  int epochs = 1;
  int batch_size = 1;
  uint64_t seed = 1234;
  double weight_decay = 0.0;
  int decode_max_len = 24;  // caption decode cap (paper uses 160)
  int ta1_max_len = 24;
};

struct PretrainParams {
  double init_lr = 1e-3;
  double min_lr = 1e-4;
  double warmup_frac = 0.05;
  int epochs = 3;
  int batch_size = 1;
  uint64_t seed = 777;
  double heldout_frac = 0.05;
  double target_loss = 4.0;  // held-out per-token NLL required after training
  int max_records = 0;       // 0 = use the whole train split
};

struct AblateAxes {
  std::vector<std::string> purifications;  // extra Table-4 style rows
  std::vector<std::string> projectors;     // extra Table-3 style rows
};

struct RunConfig {
  ModelDims dims;
  Variants variants;
  TrainParams train;
  PretrainParams pretrain;
  AblateAxes ablate;

  void validate() const;
};

RunConfig toy_config();
ModelDims paper_dims();

RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::string& path);
json to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Rejects keys outside `allowed`; every config object is parsed through this.
void check_keys(const json& j, const std::string& ctx,
                const std::vector<std::string>& allowed);

}  // namespace tpcap
