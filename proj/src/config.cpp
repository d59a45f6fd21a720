#include "tpcap/config.hpp"

#include <algorithm>
#include <fstream>

namespace tpcap {

ProjectorVariant projector_variant_from_string(const std::string& s) {
  if (s == "l") return ProjectorVariant::L;
  if (s == "s") return ProjectorVariant::S;
  if (s == "dl") return ProjectorVariant::DL;
  if (s == "hdl") return ProjectorVariant::HDL;
  if (s == "ours") return ProjectorVariant::Ours;
  throw ConfigError("unknown projector variant: " + s);
}

std::string to_string(ProjectorVariant v) {
  switch (v) {
    case ProjectorVariant::L:
      return "l";
    case ProjectorVariant::S:
      return "s";
    case ProjectorVariant::DL:
      return "dl";
    case ProjectorVariant::HDL:
      return "hdl";
    case ProjectorVariant::Ours:
      return "ours";
  }
  return "?";
}

Purification purification_from_string(const std::string& s) {
  if (s == "mp") return Purification::Mp;
  if (s == "fusion") return Purification::Fusion;
  if (s == "refine") return Purification::Refine;
  if (s == "none") return Purification::None;
  throw ConfigError("unknown purification variant: " + s);
}

std::string to_string(Purification p) {
  switch (p) {
    case Purification::Mp:
      return "mp";
    case Purification::Fusion:
      return "fusion";
    case Purification::Refine:
      return "refine";
    case Purification::None:
      return "none";
  }
  return "?";
}

void check_keys(const json& j, const std::string& ctx,
                const std::vector<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section " + ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown config key: " + ctx + "." + it.key());
    }
  }
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ModelDims dims_from_json(const json& j) {
  check_keys(j, "dims",
             {"image_size", "patch_size", "channels", "d_enc", "d_v", "d_h",
              "d_llm", "lm_layers", "lm_heads", "lm_mlp_ratio", "n_iq", "n_eq",
              "max_seq_len", "patch_cls", "vocab_size"});
  ModelDims d;
  take(j, "image_size", d.image_size);
  take(j, "patch_size", d.patch_size);
  take(j, "channels", d.channels);
  take(j, "d_enc", d.d_enc);
  take(j, "d_v", d.d_v);
  take(j, "d_h", d.d_h);
  take(j, "d_llm", d.d_llm);
  take(j, "lm_layers", d.lm_layers);
  take(j, "lm_heads", d.lm_heads);
  take(j, "lm_mlp_ratio", d.lm_mlp_ratio);
  take(j, "n_iq", d.n_iq);
  take(j, "n_eq", d.n_eq);
  take(j, "max_seq_len", d.max_seq_len);
  take(j, "patch_cls", d.patch_cls);
  take(j, "vocab_size", d.vocab_size);
  return d;
}

Variants variants_from_json(const json& j) {
  check_keys(j, "variants",
             {"ta1_projector", "ta2_projector", "purification", "ta1_enabled"});
  Variants v;
  if (j.contains("ta1_projector")) {
    v.ta1 = projector_variant_from_string(j.at("ta1_projector"));
  }
  if (j.contains("ta2_projector")) {
    v.ta2 = projector_variant_from_string(j.at("ta2_projector"));
  }
  if (j.contains("purification")) {
    v.purification = purification_from_string(j.at("purification"));
  }
  take(j, "ta1_enabled", v.ta1_enabled);
  return v;
}

TrainParams train_from_json(const json& j) {
  check_keys(j, "train",
             {"init_lr", "min_lr", "warmup_frac", "warmup_steps", "epochs",
              "batch_size", "seed", "weight_decay", "decode_max_len",
              "ta1_max_len"});
  TrainParams t;
  take(j, "init_lr", t.init_lr);
  take(j, "min_lr", t.min_lr);
  take(j, "warmup_frac", t.warmup_frac);
  take(j, "warmup_steps", t.warmup_steps);
  take(j, "epochs", t.epochs);
  take(j, "batch_size", t.batch_size);
  take(j, "seed", t.seed);
  take(j, "weight_decay", t.weight_decay);
  take(j, "decode_max_len", t.decode_max_len);
  take(j, "ta1_max_len", t.ta1_max_len);
  return t;
}

PretrainParams pretrain_from_json(const json& j) {
  check_keys(j, "pretrain",
             {"init_lr", "min_lr", "warmup_frac", "epochs", "batch_size",
              "seed", "heldout_frac", "target_loss", "max_records"});
  PretrainParams p;
  take(j, "init_lr", p.init_lr);
  take(j, "min_lr", p.min_lr);
  take(j, "warmup_frac", p.warmup_frac);
  take(j, "epochs", p.epochs);
  take(j, "batch_size", p.batch_size);
  take(j, "seed", p.seed);
  take(j, "heldout_frac", p.heldout_frac);
  take(j, "target_loss", p.target_loss);
  take(j, "max_records", p.max_records);
  return p;
}

AblateAxes ablate_from_json(const json& j) {
  check_keys(j, "ablate", {"purifications", "projectors"});
  AblateAxes a;
  take(j, "purifications", a.purifications);
  take(j, "projectors", a.projectors);
  return a;
}

}  // namespace

void RunConfig::validate() const {
  if (dims.image_size % dims.patch_size != 0) {
    throw ConfigError("image_size must be divisible by patch_size");
  }
  if (dims.d_llm % dims.lm_heads != 0) {
    throw ConfigError("d_llm must be divisible by lm_heads");
  }
  for (int v : {dims.d_enc, dims.d_v, dims.d_h, dims.d_llm, dims.n_iq,
                dims.n_eq, dims.lm_layers, dims.lm_heads, dims.lm_mlp_ratio,
                dims.max_seq_len}) {
    if (v <= 0) throw ConfigError("model dimensions must be positive");
  }
  const bool s1 = variants.ta1 == ProjectorVariant::S;
  const bool s2 = variants.ta2 == ProjectorVariant::S;
  const bool o1 = variants.ta1 == ProjectorVariant::Ours;
  const bool o2 = variants.ta2 == ProjectorVariant::Ours;
  if (s1 != s2) {
    throw ConfigError("projector variant 's' shares one layer across stages; both stages must select it");
  }
  if (o1 != o2) {
    throw ConfigError("projector variant 'ours' shares the trigger layer across stages; both stages must select it");
  }
  if (train.min_lr > train.init_lr) {
    throw ConfigError("min_lr must not exceed init_lr");
  }
  if (train.epochs < 0 || train.batch_size < 1) {
    throw ConfigError("bad training schedule");
  }
  if (train.decode_max_len < 1 || train.ta1_max_len < 1) {
    throw ConfigError("decode lengths must be >= 1");
  }
}

RunConfig toy_config() { return RunConfig{}; }

ModelDims paper_dims() {
  ModelDims d;
  d.image_size = 224;
  d.patch_size = 14;
  d.channels = 3;
  d.d_enc = 1408;
  d.d_v = 768;
  d.d_h = 1024;
  d.d_llm = 4096;
  d.lm_layers = 32;
  d.lm_heads = 32;
  d.lm_mlp_ratio = 4;
  d.n_iq = 32;
  d.n_eq = 8;
  d.max_seq_len = 160;
  d.patch_cls = true;
  d.vocab_size = 32000;
  return d;
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "config", {"dims", "variants", "train", "pretrain", "ablate"});
  RunConfig cfg;
  if (j.contains("dims")) cfg.dims = dims_from_json(j.at("dims"));
  if (j.contains("variants")) cfg.variants = variants_from_json(j.at("variants"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  if (j.contains("pretrain")) cfg.pretrain = pretrain_from_json(j.at("pretrain"));
  if (j.contains("ablate")) cfg.ablate = ablate_from_json(j.at("ablate"));
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["dims"] = {{"image_size", cfg.dims.image_size},
               {"patch_size", cfg.dims.patch_size},
               {"channels", cfg.dims.channels},
               {"d_enc", cfg.dims.d_enc},
               {"d_v", cfg.dims.d_v},
               {"d_h", cfg.dims.d_h},
               {"d_llm", cfg.dims.d_llm},
               {"lm_layers", cfg.dims.lm_layers},
               {"lm_heads", cfg.dims.lm_heads},
               {"lm_mlp_ratio", cfg.dims.lm_mlp_ratio},
               {"n_iq", cfg.dims.n_iq},
               {"n_eq", cfg.dims.n_eq},
               {"max_seq_len", cfg.dims.max_seq_len},
               {"patch_cls", cfg.dims.patch_cls},
               {"vocab_size", cfg.dims.vocab_size}};
  j["variants"] = {{"ta1_projector", to_string(cfg.variants.ta1)},
                   {"ta2_projector", to_string(cfg.variants.ta2)},
                   {"purification", to_string(cfg.variants.purification)},
                   {"ta1_enabled", cfg.variants.ta1_enabled}};
  j["train"] = {{"init_lr", cfg.train.init_lr},
                {"min_lr", cfg.train.min_lr},
                {"warmup_frac", cfg.train.warmup_frac},
                {"warmup_steps", cfg.train.warmup_steps},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"seed", cfg.train.seed},
                {"weight_decay", cfg.train.weight_decay},
                {"decode_max_len", cfg.train.decode_max_len},
                {"ta1_max_len", cfg.train.ta1_max_len}};
  j["pretrain"] = {{"init_lr", cfg.pretrain.init_lr},
                   {"min_lr", cfg.pretrain.min_lr},
                   {"warmup_frac", cfg.pretrain.warmup_frac},
                   {"epochs", cfg.pretrain.epochs},
                   {"batch_size", cfg.pretrain.batch_size},
                   {"seed", cfg.pretrain.seed},
                   {"heldout_frac", cfg.pretrain.heldout_frac},
                   {"target_loss", cfg.pretrain.target_loss},
                   {"max_records", cfg.pretrain.max_records}};
  j["ablate"] = {{"purifications", cfg.ablate.purifications},
                 {"projectors", cfg.ablate.projectors}};
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  const std::string dump = to_json(cfg).dump();
  return hex64(fnv1a64(dump));
}

}  // namespace tpcap
