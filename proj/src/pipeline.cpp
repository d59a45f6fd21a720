#include "tpcap/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "tpcap/checkpoint.hpp"

namespace tpcap {

AssembledPrompt assemble_prompt(Tape& t, const TinyLm& lm,
                                const Tokenizer& tok,
                                const PromptTemplate& tpl,
                                const std::vector<Var>& feature_blocks) {
  const std::vector<int> prefix_ids = tok.encode(tpl.prefix);
  const std::vector<int> suffix_ids = tok.encode(tpl.suffix);
  int feature_rows = 0;
  for (Var b : feature_blocks) {
    if (t.value(b).cols != lm.dims.d_llm) {
      throw ShapeError(
          "assemble_prompt: feature block width " +
          std::to_string(t.value(b).cols) + " is not projected to d_llm " +
          std::to_string(lm.dims.d_llm));
    }
    feature_rows += t.value(b).rows;
  }
  std::vector<Var> parts;
  parts.push_back(lm.embed_ids(t, prefix_ids));
  for (Var b : feature_blocks) parts.push_back(b);
  parts.push_back(lm.embed_ids(t, suffix_ids));

  AssembledPrompt out;
  out.embeddings = t.concat_rows(parts);
  out.feature_begin = static_cast<int>(prefix_ids.size());
  out.feature_end = out.feature_begin + feature_rows;
  out.length = t.value(out.embeddings).rows;
  return out;
}

std::vector<int> greedy_decode(const TinyLm& lm, const Mat& prompt_embeddings,
                               int max_len) {
  if (max_len < 1) throw InputError("greedy_decode: max_len must be >= 1");
  if (prompt_embeddings.rows < 1) {
    throw InputError("greedy_decode: empty prompt");
  }
  Mat seq = prompt_embeddings;
  std::vector<int> out;
  const Mat& table = lm.embed_table->value;
  for (int step = 0; step < max_len; ++step) {
    if (seq.rows > lm.dims.max_seq_len) break;
    Tape t;
    Var logits = lm.forward(t, t.input(seq));
    const Mat& lv = t.value(logits);
    const double* row = lv.row_ptr(lv.rows - 1);
    int best = -1;
    for (int j = 0; j < lv.cols; ++j) {
      if (j == Tokenizer::kPad || j == Tokenizer::kBos ||
          j == Tokenizer::kFeat) {
        continue;  // special ids are not emitted; eos stays admissible
      }
      if (best < 0 || row[j] > row[best]) best = j;  // ties keep the lowest id
    }
    if (best == Tokenizer::kEos) break;
    out.push_back(best);
    Mat next(seq.rows + 1, seq.cols);
    std::copy(seq.data.begin(), seq.data.end(), next.data.begin());
    std::copy(table.row_ptr(best), table.row_ptr(best) + table.cols,
              next.row_ptr(seq.rows));
    seq = std::move(next);
  }
  return out;
}

Var caption_loss(Tape& t, const TinyLm& lm, const AssembledPrompt& prompt,
                 const std::vector<int>& caption_ids) {
  if (caption_ids.empty() || caption_ids.back() != Tokenizer::kEos) {
    throw InputError("caption_loss: caption must end with eos");
  }
  const int n = prompt.length;
  const int l = static_cast<int>(caption_ids.size());
  if (n + l - 1 > lm.dims.max_seq_len) {
    throw InputError("caption_loss: caption exceeds the maximum length");
  }
  std::vector<int> teacher(caption_ids.begin(), caption_ids.end() - 1);
  Var inputs = prompt.embeddings;
  if (!teacher.empty()) {
    inputs = t.concat_rows({prompt.embeddings, lm.embed_ids(t, teacher)});
  }
  Var logits = lm.forward(t, inputs);
  std::vector<int> rows(l), targets(l);
  for (int i = 0; i < l; ++i) {
    rows[i] = n - 1 + i;
    targets[i] = caption_ids[i];
  }
  return t.cross_entropy_sum(logits, rows, targets);
}

// ----------------------------------------------------------- model assembly

namespace {

void check_dims_match(const ModelDims& a, const ModelDims& b) {
  const bool ok = a.image_size == b.image_size &&
                  a.patch_size == b.patch_size && a.channels == b.channels &&
                  a.d_enc == b.d_enc && a.d_v == b.d_v && a.d_h == b.d_h &&
                  a.d_llm == b.d_llm && a.lm_layers == b.lm_layers &&
                  a.lm_heads == b.lm_heads &&
                  a.lm_mlp_ratio == b.lm_mlp_ratio && a.n_iq == b.n_iq &&
                  a.n_eq == b.n_eq && a.max_seq_len == b.max_seq_len &&
                  a.patch_cls == b.patch_cls;
  if (!ok) {
    throw ConfigError("config dims do not match the backbone checkpoint");
  }
}

void declare_tpcap_parts(TpcapModel& m) {
  m.image_query_tokens = &m.registry.declare(
      "tpcap.image_query_tokens", {m.dims.n_iq, m.dims.d_v}, true);
  m.projectors = declare_projectors(m.registry, m.dims, m.variants);
  m.purifier.setup(m.registry, m.dims, m.variants.purification);
}

TpcapModel make_structure(const ModelDims& dims, const RunConfig& cfg,
                          const Tokenizer& tok) {
  TpcapModel m;
  m.dims = dims;
  m.variants = cfg.variants;
  m.train_cfg = cfg.train;
  m.tokenizer = tok;
  m.net.setup(m.registry, dims, /*lm_trainable=*/false);
  declare_tpcap_parts(m);
  return m;
}

}  // namespace

TpcapModel build_tpcap(const BackboneModel& backbone, const RunConfig& cfg) {
  check_dims_match(backbone.dims, cfg.dims);
  TpcapModel m = make_structure(backbone.dims, cfg, backbone.tokenizer);
  // copy frozen backbone weights
  for (const auto& src : backbone.registry.entries()) {
    Parameter& dst = m.registry.get(src->name);
    dst.value = src->value;
    dst.grad = Mat(dst.rows(), dst.cols());
    dst.materialized = true;
  }
  Rng rng(derive_seed(cfg.train.seed, "tpcap-init"));
  ParameterRegistry::init_gaussian(*m.image_query_tokens, rng, 0.02);
  init_projectors(m.projectors, m.dims, rng);
  m.purifier.init(rng);
  return m;
}

TpcapModel build_tpcap(const std::string& backbone_dir, const RunConfig& cfg) {
  BackboneModel backbone = load_backbone(backbone_dir);
  RunConfig patched = cfg;
  patched.dims.vocab_size = backbone.dims.vocab_size;
  return build_tpcap(backbone, patched);
}

// ------------------------------------------------------------- inference

Mat TpcapModel::visual_features(const Image& img) const {
  Tape t;
  Var v = visual_features(t, img);
  return t.value(v);
}

Var TpcapModel::visual_features(Tape& t, const Image& img) const {
  Mat patches = net.encoder.encode(img);
  return net.compressor.forward(t, t.input(std::move(patches)),
                                t.param(*image_query_tokens));
}

std::vector<int> TpcapModel::stage_generate(const PromptTemplate& tpl,
                                            const std::vector<Mat>& blocks_dv,
                                            const ProjectorStack& proj,
                                            int max_len) const {
  Tape t;
  std::vector<Var> projected;
  for (const Mat& b : blocks_dv) {
    projected.push_back(proj.project(t, t.input(b)));
  }
  AssembledPrompt prompt =
      assemble_prompt(t, net.lm, tokenizer, tpl, projected);
  return greedy_decode(net.lm, t.value(prompt.embeddings), max_len);
}

std::vector<int> TpcapModel::ta1_generate(const Mat& visual) const {
  return stage_generate(PromptTemplate::lp1(), {visual}, projectors.ta1,
                        train_cfg.ta1_max_len);
}

std::vector<int> TpcapModel::ta2_generate(const Mat& visual,
                                          const Mat& entity) const {
  std::vector<Mat> blocks = {visual};
  if (entity.numel() > 0) blocks.push_back(entity);
  return stage_generate(PromptTemplate::lp2(), blocks, projectors.ta2,
                        train_cfg.decode_max_len);
}

std::vector<int> TpcapModel::compute_entity_ids(const Mat& visual) const {
  if (!variants.ta1_enabled) return {};
  return ta1_generate(visual);
}

TpcapModel::CaptionResult TpcapModel::caption_image(const Image& img) const {
  const Mat visual = visual_features(img);
  CaptionResult res;
  res.entity_ids = compute_entity_ids(visual);
  Mat entity_block;
  const bool has_entity_block =
      !(variants.purification == Purification::None && !variants.ta1_enabled);
  if (has_entity_block) {
    Tape t;
    Var eb = purifier.forward(t, net.lm, res.entity_ids, t.input(visual));
    entity_block = t.value(eb);
  }
  res.caption_ids = ta2_generate(visual, entity_block);
  res.caption = tokenizer.decode(res.caption_ids);
  res.entity_info = tokenizer.decode(res.entity_ids);
  return res;
}

Var TpcapModel::training_loss(Tape& t, const Image& img,
                              const std::vector<int>& caption_ids,
                              const std::vector<int>& entity_ids) const {
  Var f_v = visual_features(t, img);
  std::vector<Var> blocks = {f_v};
  const bool has_entity_block =
      !(variants.purification == Purification::None && !variants.ta1_enabled);
  if (has_entity_block) {
    blocks.push_back(purifier.forward(t, net.lm, entity_ids, f_v));
  }
  std::vector<Var> projected;
  for (Var b : blocks) projected.push_back(projectors.ta2.project(t, b));
  AssembledPrompt prompt =
      assemble_prompt(t, net.lm, tokenizer, PromptTemplate::lp2(), projected);
  return caption_loss(t, net.lm, prompt, caption_ids);
}

// ------------------------------------------------------------- checkpoints

void save_tpcap(const TpcapModel& model, const RunConfig& cfg,
                const std::string& dir, const json& metrics) {
  RunConfig snap = cfg;
  snap.dims = model.dims;
  snap.variants = model.variants;
  json snapshot;
  snapshot["kind"] = "tpcap";
  snapshot["run"] = to_json(snap);
  save_checkpoint(dir, model.registry, snapshot, config_hash(snap),
                  cfg.train.seed, metrics, &model.tokenizer);
}

RunConfig tpcap_checkpoint_config(const std::string& dir) {
  CheckpointData ckpt = load_checkpoint(dir);
  return run_config_from_json(ckpt.manifest.at("config").at("run"));
}

TpcapModel load_tpcap(const std::string& dir) {
  CheckpointData ckpt = load_checkpoint(dir);
  if (ckpt.manifest.at("config").value("kind", "") != "tpcap") {
    throw CorruptionError("not a tpcap checkpoint: " + dir);
  }
  if (!ckpt.vocab.has_value()) {
    throw CorruptionError("tpcap checkpoint lacks vocab.json: " + dir);
  }
  RunConfig cfg = run_config_from_json(ckpt.manifest.at("config").at("run"));
  TpcapModel m = make_structure(cfg.dims, cfg, *ckpt.vocab);
  load_registry_weights(ckpt, m.registry);
  return m;
}

void declare_tpcap_registry(ParameterRegistry& reg, const ModelDims& dims,
                            const Variants& variants) {
  BackboneNet net;
  net.setup(reg, dims, /*lm_trainable=*/false);
  reg.declare("tpcap.image_query_tokens", {dims.n_iq, dims.d_v}, true);
  declare_projectors(reg, dims, variants);
  Purifier pur;
  pur.setup(reg, dims, variants.purification);
}

}  // namespace tpcap
