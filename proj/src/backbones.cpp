#include "tpcap/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tpcap/checkpoint.hpp"
#include "tpcap/optim.hpp"
#include "tpcap/prompts.hpp"

namespace tpcap {

// ---------------------------------------------------------------- encoder

void VisionEncoder::setup(ParameterRegistry& reg, const ModelDims& d) {
  dims = d;
  const int patch_dim = d.patch_size * d.patch_size * d.channels;
  patch_w = &reg.declare("vision.patch_embed.w", {patch_dim, d.d_enc}, false);
  patch_b = &reg.declare("vision.patch_embed.b", {1, d.d_enc}, false);
  pos = &reg.declare("vision.pos", {d.n_patches(), d.d_enc}, false);
  if (d.patch_cls) {
    cls = &reg.declare("vision.cls", {1, d.d_enc}, false);
  }
  attn = declare_attention(reg, "vision.attn", d.d_enc, false);
}

void VisionEncoder::init(Rng& rng) {
  const int patch_dim = dims.patch_size * dims.patch_size * dims.channels;
  ParameterRegistry::init_gaussian(*patch_w, rng,
                                   1.0 / std::sqrt(double(patch_dim)));
  ParameterRegistry::init_zeros(*patch_b);
  ParameterRegistry::init_gaussian(*pos, rng, 0.1);
  if (cls) ParameterRegistry::init_gaussian(*cls, rng, 0.1);
  init_attention(attn, rng, 1.0 / std::sqrt(double(dims.d_enc)));
}

Mat VisionEncoder::encode(const Image& img) const {
  if (img.height != dims.image_size || img.width != dims.image_size) {
    throw ShapeError("encode_image: expected " +
                     std::to_string(dims.image_size) + "x" +
                     std::to_string(dims.image_size) + " image, got " +
                     std::to_string(img.height) + "x" +
                     std::to_string(img.width));
  }
  const int p = dims.patch_size;
  const int per_side = dims.image_size / p;
  const int patch_dim = p * p * dims.channels;
  Mat patches(per_side * per_side, patch_dim);
  for (int py = 0; py < per_side; ++py) {
    for (int px = 0; px < per_side; ++px) {
      double* row = patches.row_ptr(py * per_side + px);
      int k = 0;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          const unsigned char* rgb = img.px(py * p + y, px * p + x);
          for (int c = 0; c < 3; ++c) {
            row[k++] = rgb[c] / 255.0 * 2.0 - 1.0;
          }
        }
      }
    }
  }
  Tape t;
  Var x = t.affine(t.input(std::move(patches)), *patch_w, *patch_b);
  if (cls) {
    x = t.concat_rows({t.param(*cls), x});
  }
  x = t.add(x, t.param(*pos));
  x = t.add(x, attention(t, x, x, attn, 1, false));
  return t.value(x);
}

// ------------------------------------------------------------- compressor

void FeatureCompressor::setup(ParameterRegistry& reg, const ModelDims& d) {
  dims = d;
  in_w = &reg.declare("compressor.in_proj.w", {d.d_enc, d.d_v}, false);
  in_b = &reg.declare("compressor.in_proj.b", {1, d.d_v}, false);
  cross = declare_attention(reg, "compressor.cross", d.d_v, false);
}

void FeatureCompressor::init(Rng& rng) {
  ParameterRegistry::init_gaussian(*in_w, rng,
                                   1.0 / std::sqrt(double(dims.d_enc)));
  ParameterRegistry::init_zeros(*in_b);
  init_attention(cross, rng, 1.0 / std::sqrt(double(dims.d_v)));
}

Var FeatureCompressor::forward(Tape& t, Var patches, Var query_tokens) const {
  if (t.value(patches).cols != dims.d_enc) {
    throw ShapeError("compress_features: patch width " +
                     std::to_string(t.value(patches).cols) +
                     " does not match compressor d_enc " +
                     std::to_string(dims.d_enc));
  }
  Var kv = t.affine(patches, *in_w, *in_b);
  return t.add(query_tokens, attention(t, query_tokens, kv, cross, 1, false));
}

// -------------------------------------------------------------------- LM

void TinyLm::setup(ParameterRegistry& reg, const ModelDims& d, bool trainable) {
  dims = d;
  if (d.vocab_size <= 0) {
    throw ConfigError("TinyLm: vocab_size unresolved");
  }
  embed_table =
      &reg.declare("lm.embed", {d.vocab_size, d.d_llm}, trainable);
  pos = &reg.declare("lm.pos", {d.max_seq_len, d.d_llm}, trainable);
  blocks.clear();
  for (int l = 0; l < d.lm_layers; ++l) {
    const std::string p = "lm.layer" + std::to_string(l);
    Block b{};
    b.ln1_g = &reg.declare(p + ".ln1.g", {1, d.d_llm}, trainable);
    b.ln1_b = &reg.declare(p + ".ln1.b", {1, d.d_llm}, trainable);
    b.attn = declare_attention(reg, p + ".attn", d.d_llm, trainable);
    b.ln2_g = &reg.declare(p + ".ln2.g", {1, d.d_llm}, trainable);
    b.ln2_b = &reg.declare(p + ".ln2.b", {1, d.d_llm}, trainable);
    const int hidden = d.d_llm * d.lm_mlp_ratio;
    b.mlp_w1 = &reg.declare(p + ".mlp.w1", {d.d_llm, hidden}, trainable);
    b.mlp_b1 = &reg.declare(p + ".mlp.b1", {1, hidden}, trainable);
    b.mlp_w2 = &reg.declare(p + ".mlp.w2", {hidden, d.d_llm}, trainable);
    b.mlp_b2 = &reg.declare(p + ".mlp.b2", {1, d.d_llm}, trainable);
    blocks.push_back(b);
  }
  final_g = &reg.declare("lm.final_ln.g", {1, d.d_llm}, trainable);
  final_b = &reg.declare("lm.final_ln.b", {1, d.d_llm}, trainable);
  head_w = &reg.declare("lm.head.w", {d.d_llm, d.vocab_size}, trainable);
  head_b = &reg.declare("lm.head.b", {1, d.vocab_size}, trainable);
}

namespace {
void init_ones(Parameter& p) {
  ParameterRegistry::init_zeros(p);
  for (double& x : p.value.data) x = 1.0;
}
}  // namespace

void TinyLm::init(Rng& rng) {
  const double std = 0.08;
  ParameterRegistry::init_gaussian(*embed_table, rng, std);
  ParameterRegistry::init_gaussian(*pos, rng, 0.02);
  for (Block& b : blocks) {
    init_ones(*b.ln1_g);
    ParameterRegistry::init_zeros(*b.ln1_b);
    init_attention(b.attn, rng, std);
    init_ones(*b.ln2_g);
    ParameterRegistry::init_zeros(*b.ln2_b);
    ParameterRegistry::init_gaussian(*b.mlp_w1, rng, std);
    ParameterRegistry::init_zeros(*b.mlp_b1);
    ParameterRegistry::init_gaussian(*b.mlp_w2, rng, std);
    ParameterRegistry::init_zeros(*b.mlp_b2);
  }
  init_ones(*final_g);
  ParameterRegistry::init_zeros(*final_b);
  // zero-init head: step-0 loss is exactly ln(vocab)
  ParameterRegistry::init_zeros(*head_w);
  ParameterRegistry::init_zeros(*head_b);
}

Var TinyLm::embed_ids(Tape& t, const std::vector<int>& ids) const {
  return t.embed(t.param(*embed_table), ids);
}

Var TinyLm::forward(Tape& t, Var embeddings) const {
  const int len = t.value(embeddings).rows;
  if (t.value(embeddings).cols != dims.d_llm) {
    throw ShapeError("lm_forward: embedding width " +
                     std::to_string(t.value(embeddings).cols) +
                     " != d_llm " + std::to_string(dims.d_llm));
  }
  if (len > dims.max_seq_len) {
    throw InputError("lm_forward: sequence length " + std::to_string(len) +
                     " exceeds max_seq_len " +
                     std::to_string(dims.max_seq_len));
  }
  Var x = t.add(embeddings, t.slice_rows(t.param(*pos), 0, len));
  for (const Block& b : blocks) {
    Var h = t.layer_norm(x, t.param(*b.ln1_g), t.param(*b.ln1_b));
    x = t.add(x, attention(t, h, h, b.attn, dims.lm_heads, true));
    Var h2 = t.layer_norm(x, t.param(*b.ln2_g), t.param(*b.ln2_b));
    Var m = t.gelu(t.affine(h2, *b.mlp_w1, *b.mlp_b1));
    x = t.add(x, t.affine(m, *b.mlp_w2, *b.mlp_b2));
  }
  Var xf = t.layer_norm(x, t.param(*final_g), t.param(*final_b));
  return t.affine(xf, *head_w, *head_b);
}

// ------------------------------------------------------------ backbone net

void BackboneNet::setup(ParameterRegistry& reg, const ModelDims& dims,
                        bool lm_trainable) {
  encoder.setup(reg, dims);
  compressor.setup(reg, dims);
  lm.setup(reg, dims, lm_trainable);
}

void BackboneNet::init(Rng& rng) {
  encoder.init(rng);
  compressor.init(rng);
  lm.init(rng);
}

// -------------------------------------------------------------- pretraining

namespace {

struct PretrainSeq {
  std::vector<int> ids;  // full sequence including the trailing eos
  int prompt_len = 0;    // positions before the target span
};

PretrainSeq make_seq(const Tokenizer& tok, const PromptTemplate& tpl,
                     int slot_rows, const std::vector<std::string>& target) {
  PretrainSeq s;
  const auto prefix = tok.encode(tpl.prefix);
  const auto suffix = tok.encode(tpl.suffix);
  s.ids = prefix;
  s.ids.insert(s.ids.end(), slot_rows, Tokenizer::kFeat);
  s.ids.insert(s.ids.end(), suffix.begin(), suffix.end());
  s.prompt_len = static_cast<int>(s.ids.size());
  const auto tgt = tok.encode_words(target);
  s.ids.insert(s.ids.end(), tgt.begin(), tgt.end());
  s.ids.push_back(Tokenizer::kEos);
  return s;
}

// Per-token NLL of the target span, teacher forced.
double seq_loss(Tape& t, const TinyLm& lm, const PretrainSeq& s,
                Var* out_loss) {
  // inputs: all but the final token; logits row i predicts ids[i+1]
  std::vector<int> inputs(s.ids.begin(), s.ids.end() - 1);
  Var emb = lm.embed_ids(t, inputs);
  Var logits = lm.forward(t, emb);
  std::vector<int> rows, targets;
  for (size_t i = s.prompt_len; i < s.ids.size(); ++i) {
    rows.push_back(static_cast<int>(i) - 1);
    targets.push_back(s.ids[i]);
  }
  Var loss = t.cross_entropy_sum(logits, rows, targets);
  const double per_token =
      t.value(loss).data[0] / static_cast<double>(targets.size());
  if (out_loss) {
    *out_loss = t.scale(loss, 1.0 / static_cast<double>(targets.size()));
  }
  return per_token;
}

}  // namespace

double pretrain_backbone(const CaptionCorpus& train_corpus,
                         const RunConfig& cfg, const std::string& out_dir) {
  if (train_corpus.empty()) {
    throw ConfigError("pretrain_backbone: empty corpus");
  }
  const PretrainParams& pp = cfg.pretrain;

  Tokenizer tok = Tokenizer::build(train_corpus, prompt_vocabulary_words());
  ModelDims dims = cfg.dims;
  dims.vocab_size = tok.size();

  BackboneModel model;
  model.dims = dims;
  model.tokenizer = tok;
  model.net.setup(model.registry, dims, /*lm_trainable=*/true);
  Rng init_rng(derive_seed(pp.seed, "backbone-init"));
  model.net.init(init_rng);

  // LP1 (entity list) + LP2 (caption) sequences per record
  std::vector<PretrainSeq> seqs;
  size_t n_records = train_corpus.size();
  if (pp.max_records > 0) {
    n_records = std::min(n_records, static_cast<size_t>(pp.max_records));
  }
  for (size_t i = 0; i < n_records; ++i) {
    const CaptionRecord& rec = train_corpus.records[i];
    std::vector<std::string> entities = rec.entity_tokens;
    if (entities.empty()) entities = rec.references[0];
    seqs.push_back(
        make_seq(tok, PromptTemplate::lp1(), dims.n_iq, entities));
    seqs.push_back(make_seq(tok, PromptTemplate::lp2(), dims.n_iq + dims.n_eq,
                            rec.references[0]));
  }

  Rng shuffle_rng(derive_seed(pp.seed, "pretrain-split"));
  std::vector<int> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[shuffle_rng.below(i + 1)]);
  }
  size_t n_heldout = 0;
  if (seqs.size() >= 2) {
    n_heldout = std::clamp<size_t>(
        static_cast<size_t>(std::llround(pp.heldout_frac * seqs.size())), 1,
        seqs.size() - 1);
  }
  std::vector<int> train_idx(order.begin(), order.end() - n_heldout);
  std::vector<int> heldout_idx(order.end() - n_heldout, order.end());

  const int steps_per_epoch = static_cast<int>(
      (train_idx.size() + pp.batch_size - 1) / pp.batch_size);
  const int total_steps = std::max(1, steps_per_epoch * pp.epochs);
  const int warmup =
      std::min(total_steps - 1,
               static_cast<int>(std::llround(pp.warmup_frac * total_steps)));

  AdamW opt(trainable_params(model.registry), 0.0);
  int step = 0;
  double last_train_loss = 0.0;
  for (int epoch = 0; epoch < pp.epochs; ++epoch) {
    Rng erng(derive_seed(pp.seed, "pretrain-epoch-" + std::to_string(epoch)));
    std::vector<int> idx = train_idx;
    for (size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[erng.below(i + 1)]);
    }
    for (size_t off = 0; off < idx.size(); off += pp.batch_size) {
      const size_t hi = std::min(idx.size(), off + pp.batch_size);
      model.registry.zero_grads();
      double batch_loss = 0.0;
      for (size_t k = off; k < hi; ++k) {
        Tape t;
        Var loss;
        batch_loss += seq_loss(t, model.net.lm, seqs[idx[k]], &loss);
        t.backward(t.scale(loss, 1.0 / static_cast<double>(hi - off)));
      }
      batch_loss /= static_cast<double>(hi - off);
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("pretrain diverged at step " +
                            std::to_string(step));
      }
      const double lr =
          lr_at_step(step, total_steps, pp.init_lr, pp.min_lr, warmup);
      opt.step(lr);
      last_train_loss = batch_loss;
      ++step;
    }
  }

  double heldout_loss = 0.0;
  if (!heldout_idx.empty()) {
    for (int i : heldout_idx) {
      Tape t;
      heldout_loss += seq_loss(t, model.net.lm, seqs[i], nullptr);
    }
    heldout_loss /= static_cast<double>(heldout_idx.size());
  } else {
    heldout_loss = last_train_loss;
  }
  if (!std::isfinite(heldout_loss)) {
    throw TrainingError("pretrain produced non-finite held-out loss");
  }
  if (heldout_loss > pp.target_loss) {
    throw TrainingError(
        "pretrain missed the held-out loss target: " +
        std::to_string(heldout_loss) + " > " + std::to_string(pp.target_loss));
  }

  // freeze everything before writing the checkpoint
  for (const auto& p : model.registry.entries()) p->trainable = false;

  RunConfig snapshot_cfg = cfg;
  snapshot_cfg.dims = dims;
  json snapshot;
  snapshot["kind"] = "backbone";
  snapshot["run"] = to_json(snapshot_cfg);
  json metrics;
  metrics["heldout_loss"] = heldout_loss;
  metrics["final_train_loss"] = last_train_loss;
  metrics["n_sequences"] = seqs.size();
  metrics["n_heldout"] = n_heldout;
  save_checkpoint(out_dir, model.registry, snapshot,
                  config_hash(snapshot_cfg), pp.seed, metrics,
                  &model.tokenizer);
  return heldout_loss;
}

BackboneModel load_backbone(const std::string& dir) {
  CheckpointData ckpt = load_checkpoint(dir);
  if (!ckpt.vocab.has_value()) {
    throw CorruptionError("backbone checkpoint lacks vocab.json: " + dir);
  }
  if (ckpt.manifest.at("config").value("kind", "") != "backbone") {
    throw CorruptionError("not a backbone checkpoint: " + dir);
  }
  BackboneModel model;
  RunConfig cfg =
      run_config_from_json(ckpt.manifest.at("config").at("run"));
  model.dims = cfg.dims;
  model.tokenizer = *ckpt.vocab;
  if (model.dims.vocab_size != model.tokenizer.size()) {
    throw CorruptionError("backbone vocab size mismatch in " + dir);
  }
  model.net.setup(model.registry, model.dims, /*lm_trainable=*/false);
  load_registry_weights(ckpt, model.registry);
  return model;
}

}  // namespace tpcap
