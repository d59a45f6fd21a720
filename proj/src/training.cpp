#include "tpcap/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tpcap {

namespace {

struct TrainSample {
  Mat patches;               // frozen encoder output, cached
  std::vector<int> caption;  // reference 0 + eos
};

Var loss_from_patches(const TpcapModel& m, Tape& t, const Mat& patches,
                      const std::vector<int>& caption_ids,
                      const std::vector<int>& entity_ids) {
  Var f_v = m.net.compressor.forward(t, t.input(patches),
                                     t.param(*m.image_query_tokens));
  std::vector<Var> blocks = {f_v};
  const bool has_entity_block = !(m.variants.purification ==
                                      Purification::None &&
                                  !m.variants.ta1_enabled);
  if (has_entity_block) {
    blocks.push_back(m.purifier.forward(t, m.net.lm, entity_ids, f_v));
  }
  std::vector<Var> projected;
  projected.reserve(blocks.size());
  for (Var b : blocks) projected.push_back(m.projectors.ta2.project(t, b));
  AssembledPrompt prompt = assemble_prompt(t, m.net.lm, m.tokenizer,
                                           PromptTemplate::lp2(), projected);
  return caption_loss(t, m.net.lm, prompt, caption_ids);
}

}  // namespace

std::vector<StepRecord> train_tpcap(TpcapModel& model,
                                    const CaptionCorpus& corpus,
                                    const TrainParams& params,
                                    std::ostream* loss_stream) {
  if (corpus.empty()) throw ConfigError("train: empty corpus");

  std::vector<TrainSample> samples;
  samples.reserve(corpus.size());
  for (const CaptionRecord& rec : corpus.records) {
    TrainSample s;
    s.patches = model.net.encoder.encode(read_ppm(rec.image_path));
    s.caption = model.tokenizer.encode_words(rec.references[0]);
    s.caption.push_back(Tokenizer::kEos);
    samples.push_back(std::move(s));
  }

  const int n = static_cast<int>(samples.size());
  const int steps_per_epoch = (n + params.batch_size - 1) / params.batch_size;
  const int total_steps = std::max(1, steps_per_epoch * params.epochs);
  const int warmup =
      params.warmup_steps >= 0
          ? std::min(params.warmup_steps, total_steps - 1)
          : std::min(total_steps - 1,
                     static_cast<int>(
                         std::llround(params.warmup_frac * total_steps)));

  AdamW opt(trainable_params(model.registry), params.weight_decay);
  std::vector<StepRecord> records;
  int step = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    Rng erng(derive_seed(params.seed, "tpcap-epoch-" + std::to_string(epoch)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[erng.below(static_cast<uint64_t>(i) + 1)]);
    }
    for (int off = 0; off < n; off += params.batch_size) {
      const int hi = std::min(n, off + params.batch_size);
      const double inv_b = 1.0 / static_cast<double>(hi - off);
      model.registry.zero_grads();
      double batch_loss = 0.0;
      for (int k = off; k < hi; ++k) {
        const TrainSample& s = samples[order[k]];
        Tape t;
        // entity text is recomputed with the current weights; the decode
        // itself carries no gradient
        Var f_v_probe = model.net.compressor.forward(
            t, t.input(s.patches), t.param(*model.image_query_tokens));
        std::vector<int> entity_ids;
        if (model.variants.ta1_enabled) {
          entity_ids = model.ta1_generate(t.value(f_v_probe));
        }
        Var loss = loss_from_patches(model, t, s.patches, s.caption,
                                     entity_ids);
        batch_loss += t.value(loss).data[0];
        t.backward(t.scale(loss, inv_b));
      }
      batch_loss *= inv_b;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training loss is non-finite at step " +
                            std::to_string(step));
      }
      const double lr = lr_at_step(step, total_steps, params.init_lr,
                                   params.min_lr, warmup);
      opt.step(lr);
      StepRecord rec{step, batch_loss, lr};
      records.push_back(rec);
      if (loss_stream) {
        json j;
        j["step"] = rec.step;
        j["loss"] = rec.loss;
        j["lr"] = rec.lr;
        (*loss_stream) << j.dump() << "\n";
      }
      ++step;
    }
  }
  return records;
}

// ----------------------------------------------------------------- gradcheck

json GradcheckReport::to_json() const {
  json j;
  j["pass"] = pass;
  j["max_rel_err"] = max_rel_err;
  json params = json::array();
  for (const auto& e : entries) {
    params.push_back({{"name", e.name},
                      {"max_rel_err", e.max_rel_err},
                      {"n_checked", e.n_checked}});
  }
  j["params"] = params;
  return j;
}

GradcheckReport gradcheck(const Variants& variants, double tolerance) {
  // tiny dims, double precision throughout
  RunConfig cfg;
  cfg.dims.image_size = 8;
  cfg.dims.patch_size = 4;
  cfg.dims.d_enc = 8;
  cfg.dims.d_v = 6;
  cfg.dims.d_h = 5;
  cfg.dims.d_llm = 8;
  cfg.dims.lm_layers = 1;
  cfg.dims.lm_heads = 2;
  cfg.dims.lm_mlp_ratio = 2;
  cfg.dims.n_iq = 3;
  cfg.dims.n_eq = 2;
  cfg.dims.max_seq_len = 64;
  cfg.variants = variants;
  cfg.train.seed = 99;
  cfg.train.ta1_max_len = 4;

  CaptionCorpus corpus;
  for (const char* cap : {"a red circle", "a blue square", "a green triangle"}) {
    CaptionRecord rec;
    rec.references.push_back(Tokenizer::normalize(cap));
    rec.split = "train";
    corpus.records.push_back(rec);
  }
  Tokenizer tok = Tokenizer::build(corpus, prompt_vocabulary_words());

  BackboneModel backbone;
  backbone.dims = cfg.dims;
  backbone.dims.vocab_size = tok.size();
  backbone.tokenizer = tok;
  backbone.net.setup(backbone.registry, backbone.dims, false);
  Rng brng(derive_seed(31, "gradcheck-backbone"));
  backbone.net.init(brng);
  // the zero-initialized head would make every logit tie; randomize it so the
  // decode and the loss landscape are non-degenerate
  ParameterRegistry::init_gaussian(*backbone.net.lm.head_w, brng, 0.3);
  ParameterRegistry::init_gaussian(*backbone.net.lm.head_b, brng, 0.1);

  RunConfig model_cfg = cfg;
  model_cfg.dims = backbone.dims;
  TpcapModel model = build_tpcap(backbone, model_cfg);

  Image img;
  img.height = img.width = cfg.dims.image_size;
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * 3);
  Rng prng(derive_seed(32, "gradcheck-image"));
  for (auto& px : img.pixels) {
    px = static_cast<unsigned char>(prng.below(256));
  }

  std::vector<int> caption = tok.encode("a red circle");
  caption.push_back(Tokenizer::kEos);
  const std::vector<int> entity_ids =
      model.variants.ta1_enabled
          ? model.compute_entity_ids(model.visual_features(img))
          : std::vector<int>{};

  auto loss_value = [&]() {
    Tape t;
    Var l = model.training_loss(t, img, caption, entity_ids);
    return t.value(l).data[0];
  };

  // analytic gradients
  model.registry.zero_grads();
  {
    Tape t;
    Var l = model.training_loss(t, img, caption, entity_ids);
    t.backward(l);
  }

  GradcheckReport report;
  report.pass = true;
  const double h = 1e-4;
  for (Parameter* p : trainable_params(model.registry)) {
    GradcheckEntry entry;
    entry.name = p->name;
    Mat analytic = p->grad;
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + h;
      const double up = loss_value();
      p->value.data[i] = keep - h;
      const double dn = loss_value();
      p->value.data[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double a = analytic.data[i];
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.n_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    if (entry.max_rel_err >= tolerance) report.pass = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------- evaluation

MetricReport evaluate_corpus(const TpcapModel& model,
                             const CaptionCorpus& corpus,
                             const std::string& config_hash_value,
                             uint64_t seed, std::vector<json>* entity_dump) {
  if (corpus.empty()) throw InputError("evaluate: empty corpus");
  std::vector<TokenList> candidates;
  std::vector<std::vector<TokenList>> references;
  for (const CaptionRecord& rec : corpus.records) {
    const Image img = read_ppm(rec.image_path);
    const TpcapModel::CaptionResult res = model.caption_image(img);
    candidates.push_back(model.tokenizer.decode_words(res.caption_ids));
    references.push_back(rec.references);
    if (entity_dump) {
      json j;
      j["image_id"] = rec.image_id;
      j["entity_info_text"] = res.entity_info;
      j["caption"] = res.caption;
      entity_dump->push_back(std::move(j));
    }
  }
  MetricReport report;
  report.bleu = bleu(candidates, references);
  report.rouge_l = rouge_l(candidates, references);
  report.cider_d = cider_d(candidates, references);
  report.n_images = static_cast<int>(corpus.size());
  report.config_hash = config_hash_value;
  report.seed = seed;
  return report;
}

}  // namespace tpcap
