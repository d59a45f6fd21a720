#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tpcap/ablate.hpp"
#include "tpcap/backbones.hpp"
#include "tpcap/checkpoint.hpp"
#include "tpcap/config.hpp"
#include "tpcap/data.hpp"
#include "tpcap/pipeline.hpp"
#include "tpcap/projector.hpp"
#include "tpcap/training.hpp"

namespace fs = std::filesystem;
using namespace tpcap;

namespace {

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return toy_config();
  return load_run_config(path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tpcap: trigger-augmented captioning toolkit"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  std::string gen_out;
  GenConfig gen_cfg;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_cfg.seed, "generation seed");
  gen->add_option("--train", gen_cfg.n_train, "train split size");
  gen->add_option("--val", gen_cfg.n_val, "val split size");
  gen->add_option("--test", gen_cfg.n_test, "test split size");
  gen->callback([&] {
    generate_synthetic_dataset(gen_cfg, gen_out);
    std::cout << "wrote " << gen_cfg.n_train + gen_cfg.n_val + gen_cfg.n_test
              << " images under " << gen_out << "\n";
  });

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "pretrain and freeze the backbone LM");
  std::string pre_data, pre_out, pre_config;
  int64_t pre_seed = -1;
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--out", pre_out, "checkpoint directory")->required();
  pre->add_option("--config", pre_config, "run config json");
  pre->add_option("--seed", pre_seed, "override pretrain seed");
  pre->callback([&] {
    RunConfig cfg = config_or_default(pre_config);
    if (pre_seed >= 0) cfg.pretrain.seed = static_cast<uint64_t>(pre_seed);
    const CaptionCorpus corpus = load_karpathy(pre_data, "train");
    const double heldout = pretrain_backbone(corpus, cfg, pre_out);
    json j;
    j["heldout_loss"] = heldout;
    j["checkpoint"] = pre_out;
    std::cout << j.dump(2) << "\n";
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the TPCap modules on a frozen backbone");
  std::string tr_data, tr_backbone, tr_out, tr_config;
  int64_t tr_seed = -1;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--backbone", tr_backbone, "backbone checkpoint")->required();
  tr->add_option("--out", tr_out, "output checkpoint directory")->required();
  tr->add_option("--config", tr_config, "run config json");
  tr->add_option("--seed", tr_seed, "override train seed");
  tr->callback([&] {
    RunConfig cfg = config_or_default(tr_config);
    if (tr_seed >= 0) cfg.train.seed = static_cast<uint64_t>(tr_seed);
    const CaptionCorpus corpus = load_karpathy(tr_data, "train");
    TpcapModel model = build_tpcap(tr_backbone, cfg);
    cfg.dims = model.dims;
    std::error_code ec;
    fs::create_directories(tr_out, ec);
    if (ec) throw IoError("cannot create " + tr_out);
    std::ofstream loss_stream(fs::path(tr_out) / "loss.ndjson");
    const auto steps = train_tpcap(model, corpus, cfg.train, &loss_stream);
    json metrics;
    metrics["steps"] = steps.size();
    metrics["final_loss"] = steps.empty() ? 0.0 : steps.back().loss;
    save_tpcap(model, cfg, tr_out, metrics);
    std::cout << metrics.dump(2) << "\n";
  });

  // ---- caption ----
  auto* cap = app.add_subcommand("caption", "caption one image");
  std::string cap_ckpt, cap_image;
  bool cap_dump = false;
  cap->add_option("--ckpt", cap_ckpt, "tpcap checkpoint")->required();
  cap->add_option("--image", cap_image, "ppm image path")->required();
  cap->add_flag("--dump-entity-info", cap_dump,
                "emit a json record with the stage-1 entity text");
  cap->callback([&] {
    TpcapModel model = load_tpcap(cap_ckpt);
    const Image img = read_ppm(cap_image);
    const auto res = model.caption_image(img);
    if (cap_dump) {
      json j;
      j["image_id"] = fs::path(cap_image).stem().string();
      j["entity_info_text"] = res.entity_info;
      j["caption"] = res.caption;
      std::cout << j.dump() << "\n";
    } else {
      std::cout << res.caption << "\n";
    }
  });

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "caption a split and score it");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  bool ev_dump = false;
  ev->add_option("--ckpt", ev_ckpt, "tpcap checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train|val|test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--report", ev_report, "write the metric report here");
  ev->add_flag("--dump-entity-info", ev_dump,
               "also write per-image entity records next to the report");
  ev->callback([&] {
    TpcapModel model = load_tpcap(ev_ckpt);
    const CaptionCorpus corpus = load_karpathy(ev_data, ev_split);
    const CheckpointData ckpt = load_checkpoint(ev_ckpt);
    const std::string hash = ckpt.manifest.value("config_hash", "");
    const uint64_t seed = ckpt.manifest.value("seed", 0ull);
    std::vector<json> dump;
    const MetricReport report = evaluate_corpus(
        model, corpus, hash, seed, ev_dump ? &dump : nullptr);
    const std::string text = report.to_json().dump(2) + "\n";
    std::cout << text;
    if (!ev_report.empty()) {
      write_text(ev_report, text);
      if (ev_dump) {
        std::string nd;
        for (const auto& j : dump) nd += j.dump() + "\n";
        write_text(ev_report + ".entities.ndjson", nd);
      }
    }
  });

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "run the TA/MP ablation grid");
  std::string ab_data, ab_backbone, ab_config, ab_out;
  int64_t ab_seed = -1;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--backbone", ab_backbone, "backbone checkpoint")->required();
  ab->add_option("--config", ab_config, "run config json");
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--seed", ab_seed, "override train seed");
  ab->callback([&] {
    RunConfig cfg = config_or_default(ab_config);
    if (ab_seed >= 0) cfg.train.seed = static_cast<uint64_t>(ab_seed);
    const BackboneModel backbone = load_backbone(ab_backbone);
    const CaptionCorpus train = load_karpathy(ab_data, "train");
    const CaptionCorpus test = load_karpathy(ab_data, "test");
    const json table = run_ablation(backbone, train, test, cfg, ab_out);
    std::cout << table.dump(2) << "\n";
  });

  // ---- params ----
  auto* pj = app.add_subcommand("params", "closed-form trainable parameter counts");
  std::string pj_dims = "paper", pj_variant = "ours";
  pj->add_option("--dims", pj_dims, "paper|toy");
  pj->add_option("--variant", pj_variant, "ours|l|s|dl|l-hdl|hdl-l");
  pj->callback([&] { std::cout << params_report(pj_dims, pj_variant).dump(2) << "\n"; });

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::string gc_config;
  gc->add_option("--config", gc_config, "run config json (variants only)");
  gc->callback([&] {
    RunConfig cfg = config_or_default(gc_config);
    const GradcheckReport report = gradcheck(cfg.variants);
    std::cout << report.to_json().dump(2) << "\n";
    if (!report.pass) throw TrainingError("gradient check failed");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
