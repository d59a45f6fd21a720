#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tpcap/data.hpp"
#include "tpcap/metrics.hpp"
#include "tpcap/optim.hpp"
#include "tpcap/pipeline.hpp"
#include "tpcap/projector.hpp"
#include "tpcap/tokenizer.hpp"
#include "tpcap/training.hpp"

namespace py = pybind11;
using namespace tpcap;

namespace {

py::dict json_to_dict(const json& j) {
  py::object loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

}  // namespace

PYBIND11_MODULE(tpcap, m) {
  m.doc() = "Trigger-augmented captioning core (C++)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<Error>(m, "TpcapError");

  m.def(
      "params_report",
      [](const std::string& dims, const std::string& variant) {
        return json_to_dict(params_report(dims, variant));
      },
      py::arg("dims") = "paper", py::arg("variant") = "ours",
      "Closed-form trainable parameter count for a projector variant pair.");

  m.def("lr_at_step", &lr_at_step, py::arg("step"), py::arg("total_steps"),
        py::arg("init_lr") = 1e-4, py::arg("min_lr") = 8e-5,
        py::arg("warmup_steps") = 0,
        "Linear-warmup cosine learning rate schedule.");

  m.def(
      "bleu",
      [](const std::vector<TokenList>& c,
         const std::vector<std::vector<TokenList>>& r) {
        const auto b = bleu(c, r);
        return std::vector<double>(b.begin(), b.end());
      },
      py::arg("candidates"), py::arg("references"));
  m.def("rouge_l", &rouge_l, py::arg("candidates"), py::arg("references"));
  m.def("cider_d", &cider_d, py::arg("candidates"), py::arg("references"));

  m.def(
      "generate_synthetic_dataset",
      [](const std::string& out, uint64_t seed, int n_train, int n_val,
         int n_test) {
        GenConfig cfg;
        cfg.seed = seed;
        cfg.n_train = n_train;
        cfg.n_val = n_val;
        cfg.n_test = n_test;
        generate_synthetic_dataset(cfg, out);
      },
      py::arg("out"), py::arg("seed") = 0, py::arg("train") = 10,
      py::arg("val") = 2, py::arg("test") = 2);

  m.def(
      "tokenize",
      [](const std::string& text) { return Tokenizer::normalize(text); },
      py::arg("text"), "Lowercase, strip punctuation, split on whitespace.");

  m.def(
      "caption_image",
      [](const std::string& ckpt, const std::string& image, bool entity_info) {
        TpcapModel model = load_tpcap(ckpt);
        const auto res = model.caption_image(read_ppm(image));
        py::dict d;
        d["caption"] = res.caption;
        if (entity_info) d["entity_info"] = res.entity_info;
        return d;
      },
      py::arg("checkpoint"), py::arg("image"), py::arg("entity_info") = false,
      "Caption one PPM image with a trained checkpoint.");

  m.def(
      "gradcheck",
      [](const std::string& purification) {
        Variants v;
        v.purification = purification_from_string(purification);
        return json_to_dict(gradcheck(v).to_json());
      },
      py::arg("purification") = "mp");
}
