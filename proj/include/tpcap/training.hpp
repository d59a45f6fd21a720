#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tpcap/data.hpp"
#include "tpcap/metrics.hpp"
#include "tpcap/optim.hpp"
#include "tpcap/pipeline.hpp"

namespace tpcap {

struct StepRecord {
  int step = 0;
  double loss = 0.0;  // batch mean of per-sample summed NLL
  double lr = 0.0;
};

// One or more epochs of TPCap training: only registry-trainable parameters
// move; TA1 entity text is recomputed every step with the current shared
// projector weights. Appends NDJSON {step, loss, lr} records to loss_stream
// when given.
std::vector<StepRecord> train_tpcap(TpcapModel& model,
                                    const CaptionCorpus& corpus,
                                    const TrainParams& params,
                                    std::ostream* loss_stream = nullptr);

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int n_checked = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;  // trainable parameters only
  double max_rel_err = 0.0;
  bool pass = false;
  json to_json() const;
};

// Central finite differences against the analytic gradient of the caption
// loss, at tiny dimensions in double precision. Entity ids are computed once
// and held fixed (stage-1 decoding is non-differentiable).
GradcheckReport gradcheck(const Variants& variants, double tolerance = 1e-4);

// Captions every image in the corpus and scores it against the references.
// config_hash_value and seed are echoed into the report.
MetricReport evaluate_corpus(const TpcapModel& model,
                             const CaptionCorpus& corpus,
                             const std::string& config_hash_value,
                             uint64_t seed,
                             std::vector<json>* entity_dump = nullptr);

}  // namespace tpcap
