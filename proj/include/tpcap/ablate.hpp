#pragma once

#include <string>

#include "tpcap/backbones.hpp"
#include "tpcap/config.hpp"
#include "tpcap/data.hpp"

namespace tpcap {

// Trains and evaluates the ablation grid: the four TA/MP rows (full, no-MP,
// no-TA1+MP, TA2-only baseline) plus any extra purification or projector
// variants requested in cfg.ablate. Writes results.json after every cell and
// results.md at the end. Returns the final table.
json run_ablation(const BackboneModel& backbone, const CaptionCorpus& train,
                  const CaptionCorpus& test, const RunConfig& cfg,
                  const std::string& out_dir);

}  // namespace tpcap
