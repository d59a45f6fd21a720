#pragma once

#include <array>
#include <string>
#include <vector>

#include "tpcap/config.hpp"

namespace tpcap {

using TokenList = std::vector<std::string>;

// Corpus-level BLEU@1..4: modified n-gram precision with per-reference clip,
// geometric mean over orders, brevity penalty against the closest reference
// length (ties go to the shorter reference). No smoothing: a zero precision
// at any order zeroes that score.
std::array<double, 4> bleu(const std::vector<TokenList>& candidates,
                           const std::vector<std::vector<TokenList>>& references);

// ROUGE-L: LCS F-measure (beta = 1.2, the COCO evaluation convention), best
// reference per candidate, averaged over the corpus.
double rouge_l(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references);

// CIDEr-D: TF-IDF n-gram vectors (n = 1..4, idf over the reference corpus),
// count-clipped cosine with a gaussian length penalty (sigma = 6), averaged
// over orders and references, scaled by 10. Needs >= 2 images for a
// well-defined idf.
double cider_d(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references);

struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider_d = 0.0;
  int n_images = 0;
  std::string config_hash;
  uint64_t seed = 0;

  json to_json() const;
};

}  // namespace tpcap
