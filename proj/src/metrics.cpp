#include "tpcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>
#include <unordered_set>

namespace tpcap {

namespace {

constexpr int kMaxOrder = 4;
constexpr double kRougeBeta = 1.2;
constexpr double kCiderSigma = 6.0;

void check_aligned(const std::vector<TokenList>& candidates,
                   const std::vector<std::vector<TokenList>>& references) {
  if (candidates.empty()) throw InputError("metrics: empty corpus");
  if (candidates.size() != references.size()) {
    throw InputError("metrics: candidate/reference count mismatch");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw InputError("metrics: image without references");
  }
}

// n-grams keyed as tokens joined with an unlikely separator byte
using Counts = std::unordered_map<std::string, int>;

Counts ngram_counts(const TokenList& toks, int n) {
  Counts c;
  if (static_cast<int>(toks.size()) < n) return c;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += toks[i + k];
    }
    ++c[key];
  }
  return c;
}

}  // namespace

std::array<double, 4> bleu(
    const std::vector<TokenList>& candidates,
    const std::vector<std::vector<TokenList>>& references) {
  check_aligned(candidates, references);
  double clipped[kMaxOrder] = {0, 0, 0, 0};
  double total[kMaxOrder] = {0, 0, 0, 0};
  int64_t cand_len = 0;
  int64_t eff_ref_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenList& cand = candidates[i];
    cand_len += static_cast<int64_t>(cand.size());
    // closest reference length, ties to the shorter
    int best = -1;
    for (const auto& ref : references[i]) {
      const int rl = static_cast<int>(ref.size());
      const int cl = static_cast<int>(cand.size());
      if (best < 0 || std::abs(rl - cl) < std::abs(best - cl) ||
          (std::abs(rl - cl) == std::abs(best - cl) && rl < best)) {
        best = rl;
      }
    }
    eff_ref_len += best;
    for (int n = 1; n <= kMaxOrder; ++n) {
      const Counts cc = ngram_counts(cand, n);
      Counts max_ref;
      for (const auto& ref : references[i]) {
        for (const auto& [g, cnt] : ngram_counts(ref, n)) {
          max_ref[g] = std::max(max_ref[g], cnt);
        }
      }
      for (const auto& [g, cnt] : cc) {
        auto it = max_ref.find(g);
        clipped[n - 1] += std::min(cnt, it == max_ref.end() ? 0 : it->second);
      }
      total[n - 1] +=
          std::max<int64_t>(0, static_cast<int64_t>(cand.size()) - n + 1);
    }
  }
  double bp = 1.0;
  if (cand_len == 0) {
    bp = 0.0;
  } else if (cand_len < eff_ref_len) {
    bp = std::exp(1.0 - static_cast<double>(eff_ref_len) / cand_len);
  }
  std::array<double, 4> out{};
  double log_sum = 0.0;
  bool dead = false;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const double p =
        total[n - 1] > 0 ? clipped[n - 1] / total[n - 1] : 0.0;
    if (p <= 0.0) dead = true;
    if (!dead) log_sum += std::log(p);
    out[n - 1] = dead ? 0.0 : bp * std::exp(log_sum / n);
  }
  return out;
}

namespace {

int lcs_length(const TokenList& a, const TokenList& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  // two-row DP
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_l(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references) {
  check_aligned(candidates, references);
  double sum = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenList& cand = candidates[i];
    double best = 0.0;
    for (const auto& ref : references[i]) {
      if (cand.empty() || ref.empty()) continue;
      const double l = lcs_length(cand, ref);
      const double prec = l / static_cast<double>(cand.size());
      const double rec = l / static_cast<double>(ref.size());
      if (prec <= 0.0 || rec <= 0.0) continue;
      const double beta2 = kRougeBeta * kRougeBeta;
      best = std::max(best,
                      (1.0 + beta2) * prec * rec / (rec + beta2 * prec));
    }
    sum += best;
  }
  return sum / static_cast<double>(candidates.size());
}

namespace {

struct TfIdfVec {
  // per order: ngram -> tf*idf weight
  std::array<std::unordered_map<std::string, double>, kMaxOrder> w;
  std::array<double, kMaxOrder> norm{};
  int64_t bigram_len = 0;  // length proxy used by the gaussian penalty
};

TfIdfVec tfidf_vector(const TokenList& toks,
                      const std::unordered_map<std::string, int>& df,
                      double log_n_images) {
  TfIdfVec v;
  for (int n = 1; n <= kMaxOrder; ++n) {
    for (const auto& [g, cnt] : ngram_counts(toks, n)) {
      auto it = df.find(g);
      const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
      const double idf = log_n_images - std::log(std::max(1.0, d));
      const double wt = static_cast<double>(cnt) * idf;
      v.w[n - 1][g] = wt;
      v.norm[n - 1] += wt * wt;
    }
  }
  for (double& x : v.norm) x = std::sqrt(x);
  v.bigram_len = std::max<int64_t>(0, static_cast<int64_t>(toks.size()) - 1);
  return v;
}

}  // namespace

double cider_d(const std::vector<TokenList>& candidates,
               const std::vector<std::vector<TokenList>>& references) {
  check_aligned(candidates, references);
  const size_t n_images = candidates.size();
  if (n_images < 2) {
    throw InputError("cider_d: needs >= 2 images for a well-defined idf");
  }
  // document frequency over the reference corpus: one count per image whose
  // reference set contains the n-gram
  std::unordered_map<std::string, int> df;
  for (const auto& refs : references) {
    std::unordered_set<std::string> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= kMaxOrder; ++n) {
        for (const auto& [g, cnt] : ngram_counts(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df[g];
  }
  const double log_n = std::log(static_cast<double>(n_images));

  double total = 0.0;
  for (size_t i = 0; i < n_images; ++i) {
    const TfIdfVec cv = tfidf_vector(candidates[i], df, log_n);
    double img_score = 0.0;
    for (const auto& ref : references[i]) {
      const TfIdfVec rv = tfidf_vector(ref, df, log_n);
      const double delta =
          static_cast<double>(cv.bigram_len - rv.bigram_len);
      const double penalty =
          std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
      double per_order_sum = 0.0;
      for (int n = 0; n < kMaxOrder; ++n) {
        double dot = 0.0;
        for (const auto& [g, wt] : cv.w[n]) {
          auto it = rv.w[n].find(g);
          if (it != rv.w[n].end()) dot += std::min(wt, it->second) * it->second;
        }
        double val = 0.0;
        if (cv.norm[n] != 0.0 && rv.norm[n] != 0.0) {
          val = dot / (cv.norm[n] * rv.norm[n]);
        }
        per_order_sum += val * penalty;
      }
      img_score += per_order_sum / kMaxOrder;
    }
    img_score /= static_cast<double>(references[i].size());
    total += img_score * 10.0;
  }
  return total / static_cast<double>(n_images);
}

json MetricReport::to_json() const {
  json j;
  j["format_version"] = 1;
  j["bleu"] = {bleu[0], bleu[1], bleu[2], bleu[3]};
  j["rouge_l"] = rouge_l;
  j["cider_d"] = cider_d;
  j["meteor"] = nullptr;  // requires external linguistic resources
  j["spice"] = nullptr;
  j["n_images"] = n_images;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  return j;
}

}  // namespace tpcap
