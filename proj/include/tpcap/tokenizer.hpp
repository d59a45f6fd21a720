#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tpcap/common.hpp"

namespace tpcap {

struct CaptionCorpus;

// Word-level tokenizer: lowercase, strip non-alphanumerics, split on
// whitespace. The vocabulary is closed over the training corpus plus the
// prompt template words.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFeat = 4;
  static constexpr int kNumSpecials = 5;

  Tokenizer() = default;

  static std::vector<std::string> normalize(const std::string& text);

  static Tokenizer build(const CaptionCorpus& corpus,
                         const std::vector<std::string>& extra_words = {});
  static Tokenizer from_words(const std::vector<std::string>& words);

  std::vector<int> encode(const std::string& text) const;
  std::vector<int> encode_words(const std::vector<std::string>& words) const;
  std::string decode(const std::vector<int>& ids) const;
  std::vector<std::string> decode_words(const std::vector<int>& ids) const;

  int id_of(const std::string& word) const;  // kUnk when absent
  const std::string& word_of(int id) const;
  int size() const { return static_cast<int>(id_to_word_.size()); }

  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

  bool operator==(const Tokenizer& o) const {
    return id_to_word_ == o.id_to_word_;
  }

 private:
  void rebuild_index();
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, int> word_to_id_;
};

}  // namespace tpcap
