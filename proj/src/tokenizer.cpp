#include "tpcap/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tpcap/data.hpp"

namespace tpcap {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>",
                                            "<feat>"};
}

std::vector<std::string> Tokenizer::normalize(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
    // punctuation is dropped
  }
  flush();
  return words;
}

Tokenizer Tokenizer::from_words(const std::vector<std::string>& words) {
  Tokenizer t;
  t.id_to_word_ = kSpecials;
  std::set<std::string> uniq(words.begin(), words.end());
  for (const auto& w : uniq) t.id_to_word_.push_back(w);
  t.rebuild_index();
  return t;
}

Tokenizer Tokenizer::build(const CaptionCorpus& corpus,
                           const std::vector<std::string>& extra_words) {
  if (corpus.empty()) {
    throw ConfigError("build_tokenizer: corpus is empty");
  }
  std::vector<std::string> words;
  for (const auto& rec : corpus.records) {
    for (const auto& ref : rec.references) {
      for (const auto& w : ref) {
        for (const auto& n : normalize(w)) words.push_back(n);
      }
    }
    for (const auto& w : rec.entity_tokens) {
      for (const auto& n : normalize(w)) words.push_back(n);
    }
  }
  for (const auto& w : extra_words) {
    for (const auto& n : normalize(w)) words.push_back(n);
  }
  return from_words(words);
}

void Tokenizer::rebuild_index() {
  word_to_id_.clear();
  for (size_t i = 0; i < id_to_word_.size(); ++i) {
    word_to_id_[id_to_word_[i]] = static_cast<int>(i);
  }
}

int Tokenizer::id_of(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::word_of(int id) const {
  if (id < 0 || id >= size()) {
    throw InputError("tokenizer: id out of range: " + std::to_string(id));
  }
  return id_to_word_[id];
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : normalize(text)) ids.push_back(id_of(w));
  return ids;
}

std::vector<int> Tokenizer::encode_words(
    const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    for (const auto& n : normalize(w)) ids.push_back(id_of(n));
  }
  return ids;
}

std::vector<std::string> Tokenizer::decode_words(
    const std::vector<int>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int id : ids) words.push_back(word_of(id));
  return words;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += word_of(ids[i]);
  }
  return out;
}

void Tokenizer::save(const std::string& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (size_t i = 0; i < id_to_word_.size(); ++i) {
    j[id_to_word_[i]] = static_cast<int>(i);
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write vocabulary: " + path);
  f << j.dump(2) << "\n";
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open vocabulary: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("vocabulary parse failure: ") + e.what());
  }
  std::vector<std::pair<int, std::string>> pairs;
  for (auto it = j.begin(); it != j.end(); ++it) {
    pairs.emplace_back(it.value().get<int>(), it.key());
  }
  std::sort(pairs.begin(), pairs.end());
  Tokenizer t;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first != static_cast<int>(i)) {
      throw CorruptionError("vocabulary ids are not contiguous in " + path);
    }
    t.id_to_word_.push_back(pairs[i].second);
  }
  for (int i = 0; i < kNumSpecials && i < t.size(); ++i) {
    if (t.id_to_word_[i] != kSpecials[i]) {
      throw CorruptionError("vocabulary special ids corrupted in " + path);
    }
  }
  t.rebuild_index();
  return t;
}

}  // namespace tpcap
