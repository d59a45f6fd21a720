#pragma once

#include <string>
#include <vector>

namespace tpcap {

// Chat-style prompt with a feature slot. The rendered form is fixed; the
// slot is replaced by projected feature rows at assembly time.
struct PromptTemplate {
  std::string prefix;
  std::string suffix;
  static constexpr const char* kSlotMarker = "<ProjFeature>";

  std::string render() const { return prefix + kSlotMarker + suffix; }

  static PromptTemplate lp1() {
    return {"###Human: <Img>", "</Img> What are they? ###Assistant:"};
  }
  static PromptTemplate lp2() {
    return {"###Human: <Img>",
            "</Img> Describe this image in detail. ###Assistant:"};
  }
};

// Every word the two prompts contribute to the closed vocabulary.
inline std::vector<std::string> prompt_vocabulary_words() {
  std::vector<std::string> words;
  for (const auto& tpl : {PromptTemplate::lp1(), PromptTemplate::lp2()}) {
    words.push_back(tpl.prefix);
    words.push_back(tpl.suffix);
  }
  return words;
}

}  // namespace tpcap
