#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "scenesketch/data/types.hpp"

namespace scenesketch {

/// Lowercases ASCII letters, turns punctuation into spaces, splits on whitespace.
inline std::vector<std::string> normalize_words(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) clean.push_back(static_cast<char>(std::tolower(c)));
    else if (c >= 0x80) clean.push_back(static_cast<char>(c));
    else clean.push_back(' ');
  }
  std::istringstream is(clean);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

/// Word vocabulary with reserved padding (0) and unknown (1) ids; remaining
/// ids are assigned by descending corpus frequency, ties alphabetical.
class WordVocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  WordVocabulary() : words_{"<pad>", "<unk>"} {}

  static WordVocabulary build(const std::vector<std::string>& texts) {
    if (texts.empty()) throw DataError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
      for (const auto& w : normalize_words(t)) counts[w] += 1;
    std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    WordVocabulary v;
    for (const auto& [w, n] : sorted) v.add(w);
    return v;
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  int id_of(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnknown : it->second;
  }

  TokenizedDescription tokenize(const std::string& text) const {
    TokenizedDescription d;
    d.raw_text = text;
    for (const auto& w : normalize_words(text)) d.word_ids.push_back(id_of(w));
    return d;
  }

  Json to_json() const {
    Json j = Json::object();
    for (std::size_t i = 0; i < words_.size(); ++i) j[words_[i]] = i;
    return j;
  }

  static WordVocabulary from_json(const Json& j) {
    std::vector<std::string> words(j.size());
    for (const auto& [w, id] : j.items()) {
      const auto i = id.get<std::size_t>();
      if (i >= words.size()) throw DataError("vocabulary: id " + std::to_string(i) + " out of range");
      words[i] = w;
    }
    if (words.size() < 2 || words[0] != "<pad>" || words[1] != "<unk>")
      throw DataError("vocabulary: reserved ids missing");
    WordVocabulary v;
    for (std::size_t i = 2; i < words.size(); ++i) v.add(words[i]);
    return v;
  }

 private:
  void add(const std::string& w) {
    if (ids_.count(w)) return;
    ids_[w] = static_cast<int>(words_.size());
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

}  // namespace scenesketch
