#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "umk/errors.hpp"

namespace umk {

// Closed whitespace-separated word vocabulary. Reserved control tokens sit at
// fixed ids so that corpora, checkpoints and attack artifacts agree on them.
class Vocab {
 public:
  enum ReservedId : int {
    kPad = 0,
    kBos = 1,
    kEos = 2,
    kHarm = 3,  // marker token whose presence makes a query "harmful"
    kRefuse0 = 4,
    kRefuse1 = 5,
    kRefuse2 = 6,
    kRefuse3 = 7,
    kAffirm = 8,  // the "Sure"-style compliance prefix
  };

  // Deterministic synthetic vocabulary: reserved tokens, the grammar lexicon,
  // and numbered filler tokens up to `size`.
  static Vocab synthetic(int size = 128);

  // Rebuild from a stored word list (model manifest); validates that the
  // reserved tokens are present at their fixed ids.
  static Vocab from_words(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& word) const;
  const std::string& word(int id) const;

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(std::span<const int> ids) const;

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<int>& refusal_ids() const;

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Word groups the synthetic corpus grammar draws from. Exposed so the corpus
// generator and the lexicon toxicity scorer share one source of truth.
struct Lexicon {
  std::vector<std::string> verbs;
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  std::vector<std::string> adverbs;
  std::vector<std::string> glue;  // determiners and connectives
};

const Lexicon& synthetic_lexicon();

}  // namespace umk
