#include "umk/vocab.hpp"

#include <sstream>

namespace umk {

namespace {

const std::vector<std::string>& reserved_words() {
  static const std::vector<std::string> kReserved = {
      "[pad]", "[bos]", "[eos]", "[harm]", "[refuse0]", "[refuse1]", "[refuse2]", "[refuse3]",
      "[sure]"};
  return kReserved;
}

}  // namespace

const Lexicon& synthetic_lexicon() {
  static const Lexicon kLexicon = {
      /*verbs=*/{"build", "craft", "forge", "draft", "sketch", "brew", "shape", "rig"},
      /*adjectives=*/
      {"crimson", "azure", "amber", "violet", "ivory", "sable", "coral", "jade", "slate", "pearl"},
      /*nouns=*/
      {"widget", "gizmo", "doodad", "trinket", "gadget", "contraption", "apparatus", "device"},
      /*adverbs=*/{"quickly", "quietly", "neatly", "boldly", "gently", "swiftly"},
      /*glue=*/{"a", "the", "is", "and", "very", "now", "please", "then"},
  };
  return kLexicon;
}

Vocab Vocab::synthetic(int size) {
  std::vector<std::string> words = reserved_words();
  words.push_back("!");  // default adversarial-suffix filler token
  const Lexicon& lex = synthetic_lexicon();
  for (const auto* group : {&lex.verbs, &lex.adjectives, &lex.nouns, &lex.adverbs, &lex.glue})
    words.insert(words.end(), group->begin(), group->end());
  if (size < static_cast<int>(words.size()))
    throw config_error("vocab size " + std::to_string(size) + " smaller than base lexicon of " +
                       std::to_string(words.size()) + " words");
  for (int i = static_cast<int>(words.size()); i < size; ++i)
    words.push_back("tok" + std::to_string(i));
  return from_words(std::move(words));
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  const auto& reserved = reserved_words();
  if (words.size() < reserved.size())
    throw config_error("vocabulary word list shorter than the reserved token block");
  for (std::size_t i = 0; i < reserved.size(); ++i)
    if (words[i] != reserved[i])
      throw config_error("reserved token mismatch at id " + std::to_string(i) + ": expected \"" +
                         reserved[i] + "\", got \"" + words[i] + "\"");
  Vocab v;
  v.words_ = std::move(words);
  for (int i = 0; i < static_cast<int>(v.words_.size()); ++i) {
    auto [it, inserted] = v.index_.emplace(v.words_[i], i);
    if (!inserted) throw config_error("duplicate word in vocabulary: \"" + v.words_[i] + "\"");
  }
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw vocab_error("unknown word \"" + word + "\"");
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size())
    throw index_error("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(size()));
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> ids;
  std::istringstream stream(text);
  std::string word;
  while (stream >> word) ids.push_back(id(word));
  return ids;
}

std::string Vocab::detokenize(std::span<const int> ids) const {
  std::string text;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) text += ' ';
    text += word(ids[i]);
  }
  return text;
}

const std::vector<int>& Vocab::refusal_ids() const {
  static const std::vector<int> kRefusals = {kRefuse0, kRefuse1, kRefuse2, kRefuse3};
  return kRefusals;
}

}  // namespace umk
