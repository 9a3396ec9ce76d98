#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "umk/rng.hpp"
#include "umk/vocab.hpp"

namespace umk {

// Few-shot corpus of standalone "harmful" sentences; every sentence ends with
// the EOS token.
struct SentenceCorpus {
  std::vector<std::vector<int>> sentences;
};

// Goal/target pairs: the goal is a marked query, the target is the
// affirmative restatement ([sure] + goal + [eos]).
struct GoalTarget {
  std::vector<int> goal;
  std::vector<int> target;
};

struct GoalTargetSet {
  std::vector<GoalTarget> pairs;
};

struct EvalItem {
  std::vector<int> goal;
  std::string category;
};

// Held-out goals, disjoint from the training pairs.
struct EvalSet {
  std::vector<EvalItem> items;
};

struct Corpora {
  SentenceCorpus sentences;
  GoalTargetSet pairs;
  EvalSet eval;
};

// Deterministic synthetic corpora from the template grammar. Training goals
// and eval goals are drawn from one shuffled enumeration, so they cannot
// overlap. Throws config_error when a size exceeds the grammar capacity.
Corpora synth_corpora(const Vocab& vocab, std::uint64_t seed, int m_sentences = 66,
                      int n_pairs = 66, int n_eval = 100);

// Supervised examples for alignment training: marked queries map to the
// refusal sequence, benign queries to [sure] + echo. A deterministic subset
// carries a noise image so refusals keep holding under image inputs.
struct AlignmentExample {
  std::vector<int> query;
  std::vector<int> response;
  bool with_image = false;
};

std::vector<AlignmentExample> synth_alignment_set(const Vocab& vocab, std::uint64_t seed,
                                                  int n_harmful, int n_benign,
                                                  double image_fraction = 0.5);

// Image-grounded caption statements for the pretraining slice of alignment
// training. The lexicon indices drive the band-painted image the trainer
// pairs with each caption; marked captions carry the [harm] token.
struct CaptionExample {
  std::vector<int> tokens;  // the (<harm>) <adj> <noun> is <adj2> and <adj3> [eos]
  bool marked = false;
  int adj = 0;
  int noun = 0;
  int adj2 = 0;
  int adj3 = 0;
};

std::vector<CaptionExample> synth_caption_set(const Vocab& vocab, std::uint64_t seed, int n,
                                              double marked_fraction);

// Uniform batch indices: without replacement when b <= corpus size, with
// replacement otherwise.
std::vector<std::size_t> sample_indices(std::size_t corpus_size, int b, Rng& rng);

template <typename T>
std::vector<T> sample_batch(const std::vector<T>& items, int b, Rng& rng) {
  std::vector<T> batch;
  batch.reserve(static_cast<std::size_t>(b));
  for (std::size_t i : sample_indices(items.size(), b, rng)) batch.push_back(items[i]);
  return batch;
}

// Plain-text persistence. Sentences: one per line including the trailing
// [eos]. Pairs: goal<TAB>target. Eval: goal<TAB>category. Loaders reject
// malformed lines with line numbers and re-validate structural invariants.
void save_sentences(const std::filesystem::path& path, const SentenceCorpus& corpus,
                    const Vocab& vocab);
SentenceCorpus load_sentences(const std::filesystem::path& path, const Vocab& vocab);
void save_pairs(const std::filesystem::path& path, const GoalTargetSet& set, const Vocab& vocab);
GoalTargetSet load_pairs(const std::filesystem::path& path, const Vocab& vocab);
void save_eval(const std::filesystem::path& path, const EvalSet& set, const Vocab& vocab);
EvalSet load_eval(const std::filesystem::path& path, const Vocab& vocab);

}  // namespace umk
