#pragma once

#include <filesystem>
#include <string>

#include "umk/attack.hpp"
#include "umk/model.hpp"
#include "umk/train.hpp"

namespace umk {

struct CorpusConfig {
  int m_sentences = 66;
  int n_pairs = 66;
  int n_eval = 100;
};

struct EvalConfig {
  std::string protocol = "greedy";  // greedy | nucleus5
  int max_new_tokens = 24;
  int min_continuation = 3;
  bool toxicity = false;
  double toxicity_threshold = 0.5;
};

// Full experiment configuration. One seed drives every stage; the per-stage
// seeds inside TrainConfig/AttackConfig are filled from it when a run starts.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  ModelConfig model;
  TrainConfig train;
  CorpusConfig corpus;
  AttackConfig attack;
  EvalConfig eval;
};

// Strict parsing: every key is optional and defaulted, unknown keys are
// rejected with their full path.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace umk
