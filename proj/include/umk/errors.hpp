#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace umk {

// Shape/dimension violations in tensor ops. Message names the op and dims.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range token ids or element indices.
struct index_error : std::runtime_error {
  explicit index_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of the autodiff graph (backward twice, detached loss, ...).
struct graph_error : std::runtime_error {
  explicit graph_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent configuration / file contents.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Vocabulary lookups of unknown words.
struct vocab_error : std::runtime_error {
  explicit vocab_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training did not reach its convergence targets within the epoch budget.
struct training_error : std::runtime_error {
  training_error(const std::string& msg, std::vector<double> history)
      : std::runtime_error(msg), loss_history(std::move(history)) {}
  std::vector<double> loss_history;
};

// Runtime failure inside an attack loop (non-finite loss/gradient).
struct attack_error : std::runtime_error {
  attack_error(const std::string& msg, long step) : std::runtime_error(msg), step_index(step) {}
  long step_index;
};

// Incompatible artifacts (e.g. a key built for a different model geometry).
struct artifact_mismatch_error : std::runtime_error {
  explicit artifact_mismatch_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace umk
