#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umk/corpus.hpp"
#include "umk/model.hpp"
#include "umk/rng.hpp"

namespace umk {

// The attack-mode matrix: the full dual-objective multimodal attack, its
// single-objective and unimodal ablations, the unimodal baselines, and the
// two-image variant.
enum class AttackMode {
  dual_multimodal,   // phase 1 then joint phase 2 (image + suffix)
  single_multimodal, // joint phase 2 only, image from noise
  dual_unimodal,     // phase 1 then image-only phase 2
  gcg_text_only,     // suffix-only phase 2 over a blank image
  gcg_v,             // image-only phase 2 from noise
  vajm_phase1_only,  // phase 1 only
  image_image,       // phase 1 on the first block, then two-image phase 2
};

const std::vector<AttackMode>& all_attack_modes();
std::string to_string(AttackMode mode);
AttackMode attack_mode_from_string(const std::string& name);

// Reference iteration counts from the original experimental setup; the
// shipped defaults are scaled down so a full run finishes in minutes.
inline constexpr int kReferenceN1 = 5000;
inline constexpr int kReferenceN2 = 2000;

struct AttackConfig {
  int batch = 8;
  double alpha = 1.0 / 255.0;  // pixel step in the [0,1] box
  int ratio = 10;              // image steps per text-attack step
  int n_candidates = 250;
  int top_k = 32;
  int n1 = 500;  // desk-scale override of kReferenceN1
  int n2 = 300;  // desk-scale override of kReferenceN2
  int suffix_len = 20;
  AttackMode mode = AttackMode::dual_multimodal;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string filler = "!";  // initial suffix token

  bool uses_suffix() const;
  bool updates_image() const;
  bool runs_phase1() const;
  void validate(const ModelConfig& model) const;
};

struct SuffixState {
  std::vector<int> ids;
  bool operator==(const SuffixState&) const = default;
};

struct TraceRow {
  long step = 0;
  int phase = 0;
  double batch_loss = 0.0;
  bool text_attack = false;
  double loss_before_text = 0.0;
  double loss_after_text = 0.0;
};

struct LossTrace {
  std::vector<TraceRow> rows;
};

void save_trace_csv(const std::filesystem::path& path, const LossTrace& trace);
LossTrace load_trace_csv(const std::filesystem::path& path);

// The attack artifact: adversarial image block(s), optional adversarial
// suffix, and the per-step loss record. Carries the geometry of the model it
// was built against so consumers can validate compatibility.
struct MasterKey {
  std::vector<Tensor> images;
  std::optional<SuffixState> suffix;
  LossTrace trace;
  AttackConfig config;
  ModelConfig geometry;
};

// Throws artifact_mismatch_error naming both values on any geometry or
// vocabulary disagreement between a key and a model.
void validate_key_compatibility(const ModelParams& params, const MasterKey& key);

Tensor make_noise_image(const ModelConfig& config, Rng& rng);
Tensor make_blank_image(const ModelConfig& config);

// The image block run_attack starts from for this config: seeded noise, or
// the fixed blank block in text-only mode.
Tensor initial_attack_image(const ModelConfig& model, const AttackConfig& config);

// One signed-gradient descent step on the NLL followed by clipping to the
// [0,1] pixel box. Throws attack_error on non-finite gradients.
Tensor pgd_step(const Tensor& pixels, const Tensor& grad, double alpha, long step_index = -1);

struct Phase1Result {
  Tensor image;
  LossTrace trace;
};

// Embeds target semantics into the image: N1 steps of PGD on the mean NLL of
// sentence batches with empty text input.
Phase1Result phase1(const ModelParams& params, const SentenceCorpus& corpus, Tensor image,
                    const AttackConfig& config, Rng& batch_rng);

// d(mean batch NLL) / d(one-hot token indicator), shape (suffix_len, V).
Tensor coordinate_gradient(const ModelParams& params, const std::vector<Tensor>& images,
                           std::span<const GoalTarget> batch, const SuffixState& suffix);

// Single-token substitution candidates. Candidate 0 is always the unmodified
// suffix; replacements come from each position's top_k most-negative-gradient
// tokens, sampled without replacement. When the budget covers the whole pool
// the full set is returned in canonical (position-major, token-ascending)
// order.
std::vector<SuffixState> propose_candidates(const Tensor& coord_grad, const SuffixState& suffix,
                                            int top_k, int n_candidates, Rng& rng);

struct SelectionResult {
  SuffixState best;
  double best_loss = 0.0;
  std::size_t best_index = 0;
  std::vector<double> losses;  // one per candidate, index-aligned
};

// Forward-evaluates every candidate on the batch and returns the argmin;
// ties break toward the lowest candidate index. Independent of worker count.
SelectionResult select_candidate(const ModelParams& params, const std::vector<Tensor>& images,
                                 std::span<const GoalTarget> batch,
                                 const std::vector<SuffixState>& candidates, int threads = 1);

struct Phase2Flags {
  bool update_image = true;
  bool use_suffix = true;
  bool text_attack = true;
};

struct Phase2Result {
  std::vector<Tensor> images;
  std::optional<SuffixState> suffix;
};

// Joint optimization: every step one backward pass yields both the pixel
// gradients and the one-hot coordinate gradients; the image moves by PGD each
// step and every ratio-th step the suffix is replaced by the best candidate
// evaluated on the same batch.
Phase2Result phase2(const ModelParams& params, const GoalTargetSet& pairs,
                    std::vector<Tensor> images, std::optional<SuffixState> suffix,
                    const AttackConfig& config, const Phase2Flags& flags, Rng& batch_rng,
                    Rng& candidate_rng, LossTrace& trace);

// Mode dispatch over phase1/phase2 per the attack-mode matrix.
MasterKey run_attack(const ModelParams& params, const SentenceCorpus& sentences,
                     const GoalTargetSet& pairs, const AttackConfig& config);

// Mean NLL of the affirmative targets over the whole pair set under the given
// key; the headline internal measure for ablation comparisons.
double training_nll(const ModelParams& params, const GoalTargetSet& pairs, const MasterKey& key);

// Artifact directory: image tensors + 16-bit PNG renderings, suffix as token
// ids (JSON) and text, config snapshot, loss trace CSV.
void save_umk(const std::filesystem::path& dir, const MasterKey& key, const Vocab& vocab);
MasterKey load_umk(const std::filesystem::path& dir);

}  // namespace umk
