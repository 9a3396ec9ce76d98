#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "umk/graph.hpp"
#include "umk/tensor.hpp"
#include "umk/vocab.hpp"

namespace umk {

// Geometry and hyperparameters of the toy causal vision-language model.
struct ModelConfig {
  int vocab_size = 128;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int context = 64;
  int image_tokens = 8;
  int image_h = 16;
  int image_w = 8;
  int image_c = 3;
  int patch = 4;
  double ln_eps = 1e-5;

  int head_dim() const { return d_model / n_heads; }
  int mlp_hidden() const { return 4 * d_model; }
  int patch_dim() const { return patch * patch * image_c; }
  void validate() const;
};

struct LayerParams {
  Tensor wq, wk, wv, wo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Immutable-after-training parameter set. Image patches are linearly
// projected into the token embedding space and treated as prefix tokens.
struct ModelParams {
  ModelConfig config;
  Vocab vocab;
  Tensor tok_emb;     // V x d
  Tensor pos_emb;     // context x d
  Tensor patch_proj;  // patch_dim x d
  std::vector<LayerParams> layers;
  Tensor lnf_g, lnf_b;
  Tensor lm_head;  // d x V

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  void set_requires_grad(bool on);
};

// Seeded initialization; the LM head starts at zero so an untrained model
// emits exactly uniform next-token distributions.
ModelParams init_params(const ModelConfig& config, Vocab vocab, std::uint64_t seed);

// One segment of the model input: either discrete token ids or a
// differentiable embedding block (rank-2, T x d), or raw image pixels
// (rank-3, H x W x C) routed through the patch projection.
struct PromptPart {
  static PromptPart tokens(std::vector<int> ids) { return PromptPart{std::move(ids)}; }
  static PromptPart embeddings(Tensor emb) { return PromptPart{std::move(emb), false}; }
  static PromptPart image(Tensor pixels) { return PromptPart{std::move(pixels), true}; }

  std::variant<std::vector<int>, Tensor> payload;
  bool is_image = false;

 private:
  explicit PromptPart(std::vector<int> ids) : payload(std::move(ids)) {}
  PromptPart(Tensor t, bool image) : payload(std::move(t)), is_image(image) {}
};

// Patchify pixels and project into the embedding space: (H, W, C) -> (image_tokens, d).
Tensor image_token_embeddings(Graph& g, const ModelParams& params, const Tensor& pixels);

// Causal transformer trunk: (T, d) embeddings -> (T, V) logits.
Tensor transformer_logits(Graph& g, const ModelParams& params, const Tensor& embeddings);

// Teacher-forced sum of -log p(target_i | prefix, target_<i). The prefix is
// the concatenation of the given parts in order; target tokens are appended
// with ordinary token embeddings.
Tensor prompt_nll(Graph& g, const ModelParams& params, std::span<const PromptPart> parts,
                  std::span<const int> target);

// Standard layout: [image tokens...][BOS][text] -> target.
Tensor forward_nll(Graph& g, const ModelParams& params, const std::vector<Tensor>& images,
                   std::span<const int> text, std::span<const int> target);

struct Sampling {
  enum class Mode { greedy, nucleus };
  Mode mode = Mode::greedy;
  double top_p = 0.9;
  double temperature = 1.0;

  static Sampling greedy() { return {}; }
  static Sampling nucleus(double p, double temperature = 1.0) {
    return {Mode::nucleus, p, temperature};
  }
};

// Deterministic-for-seed decoding; stops at EOS, max_len, or the context
// limit, whichever comes first. Returned ids exclude the prompt.
std::vector<int> generate(const ModelParams& params, std::span<const PromptPart> parts,
                          const Sampling& sampling, int max_len, std::uint64_t seed);
std::vector<int> generate(const ModelParams& params, const std::vector<Tensor>& images,
                          std::span<const int> text, const Sampling& sampling, int max_len,
                          std::uint64_t seed);

// Checkpoint directory: one UMKT tensor file per parameter plus a JSON
// manifest carrying config, vocab, and expected shapes.
void save_model(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& dir);

}  // namespace umk
