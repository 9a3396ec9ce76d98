#include "umk/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "umk/rng.hpp"
#include "umk/version.hpp"

namespace umk {

namespace {

using nlohmann::json;

Tensor randn(Rng& rng, Tensor::Shape shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, stddev);
  return t;
}

// 0 on and below the diagonal, a large negative number above.
Tensor causal_mask(std::size_t n) {
  Tensor mask = Tensor::zeros({n, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) mask.data()[r * n + c] = -1e30;
  return mask;
}

// Flat pixel index for every (token, within-patch) element, row-major over
// (patch_row, patch_col) tokens.
std::vector<std::size_t> patch_index_map(const ModelConfig& cfg) {
  const std::size_t rows = static_cast<std::size_t>(cfg.image_h / cfg.patch);
  const std::size_t cols = static_cast<std::size_t>(cfg.image_w / cfg.patch);
  const std::size_t p = static_cast<std::size_t>(cfg.patch);
  const std::size_t w = static_cast<std::size_t>(cfg.image_w);
  const std::size_t ch = static_cast<std::size_t>(cfg.image_c);
  std::vector<std::size_t> map;
  map.reserve(rows * cols * p * p * ch);
  for (std::size_t pr = 0; pr < rows; ++pr)
    for (std::size_t pc = 0; pc < cols; ++pc)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t c = 0; c < ch; ++c)
            map.push_back(((pr * p + i) * w + (pc * p + j)) * ch + c);
  return map;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 16) throw config_error("model: vocab_size must be >= 16");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || context < 4)
    throw config_error("model: degenerate geometry");
  if (d_model % n_heads != 0) throw config_error("model: d_model must be divisible by n_heads");
  if (image_tokens < 1) throw config_error("model: image_tokens must be >= 1");
  if (patch < 1 || image_h % patch != 0 || image_w % patch != 0)
    throw config_error("model: image extents must be multiples of the patch size");
  if ((image_h / patch) * (image_w / patch) != image_tokens)
    throw config_error("model: patch grid " + std::to_string(image_h / patch) + "x" +
                       std::to_string(image_w / patch) + " does not yield image_tokens=" +
                       std::to_string(image_tokens));
  if (image_c < 1) throw config_error("model: image_c must be >= 1");
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> named = {
      {"tok_emb", tok_emb}, {"pos_emb", pos_emb}, {"patch_proj", patch_proj},
      {"lnf_g", lnf_g},     {"lnf_b", lnf_b},     {"lm_head", lm_head},
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lp = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    named.emplace_back(prefix + "wq", lp.wq);
    named.emplace_back(prefix + "wk", lp.wk);
    named.emplace_back(prefix + "wv", lp.wv);
    named.emplace_back(prefix + "wo", lp.wo);
    named.emplace_back(prefix + "ln1_g", lp.ln1_g);
    named.emplace_back(prefix + "ln1_b", lp.ln1_b);
    named.emplace_back(prefix + "ln2_g", lp.ln2_g);
    named.emplace_back(prefix + "ln2_b", lp.ln2_b);
    named.emplace_back(prefix + "mlp_w1", lp.mlp_w1);
    named.emplace_back(prefix + "mlp_b1", lp.mlp_b1);
    named.emplace_back(prefix + "mlp_w2", lp.mlp_w2);
    named.emplace_back(prefix + "mlp_b2", lp.mlp_b2);
  }
  return named;
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& [name, tensor] : named_tensors()) {
    Tensor t = tensor;  // shared handle
    t.set_requires_grad(on);
  }
}

ModelParams init_params(const ModelConfig& config, Vocab vocab, std::uint64_t seed) {
  config.validate();
  if (vocab.size() != config.vocab_size)
    throw config_error("model: vocab has " + std::to_string(vocab.size()) +
                       " words but config says " + std::to_string(config.vocab_size));
  Rng rng(seed);
  constexpr double kInitStd = 0.08;
  const std::size_t v = static_cast<std::size_t>(config.vocab_size);
  const std::size_t d = static_cast<std::size_t>(config.d_model);
  const std::size_t hidden = static_cast<std::size_t>(config.mlp_hidden());

  ModelParams params;
  params.config = config;
  params.vocab = std::move(vocab);
  params.tok_emb = randn(rng, {v, d}, kInitStd);
  params.pos_emb = randn(rng, {static_cast<std::size_t>(config.context), d}, kInitStd);
  params.patch_proj = randn(rng, {static_cast<std::size_t>(config.patch_dim()), d}, kInitStd);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    lp.wq = randn(rng, {d, d}, kInitStd);
    lp.wk = randn(rng, {d, d}, kInitStd);
    lp.wv = randn(rng, {d, d}, kInitStd);
    lp.wo = randn(rng, {d, d}, kInitStd);
    lp.ln1_g = Tensor::full({d}, 1.0);
    lp.ln1_b = Tensor::zeros({d});
    lp.ln2_g = Tensor::full({d}, 1.0);
    lp.ln2_b = Tensor::zeros({d});
    lp.mlp_w1 = randn(rng, {d, hidden}, kInitStd);
    lp.mlp_b1 = Tensor::zeros({hidden});
    lp.mlp_w2 = randn(rng, {hidden, d}, kInitStd);
    lp.mlp_b2 = Tensor::zeros({d});
    params.layers.push_back(std::move(lp));
  }
  params.lnf_g = Tensor::full({d}, 1.0);
  params.lnf_b = Tensor::zeros({d});
  params.lm_head = Tensor::zeros({d, v});  // uniform logits until trained
  return params;
}

Tensor image_token_embeddings(Graph& g, const ModelParams& params, const Tensor& pixels) {
  const ModelConfig& cfg = params.config;
  const Tensor::Shape expected = {static_cast<std::size_t>(cfg.image_h),
                                  static_cast<std::size_t>(cfg.image_w),
                                  static_cast<std::size_t>(cfg.image_c)};
  if (pixels.shape() != expected)
    throw shape_error("image: pixels " + Tensor::shape_string(pixels.shape()) +
                      " do not match model geometry " + Tensor::shape_string(expected));
  Tensor patches = gather_flat(g, pixels, patch_index_map(cfg),
                               {static_cast<std::size_t>(cfg.image_tokens),
                                static_cast<std::size_t>(cfg.patch_dim())});
  return matmul(g, patches, params.patch_proj);
}

Tensor transformer_logits(Graph& g, const ModelParams& params, const Tensor& embeddings) {
  const ModelConfig& cfg = params.config;
  const std::size_t seq = embeddings.extent(0);
  if (seq > static_cast<std::size_t>(cfg.context))
    throw shape_error("transformer: sequence of " + std::to_string(seq) +
                      " exceeds context window of " + std::to_string(cfg.context));
  const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor positions = slice(g, params.pos_emb, 0, 0, seq);
  Tensor x = add(g, embeddings, positions);
  const Tensor mask = causal_mask(seq);
  for (const auto& layer : params.layers) {
    Tensor h = layer_norm(g, x, layer.ln1_g, layer.ln1_b, cfg.ln_eps);
    Tensor q = matmul(g, h, layer.wq);
    Tensor k = matmul(g, h, layer.wk);
    Tensor v = matmul(g, h, layer.wv);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (int head = 0; head < cfg.n_heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * hd;
      Tensor qh = slice(g, q, 1, off, hd);
      Tensor kh = slice(g, k, 1, off, hd);
      Tensor vh = slice(g, v, 1, off, hd);
      Tensor scores = add(g, scale(g, matmul_nt(g, qh, kh), attn_scale), mask);
      heads.push_back(matmul(g, softmax(g, scores), vh));
    }
    Tensor attn_out = matmul(g, concat(g, heads, 1), layer.wo);
    x = add(g, x, attn_out);
    Tensor h2 = layer_norm(g, x, layer.ln2_g, layer.ln2_b, cfg.ln_eps);
    Tensor m = gelu(g, add(g, matmul(g, h2, layer.mlp_w1), layer.mlp_b1));
    Tensor mlp_out = add(g, matmul(g, m, layer.mlp_w2), layer.mlp_b2);
    x = add(g, x, mlp_out);
  }
  Tensor final_norm = layer_norm(g, x, params.lnf_g, params.lnf_b, cfg.ln_eps);
  return matmul(g, final_norm, params.lm_head);
}

namespace {

// Concatenated embedding block for a part sequence; also reports token count.
Tensor assemble_parts(Graph& g, const ModelParams& params, std::span<const PromptPart> parts) {
  std::vector<Tensor> blocks;
  for (const auto& part : parts) {
    if (std::holds_alternative<std::vector<int>>(part.payload)) {
      const auto& ids = std::get<std::vector<int>>(part.payload);
      if (ids.empty()) continue;
      blocks.push_back(embedding_gather(g, params.tok_emb, ids));
    } else if (part.is_image) {
      blocks.push_back(image_token_embeddings(g, params, std::get<Tensor>(part.payload)));
    } else {
      const Tensor& emb = std::get<Tensor>(part.payload);
      if (emb.rank() != 2 || emb.extent(1) != static_cast<std::size_t>(params.config.d_model))
        throw shape_error("prompt: embedding block " + Tensor::shape_string(emb.shape()) +
                          " does not match d_model " + std::to_string(params.config.d_model));
      blocks.push_back(emb);
    }
  }
  if (blocks.empty()) throw shape_error("prompt: empty prefix");
  if (blocks.size() == 1) return blocks[0];
  return concat(g, blocks, 0);
}

}  // namespace

Tensor prompt_nll(Graph& g, const ModelParams& params, std::span<const PromptPart> parts,
                  std::span<const int> target) {
  if (target.empty()) throw shape_error("prompt_nll: empty target");
  Tensor prefix = assemble_parts(g, params, parts);
  const std::size_t prefix_len = prefix.extent(0);
  const std::size_t total = prefix_len + target.size() - 1;
  if (total > static_cast<std::size_t>(params.config.context))
    throw shape_error("prompt_nll: prefix of " + std::to_string(prefix_len) + " plus target of " +
                      std::to_string(target.size()) + " needs " + std::to_string(total + 1) +
                      " positions, context is " + std::to_string(params.config.context));
  Tensor input = prefix;
  if (target.size() > 1) {
    std::vector<int> teacher(target.begin(), target.end() - 1);
    Tensor teacher_emb = embedding_gather(g, params.tok_emb, teacher);
    std::vector<Tensor> both = {prefix, teacher_emb};
    input = concat(g, both, 0);
  }
  Tensor logits = transformer_logits(g, params, input);
  Tensor target_logits = slice(g, logits, 0, prefix_len - 1, target.size());
  return cross_entropy_nll(g, target_logits, target);
}

Tensor forward_nll(Graph& g, const ModelParams& params, const std::vector<Tensor>& images,
                   std::span<const int> text, std::span<const int> target) {
  std::vector<PromptPart> parts;
  for (const auto& image : images) parts.push_back(PromptPart::image(image));
  std::vector<int> ids = {Vocab::kBos};
  ids.insert(ids.end(), text.begin(), text.end());
  parts.push_back(PromptPart::tokens(std::move(ids)));
  return prompt_nll(g, params, parts, target);
}

namespace {

int pick_token(std::span<const double> logits, const Sampling& sampling, Rng& rng) {
  const std::size_t v = logits.size();
  if (sampling.mode == Sampling::Mode::greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v; ++i)
      if (logits[i] > logits[best]) best = i;
    return static_cast<int>(best);
  }
  // Nucleus: softmax at the given temperature, keep the smallest
  // highest-probability set whose cumulative mass reaches top_p.
  std::vector<double> probs(v);
  double mx = logits[0];
  for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, logits[i]);
  double total = 0;
  for (std::size_t i = 0; i < v; ++i) {
    probs[i] = std::exp((logits[i] - mx) / sampling.temperature);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  std::vector<std::size_t> order(v);
  for (std::size_t i = 0; i < v; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  std::size_t nucleus = v;
  double cumulative = 0;
  for (std::size_t i = 0; i < v; ++i) {
    cumulative += probs[order[i]];
    if (cumulative >= sampling.top_p) {
      nucleus = i + 1;
      break;
    }
  }
  double mass = 0;
  for (std::size_t i = 0; i < nucleus; ++i) mass += probs[order[i]];
  const double u = rng.uniform() * mass;
  double acc = 0;
  for (std::size_t i = 0; i < nucleus; ++i) {
    acc += probs[order[i]];
    if (u < acc) return static_cast<int>(order[i]);
  }
  return static_cast<int>(order[nucleus - 1]);
}

}  // namespace

std::vector<int> generate(const ModelParams& params, std::span<const PromptPart> parts,
                          const Sampling& sampling, int max_len, std::uint64_t seed) {
  if (max_len < 0) throw config_error("generate: max_len must be >= 0");
  if (sampling.mode == Sampling::Mode::nucleus) {
    if (!(sampling.top_p > 0.0) || sampling.top_p > 1.0)
      throw config_error("generate: top_p must be in (0, 1]");
    if (!(sampling.temperature > 0.0)) throw config_error("generate: temperature must be > 0");
  }
  Graph g;
  g.set_recording(false);
  Tensor prefix = assemble_parts(g, params, parts);
  const std::size_t prefix_len = prefix.extent(0);
  if (prefix_len >= static_cast<std::size_t>(params.config.context))
    throw shape_error("generate: prefix of " + std::to_string(prefix_len) +
                      " fills the context window of " + std::to_string(params.config.context));
  Rng rng(seed);
  std::vector<int> out;
  std::vector<int> generated;
  while (static_cast<int>(out.size()) < max_len &&
         prefix_len + generated.size() < static_cast<std::size_t>(params.config.context)) {
    Tensor input = prefix;
    if (!generated.empty()) {
      Tensor gen_emb = embedding_gather(g, params.tok_emb, generated);
      std::vector<Tensor> both = {prefix, gen_emb};
      input = concat(g, both, 0);
    }
    Tensor logits = transformer_logits(g, params, input);
    const std::size_t last = input.extent(0) - 1;
    const std::size_t v = logits.extent(1);
    std::span<const double> row(logits.data() + last * v, v);
    const int token = pick_token(row, sampling, rng);
    out.push_back(token);
    if (token == Vocab::kEos) break;
    generated.push_back(token);
  }
  return out;
}

std::vector<int> generate(const ModelParams& params, const std::vector<Tensor>& images,
                          std::span<const int> text, const Sampling& sampling, int max_len,
                          std::uint64_t seed) {
  std::vector<PromptPart> parts;
  for (const auto& image : images) parts.push_back(PromptPart::image(image));
  std::vector<int> ids = {Vocab::kBos};
  ids.insert(ids.end(), text.begin(), text.end());
  parts.push_back(PromptPart::tokens(std::move(ids)));
  return generate(params, parts, sampling, max_len, seed);
}

void save_model(const std::filesystem::path& dir, const ModelParams& params) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "umk-model";
  manifest["version"] = 1;
  manifest["tool"] = kToolVersion;
  manifest["config"] = {
      {"vocab_size", params.config.vocab_size},   {"d_model", params.config.d_model},
      {"n_layers", params.config.n_layers},       {"n_heads", params.config.n_heads},
      {"context", params.config.context},         {"image_tokens", params.config.image_tokens},
      {"image_h", params.config.image_h},         {"image_w", params.config.image_w},
      {"image_c", params.config.image_c},         {"patch", params.config.patch},
      {"ln_eps", params.config.ln_eps},
  };
  manifest["vocab"] = params.vocab.words();
  json tensors = json::object();
  for (const auto& [name, tensor] : params.named_tensors()) {
    tensors[name] = tensor.shape();
    save_tensor(dir / (name + ".umkt"), tensor);
  }
  manifest["tensors"] = tensors;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw config_error("cannot write model manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

ModelParams load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw config_error("cannot open model manifest: " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw config_error("malformed model manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "umk-model")
    throw config_error("not a model checkpoint: " + dir.string());
  const json& jc = manifest.at("config");
  ModelConfig config;
  config.vocab_size = jc.at("vocab_size").get<int>();
  config.d_model = jc.at("d_model").get<int>();
  config.n_layers = jc.at("n_layers").get<int>();
  config.n_heads = jc.at("n_heads").get<int>();
  config.context = jc.at("context").get<int>();
  config.image_tokens = jc.at("image_tokens").get<int>();
  config.image_h = jc.at("image_h").get<int>();
  config.image_w = jc.at("image_w").get<int>();
  config.image_c = jc.at("image_c").get<int>();
  config.patch = jc.at("patch").get<int>();
  config.ln_eps = jc.at("ln_eps").get<double>();
  config.validate();

  Vocab vocab = Vocab::from_words(manifest.at("vocab").get<std::vector<std::string>>());
  ModelParams params = init_params(config, std::move(vocab), 0);
  const json& shapes = manifest.at("tensors");
  for (auto& [name, tensor] : params.named_tensors()) {
    if (!shapes.contains(name)) throw config_error("manifest missing tensor \"" + name + "\"");
    Tensor loaded = load_tensor(dir / (name + ".umkt"));
    const auto declared = shapes.at(name).get<Tensor::Shape>();
    if (loaded.shape() != declared)
      throw config_error("tensor \"" + name + "\" has shape " +
                         Tensor::shape_string(loaded.shape()) + " but manifest declares " +
                         Tensor::shape_string(declared));
    if (loaded.shape() != tensor.shape())
      throw config_error("tensor \"" + name + "\" has shape " +
                         Tensor::shape_string(loaded.shape()) + " but the config requires " +
                         Tensor::shape_string(tensor.shape()));
    Tensor dst = tensor;
    std::copy_n(loaded.data(), loaded.size(), dst.data());
  }
  return params;
}

}  // namespace umk
