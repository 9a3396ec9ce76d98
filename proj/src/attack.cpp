#include "umk/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "umk/png.hpp"
#include "umk/version.hpp"

namespace umk {

namespace {

using nlohmann::json;

constexpr std::uint64_t kNoiseStream = 0x20;
constexpr std::uint64_t kPhase1Stream = 0x21;
constexpr std::uint64_t kPhase2Stream = 0x22;
constexpr std::uint64_t kCandidateStream = 0x23;

void ensure_finite(double value, const char* what, long step) {
  if (!std::isfinite(value))
    throw attack_error(std::string("non-finite ") + what + " at step " + std::to_string(step),
                       step);
}

Tensor one_hot_rows(const SuffixState& suffix, int vocab_size) {
  Tensor onehot =
      Tensor::zeros({suffix.ids.size(), static_cast<std::size_t>(vocab_size)});
  for (std::size_t i = 0; i < suffix.ids.size(); ++i) {
    const int id = suffix.ids[i];
    if (id < 0 || id >= vocab_size)
      throw index_error("suffix token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(vocab_size));
    onehot.data()[i * static_cast<std::size_t>(vocab_size) + static_cast<std::size_t>(id)] = 1.0;
  }
  return onehot;
}

// Mean NLL of the batch: [images][BOS + goal (+ suffix)] -> target. The
// suffix enters either as plain ids or as a differentiable one-hot block.
Tensor batch_loss_graph(Graph& g, const ModelParams& params, const std::vector<Tensor>& images,
                        std::span<const GoalTarget> batch, const Tensor* suffix_emb,
                        const SuffixState* suffix_ids) {
  Tensor loss;
  bool first = true;
  for (const auto& gt : batch) {
    std::vector<PromptPart> parts;
    for (const auto& image : images) parts.push_back(PromptPart::image(image));
    std::vector<int> text = {Vocab::kBos};
    text.insert(text.end(), gt.goal.begin(), gt.goal.end());
    if (suffix_ids) text.insert(text.end(), suffix_ids->ids.begin(), suffix_ids->ids.end());
    parts.push_back(PromptPart::tokens(std::move(text)));
    if (suffix_emb) parts.push_back(PromptPart::embeddings(*suffix_emb));
    Tensor nll = prompt_nll(g, params, parts, gt.target);
    loss = first ? nll : add(g, loss, nll);
    first = false;
  }
  if (first) throw config_error("attack: empty goal batch");
  return scale(g, loss, 1.0 / static_cast<double>(batch.size()));
}

double batch_loss_value(const ModelParams& params, const std::vector<Tensor>& images,
                        std::span<const GoalTarget> batch, const SuffixState* suffix) {
  Graph g;
  g.set_recording(false);
  return batch_loss_graph(g, params, images, batch, nullptr, suffix).value();
}

SuffixState initial_suffix(const ModelParams& params, const AttackConfig& config) {
  int filler;
  try {
    filler = params.vocab.id(config.filler);
  } catch (const vocab_error&) {
    throw config_error("attack: suffix filler token \"" + config.filler +
                       "\" is not in the vocabulary");
  }
  SuffixState s;
  s.ids.assign(static_cast<std::size_t>(config.suffix_len), filler);
  return s;
}

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

const std::vector<AttackMode>& all_attack_modes() {
  static const std::vector<AttackMode> kModes = {
      AttackMode::dual_multimodal, AttackMode::single_multimodal, AttackMode::dual_unimodal,
      AttackMode::gcg_text_only,   AttackMode::gcg_v,             AttackMode::vajm_phase1_only,
      AttackMode::image_image,
  };
  return kModes;
}

std::string to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::dual_multimodal: return "dual_multimodal";
    case AttackMode::single_multimodal: return "single_multimodal";
    case AttackMode::dual_unimodal: return "dual_unimodal";
    case AttackMode::gcg_text_only: return "gcg_text_only";
    case AttackMode::gcg_v: return "gcg_v";
    case AttackMode::vajm_phase1_only: return "vajm_phase1_only";
    case AttackMode::image_image: return "image_image";
  }
  throw config_error("unknown attack mode value");
}

AttackMode attack_mode_from_string(const std::string& name) {
  for (AttackMode mode : all_attack_modes())
    if (to_string(mode) == name) return mode;
  throw config_error("unknown attack mode \"" + name + "\"");
}

bool AttackConfig::uses_suffix() const {
  return mode == AttackMode::dual_multimodal || mode == AttackMode::single_multimodal ||
         mode == AttackMode::gcg_text_only;
}

bool AttackConfig::updates_image() const { return mode != AttackMode::gcg_text_only; }

bool AttackConfig::runs_phase1() const {
  return mode == AttackMode::dual_multimodal || mode == AttackMode::dual_unimodal ||
         mode == AttackMode::vajm_phase1_only || mode == AttackMode::image_image;
}

void AttackConfig::validate(const ModelConfig& model) const {
  if (batch < 1) throw config_error("attack: batch must be >= 1");
  if (!(alpha > 0.0)) throw config_error("attack: alpha must be > 0");
  if (ratio < 1) throw config_error("attack: image-text ratio must be >= 1");
  if (n1 < 0 || n2 < 0) throw config_error("attack: iteration counts must be >= 0");
  if (threads < 1) throw config_error("attack: threads must be >= 1");
  if (uses_suffix()) {
    if (suffix_len < 1)
      throw config_error("attack: mode " + to_string(mode) + " needs suffix_len >= 1");
    if (n_candidates < 1) throw config_error("attack: n_candidates must be >= 1");
    if (top_k < 1 || top_k > model.vocab_size)
      throw config_error("attack: top_k must be in [1, " + std::to_string(model.vocab_size) +
                         "], got " + std::to_string(top_k));
  }
}

Tensor make_noise_image(const ModelConfig& config, Rng& rng) {
  Tensor pixels = Tensor::zeros({static_cast<std::size_t>(config.image_h),
                                 static_cast<std::size_t>(config.image_w),
                                 static_cast<std::size_t>(config.image_c)});
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels.data()[i] = rng.uniform();
  return pixels;
}

Tensor make_blank_image(const ModelConfig& config) {
  return Tensor::zeros({static_cast<std::size_t>(config.image_h),
                        static_cast<std::size_t>(config.image_w),
                        static_cast<std::size_t>(config.image_c)});
}

Tensor pgd_step(const Tensor& pixels, const Tensor& grad, double alpha, long step_index) {
  if (pixels.shape() != grad.shape())
    throw shape_error("pgd_step: gradient " + Tensor::shape_string(grad.shape()) +
                      " does not match pixels " + Tensor::shape_string(pixels.shape()));
  Tensor next = pixels.clone();
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double gi = grad.data()[i];
    if (!std::isfinite(gi))
      throw attack_error("non-finite pixel gradient at step " + std::to_string(step_index),
                         step_index);
    double v = next.data()[i];
    if (gi > 0.0)
      v -= alpha;
    else if (gi < 0.0)
      v += alpha;
    next.data()[i] = std::clamp(v, 0.0, 1.0);
  }
  return next;
}

Phase1Result phase1(const ModelParams& params, const SentenceCorpus& corpus, Tensor image,
                    const AttackConfig& config, Rng& batch_rng) {
  Phase1Result result;
  result.image = image.clone();
  for (long step = 1; step <= config.n1; ++step) {
    auto batch = sample_batch(corpus.sentences, config.batch, batch_rng);
    Graph g;
    result.image.set_requires_grad(true);
    Tensor loss;
    bool first = true;
    for (const auto& sentence : batch) {
      Tensor nll = forward_nll(g, params, {result.image}, {}, sentence);
      loss = first ? nll : add(g, loss, nll);
      first = false;
    }
    loss = scale(g, loss, 1.0 / static_cast<double>(batch.size()));
    g.backward(loss);
    ensure_finite(loss.value(), "batch loss", step);
    Tensor grad = Tensor::from_data(result.image.shape(), result.image.grad_buffer());
    Tensor updated = pgd_step(result.image, grad, config.alpha, step);
    result.image.set_requires_grad(false);
    result.image = updated;
    result.trace.rows.push_back(TraceRow{step, 1, loss.value(), false, 0.0, 0.0});
  }
  return result;
}

Tensor coordinate_gradient(const ModelParams& params, const std::vector<Tensor>& images,
                           std::span<const GoalTarget> batch, const SuffixState& suffix) {
  const int vocab = params.config.vocab_size;
  if (suffix.ids.empty()) return Tensor::zeros({0, static_cast<std::size_t>(vocab)});
  Graph g;
  Tensor onehot = one_hot_rows(suffix, vocab);
  onehot.set_requires_grad(true);
  Tensor suffix_emb = matmul(g, onehot, params.tok_emb);
  Tensor loss = batch_loss_graph(g, params, images, batch, &suffix_emb, nullptr);
  g.backward(loss);
  return Tensor::from_data(onehot.shape(), onehot.grad_buffer());
}

std::vector<SuffixState> propose_candidates(const Tensor& coord_grad, const SuffixState& suffix,
                                            int top_k, int n_candidates, Rng& rng) {
  if (coord_grad.rank() != 2 || coord_grad.extent(0) != suffix.ids.size())
    throw shape_error("propose_candidates: coordinate gradient " +
                      Tensor::shape_string(coord_grad.shape()) + " does not match suffix of " +
                      std::to_string(suffix.ids.size()));
  const std::size_t vocab = coord_grad.rank() == 2 ? coord_grad.extent(1) : 0;
  if (top_k < 0 || static_cast<std::size_t>(top_k) > vocab)
    throw config_error("propose_candidates: top_k " + std::to_string(top_k) +
                       " exceeds vocabulary of " + std::to_string(vocab));
  if (n_candidates < 0) throw config_error("propose_candidates: negative candidate budget");

  std::vector<SuffixState> candidates;
  candidates.push_back(suffix);  // candidate 0: unmodified

  // Pool of (position, replacement) pairs drawn from each position's top_k
  // most-negative-gradient tokens, skipping no-op replacements.
  std::vector<std::pair<std::size_t, int>> pool;
  std::vector<std::size_t> order(vocab);
  for (std::size_t pos = 0; pos < suffix.ids.size(); ++pos) {
    const double* row = coord_grad.data() + pos * vocab;
    for (std::size_t v = 0; v < vocab; ++v) order[v] = v;
    std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] < row[b];
      return a < b;
    });
    std::vector<int> shortlist;
    for (int k = 0; k < top_k; ++k) {
      const int token = static_cast<int>(order[static_cast<std::size_t>(k)]);
      if (token != suffix.ids[pos]) shortlist.push_back(token);
    }
    std::sort(shortlist.begin(), shortlist.end());
    for (int token : shortlist) pool.emplace_back(pos, token);
  }

  std::vector<std::size_t> picks;
  if (static_cast<std::size_t>(n_candidates) >= pool.size()) {
    picks.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) picks[i] = i;  // canonical order
  } else {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int k = 0; k < n_candidates; ++k) {
      const std::size_t j =
          static_cast<std::size_t>(k) + rng.uniform_below(idx.size() - static_cast<std::size_t>(k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
      picks.push_back(idx[static_cast<std::size_t>(k)]);
    }
  }
  for (std::size_t i : picks) {
    SuffixState candidate = suffix;
    candidate.ids[pool[i].first] = pool[i].second;
    candidates.push_back(std::move(candidate));
  }
  return candidates;
}

SelectionResult select_candidate(const ModelParams& params, const std::vector<Tensor>& images,
                                 std::span<const GoalTarget> batch,
                                 const std::vector<SuffixState>& candidates, int threads) {
  if (candidates.empty()) throw config_error("select_candidate: no candidates");
  SelectionResult result;
  result.losses.assign(candidates.size(), 0.0);
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(candidates.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      result.losses[i] = batch_loss_value(params, images, batch, &candidates[i]);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t i = static_cast<std::size_t>(w); i < candidates.size();
             i += static_cast<std::size_t>(workers))
          result.losses[i] = batch_loss_value(params, images, batch, &candidates[i]);
      });
    }
    for (auto& t : pool) t.join();
  }
  result.best_index = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (result.losses[i] < result.losses[result.best_index]) result.best_index = i;
  result.best = candidates[result.best_index];
  result.best_loss = result.losses[result.best_index];
  return result;
}

Phase2Result phase2(const ModelParams& params, const GoalTargetSet& pairs,
                    std::vector<Tensor> images, std::optional<SuffixState> suffix,
                    const AttackConfig& config, const Phase2Flags& flags, Rng& batch_rng,
                    Rng& candidate_rng, LossTrace& trace) {
  if (flags.use_suffix && !suffix)
    throw config_error("phase2: suffix enabled but no suffix state given");
  std::vector<Tensor> state;
  state.reserve(images.size());
  for (const auto& image : images) state.push_back(image.clone());

  for (long step = 1; step <= config.n2; ++step) {
    auto batch = sample_batch(pairs.pairs, config.batch, batch_rng);
    Graph g;
    if (flags.update_image)
      for (auto& block : state) block.set_requires_grad(true);
    Tensor onehot;
    Tensor suffix_emb;
    const Tensor* suffix_emb_ptr = nullptr;
    if (flags.use_suffix) {
      onehot = one_hot_rows(*suffix, params.config.vocab_size);
      onehot.set_requires_grad(true);
      suffix_emb = matmul(g, onehot, params.tok_emb);
      suffix_emb_ptr = &suffix_emb;
    }
    Tensor loss = batch_loss_graph(g, params, state, batch, suffix_emb_ptr, nullptr);
    g.backward(loss);
    const double batch_loss = loss.value();
    ensure_finite(batch_loss, "batch loss", step);

    if (flags.update_image) {
      for (auto& block : state) {
        Tensor grad = Tensor::from_data(block.shape(), block.grad_buffer());
        Tensor updated = pgd_step(block, grad, config.alpha, step);
        block.set_requires_grad(false);
        block = updated;
      }
    }

    TraceRow row{step, 2, batch_loss, false, 0.0, 0.0};
    if (flags.use_suffix && flags.text_attack && step % config.ratio == 0) {
      Tensor coord_grad = Tensor::from_data(onehot.shape(), onehot.grad_buffer());
      auto candidates =
          propose_candidates(coord_grad, *suffix, config.top_k, config.n_candidates, candidate_rng);
      auto selection = select_candidate(params, state, batch, candidates, config.threads);
      row.text_attack = true;
      row.loss_before_text = selection.losses[0];
      row.loss_after_text = selection.best_loss;
      ensure_finite(selection.best_loss, "text-attack loss", step);
      suffix = selection.best;
    }
    trace.rows.push_back(row);
  }
  return Phase2Result{std::move(state), std::move(suffix)};
}

Tensor initial_attack_image(const ModelConfig& model, const AttackConfig& config) {
  if (config.mode == AttackMode::gcg_text_only) return make_blank_image(model);
  Rng noise_rng = Rng(config.seed).fork(kNoiseStream);
  return make_noise_image(model, noise_rng);
}

MasterKey run_attack(const ModelParams& params, const SentenceCorpus& sentences,
                     const GoalTargetSet& pairs, const AttackConfig& config) {
  config.validate(params.config);
  Rng root(config.seed);
  Rng noise_rng = root.fork(kNoiseStream);
  Rng phase1_rng = root.fork(kPhase1Stream);
  Rng phase2_rng = root.fork(kPhase2Stream);
  Rng candidate_rng = root.fork(kCandidateStream);

  MasterKey key;
  key.config = config;
  key.geometry = params.config;

  std::vector<Tensor> images;
  if (config.mode == AttackMode::gcg_text_only) {
    images.push_back(make_blank_image(params.config));
  } else {
    images.push_back(make_noise_image(params.config, noise_rng));
  }

  if (config.runs_phase1()) {
    auto p1 = phase1(params, sentences, images[0], config, phase1_rng);
    images[0] = p1.image;
    key.trace.rows.insert(key.trace.rows.end(), p1.trace.rows.begin(), p1.trace.rows.end());
  }

  if (config.mode == AttackMode::image_image)
    images.push_back(make_noise_image(params.config, noise_rng));

  if (config.mode == AttackMode::vajm_phase1_only) {
    key.images = std::move(images);
    return key;
  }

  std::optional<SuffixState> suffix;
  if (config.uses_suffix()) suffix = initial_suffix(params, config);
  Phase2Flags flags;
  flags.update_image = config.updates_image();
  flags.use_suffix = config.uses_suffix();
  flags.text_attack = config.uses_suffix();
  auto p2 = phase2(params, pairs, std::move(images), std::move(suffix), config, flags, phase2_rng,
                   candidate_rng, key.trace);
  key.images = std::move(p2.images);
  key.suffix = std::move(p2.suffix);
  return key;
}

double training_nll(const ModelParams& params, const GoalTargetSet& pairs, const MasterKey& key) {
  const SuffixState* suffix = key.suffix ? &*key.suffix : nullptr;
  return batch_loss_value(params, key.images, pairs.pairs, suffix);
}

void validate_key_compatibility(const ModelParams& params, const MasterKey& key) {
  const ModelConfig& m = params.config;
  const ModelConfig& k = key.geometry;
  if (k.image_tokens != m.image_tokens)
    throw artifact_mismatch_error("key built for " + std::to_string(k.image_tokens) +
                                  " image tokens, model expects " +
                                  std::to_string(m.image_tokens));
  if (k.image_h != m.image_h || k.image_w != m.image_w || k.image_c != m.image_c ||
      k.patch != m.patch)
    throw artifact_mismatch_error(
        "key image geometry " + std::to_string(k.image_h) + "x" + std::to_string(k.image_w) + "x" +
        std::to_string(k.image_c) + "/patch " + std::to_string(k.patch) + " does not match model " +
        std::to_string(m.image_h) + "x" + std::to_string(m.image_w) + "x" +
        std::to_string(m.image_c) + "/patch " + std::to_string(m.patch));
  if (k.vocab_size != m.vocab_size)
    throw artifact_mismatch_error("key built over a vocabulary of " +
                                  std::to_string(k.vocab_size) + ", model has " +
                                  std::to_string(m.vocab_size));
  if (key.suffix)
    for (int id : key.suffix->ids)
      if (id < 0 || id >= m.vocab_size)
        throw artifact_mismatch_error("key suffix token " + std::to_string(id) +
                                      " outside model vocabulary of " +
                                      std::to_string(m.vocab_size));
  const Tensor::Shape expected = {static_cast<std::size_t>(m.image_h),
                                  static_cast<std::size_t>(m.image_w),
                                  static_cast<std::size_t>(m.image_c)};
  for (const auto& image : key.images)
    if (image.shape() != expected)
      throw artifact_mismatch_error("key image tensor " + Tensor::shape_string(image.shape()) +
                                    " does not match model pixels " +
                                    Tensor::shape_string(expected));
}

void save_trace_csv(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write loss trace: " + path.string());
  out << "step,phase,batch_loss,loss_before_text,loss_after_text\n";
  for (const auto& row : trace.rows) {
    out << row.step << ',' << row.phase << ',' << format_double(row.batch_loss) << ',';
    if (row.text_attack)
      out << format_double(row.loss_before_text) << ',' << format_double(row.loss_after_text);
    else
      out << ',';
    out << '\n';
  }
}

LossTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open loss trace: " + path.string());
  LossTrace trace;
  std::string line;
  if (!std::getline(in, line) || line != "step,phase,batch_loss,loss_before_text,loss_after_text")
    throw config_error("bad loss trace header in " + path.string());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5)
      throw config_error(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    TraceRow row;
    try {
      row.step = std::stol(fields[0]);
      row.phase = std::stoi(fields[1]);
      row.batch_loss = std::stod(fields[2]);
      row.text_attack = !fields[3].empty();
      if (row.text_attack) {
        row.loss_before_text = std::stod(fields[3]);
        row.loss_after_text = std::stod(fields[4]);
      }
    } catch (const std::logic_error&) {
      throw config_error(path.string() + ":" + std::to_string(line_no) +
                         ": malformed numeric field");
    }
    trace.rows.push_back(row);
  }
  return trace;
}

void save_umk(const std::filesystem::path& dir, const MasterKey& key, const Vocab& vocab) {
  std::filesystem::create_directories(dir);
  json config;
  config["tool"] = kToolVersion;
  config["mode"] = to_string(key.config.mode);
  config["batch"] = key.config.batch;
  config["alpha"] = key.config.alpha;
  config["ratio"] = key.config.ratio;
  config["n_candidates"] = key.config.n_candidates;
  config["top_k"] = key.config.top_k;
  config["n1"] = key.config.n1;
  config["n2"] = key.config.n2;
  config["suffix_len"] = key.config.suffix_len;
  config["seed"] = key.config.seed;
  config["threads"] = key.config.threads;
  config["filler"] = key.config.filler;
  config["image_blocks"] = key.images.size();
  config["geometry"] = {
      {"vocab_size", key.geometry.vocab_size}, {"d_model", key.geometry.d_model},
      {"n_layers", key.geometry.n_layers},     {"n_heads", key.geometry.n_heads},
      {"context", key.geometry.context},       {"image_tokens", key.geometry.image_tokens},
      {"image_h", key.geometry.image_h},       {"image_w", key.geometry.image_w},
      {"image_c", key.geometry.image_c},       {"patch", key.geometry.patch},
      {"ln_eps", key.geometry.ln_eps},
  };
  std::ofstream out(dir / "config.json");
  if (!out) throw config_error("cannot write attack config in " + dir.string());
  out << config.dump(2) << '\n';

  for (std::size_t i = 0; i < key.images.size(); ++i) {
    save_tensor(dir / ("image_prefix_" + std::to_string(i) + ".umkt"), key.images[i]);
    write_png16(dir / ("image_prefix_" + std::to_string(i) + ".png"), key.images[i]);
  }
  if (key.suffix) {
    json suffix;
    suffix["ids"] = key.suffix->ids;
    std::ofstream sj(dir / "suffix.json");
    sj << suffix.dump(2) << '\n';
    std::ofstream st(dir / "suffix.txt");
    st << vocab.detokenize(key.suffix->ids) << '\n';
  }
  save_trace_csv(dir / "loss_trace.csv", key.trace);
}

MasterKey load_umk(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw config_error("cannot open attack config: " + (dir / "config.json").string());
  json config;
  try {
    in >> config;
  } catch (const json::exception& e) {
    throw config_error("malformed attack config: " + std::string(e.what()));
  }
  MasterKey key;
  key.config.mode = attack_mode_from_string(config.at("mode").get<std::string>());
  key.config.batch = config.at("batch").get<int>();
  key.config.alpha = config.at("alpha").get<double>();
  key.config.ratio = config.at("ratio").get<int>();
  key.config.n_candidates = config.at("n_candidates").get<int>();
  key.config.top_k = config.at("top_k").get<int>();
  key.config.n1 = config.at("n1").get<int>();
  key.config.n2 = config.at("n2").get<int>();
  key.config.suffix_len = config.at("suffix_len").get<int>();
  key.config.seed = config.at("seed").get<std::uint64_t>();
  key.config.threads = config.at("threads").get<int>();
  key.config.filler = config.at("filler").get<std::string>();
  const json& geom = config.at("geometry");
  key.geometry.vocab_size = geom.at("vocab_size").get<int>();
  key.geometry.d_model = geom.at("d_model").get<int>();
  key.geometry.n_layers = geom.at("n_layers").get<int>();
  key.geometry.n_heads = geom.at("n_heads").get<int>();
  key.geometry.context = geom.at("context").get<int>();
  key.geometry.image_tokens = geom.at("image_tokens").get<int>();
  key.geometry.image_h = geom.at("image_h").get<int>();
  key.geometry.image_w = geom.at("image_w").get<int>();
  key.geometry.image_c = geom.at("image_c").get<int>();
  key.geometry.patch = geom.at("patch").get<int>();
  key.geometry.ln_eps = geom.at("ln_eps").get<double>();
  const auto blocks = config.at("image_blocks").get<std::size_t>();
  for (std::size_t i = 0; i < blocks; ++i)
    key.images.push_back(load_tensor(dir / ("image_prefix_" + std::to_string(i) + ".umkt")));
  if (std::filesystem::exists(dir / "suffix.json")) {
    std::ifstream sj(dir / "suffix.json");
    json suffix;
    sj >> suffix;
    SuffixState s;
    s.ids = suffix.at("ids").get<std::vector<int>>();
    key.suffix = std::move(s);
  }
  key.trace = load_trace_csv(dir / "loss_trace.csv");
  return key;
}

}  // namespace umk
