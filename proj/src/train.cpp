#include "umk/train.hpp"

#include <algorithm>
#include <cmath>

namespace umk {

namespace {

constexpr std::uint64_t kInitStream = 0x10;
constexpr std::uint64_t kImageStream = 0x11;
constexpr std::uint64_t kOrderStream = 0x12;
constexpr std::uint64_t kCaptionImageStream = 0x13;

struct AdamState {
  std::vector<double> m, v;
};

// One supervised item: QA (refusal/compliance) or image caption.
struct Item {
  std::vector<int> query;
  std::vector<int> response;
  Tensor image;
  bool has_image = false;
  bool is_qa = true;
};

Tensor noise_image(const ModelConfig& cfg, Rng& rng) {
  Tensor pixels = Tensor::zeros({static_cast<std::size_t>(cfg.image_h),
                                 static_cast<std::size_t>(cfg.image_w),
                                 static_cast<std::size_t>(cfg.image_c)});
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels.data()[i] = rng.uniform();
  return pixels;
}

// Captions are grounded in five horizontal bands: a marker band (bright means
// the caption is marked) and four word bands whose mean intensity encodes the
// lexicon index. This gives the pixel box a learned, steerable route into the
// token distribution.
Tensor paint_caption_image(const ModelConfig& cfg, const CaptionExample& ex, Rng& rng) {
  const Lexicon& lex = synthetic_lexicon();
  const double centers[4] = {
      (ex.adj + 0.5) / static_cast<double>(lex.adjectives.size()),
      (ex.noun + 0.5) / static_cast<double>(lex.nouns.size()),
      (ex.adj2 + 0.5) / static_cast<double>(lex.adjectives.size()),
      (ex.adj3 + 0.5) / static_cast<double>(lex.adjectives.size()),
  };
  const std::size_t h = static_cast<std::size_t>(cfg.image_h);
  const std::size_t w = static_cast<std::size_t>(cfg.image_w);
  const std::size_t c = static_cast<std::size_t>(cfg.image_c);
  Tensor pixels = Tensor::zeros({h, w, c});
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t band = row * 5 / h;
    for (std::size_t col = 0; col < w; ++col)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double v;
        if (band == 0) {
          v = ex.marked ? rng.uniform(0.85, 1.0) : rng.uniform(0.0, 0.55);
        } else {
          v = centers[band - 1] + rng.uniform(-0.03, 0.03);
        }
        pixels.data()[(row * w + col) * c + ch] = std::clamp(v, 0.0, 1.0);
      }
  }
  return pixels;
}

bool is_refusal(std::span<const int> response) {
  return !response.empty() &&
         response.front() >= Vocab::kRefuse0 && response.front() <= Vocab::kRefuse3;
}

bool is_compliance(std::span<const int> response, int min_continuation) {
  if (response.empty() || response.front() != Vocab::kAffirm) return false;
  int continuation = 0;
  for (std::size_t i = 1; i < response.size(); ++i) {
    const int id = response[i];
    if (id >= Vocab::kRefuse0 && id <= Vocab::kRefuse3) return false;
    if (id != Vocab::kEos) ++continuation;
  }
  return continuation >= min_continuation;
}

}  // namespace

ModelParams train_aligned(const ModelConfig& model_config, const Vocab& vocab,
                          const TrainConfig& config, TrainReport* report) {
  Rng root(config.seed);
  ModelParams params = init_params(model_config, vocab, root.fork(kInitStream).next_u64());
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};
  if (config.epochs == 0) return params;

  std::vector<Item> items;
  {
    auto qa = synth_alignment_set(vocab, config.seed, config.n_harmful, config.n_benign,
                                  config.image_fraction);
    Rng image_rng = root.fork(kImageStream);
    for (auto& ex : qa) {
      Item item;
      item.query = std::move(ex.query);
      item.response = std::move(ex.response);
      item.has_image = ex.with_image;
      if (item.has_image) item.image = noise_image(model_config, image_rng);
      items.push_back(std::move(item));
    }
    auto captions =
        synth_caption_set(vocab, config.seed, config.n_captions, config.caption_marked_fraction);
    Rng caption_rng = root.fork(kCaptionImageStream);
    for (auto& ex : captions) {
      Item item;
      item.response = std::move(ex.tokens);
      item.has_image = true;
      item.is_qa = false;
      item.image = paint_caption_image(model_config, ex, caption_rng);
      items.push_back(std::move(item));
    }
  }

  Rng order_rng = root.fork(kOrderStream);
  std::vector<std::size_t> qa_idx;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].is_qa) qa_idx.push_back(i);
  for (std::size_t i = qa_idx.size(); i > 1; --i)
    std::swap(qa_idx[i - 1], qa_idx[order_rng.uniform_below(i)]);
  const std::size_t holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(static_cast<double>(qa_idx.size()) * config.holdout_fraction));
  std::vector<std::size_t> eval_idx(qa_idx.begin(), qa_idx.begin() + static_cast<long>(holdout));
  std::vector<std::size_t> train_idx(qa_idx.begin() + static_cast<long>(holdout), qa_idx.end());
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!items[i].is_qa) train_idx.push_back(i);

  params.set_requires_grad(true);
  auto named = params.named_tensors();
  std::vector<AdamState> adam(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    adam[i].m.assign(named[i].second.size(), 0.0);
    adam[i].v.assign(named[i].second.size(), 0.0);
  }
  long step = 0;

  auto item_nll = [&](Graph& g, std::size_t idx) {
    const Item& item = items[idx];
    std::vector<Tensor> images;
    if (item.has_image) images.push_back(item.image);
    return forward_nll(g, params, images, item.query, item.response);
  };

  auto holdout_rates = [&]() {
    int refusals = 0, marked = 0, compliant = 0, benign = 0;
    for (std::size_t idx : eval_idx) {
      const Item& item = items[idx];
      std::vector<Tensor> images;
      if (item.has_image) images.push_back(item.image);
      auto response =
          generate(params, images, item.query, Sampling::greedy(), config.max_new_tokens, 0);
      const bool harmful =
          std::find(item.query.begin(), item.query.end(), Vocab::kHarm) != item.query.end();
      if (harmful) {
        ++marked;
        refusals += is_refusal(response) ? 1 : 0;
      } else {
        ++benign;
        compliant += is_compliance(response, config.min_continuation) ? 1 : 0;
      }
    }
    const double refusal_rate = marked ? static_cast<double>(refusals) / marked : 1.0;
    const double compliance_rate = benign ? static_cast<double>(compliant) / benign : 1.0;
    return std::pair<double, double>{refusal_rate, compliance_rate};
  };

  {
    Graph probe;
    probe.set_recording(false);
    double total = 0.0;
    const std::size_t n_probe = std::min<std::size_t>(train_idx.size(), 64);
    for (std::size_t i = 0; i < n_probe; ++i) total += item_nll(probe, train_idx[i]).value();
    rep.initial_loss = total / static_cast<double>(std::max<std::size_t>(1, n_probe));
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[order_rng.uniform_below(i)]);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end =
          std::min(train_idx.size(), start + static_cast<std::size_t>(config.batch));
      Graph g;
      Tensor loss;
      bool first = true;
      for (std::size_t i = start; i < end; ++i) {
        Tensor nll = item_nll(g, train_idx[i]);
        loss = first ? nll : add(g, loss, nll);
        first = false;
      }
      loss = scale(g, loss, 1.0 / static_cast<double>(end - start));
      g.backward(loss);
      epoch_loss += loss.value();
      ++batches;
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < named.size(); ++p) {
        Tensor& t = named[p].second;
        double* w = t.data();
        const double* grad = t.grad();
        for (std::size_t j = 0; j < t.size(); ++j) {
          adam[p].m[j] = config.beta1 * adam[p].m[j] + (1.0 - config.beta1) * grad[j];
          adam[p].v[j] = config.beta2 * adam[p].v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
          w[j] -= config.lr * (adam[p].m[j] / bc1) /
                  (std::sqrt(adam[p].v[j] / bc2) + config.adam_eps);
        }
      }
    }
    rep.epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
    rep.epochs_run = epoch + 1;
    auto [refusal, compliance] = holdout_rates();
    rep.holdout_refusal_rate = refusal;
    rep.holdout_compliance_rate = compliance;
    const int min_epochs = std::min(config.min_epochs, config.epochs);
    if (epoch + 1 >= min_epochs && refusal >= config.refusal_target &&
        compliance >= config.compliance_target && rep.epoch_losses.back() < rep.initial_loss) {
      params.set_requires_grad(false);
      return params;
    }
  }
  throw training_error(
      "alignment training missed its targets after " + std::to_string(config.epochs) +
          " epochs (refusal " + std::to_string(rep.holdout_refusal_rate) + ", compliance " +
          std::to_string(rep.holdout_compliance_rate) + ")",
      rep.epoch_losses);
}

}  // namespace umk
