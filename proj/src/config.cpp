#include "umk/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "umk/version.hpp"

namespace umk {

namespace {

using nlohmann::json;

class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(path_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw config_error(path_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw config_error("unknown config key \"" + path_ + "." + key + "\"");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_model(const json& j, ModelConfig& m) {
  StrictObject o(j, "model");
  o.get("vocab_size", m.vocab_size);
  o.get("d_model", m.d_model);
  o.get("n_layers", m.n_layers);
  o.get("n_heads", m.n_heads);
  o.get("context", m.context);
  o.get("image_tokens", m.image_tokens);
  o.get("image_h", m.image_h);
  o.get("image_w", m.image_w);
  o.get("image_c", m.image_c);
  o.get("patch", m.patch);
  o.get("ln_eps", m.ln_eps);
  o.finish();
}

void parse_train(const json& j, TrainConfig& t) {
  StrictObject o(j, "train");
  o.get("epochs", t.epochs);
  o.get("min_epochs", t.min_epochs);
  o.get("batch", t.batch);
  o.get("lr", t.lr);
  o.get("beta1", t.beta1);
  o.get("beta2", t.beta2);
  o.get("adam_eps", t.adam_eps);
  o.get("n_harmful", t.n_harmful);
  o.get("n_benign", t.n_benign);
  o.get("n_captions", t.n_captions);
  o.get("caption_marked_fraction", t.caption_marked_fraction);
  o.get("image_fraction", t.image_fraction);
  o.get("holdout_fraction", t.holdout_fraction);
  o.get("refusal_target", t.refusal_target);
  o.get("compliance_target", t.compliance_target);
  o.get("min_continuation", t.min_continuation);
  o.get("max_new_tokens", t.max_new_tokens);
  o.finish();
}

void parse_corpus(const json& j, CorpusConfig& c) {
  StrictObject o(j, "corpus");
  o.get("m_sentences", c.m_sentences);
  o.get("n_pairs", c.n_pairs);
  o.get("n_eval", c.n_eval);
  o.finish();
}

void parse_attack(const json& j, AttackConfig& a) {
  StrictObject o(j, "attack");
  if (o.has("mode")) a.mode = attack_mode_from_string(o.child("mode").get<std::string>());
  o.get("batch", a.batch);
  o.get("alpha", a.alpha);
  o.get("ratio", a.ratio);
  o.get("n_candidates", a.n_candidates);
  o.get("top_k", a.top_k);
  o.get("n1", a.n1);
  o.get("n2", a.n2);
  o.get("suffix_len", a.suffix_len);
  o.get("filler", a.filler);
  o.finish();
}

void parse_eval(const json& j, EvalConfig& e) {
  StrictObject o(j, "eval");
  o.get("protocol", e.protocol);
  o.get("max_new_tokens", e.max_new_tokens);
  o.get("min_continuation", e.min_continuation);
  o.get("toxicity", e.toxicity);
  o.get("toxicity_threshold", e.toxicity_threshold);
  o.finish();
  if (e.protocol != "greedy" && e.protocol != "nucleus5")
    throw config_error("eval.protocol must be \"greedy\" or \"nucleus5\", got \"" + e.protocol +
                       "\"");
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(origin + ": " + e.what());
  }
  RunConfig config;
  StrictObject o(j, "config");
  o.get("seed", config.seed);
  o.get("threads", config.threads);
  if (o.has("model")) parse_model(o.child("model"), config.model);
  if (o.has("train")) parse_train(o.child("train"), config.train);
  if (o.has("corpus")) parse_corpus(o.child("corpus"), config.corpus);
  if (o.has("attack")) parse_attack(o.child("attack"), config.attack);
  if (o.has("eval")) parse_eval(o.child("eval"), config.eval);
  o.finish();
  if (config.threads < 1) throw config_error("threads must be >= 1");
  config.model.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  j["model"] = {
      {"vocab_size", config.model.vocab_size},
      {"d_model", config.model.d_model},
      {"n_layers", config.model.n_layers},
      {"n_heads", config.model.n_heads},
      {"context", config.model.context},
      {"image_tokens", config.model.image_tokens},
      {"image_h", config.model.image_h},
      {"image_w", config.model.image_w},
      {"image_c", config.model.image_c},
      {"patch", config.model.patch},
      {"ln_eps", config.model.ln_eps},
  };
  j["train"] = {
      {"epochs", config.train.epochs},
      {"min_epochs", config.train.min_epochs},
      {"batch", config.train.batch},
      {"lr", config.train.lr},
      {"beta1", config.train.beta1},
      {"beta2", config.train.beta2},
      {"adam_eps", config.train.adam_eps},
      {"n_harmful", config.train.n_harmful},
      {"n_benign", config.train.n_benign},
      {"n_captions", config.train.n_captions},
      {"caption_marked_fraction", config.train.caption_marked_fraction},
      {"image_fraction", config.train.image_fraction},
      {"holdout_fraction", config.train.holdout_fraction},
      {"refusal_target", config.train.refusal_target},
      {"compliance_target", config.train.compliance_target},
      {"min_continuation", config.train.min_continuation},
      {"max_new_tokens", config.train.max_new_tokens},
  };
  j["corpus"] = {
      {"m_sentences", config.corpus.m_sentences},
      {"n_pairs", config.corpus.n_pairs},
      {"n_eval", config.corpus.n_eval},
  };
  j["attack"] = {
      {"mode", to_string(config.attack.mode)},
      {"batch", config.attack.batch},
      {"alpha", config.attack.alpha},
      {"ratio", config.attack.ratio},
      {"n_candidates", config.attack.n_candidates},
      {"top_k", config.attack.top_k},
      {"n1", config.attack.n1},
      {"n2", config.attack.n2},
      {"suffix_len", config.attack.suffix_len},
      {"filler", config.attack.filler},
  };
  j["eval"] = {
      {"protocol", config.eval.protocol},
      {"max_new_tokens", config.eval.max_new_tokens},
      {"min_continuation", config.eval.min_continuation},
      {"toxicity", config.eval.toxicity},
      {"toxicity_threshold", config.eval.toxicity_threshold},
  };
  std::ofstream out(path);
  if (!out) throw config_error("cannot write config file: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace umk
