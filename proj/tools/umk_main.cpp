#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "umk/config.hpp"
#include "umk/eval.hpp"
#include "umk/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitAttack = 4;
constexpr int kExitMismatch = 5;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
};

int fail(int code, const std::string& message) {
  std::cerr << json{{"code", code}, {"error", message}}.dump() << '\n';
  return code;
}

std::string shortest(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

umk::RunConfig resolve_config(const std::optional<std::string>& path, const GlobalFlags& flags) {
  umk::RunConfig config = path ? umk::load_run_config(*path) : umk::RunConfig{};
  if (flags.seed) config.seed = *flags.seed;
  if (flags.threads) config.threads = *flags.threads;
  return config;
}

umk::EvalProtocol protocol_by_name(const std::string& name) {
  if (name == "greedy") return umk::EvalProtocol::greedy();
  if (name == "nucleus5") return umk::EvalProtocol::nucleus5();
  throw umk::config_error("unknown protocol \"" + name + "\" (expected greedy or nucleus5)");
}

int cmd_train_model(const std::optional<std::string>& config_path, const std::string& out,
                    std::optional<int> epochs_override, const GlobalFlags& flags) {
  umk::RunConfig config = resolve_config(config_path, flags);
  if (epochs_override) config.train.epochs = *epochs_override;
  umk::Vocab vocab = umk::Vocab::synthetic(config.model.vocab_size);
  umk::TrainConfig train = config.train;
  train.seed = config.seed;
  umk::TrainReport report;
  umk::ModelParams params = umk::train_aligned(config.model, vocab, train, &report);
  umk::save_model(out, params);
  umk::save_run_config(fs::path(out) / "run_config.json", config);
  if (!flags.quiet) {
    std::cout << "model saved to " << out << '\n';
    std::cout << "epochs: " << report.epochs_run
              << "  holdout refusal rate: " << shortest(report.holdout_refusal_rate)
              << "  holdout compliance rate: " << shortest(report.holdout_compliance_rate) << '\n';
  }
  return 0;
}

int cmd_attack(const std::string& model_dir, const std::string& mode,
               const std::optional<std::string>& config_path, const std::string& out,
               const GlobalFlags& flags) {
  if (mode == "list") {
    for (umk::AttackMode m : umk::all_attack_modes()) std::cout << to_string(m) << '\n';
    return 0;
  }
  umk::RunConfig config = resolve_config(config_path, flags);
  if (!mode.empty()) config.attack.mode = umk::attack_mode_from_string(mode);
  if (out.empty()) throw umk::config_error("attack: --out is required");
  if (model_dir.empty()) throw umk::config_error("attack: --model is required");
  umk::ModelParams params = umk::load_model(model_dir);
  umk::Corpora corpora = umk::synth_corpora(params.vocab, config.seed, config.corpus.m_sentences,
                                            config.corpus.n_pairs, config.corpus.n_eval);
  umk::AttackConfig attack = config.attack;
  attack.seed = config.seed;
  attack.threads = config.threads;
  umk::MasterKey key = umk::run_attack(params, corpora.sentences, corpora.pairs, attack);
  umk::save_umk(out, key, params.vocab);
  umk::save_run_config(fs::path(out) / "run_config.json", config);
  umk::save_sentences(fs::path(out) / "sentences.txt", corpora.sentences, params.vocab);
  umk::save_pairs(fs::path(out) / "pairs.tsv", corpora.pairs, params.vocab);
  umk::save_eval(fs::path(out) / "eval.tsv", corpora.eval, params.vocab);
  umk::EvalSet train_goals;
  for (const auto& pair : corpora.pairs.pairs)
    train_goals.items.push_back(umk::EvalItem{pair.goal, "train"});
  umk::save_eval(fs::path(out) / "train_goals.tsv", train_goals, params.vocab);
  if (!flags.quiet) {
    std::cout << "key saved to " << out << '\n';
    const double final_nll = umk::training_nll(params, corpora.pairs, key);
    std::cout << "mode: " << to_string(key.config.mode)
              << "  trace rows: " << key.trace.rows.size()
              << "  final training NLL: " << shortest(final_nll) << '\n';
  }
  return 0;
}

int cmd_evaluate(const std::string& model_dir, const std::optional<std::string>& umk_dir,
                 const std::string& eval_set_path, const std::optional<std::string>& protocol_name,
                 const std::optional<std::string>& config_path, const std::string& out,
                 bool toxicity, const GlobalFlags& flags) {
  umk::RunConfig config = resolve_config(config_path, flags);
  umk::ModelParams params = umk::load_model(model_dir);
  std::optional<umk::MasterKey> key;
  if (umk_dir) {
    key = umk::load_umk(*umk_dir);
    umk::validate_key_compatibility(params, *key);
  }
  umk::EvalSet eval_set = umk::load_eval(eval_set_path, params.vocab);
  umk::EvalProtocol protocol = protocol_by_name(protocol_name.value_or(config.eval.protocol));
  umk::SuccessPredicate predicate;
  predicate.min_continuation = config.eval.min_continuation;
  umk::ToxicityScorer scorer = umk::lexicon_scores;
  const bool want_toxicity = toxicity || config.eval.toxicity;
  umk::AsrReport report = umk::evaluate_asr(
      params, key ? &*key : nullptr, eval_set, protocol, predicate, config.seed,
      config.eval.max_new_tokens, want_toxicity ? &scorer : nullptr,
      config.eval.toxicity_threshold);
  umk::save_asr_report(out, report);
  if (!flags.quiet) {
    std::cout << "report saved to " << out << '\n';
    std::cout << "aggregate ASR: " << shortest(report.aggregate_asr) << "  (" << report.protocol
              << ", " << report.goals.size() << " goals, " << report.error_goals << " errors)\n";
  }
  return 0;
}

struct SummaryRow {
  std::string run;
  std::string mode;
  std::optional<double> train_asr;
  double test_asr = 0.0;
};

int cmd_report(const std::string& runs_dir, const std::string& out, const GlobalFlags& flags) {
  if (!fs::is_directory(runs_dir))
    throw umk::config_error("report: not a directory: " + runs_dir);
  std::vector<fs::path> run_paths;
  for (const auto& entry : fs::directory_iterator(runs_dir))
    if (entry.is_directory()) run_paths.push_back(entry.path());
  std::sort(run_paths.begin(), run_paths.end());
  if (run_paths.empty()) throw umk::config_error("report: no run directories in " + runs_dir);

  auto read_asr = [](const fs::path& report_path) -> std::optional<double> {
    std::ifstream in(report_path);
    if (!in) return std::nullopt;
    json j;
    try {
      in >> j;
      return j.at("aggregate_asr").get<double>();
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };

  std::vector<SummaryRow> rows;
  std::vector<std::pair<std::string, umk::LossTrace>> traces;
  for (const auto& run : run_paths) {
    SummaryRow row;
    row.run = run.filename().string();
    std::ifstream cfg_in(run / "config.json");
    if (!cfg_in) {
      std::cerr << "warning: skipping " << row.run << ": no config.json\n";
      continue;
    }
    try {
      json cfg;
      cfg_in >> cfg;
      row.mode = cfg.at("mode").get<std::string>();
    } catch (const json::exception&) {
      std::cerr << "warning: skipping " << row.run << ": config.json has no mode\n";
      continue;
    }
    auto test_asr = read_asr(run / "eval_test" / "report.json");
    if (!test_asr) {
      std::cerr << "warning: skipping " << row.run << ": no eval_test/report.json\n";
      continue;
    }
    row.test_asr = *test_asr;
    row.train_asr = read_asr(run / "eval_train" / "report.json");
    rows.push_back(std::move(row));
    try {
      traces.emplace_back(run.filename().string(), umk::load_trace_csv(run / "loss_trace.csv"));
    } catch (const umk::config_error&) {
      std::cerr << "warning: " << run.filename().string() << ": no readable loss_trace.csv\n";
    }
  }
  if (rows.empty()) throw umk::config_error("report: no usable runs in " + runs_dir);

  std::stable_sort(rows.begin(), rows.end(),
                   [](const SummaryRow& a, const SummaryRow& b) { return a.test_asr > b.test_asr; });

  fs::create_directories(out);
  {
    std::ofstream csv(fs::path(out) / "summary.csv");
    if (!csv) throw umk::config_error("report: cannot write summary.csv in " + out);
    csv << "run,mode,train_asr,test_asr\n";
    for (const auto& row : rows) {
      csv << row.run << ',' << row.mode << ',';
      if (row.train_asr) csv << shortest(*row.train_asr);
      csv << ',' << shortest(row.test_asr) << '\n';
    }
  }
  {
    std::ofstream csv(fs::path(out) / "loss_merged.csv");
    if (!csv) throw umk::config_error("report: cannot write loss_merged.csv in " + out);
    csv << "run,step,loss_before_text,loss_after_text\n";
    for (const auto& [run, trace] : traces)
      for (const auto& row : trace.rows)
        if (row.text_attack)
          csv << run << ',' << row.step << ',' << shortest(row.loss_before_text) << ','
              << shortest(row.loss_after_text) << '\n';
  }
  if (!flags.quiet) {
    std::cout << "run,mode,train_asr,test_asr\n";
    for (const auto& row : rows) {
      std::cout << row.run << ',' << row.mode << ',';
      if (row.train_asr) std::cout << shortest(*row.train_asr);
      std::cout << ',' << shortest(row.test_asr) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-objective multimodal jailbreak sandbox"};
  app.set_version_flag("--version", umk::kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  int threads_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  auto* threads_opt = app.add_option("--threads", threads_value, "override the config thread count");
  app.add_flag("--quiet", flags.quiet, "suppress progress output");

  std::optional<std::string> config_path;
  std::string out;

  auto* train = app.add_subcommand("train-model", "train the aligned toy model");
  std::optional<int> epochs_override;
  train->add_option("--config", config_path, "run configuration (JSON)");
  train->add_option("--out", out, "output checkpoint directory")->required();
  train->add_option("--epochs", epochs_override, "override train.epochs");

  auto* attack = app.add_subcommand("attack", "optimize an adversarial key against a model");
  std::string model_dir;
  std::string mode;
  attack->add_option("--model", model_dir, "model checkpoint directory");
  attack->add_option("--mode", mode, "attack mode (or 'list')");
  attack->add_option("--config", config_path, "run configuration (JSON)");
  attack->add_option("--out", out, "output artifact directory");

  auto* evaluate = app.add_subcommand("evaluate", "measure attack success on an eval set");
  std::optional<std::string> umk_dir;
  std::string eval_set_path;
  std::optional<std::string> protocol_name;
  bool toxicity = false;
  evaluate->add_option("--model", model_dir, "model checkpoint directory")->required();
  evaluate->add_option("--umk", umk_dir, "key artifact directory (omit for the bare baseline)");
  evaluate->add_option("--eval-set", eval_set_path, "goal<TAB>category TSV")->required();
  evaluate->add_option("--protocol", protocol_name, "greedy | nucleus5");
  evaluate->add_option("--config", config_path, "run configuration (JSON)");
  evaluate->add_option("--out", out, "output report directory")->required();
  evaluate->add_flag("--toxicity", toxicity, "score generations with the lexicon scorer");

  auto* report = app.add_subcommand("report", "summarize completed run directories");
  std::string runs_dir;
  report->add_option("--runs", runs_dir, "directory of run directories")->required();
  report->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(kExitConfig, e.what());
  }

  if (*seed_opt) flags.seed = seed_value;
  if (*threads_opt) flags.threads = threads_value;

  try {
    if (train->parsed()) return cmd_train_model(config_path, out, epochs_override, flags);
    if (attack->parsed()) return cmd_attack(model_dir, mode, config_path, out, flags);
    if (evaluate->parsed())
      return cmd_evaluate(model_dir, umk_dir, eval_set_path, protocol_name, config_path, out,
                          toxicity, flags);
    if (report->parsed()) return cmd_report(runs_dir, out, flags);
  } catch (const umk::training_error& e) {
    return fail(kExitTraining, e.what());
  } catch (const umk::attack_error& e) {
    return fail(kExitAttack, e.what());
  } catch (const umk::artifact_mismatch_error& e) {
    return fail(kExitMismatch, e.what());
  } catch (const umk::config_error& e) {
    return fail(kExitConfig, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
