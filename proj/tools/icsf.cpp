// Command-line front end: policy validation, tree parsing, corpus
// generation, split tagging, agreement, training, prediction, evaluation.
// JSON results go to stdout; logs and human-readable summaries to stderr.
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "icsf/dataset.hpp"
#include "icsf/kernels.hpp"
#include "icsf/metrics.hpp"
#include "icsf/model.hpp"
#include "icsf/policy.hpp"
#include "icsf/synth.hpp"
#include "icsf/tree.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_readable(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoFailure("no such file: " + path);
}

icsf::Policy policy_from_flag(const std::string& path) {
  if (path.empty()) return icsf::default_policy();
  require_readable(path);
  return icsf::load_policy(path);
}

int run_validate_policy(const std::string& path) {
  require_readable(path);
  icsf::Policy policy = icsf::load_policy(path);
  std::vector<std::string> issues = icsf::validate_policy(policy);
  nlohmann::json j;
  j["issues"] = issues;
  std::cout << j.dump(2) << std::endl;
  return issues.empty() ? kExitOk : kExitValidation;
}

int run_parse(const std::string& tree_string) {
  try {
    icsf::ParseTree tree = icsf::parse(tree_string);
    std::cout << icsf::linearize(tree) << std::endl;
    return kExitOk;
  } catch (const icsf::TreeParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  }
}

// Applies --config JSON as defaults underneath any flags the user set.
void overlay_config(const CLI::App* cmd, const std::string& config_path, icsf::TrainConfig& cfg) {
  if (config_path.empty()) return;
  require_readable(config_path);
  std::ifstream in(config_path);
  nlohmann::json j;
  in >> j;
  auto take = [&](const char* flag, const char* key, auto& field) {
    if (cmd->count(flag) == 0 && j.contains(key))
      field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("--hidden", "hidden_dim", cfg.hidden_dim);
  take("--lr", "learning_rate", cfg.learning_rate);
  take("--epochs", "epochs", cfg.epochs);
  take("--batch", "batch_size", cfg.batch_size);
  take("--beam", "beam_width", cfg.beam_width);
  take("--max-src", "max_src_len", cfg.max_src_len);
  take("--max-tgt", "max_tgt_len", cfg.max_tgt_len);
  take("--seed", "seed", cfg.seed);
  take("--clip", "grad_clip", cfg.grad_clip);
  take("--max-vocab", "max_vocab", cfg.max_vocab);
  take("--head-epochs", "head_epochs", cfg.head_epochs);
  take("--head-lr", "head_lr", cfg.head_lr);
}

std::vector<const icsf::PostRecord*> select_records(const icsf::Corpus& corpus,
                                                    const std::string& split) {
  std::vector<const icsf::PostRecord*> out;
  for (const icsf::PostRecord& rec : corpus.records) {
    if (split == "all") {
      out.push_back(&rec);
    } else {
      auto wanted = icsf::split_from_name(split);
      if (wanted && rec.split == *wanted) out.push_back(&rec);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy-aware abuse detection via intent classification and slot filling"};
  app.require_subcommand(1);

  std::string kernels_flag = "auto";
  app.add_option("--kernels", kernels_flag, "math backend: auto|scalar|avx2")
      ->default_str("auto");

  // validate-policy
  auto* sc_validate = app.add_subcommand("validate-policy", "check a policy JSON document");
  std::string policy_path_arg;
  sc_validate->add_option("policy", policy_path_arg, "policy JSON file")->required();

  // parse
  auto* sc_parse = app.add_subcommand("parse", "parse a linearized tree and echo canonical form");
  std::string tree_arg;
  sc_parse->add_option("tree", tree_arg, "linearized tree string")->required();

  // gen
  auto* sc_gen = app.add_subcommand("gen", "generate a synthetic annotated corpus");
  std::string gen_specs, gen_out, gen_policy;
  std::size_t gen_n = 0, gen_train = 0, gen_test = 0;
  std::uint64_t gen_seed = 7;
  sc_gen->add_option("--specs", gen_specs, "template spec JSON (default: built-in)");
  sc_gen->add_option("--n", gen_n, "number of records");
  sc_gen->add_option("--n-train", gen_train, "records tagged train (with --n-test)");
  sc_gen->add_option("--n-test", gen_test, "records tagged test (with --n-train)");
  sc_gen->add_option("--seed", gen_seed, "generator seed")->default_str("7");
  sc_gen->add_option("--out", gen_out, "output corpus JSONL")->required();
  sc_gen->add_option("--policy", gen_policy, "policy JSON (default: built-in)");

  // split
  auto* sc_split = app.add_subcommand("split", "tag records with stratified train/valid/test");
  std::string split_in, split_out;
  std::uint64_t split_seed = 7;
  double f_train = 0.8, f_valid = 0.1, f_test = 0.1;
  sc_split->add_option("--in", split_in, "corpus JSONL")->required();
  sc_split->add_option("--out", split_out, "output path (default: overwrite --in)");
  sc_split->add_option("--seed", split_seed, "shuffle seed")->default_str("7");
  sc_split->add_option("--train", f_train, "train fraction")->default_str("0.8");
  sc_split->add_option("--valid", f_valid, "valid fraction")->default_str("0.1");
  sc_split->add_option("--test", f_test, "test fraction")->default_str("0.1");

  // agreement
  auto* sc_agree = app.add_subcommand("agreement", "inter-annotator LCS agreement report");
  std::string agree_in;
  sc_agree->add_option("--in", agree_in, "corpus JSONL")->required();

  // train
  auto* sc_train = app.add_subcommand("train", "train the sketch-then-refine model");
  std::string train_in, train_out, train_policy, train_config;
  icsf::TrainConfig cfg;
  sc_train->add_option("--in", train_in, "corpus JSONL")->required();
  sc_train->add_option("--out", train_out, "checkpoint path")->required();
  sc_train->add_option("--policy", train_policy, "policy JSON (default: built-in)");
  sc_train->add_option("--config", train_config, "JSON config file (flags override)");
  sc_train->add_option("--hidden", cfg.hidden_dim, "hidden dimension")->default_str("64");
  sc_train->add_option("--lr", cfg.learning_rate, "learning rate")->default_str("0.001");
  sc_train->add_option("--epochs", cfg.epochs, "training epochs")->default_str("12");
  sc_train->add_option("--batch", cfg.batch_size, "batch size")->default_str("16");
  sc_train->add_option("--beam", cfg.beam_width, "beam width")->default_str("3");
  sc_train->add_option("--max-src", cfg.max_src_len, "max source length")->default_str("64");
  sc_train->add_option("--max-tgt", cfg.max_tgt_len, "max target length")->default_str("64");
  sc_train->add_option("--seed", cfg.seed, "seed")->default_str("1");
  sc_train->add_option("--clip", cfg.grad_clip, "gradient norm clip")->default_str("5.0");
  sc_train->add_option("--max-vocab", cfg.max_vocab, "vocabulary cap")->default_str("20000");
  sc_train->add_option("--head-epochs", cfg.head_epochs, "intent head epochs")->default_str("4000");
  sc_train->add_option("--head-lr", cfg.head_lr, "intent head learning rate")->default_str("0.01");

  // predict
  auto* sc_predict = app.add_subcommand("predict", "parse posts into explanation trees");
  std::string pred_model, pred_in, pred_out, pred_policy, pred_split = "all";
  std::size_t pred_jobs = 1;
  sc_predict->add_option("--model", pred_model, "checkpoint path")->required();
  sc_predict->add_option("--in", pred_in, "corpus JSONL")->required();
  sc_predict->add_option("--out", pred_out, "prediction JSONL")->required();
  sc_predict->add_option("--policy", pred_policy, "policy JSON (default: built-in)");
  sc_predict->add_option("--split", pred_split, "train|valid|test|all")->default_str("all");
  sc_predict->add_option("--jobs", pred_jobs, "worker threads")->default_str("1");

  // eval
  auto* sc_eval = app.add_subcommand("eval", "score predictions against gold trees");
  std::string eval_gold, eval_pred, eval_policy, eval_split = "all";
  sc_eval->add_option("--gold", eval_gold, "gold corpus JSONL")->required();
  sc_eval->add_option("--pred", eval_pred, "prediction JSONL")->required();
  sc_eval->add_option("--policy", eval_policy, "policy JSON (default: built-in)");
  sc_eval->add_option("--split", eval_split, "train|valid|test|all")->default_str("all");

  CLI11_PARSE(app, argc, argv);

  try {
    icsf::kernels::force_backend(kernels_flag.c_str());

    if (sc_validate->parsed()) return run_validate_policy(policy_path_arg);
    if (sc_parse->parsed()) return run_parse(tree_arg);

    if (sc_gen->parsed()) {
      icsf::Policy policy = policy_from_flag(gen_policy);
      std::vector<icsf::TemplateSpec> specs =
          gen_specs.empty() ? icsf::default_template_specs()
                            : (require_readable(gen_specs), icsf::load_template_specs(gen_specs));
      std::size_t n = gen_n;
      if (gen_train + gen_test > 0) n = gen_train + gen_test;
      if (n == 0) {
        std::cerr << "gen: give --n or --n-train/--n-test\n";
        return kExitValidation;
      }
      icsf::Corpus corpus = icsf::generate(specs, n, gen_seed, policy);
      if (gen_train + gen_test > 0) {
        for (std::size_t i = 0; i < corpus.records.size(); ++i)
          corpus.records[i].split = i < gen_train ? icsf::Split::Train : icsf::Split::Test;
      }
      icsf::save_jsonl(corpus, gen_out);
      std::cerr << "wrote " << corpus.records.size() << " records to " << gen_out << "\n";
      return kExitOk;
    }

    if (sc_split->parsed()) {
      require_readable(split_in);
      icsf::Corpus corpus = icsf::load_jsonl(split_in);
      corpus = icsf::stratified_split(corpus, {f_train, f_valid, f_test}, split_seed);
      icsf::save_jsonl(corpus, split_out.empty() ? split_in : split_out);
      return kExitOk;
    }

    if (sc_agree->parsed()) {
      require_readable(agree_in);
      icsf::Corpus corpus = icsf::load_jsonl(agree_in);
      std::cout << icsf::agreement_report_to_json(icsf::corpus_agreement(corpus)) << std::endl;
      return kExitOk;
    }

    if (sc_train->parsed()) {
      require_readable(train_in);
      overlay_config(sc_train, train_config, cfg);
      icsf::Policy policy = policy_from_flag(train_policy);
      icsf::Corpus corpus = icsf::load_jsonl(train_in);
      icsf::ModelParams model;
      model.config = cfg;
      icsf::TrainReport report = icsf::train(model, corpus, policy);
      icsf::save_model(model, train_out);
      for (const icsf::QuarantineEntry& q : report.skipped)
        std::cerr << "skipped " << q.id << ": " << q.reason << "\n";
      std::cerr << "trained on " << report.examples_used << " records ("
                << report.kernel_backend << " kernels); checkpoint: " << train_out << "\n";
      std::cout << icsf::train_report_to_json(report) << std::endl;
      return kExitOk;
    }

    if (sc_predict->parsed()) {
      require_readable(pred_model);
      require_readable(pred_in);
      icsf::Policy policy = policy_from_flag(pred_policy);
      icsf::ModelParams model = icsf::load_model(pred_model);
      icsf::Corpus corpus = icsf::load_jsonl(pred_in);
      std::vector<const icsf::PostRecord*> records = select_records(corpus, pred_split);
      std::vector<icsf::PredictionRow> rows(records.size());

      std::size_t jobs = std::max<std::size_t>(1, pred_jobs);
      std::atomic<std::size_t> next{0};
      auto worker = [&]() {
        while (true) {
          std::size_t i = next.fetch_add(1);
          if (i >= records.size()) break;
          icsf::ParseTree tree = icsf::predict(model, records[i]->text, policy);
          rows[i] = {records[i]->id, icsf::linearize(tree)};
        }
      };
      if (jobs == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
      }
      icsf::save_predictions(rows, pred_out);
      std::cerr << "wrote " << rows.size() << " predictions to " << pred_out << "\n";
      return kExitOk;
    }

    if (sc_eval->parsed()) {
      require_readable(eval_gold);
      require_readable(eval_pred);
      icsf::Policy policy = policy_from_flag(eval_policy);
      icsf::Corpus corpus = icsf::load_jsonl(eval_gold);
      std::vector<const icsf::PostRecord*> records = select_records(corpus, eval_split);

      std::map<std::string, icsf::ParseTree> gold;
      icsf::Corpus filtered;
      for (const icsf::PostRecord* rec : records) filtered.records.push_back(*rec);
      icsf::GoldTreeSet gold_set = icsf::build_gold_trees(filtered, policy);
      for (const icsf::QuarantineEntry& q : gold_set.quarantined)
        std::cerr << "gold quarantine " << q.id << ": " << q.reason << "\n";
      gold = std::move(gold_set.trees);

      std::map<std::string, icsf::ParseTree> pred;
      for (const icsf::PredictionRow& row : icsf::load_predictions(eval_pred)) {
        try {
          pred[row.id] = icsf::parse(row.tree);
        } catch (const icsf::TreeParseError& e) {
          std::cerr << "unparseable prediction for " << row.id << ": " << e.what() << "\n";
          pred[row.id] = icsf::ParseTree{};  // empty NotHateful tree
        }
      }

      icsf::MetricReport report = icsf::evaluate(icsf::align_by_id(gold, pred), policy);
      std::cerr << icsf::metric_report_to_text(report);
      std::cout << icsf::metric_report_to_json(report) << std::endl;
      return kExitOk;
    }
  } catch (const IoFailure& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const icsf::CorpusError& e) {
    std::string what = e.what();
    if (what.find("cannot open") != std::string::npos ||
        what.find("write failed") != std::string::npos) {
      std::cerr << "I/O error: " << what << "\n";
      return kExitIo;
    }
    std::cerr << "error: " << what << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::string what = e.what();
    if (what.find("cannot open") != std::string::npos ||
        what.find("write failed") != std::string::npos) {
      std::cerr << "I/O error: " << what << "\n";
      return kExitIo;
    }
    std::cerr << "error: " << what << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
