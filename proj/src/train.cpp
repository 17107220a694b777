#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icsf/kernels.hpp"
#include "icsf/model.hpp"

namespace icsf {

namespace {

class Adam {
 public:
  Adam(const std::vector<Param*>& params, double lr) : lr_(lr) {
    for (Param* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void step(const std::vector<Param*>& params, double clip) {
    ++t_;
    double sq = 0.0;
    for (Param* p : params)
      sq += kernels::ops().dot(p->grad.data(), p->grad.data(), p->grad.size());
    double norm = std::sqrt(sq);
    double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Param& p = *params[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        double g = p.grad[i] * scale;
        m_[pi][i] = b1 * m_[pi][i] + (1.0 - b1) * g;
        v_[pi][i] = b2 * v_[pi][i] + (1.0 - b2) * g * g;
        double mhat = m_[pi][i] / bc1;
        double vhat = v_[pi][i] / bc2;
        p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::vector<double> indicator(SlotSet s) {
  std::vector<double> q(kSlotCount, 0.0);
  for (SlotKind k : s.to_vector()) q[static_cast<std::size_t>(k)] = 1.0;
  return q;
}

double head_accuracy(IntentHead& head, const std::vector<std::pair<SlotSet, IntentKind>>& pairs) {
  std::size_t hits = 0;
  for (const auto& [slots, intent] : pairs) {
    std::vector<double> s = intent_scores(indicator(slots), head);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    if (best == static_cast<std::size_t>(intent)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

IntentHead train_head_once(const std::vector<std::pair<SlotSet, IntentKind>>& pairs,
                           const TrainConfig& cfg, std::uint64_t seed) {
  IntentHead head;
  Rng rng(seed);
  head.init(rng);
  head.strict_as_printed = cfg.head_strict_as_printed;

  std::vector<Param*> params = head.params();
  Adam adam(params, cfg.head_lr);
  Tape tape;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t epoch = 0; epoch < cfg.head_epochs; ++epoch) {
    tape.reset();
    for (Param* p : params) p->ensure_grad();
    std::vector<Tape::Id> losses;
    for (const auto& [slots, intent] : pairs) {
      Tape::Id q = tape.input(indicator(slots));
      Tape::Id dist = intent_scores(tape, head, q);
      losses.push_back(tape.pick_neglog(dist, static_cast<std::size_t>(intent)));
    }
    Tape::Id loss = tape.affine(tape.add_n(losses), inv, 0.0);
    tape.backward(loss);
    adam.step(params, cfg.grad_clip);
    if (epoch % 25 == 24 && head_accuracy(head, pairs) == 1.0) break;
  }
  return head;
}

}  // namespace

IntentHead pretrain_intent_head(const std::vector<std::pair<SlotSet, IntentKind>>& pairs,
                                const TrainConfig& cfg, const Policy& policy) {
  if (pairs.empty()) throw std::invalid_argument("pretrain_intent_head: no pairs");
  std::set<IntentKind> needed{policy.fallback_intent};
  for (const PolicyRule& r : policy.rules) needed.insert(r.intent);
  std::set<IntentKind> present;
  for (const auto& [slots, intent] : pairs) {
    (void)slots;
    present.insert(intent);
  }
  for (IntentKind k : needed) {
    if (!present.count(k))
      throw std::invalid_argument("pretrain_intent_head: no training pair for intent " +
                                  std::string(intent_name(k)));
  }

  IntentHead best;
  double best_acc = -1.0;
  for (std::uint64_t attempt = 0; attempt < 3; ++attempt) {
    IntentHead head = train_head_once(pairs, cfg, cfg.seed + 0x517cc1b727220a95ULL * (attempt + 1));
    double acc = head_accuracy(head, pairs);
    if (acc > best_acc) {
      best_acc = acc;
      best = head;
    }
    if (best_acc >= 0.995) break;
  }
  best.freeze();
  return best;
}

TrainReport train(ModelParams& m, const Corpus& corpus, const Policy& policy) {
  auto issues = m.config.validate();
  if (!issues.empty()) throw std::invalid_argument("TrainConfig: " + issues.front());

  m.vocab = Vocab::build(corpus, m.config.max_vocab);
  m.init();

  TrainReport report;
  report.kernel_backend = kernels::ops().name;

  bool tagged = std::any_of(corpus.records.begin(), corpus.records.end(),
                            [](const PostRecord& r) { return r.split.has_value(); });
  std::vector<TrainExample> examples;
  std::vector<std::pair<SlotSet, IntentKind>> head_pairs;
  for (const PostRecord& rec : corpus.records) {
    if (tagged && rec.split != Split::Train) continue;
    try {
      GoldTree g = gold_tree(rec, policy);
      if (g.label_disagreement) {
        report.skipped.push_back({rec.id, *g.label_disagreement});
        continue;
      }
      examples.push_back(make_example(rec, g.tree, m.vocab, m.config));
      SlotSet kinds;
      for (SlotKind k : to_sketch(g.tree)) kinds.insert(k);
      head_pairs.emplace_back(kinds, g.tree.intent);
    } catch (const CorpusError& e) {
      report.skipped.push_back({rec.id, e.what()});
    }
  }
  if (examples.empty()) throw std::runtime_error("train: no usable training records");
  report.examples_used = examples.size();

  m.head = pretrain_intent_head(head_pairs, m.config, policy);

  std::vector<Param*> params = m.trainable_params();
  Adam adam(params, m.config.learning_rate);
  Rng shuffler(m.config.seed + 17);
  Tape tape;

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < m.config.epochs; ++epoch) {
    shuffler.shuffle(order);
    EpochStats stats;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += m.config.batch_size) {
      std::size_t stop = std::min(order.size(), start + m.config.batch_size);
      std::vector<TrainExample> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
      LossBreakdown loss = batch_loss(tape, m, batch);
      adam.step(params, m.config.grad_clip);
      double w = static_cast<double>(batch.size());
      stats.sketch += loss.sketch * w;
      stats.refine += loss.refine * w;
      stats.intent += loss.intent * w;
      stats.total += loss.total * w;
      seen += batch.size();
    }
    double inv = 1.0 / static_cast<double>(seen);
    stats.sketch *= inv;
    stats.refine *= inv;
    stats.intent *= inv;
    stats.total *= inv;
    report.epochs.push_back(stats);
  }
  return report;
}

std::string train_report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const EpochStats& e : report.epochs) {
    j["epochs"].push_back({
        {"L_c", e.sketch},
        {"L_f", e.refine},
        {"L_intent", e.intent},
        {"total", e.total},
    });
  }
  j["examples_used"] = report.examples_used;
  j["kernel_backend"] = report.kernel_backend;
  j["skipped"] = nlohmann::json::array();
  for (const QuarantineEntry& q : report.skipped)
    j["skipped"].push_back({{"id", q.id}, {"reason", q.reason}});
  return j.dump(2);
}

namespace {

nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"hidden_dim", c.hidden_dim},
      {"learning_rate", c.learning_rate},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"beam_width", c.beam_width},
      {"max_src_len", c.max_src_len},
      {"max_tgt_len", c.max_tgt_len},
      {"seed", c.seed},
      {"grad_clip", c.grad_clip},
      {"max_vocab", c.max_vocab},
      {"head_epochs", c.head_epochs},
      {"head_lr", c.head_lr},
      {"head_strict_as_printed", c.head_strict_as_printed},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.beam_width = j.at("beam_width").get<std::size_t>();
  c.max_src_len = j.at("max_src_len").get<std::size_t>();
  c.max_tgt_len = j.at("max_tgt_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.max_vocab = j.at("max_vocab").get<std::size_t>();
  c.head_epochs = j.at("head_epochs").get<std::size_t>();
  c.head_lr = j.at("head_lr").get<double>();
  c.head_strict_as_printed = j.at("head_strict_as_printed").get<bool>();
  return c;
}

}  // namespace

void save_model(const ModelParams& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "icsf-checkpoint";
  j["version"] = 1;
  j["config"] = config_to_json(m.config);
  j["vocab_words"] = m.vocab.words();
  j["head_frozen"] = m.head.frozen;
  j["params"] = nlohmann::json::object();
  for (const Param* p : m.all_params()) {
    j["params"][p->name] = {
        {"rows", p->rows},
        {"cols", p->cols},
        {"values", p->value},
    };
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump();
  if (!out) throw std::runtime_error("write failed for " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "icsf-checkpoint")
    throw std::runtime_error("checkpoint " + path + ": unrecognized format");
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint " + path + ": unsupported version");

  ModelParams m;
  m.config = config_from_json(j.at("config"));
  m.vocab = Vocab::from_words(j.at("vocab_words").get<std::vector<std::string>>());
  m.init();
  for (Param* p : m.all_params()) {
    const auto& jp = j.at("params").at(p->name);
    if (jp.at("rows").get<std::size_t>() != p->rows || jp.at("cols").get<std::size_t>() != p->cols)
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + p->name);
    p->value = jp.at("values").get<std::vector<double>>();
  }
  if (j.at("head_frozen").get<bool>()) m.head.freeze();
  return m;
}

}  // namespace icsf
