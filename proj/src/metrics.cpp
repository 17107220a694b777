#include "icsf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace icsf {

PairedTrees align_by_id(const std::map<std::string, ParseTree>& gold,
                        const std::map<std::string, ParseTree>& pred) {
  PairedTrees out;
  for (const auto& [id, gtree] : gold) {
    auto it = pred.find(id);
    if (it == pred.end()) out.gold_only.push_back(id);
    else out.pairs.push_back({id, gtree, it->second});
  }
  for (const auto& [id, ptree] : pred)
    if (!gold.count(id)) out.pred_only.push_back(id);
  return out;
}

namespace {

// Multiset of production keys with sorted-vector representation.
std::vector<std::string> production_keys(const ParseTree& tree, ProductionLevelFilter level) {
  std::vector<std::string> keys;
  for (const Production& p : productions(tree)) {
    if (level == ProductionLevelFilter::Top && p.level != ProductionLevel::Top) continue;
    if (level == ProductionLevelFilter::Lower && p.level != ProductionLevel::Lower) continue;
    keys.push_back(p.key());
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::size_t multiset_intersection_size(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  std::size_t n = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { ++n; ++i; ++j; }
  }
  return n;
}

struct MicroCounts {
  std::size_t matched = 0;
  std::size_t gold_total = 0;
  std::size_t pred_total = 0;

  void add(const MicroCounts& o) {
    matched += o.matched;
    gold_total += o.gold_total;
    pred_total += o.pred_total;
  }

  // Absent when the universe is empty on both sides (nothing to grade).
  std::optional<double> f1() const {
    if (gold_total == 0 && pred_total == 0) return std::nullopt;
    if (matched == 0) return 0.0;
    double p = static_cast<double>(matched) / static_cast<double>(pred_total);
    double r = static_cast<double>(matched) / static_cast<double>(gold_total);
    return 2.0 * p * r / (p + r);
  }
};

// Lower level: per slot kind, both sides enter with the multiset-minimum
// multiplicity across the pair.
MicroCounts lower_level_counts(const TreePair& pair) {
  std::array<std::size_t, kSlotCount> gold_kind{}, pred_kind{};
  for (const SlotFiller& f : pair.gold.slots) gold_kind[static_cast<std::size_t>(f.kind)] += 1;
  for (const SlotFiller& f : pair.pred.slots) pred_kind[static_cast<std::size_t>(f.kind)] += 1;

  MicroCounts c;
  auto gold_keys = production_keys(pair.gold, ProductionLevelFilter::Lower);
  auto pred_keys = production_keys(pair.pred, ProductionLevelFilter::Lower);

  for (std::size_t k = 0; k < kSlotCount; ++k) {
    std::size_t cap = std::min(gold_kind[k], pred_kind[k]);
    if (cap == 0) continue;
    std::string prefix = std::string(slot_surface(static_cast<SlotKind>(k))) + " -> ";
    auto with_prefix = [&](const std::vector<std::string>& keys) {
      std::vector<std::string> out;
      for (const std::string& key : keys)
        if (key.rfind(prefix, 0) == 0) out.push_back(key);
      return out;
    };
    std::vector<std::string> g = with_prefix(gold_keys);
    std::vector<std::string> p = with_prefix(pred_keys);
    c.matched += std::min(multiset_intersection_size(g, p), cap);
    c.gold_total += cap;
    c.pred_total += cap;
  }
  return c;
}

MicroCounts pair_counts(const TreePair& pair, ProductionLevelFilter level) {
  if (level == ProductionLevelFilter::Lower) return lower_level_counts(pair);
  MicroCounts c;
  auto gold_keys = production_keys(pair.gold, level);
  auto pred_keys = production_keys(pair.pred, level);
  c.matched = multiset_intersection_size(gold_keys, pred_keys);
  c.gold_total = gold_keys.size();
  c.pred_total = pred_keys.size();
  return c;
}

}  // namespace

PartitionedScore production_f1(const std::vector<TreePair>& pairs, const Policy& policy,
                               ProductionLevelFilter level) {
  MicroCounts all, hateful, non_hateful;
  std::size_t n_h = 0, n_nh = 0;
  for (const TreePair& pair : pairs) {
    MicroCounts c = pair_counts(pair, level);
    all.add(c);
    if (is_hateful(pair.gold.intent, policy)) { hateful.add(c); ++n_h; }
    else { non_hateful.add(c); ++n_nh; }
  }
  PartitionedScore score;
  if (!pairs.empty()) score.all = all.f1();
  if (n_h > 0) score.hateful = hateful.f1();
  if (n_nh > 0) score.non_hateful = non_hateful.f1();
  return score;
}

PartitionedScore exact_match(const std::vector<TreePair>& pairs, const Policy& policy) {
  std::size_t hit_all = 0, hit_h = 0, hit_nh = 0, n_h = 0, n_nh = 0;
  for (const TreePair& pair : pairs) {
    bool hit = pair.gold == pair.pred;
    hit_all += hit;
    if (is_hateful(pair.gold.intent, policy)) { ++n_h; hit_h += hit; }
    else { ++n_nh; hit_nh += hit; }
  }
  PartitionedScore score;
  if (!pairs.empty()) score.all = static_cast<double>(hit_all) / static_cast<double>(pairs.size());
  if (n_h > 0) score.hateful = static_cast<double>(hit_h) / static_cast<double>(n_h);
  if (n_nh > 0) score.non_hateful = static_cast<double>(hit_nh) / static_cast<double>(n_nh);
  return score;
}

double intent_f1(const std::vector<TreePair>& pairs) {
  std::array<std::size_t, kIntentCount> tp{}, fp{}, fn{}, gold_seen{};
  for (const TreePair& pair : pairs) {
    std::size_t g = static_cast<std::size_t>(pair.gold.intent);
    std::size_t p = static_cast<std::size_t>(pair.pred.intent);
    gold_seen[g] += 1;
    if (g == p) tp[g] += 1;
    else { fn[g] += 1; fp[p] += 1; }
  }
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < kIntentCount; ++c) {
    if (gold_seen[c] == 0) continue;
    ++classes;
    double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return classes > 0 ? sum / static_cast<double>(classes) : 0.0;
}

double binary_f1(const std::vector<TreePair>& pairs, const Policy& policy) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const TreePair& pair : pairs) {
    bool g = is_hateful(pair.gold.intent, policy);
    bool p = is_hateful(pair.pred.intent, policy);
    if (g && p) ++tp;
    else if (!g && p) ++fp;
    else if (g && !p) ++fn;
  }
  double denom = static_cast<double>(2 * tp + fp + fn);
  return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 1.0;
}

MetricReport evaluate(const PairedTrees& paired, const Policy& policy) {
  MetricReport report;
  report.pf1 = production_f1(paired.pairs, policy, ProductionLevelFilter::All);
  report.pf1_top = production_f1(paired.pairs, policy, ProductionLevelFilter::Top);
  report.pf1_lower = production_f1(paired.pairs, policy, ProductionLevelFilter::Lower);
  report.ema = exact_match(paired.pairs, policy);
  report.intent_f1 = intent_f1(paired.pairs);
  report.binary_f1 = binary_f1(paired.pairs, policy);
  report.pair_count = paired.pairs.size();
  for (const TreePair& pair : paired.pairs) {
    report.gold_production_count += 2 * pair.gold.slots.size();
    report.pred_production_count += 2 * pair.pred.slots.size();
  }
  report.unmatched_gold = paired.gold_only.size();
  report.unmatched_pred = paired.pred_only.size();
  return report;
}

double lcs_agreement(const std::vector<std::string>& span_a, const std::vector<std::string>& span_b) {
  if (span_a.empty() || span_b.empty())
    throw std::invalid_argument("lcs_agreement: empty span");
  const std::size_t n = span_a.size(), m = span_b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (span_a[i - 1] == span_b[j - 1]) cur[j] = prev[j - 1] + 1;
      else cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

namespace {

// All words of one annotator's spans of one slot kind, ordered by span.
std::vector<std::vector<std::string>> annotator_slot_spans(const PostRecord& rec,
                                                           const std::string& annotator,
                                                           SlotKind kind) {
  std::vector<const SlotAnnotation*> anns;
  for (const SlotAnnotation& a : rec.annotations)
    if (a.annotator == annotator && a.kind == kind) anns.push_back(&a);
  std::sort(anns.begin(), anns.end(),
            [](const SlotAnnotation* a, const SlotAnnotation* b) { return a->start < b->start; });
  std::vector<std::vector<std::string>> spans;
  for (const SlotAnnotation* a : anns) {
    std::vector<std::string> words =
        tokenize(std::string_view(rec.text).substr(a->start, a->end - a->start));
    if (!words.empty()) spans.push_back(std::move(words));
  }
  return spans;
}

std::vector<std::string> record_annotators(const PostRecord& rec) {
  std::vector<std::string> ids;
  for (const SlotAnnotation& a : rec.annotations)
    if (std::find(ids.begin(), ids.end(), a.annotator) == ids.end()) ids.push_back(a.annotator);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

AgreementReport corpus_agreement(const Corpus& corpus) {
  std::map<std::pair<IntentKind, SlotKind>, std::pair<double, std::size_t>> sums;
  for (const PostRecord& rec : corpus.records) {
    std::vector<std::string> ids = record_annotators(rec);
    if (ids.size() < 2) continue;
    for (SlotKind kind : all_slots()) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
          auto spans_i = annotator_slot_spans(rec, ids[i], kind);
          auto spans_j = annotator_slot_spans(rec, ids[j], kind);
          if (spans_i.empty() && spans_j.empty()) continue;  // neither marked it
          double score = 0.0;
          if (!spans_i.empty() && !spans_j.empty()) {
            // Align spans by order; unpaired extras are ignored.
            std::size_t paired = std::min(spans_i.size(), spans_j.size());
            for (std::size_t k = 0; k < paired; ++k)
              score += lcs_agreement(spans_i[k], spans_j[k]);
            score /= static_cast<double>(paired);
          }
          auto& cell = sums[{rec.intent_label, kind}];
          cell.first += score;
          cell.second += 1;
        }
      }
    }
  }
  AgreementReport report;
  for (const auto& [key, sum] : sums)
    report.cells[key] = {sum.first / static_cast<double>(sum.second), sum.second};
  return report;
}

MetricReport human_upper_bound(const Corpus& corpus, const Policy& policy) {
  std::map<std::string, ParseTree> gold, pred;
  for (const PostRecord& rec : corpus.records) {
    std::vector<std::string> ids = record_annotators(rec);
    if (ids.size() < 2) continue;
    for (const std::string& held_out : ids) {
      PostRecord others = rec;
      others.annotations.clear();
      for (const SlotAnnotation& a : rec.annotations)
        if (a.annotator != held_out) others.annotations.push_back(a);
      try {
        ParseTree reference = gold_tree(others, policy).tree;
        ParseTree candidate = gold_tree(rec, policy, AnnotatorSelector::by_id(held_out)).tree;
        std::string key = rec.id + "#" + held_out;
        gold[key] = reference;
        pred[key] = candidate;
      } catch (const CorpusError&) {
        // unalignable spans contribute nothing to the upper bound
      }
    }
  }
  return evaluate(align_by_id(gold, pred), policy);
}

namespace {

nlohmann::json score_to_json(const PartitionedScore& s) {
  nlohmann::json j;
  j["h"] = s.hateful ? nlohmann::json(*s.hateful) : nlohmann::json(nullptr);
  j["nh"] = s.non_hateful ? nlohmann::json(*s.non_hateful) : nlohmann::json(nullptr);
  j["all"] = s.all ? nlohmann::json(*s.all) : nlohmann::json(nullptr);
  return j;
}

std::string pct(const std::optional<double>& v) {
  if (!v) return "  ---";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << (*v * 100.0);
  return ss.str();
}

}  // namespace

std::string metric_report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["pf1"] = score_to_json(report.pf1);
  j["pf1_top"] = score_to_json(report.pf1_top);
  j["pf1_lower"] = score_to_json(report.pf1_lower);
  j["ema"] = score_to_json(report.ema);
  j["intent_f1"] = report.intent_f1;
  j["binary_f1"] = report.binary_f1;
  j["counts"] = {
      {"pairs", report.pair_count},
      {"gold_productions", report.gold_production_count},
      {"pred_productions", report.pred_production_count},
      {"unmatched_gold", report.unmatched_gold},
      {"unmatched_pred", report.unmatched_pred},
  };
  return j.dump(2);
}

std::string agreement_report_to_json(const AgreementReport& report) {
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& [key, cell] : report.cells) {
    j["cells"].push_back({
        {"intent", std::string(intent_name(key.first))},
        {"slot", std::string(slot_name(key.second))},
        {"lcs", cell.mean_score},
        {"pairs", cell.pair_count},
    });
  }
  return j.dump(2);
}

std::string metric_report_to_text(const MetricReport& report) {
  std::ostringstream ss;
  ss << "metric        H       NH      All\n";
  auto row = [&](const char* name, const PartitionedScore& s) {
    ss << std::left << std::setw(12) << name << "  " << std::right << std::setw(6) << pct(s.hateful)
       << "  " << std::setw(6) << pct(s.non_hateful) << "  " << std::setw(6) << pct(s.all) << "\n";
  };
  row("PF1", report.pf1);
  row("PF1_top", report.pf1_top);
  row("PF1_lower", report.pf1_lower);
  row("EMA", report.ema);
  ss << std::left << std::setw(12) << "intent F1" << "  " << pct(report.intent_f1) << "\n";
  ss << std::left << std::setw(12) << "binary F1" << "  " << pct(report.binary_f1) << "\n";
  ss << "pairs: " << report.pair_count << " (unmatched gold " << report.unmatched_gold
     << ", unmatched pred " << report.unmatched_pred << ")\n";
  return ss.str();
}

}  // namespace icsf
