#pragma once

// Evaluation measures: production-F1 family, exact-match accuracy, intent
// and binary F1, and LCS-based annotator agreement.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icsf/dataset.hpp"
#include "icsf/policy.hpp"
#include "icsf/tree.hpp"

namespace icsf {

struct TreePair {
  std::string id;
  ParseTree gold;
  ParseTree pred;
};

// Gold/pred trees aligned by record id. Ids present on only one side are
// collected instead of scored.
struct PairedTrees {
  std::vector<TreePair> pairs;
  std::vector<std::string> gold_only;
  std::vector<std::string> pred_only;
};

PairedTrees align_by_id(const std::map<std::string, ParseTree>& gold,
                        const std::map<std::string, ParseTree>& pred);

enum class ProductionLevelFilter { All, Top, Lower };

// One score over all instances plus restrictions to gold-hateful (H) and
// gold-non-hateful (NH) instances. Empty partitions are absent, not zero.
struct PartitionedScore {
  std::optional<double> hateful;
  std::optional<double> non_hateful;
  std::optional<double> all;
};

struct MetricReport {
  PartitionedScore pf1;        // both production levels pooled
  PartitionedScore pf1_top;    // (intent, slot kind) edges
  PartitionedScore pf1_lower;  // (slot kind, word sequence), capped at the
                               // per-kind multiset minimum across the pair
  PartitionedScore ema;        // exact tree match
  double intent_f1 = 0.0;      // macro over intent classes present in gold
  double binary_f1 = 0.0;      // F1 of the hateful class
  std::size_t pair_count = 0;
  std::size_t gold_production_count = 0;
  std::size_t pred_production_count = 0;
  std::size_t unmatched_gold = 0;
  std::size_t unmatched_pred = 0;
};

// Micro precision/recall/F1 over production multisets. Both trees of every
// pair must be mask-free.
PartitionedScore production_f1(const std::vector<TreePair>& pairs, const Policy& policy,
                               ProductionLevelFilter level);

PartitionedScore exact_match(const std::vector<TreePair>& pairs, const Policy& policy);

double intent_f1(const std::vector<TreePair>& pairs);

double binary_f1(const std::vector<TreePair>& pairs, const Policy& policy);

MetricReport evaluate(const PairedTrees& paired, const Policy& policy);

// Length of the token-level longest common subsequence, normalized by the
// longer sequence. Both sequences must be non-empty.
double lcs_agreement(const std::vector<std::string>& span_a, const std::vector<std::string>& span_b);

struct AgreementCell {
  double mean_score = 0.0;
  std::size_t pair_count = 0;  // contributing (post, annotator pair) items
};

// Mean pairwise LCS between annotators, per (intent label, slot kind).
// A pair where only one side marked the slot scores 0; slots neither side
// marked are skipped. Cells with no contributing pairs are absent.
struct AgreementReport {
  std::map<std::pair<IntentKind, SlotKind>, AgreementCell> cells;
};

AgreementReport corpus_agreement(const Corpus& corpus);

// Each annotator scored against the adjudicated tree of the remaining
// annotators, pooled over all (record, annotator) pairs.
MetricReport human_upper_bound(const Corpus& corpus, const Policy& policy);

// Single JSON document with the fields of MetricReport (values in [0,1],
// absent cells null).
std::string metric_report_to_json(const MetricReport& report);
std::string agreement_report_to_json(const AgreementReport& report);

// Human-readable table; percentages with 2 decimals.
std::string metric_report_to_text(const MetricReport& report);

}  // namespace icsf
