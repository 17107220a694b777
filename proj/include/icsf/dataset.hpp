#pragma once

// Ingestion, validation, and preprocessing of annotated post corpora, plus
// gold-tree construction.
//
// Corpus JSONL, one object per line:
//   {"id":str,"text":str,"intent":str,"targets":[str,...],
//    "annotations":[{"slot":str,"start":int,"end":int,"annotator":str,
//                    "target_index":int|null},...],
//    "counter_speech":bool,"reclaimed_terms":bool,"split":str|null}
// Prediction JSONL: {"id":str,"tree":str}.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icsf/policy.hpp"
#include "icsf/tree.hpp"

namespace icsf {

enum class Split { Train, Valid, Test };

std::string_view split_name(Split s);
std::optional<Split> split_from_name(std::string_view name);

// A half-open character interval [start, end) into the post text, marked by
// one annotator.
struct SlotAnnotation {
  SlotKind kind = SlotKind::Target;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string annotator;
  std::optional<int> target_index;
};

struct PostRecord {
  std::string id;
  std::string text;
  IntentKind intent_label = IntentKind::NotHateful;
  std::vector<std::string> targets;
  std::vector<SlotAnnotation> annotations;
  bool counter_speech = false;
  bool reclaimed_terms = false;
  std::optional<Split> split;
};

struct Corpus {
  std::vector<PostRecord> records;
  std::string provenance;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validation of one record against the schema invariants. Empty means valid.
std::vector<std::string> validate_record(const PostRecord& rec);

Corpus load_jsonl(const std::string& path);
void save_jsonl(const Corpus& corpus, const std::string& path);

// Serialization of a single record (exact on-disk line format).
std::string record_to_json_line(const PostRecord& rec);
PostRecord record_from_json_line(const std::string& line);

// One record per target descriptor. Annotations carrying a target_index go
// only to that derived record; unlinked non-Target annotations are copied to
// every derived record; the k-th unlinked Target annotation goes to record
// k mod T, which keeps the total Target count unchanged. Records with zero
// or one target pass through untouched.
std::vector<PostRecord> split_by_target(const PostRecord& rec);
Corpus split_corpus_by_target(const Corpus& corpus);

struct FilterResult {
  Corpus corpus;
  std::size_t removed = 0;
};

// Drops records flagged with reclaimed identity terms.
FilterResult filter_reclaimed(const Corpus& corpus);

// Relabels Animosity as Derogation and NegativeOpinion annotations as
// DerogatoryOpinion, for corpora that do not distinguish the two.
Corpus merge_animosity(const Corpus& corpus);

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

// Tags every record with a split such that per-intent proportions match the
// fractions under largest-remainder rounding. Deterministic per seed.
// Refuses corpora smaller than 10 records.
Corpus stratified_split(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

// Which annotator's annotations to use when building a gold tree.
struct AnnotatorSelector {
  // Empty means adjudicate: prefer the annotator whose annotations yield a
  // tree consistent with the stored intent label; ties broken by lowest
  // annotator id.
  std::string annotator;

  static AnnotatorSelector adjudicated() { return {}; }
  static AnnotatorSelector by_id(std::string id) { return {std::move(id)}; }
};

struct GoldTree {
  ParseTree tree;
  std::string annotator;  // whose annotations were used
  // Set when the stored intent label disagrees with the inferred intent.
  std::optional<std::string> label_disagreement;
};

// Converts the selected annotator's spans to token fillers (tokens fully
// covered by the span, ordered by span start) and attaches the inferred
// intent. Throws CorpusError when a span does not align with whole tokens.
GoldTree gold_tree(const PostRecord& rec, const Policy& policy,
                   const AnnotatorSelector& selector = AnnotatorSelector::adjudicated());

struct QuarantineEntry {
  std::string id;
  std::string reason;
};

struct GoldTreeSet {
  std::map<std::string, ParseTree> trees;  // record id -> gold tree
  std::vector<QuarantineEntry> quarantined;
};

// Gold trees for a whole corpus; records that fail construction or whose
// label disagrees with the rule engine land in the quarantine list (the
// disagreeing ones still get their inferred tree).
GoldTreeSet build_gold_trees(const Corpus& corpus, const Policy& policy);

// Occurrence counts keyed (intent label, slot kind) over the adjudicated
// annotation set of each record, plus per-intent instance counts.
struct CorpusStats {
  std::array<std::size_t, kIntentCount> instances{};
  std::array<std::array<std::size_t, kSlotCount>, kIntentCount> slot_counts{};

  std::size_t instances_of(IntentKind i) const { return instances[static_cast<std::size_t>(i)]; }
  std::size_t count(IntentKind i, SlotKind s) const {
    return slot_counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
  }
};

CorpusStats corpus_stats(const Corpus& corpus);

// Prediction JSONL: one {"id":str,"tree":str} object per line.
struct PredictionRow {
  std::string id;
  std::string tree;  // linearized tree string
};

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path);
std::vector<PredictionRow> load_predictions(const std::string& path);

}  // namespace icsf
