#include "icsf/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icsf/rng.hpp"

namespace icsf {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

std::vector<std::string> validate_record(const PostRecord& rec) {
  std::vector<std::string> issues;
  if (rec.id.empty()) issues.push_back("empty id");
  for (std::size_t i = 0; i < rec.annotations.size(); ++i) {
    const SlotAnnotation& a = rec.annotations[i];
    std::string where = "annotation " + std::to_string(i) + " (" + std::string(slot_name(a.kind)) + ")";
    if (a.start >= a.end || a.end > rec.text.size()) {
      issues.push_back(where + ": span [" + std::to_string(a.start) + "," + std::to_string(a.end) +
                       ") out of range for text of length " + std::to_string(rec.text.size()));
      continue;
    }
    std::string_view span = std::string_view(rec.text).substr(a.start, a.end - a.start);
    bool blank = std::all_of(span.begin(), span.end(),
                             [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    if (blank) issues.push_back(where + ": span is blank");
    if (a.target_index && (*a.target_index < 0 ||
                           static_cast<std::size_t>(*a.target_index) >= std::max<std::size_t>(rec.targets.size(), 1)))
      issues.push_back(where + ": target_index " + std::to_string(*a.target_index) + " out of range");
  }
  if (rec.intent_label != IntentKind::NotHateful && rec.counter_speech)
    issues.push_back("hateful intent label with counter_speech set");
  return issues;
}

namespace {

using nlohmann::json;

const json& require_field(const json& obj, const char* field) {
  if (!obj.contains(field)) throw CorpusError(std::string("missing field \"") + field + "\"");
  return obj.at(field);
}

}  // namespace

std::string record_to_json_line(const PostRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["text"] = rec.text;
  j["intent"] = std::string(intent_name(rec.intent_label));
  j["targets"] = rec.targets;
  j["annotations"] = json::array();
  for (const SlotAnnotation& a : rec.annotations) {
    json ja;
    ja["slot"] = std::string(slot_name(a.kind));
    ja["start"] = a.start;
    ja["end"] = a.end;
    ja["annotator"] = a.annotator;
    if (a.target_index) ja["target_index"] = *a.target_index;
    else ja["target_index"] = nullptr;
    j["annotations"].push_back(ja);
  }
  j["counter_speech"] = rec.counter_speech;
  j["reclaimed_terms"] = rec.reclaimed_terms;
  if (rec.split) j["split"] = std::string(split_name(*rec.split));
  else j["split"] = nullptr;
  return j.dump();
}

PostRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("malformed JSON: ") + e.what());
  }
  PostRecord rec;
  rec.id = require_field(j, "id").get<std::string>();
  rec.text = require_field(j, "text").get<std::string>();
  std::string intent = require_field(j, "intent").get<std::string>();
  auto ik = intent_from_name(intent);
  if (!ik) throw CorpusError("unknown intent \"" + intent + "\"");
  rec.intent_label = *ik;
  for (const auto& jt : require_field(j, "targets")) rec.targets.push_back(jt.get<std::string>());
  for (const auto& ja : require_field(j, "annotations")) {
    SlotAnnotation a;
    std::string slot = require_field(ja, "slot").get<std::string>();
    auto sk = slot_from_name(slot);
    if (!sk) throw CorpusError("unknown slot \"" + slot + "\"");
    a.kind = *sk;
    a.start = require_field(ja, "start").get<std::size_t>();
    a.end = require_field(ja, "end").get<std::size_t>();
    a.annotator = require_field(ja, "annotator").get<std::string>();
    if (ja.contains("target_index") && !ja.at("target_index").is_null())
      a.target_index = ja.at("target_index").get<int>();
    rec.annotations.push_back(a);
  }
  rec.counter_speech = require_field(j, "counter_speech").get<bool>();
  rec.reclaimed_terms = require_field(j, "reclaimed_terms").get<bool>();
  if (j.contains("split") && !j.at("split").is_null()) {
    std::string s = j.at("split").get<std::string>();
    auto sp = split_from_name(s);
    if (!sp) throw CorpusError("unknown split \"" + s + "\"");
    rec.split = sp;
  }
  auto issues = validate_record(rec);
  if (!issues.empty()) throw CorpusError("record \"" + rec.id + "\": " + issues.front());
  return rec;
}

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path);
  Corpus corpus;
  corpus.provenance = path;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = std::all_of(line.begin(), line.end(),
                             [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    if (blank) continue;
    try {
      PostRecord rec = record_from_json_line(line);
      if (!seen_ids.insert(rec.id).second)
        throw CorpusError("duplicate id \"" + rec.id + "\"");
      corpus.records.push_back(std::move(rec));
    } catch (const CorpusError& e) {
      throw CorpusError(path + ", line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot open " + path + " for writing");
  for (const PostRecord& rec : corpus.records) out << record_to_json_line(rec) << '\n';
  if (!out) throw CorpusError("write failed for " + path);
}

std::vector<PostRecord> split_by_target(const PostRecord& rec) {
  const std::size_t t = rec.targets.size();
  if (t <= 1) return {rec};
  std::vector<PostRecord> out(t);
  for (std::size_t i = 0; i < t; ++i) {
    out[i] = rec;
    out[i].id = rec.id + "#t" + std::to_string(i);
    out[i].targets = {rec.targets[i]};
    out[i].annotations.clear();
  }
  std::size_t unlinked_targets = 0;
  for (const SlotAnnotation& a : rec.annotations) {
    if (a.target_index) {
      std::size_t idx = static_cast<std::size_t>(*a.target_index);
      out[std::min(idx, t - 1)].annotations.push_back(a);
    } else if (a.kind == SlotKind::Target) {
      out[unlinked_targets % t].annotations.push_back(a);
      ++unlinked_targets;
    } else {
      for (auto& derived : out) derived.annotations.push_back(a);
    }
  }
  return out;
}

Corpus split_corpus_by_target(const Corpus& corpus) {
  Corpus out;
  out.provenance = corpus.provenance;
  for (const PostRecord& rec : corpus.records)
    for (PostRecord& derived : split_by_target(rec)) out.records.push_back(std::move(derived));
  return out;
}

FilterResult filter_reclaimed(const Corpus& corpus) {
  FilterResult result;
  result.corpus.provenance = corpus.provenance;
  for (const PostRecord& rec : corpus.records) {
    if (rec.reclaimed_terms) ++result.removed;
    else result.corpus.records.push_back(rec);
  }
  return result;
}

Corpus merge_animosity(const Corpus& corpus) {
  Corpus out = corpus;
  for (PostRecord& rec : out.records) {
    if (rec.intent_label == IntentKind::Animosity) rec.intent_label = IntentKind::Derogation;
    for (SlotAnnotation& a : rec.annotations)
      if (a.kind == SlotKind::NegativeOpinion) a.kind = SlotKind::DerogatoryOpinion;
  }
  return out;
}

Corpus stratified_split(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed) {
  const double sum = fractions.train + fractions.valid + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) throw CorpusError("split fractions must sum to 1");
  if (corpus.records.size() < 10)
    throw CorpusError("refusing to split a corpus of " + std::to_string(corpus.records.size()) +
                      " records (need at least 10)");

  Corpus out = corpus;
  Rng rng(seed);
  const double fr[3] = {fractions.train, fractions.valid, fractions.test};
  for (IntentKind intent : all_intents()) {
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < out.records.size(); ++i)
      if (out.records[i].intent_label == intent) group.push_back(i);
    if (group.empty()) continue;
    rng.shuffle(group);

    // Largest-remainder seat allocation per split.
    const std::size_t n = group.size();
    std::size_t seats[3];
    double remainder[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      double quota = static_cast<double>(n) * fr[s];
      seats[s] = static_cast<std::size_t>(quota);
      remainder[s] = quota - static_cast<double>(seats[s]);
      assigned += seats[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (remainder[s] > remainder[best]) best = s;
      seats[best] += 1;
      remainder[best] = -1.0;
      ++assigned;
    }

    std::size_t cursor = 0;
    const Split order[3] = {Split::Train, Split::Valid, Split::Test};
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < seats[s]; ++k) out.records[group[cursor++]].split = order[s];
  }
  return out;
}

namespace {

// Converts one annotator's annotations to span-ordered fillers. Throws when
// a span does not align with whole tokens.
std::vector<SlotFiller> fillers_from_annotations(const PostRecord& rec,
                                                 std::vector<SlotAnnotation> anns) {
  std::vector<TextToken> tokens = tokenize_spans(rec.text);
  std::stable_sort(anns.begin(), anns.end(), [](const SlotAnnotation& a, const SlotAnnotation& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  std::vector<SlotFiller> fillers;
  for (const SlotAnnotation& a : anns) {
    std::vector<SpanToken> covered;
    for (std::size_t ti = 0; ti < tokens.size(); ++ti) {
      const TextToken& t = tokens[ti];
      bool inside = t.begin >= a.start && t.end <= a.end;
      bool overlaps = t.begin < a.end && t.end > a.start;
      if (inside) {
        covered.push_back({t.text, static_cast<int>(ti)});
      } else if (overlaps) {
        throw CorpusError("record \"" + rec.id + "\": " + std::string(slot_name(a.kind)) + " span [" +
                          std::to_string(a.start) + "," + std::to_string(a.end) +
                          ") cuts through token \"" + t.text + "\"");
      }
    }
    if (covered.empty())
      throw CorpusError("record \"" + rec.id + "\": " + std::string(slot_name(a.kind)) + " span [" +
                        std::to_string(a.start) + "," + std::to_string(a.end) +
                        ") covers no whole token");
    fillers.push_back(SlotFiller::with_tokens(a.kind, std::move(covered)));
  }
  return fillers;
}

std::vector<std::string> annotator_ids(const PostRecord& rec) {
  std::set<std::string> ids;
  for (const SlotAnnotation& a : rec.annotations) ids.insert(a.annotator);
  return {ids.begin(), ids.end()};
}

std::vector<SlotAnnotation> annotations_of(const PostRecord& rec, const std::string& annotator) {
  std::vector<SlotAnnotation> out;
  for (const SlotAnnotation& a : rec.annotations)
    if (a.annotator == annotator) out.push_back(a);
  return out;
}

}  // namespace

GoldTree gold_tree(const PostRecord& rec, const Policy& policy, const AnnotatorSelector& selector) {
  GoldTree result;
  if (!selector.annotator.empty()) {
    result.annotator = selector.annotator;
    result.tree = attach_intent(fillers_from_annotations(rec, annotations_of(rec, selector.annotator)),
                                policy);
  } else {
    std::vector<std::string> ids = annotator_ids(rec);
    if (ids.empty()) {
      result.tree = attach_intent({}, policy);
    } else {
      // Adjudication: first annotator (by id) whose tree matches the stored
      // label; else the first annotator whose spans are usable at all.
      std::optional<GoldTree> fallback;
      std::optional<CorpusError> first_error;
      bool chosen = false;
      for (const std::string& id : ids) {
        try {
          ParseTree t = attach_intent(fillers_from_annotations(rec, annotations_of(rec, id)), policy);
          if (!fallback) fallback = GoldTree{t, id, std::nullopt};
          if (t.intent == rec.intent_label) {
            result.tree = t;
            result.annotator = id;
            chosen = true;
            break;
          }
        } catch (const CorpusError& e) {
          if (!first_error) first_error = e;
        }
      }
      if (!chosen) {
        if (!fallback) throw *first_error;
        result = *fallback;
      }
    }
  }
  if (result.tree.intent != rec.intent_label) {
    result.label_disagreement = "record \"" + rec.id + "\": stored label " +
                                std::string(intent_name(rec.intent_label)) +
                                " but slots imply " + std::string(intent_name(result.tree.intent));
  }
  return result;
}

GoldTreeSet build_gold_trees(const Corpus& corpus, const Policy& policy) {
  GoldTreeSet out;
  for (const PostRecord& rec : corpus.records) {
    try {
      GoldTree g = gold_tree(rec, policy);
      out.trees[rec.id] = g.tree;
      if (g.label_disagreement) out.quarantined.push_back({rec.id, *g.label_disagreement});
    } catch (const CorpusError& e) {
      out.quarantined.push_back({rec.id, e.what()});
    }
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  const Policy policy = default_policy();
  for (const PostRecord& rec : corpus.records) {
    std::size_t ii = static_cast<std::size_t>(rec.intent_label);
    stats.instances[ii] += 1;
    // Adjudicate on slot-kind sets alone (intent inference never looks at
    // filler text), so stats stay available even for unalignable spans.
    std::vector<std::string> ids = annotator_ids(rec);
    if (ids.empty()) continue;
    std::string chosen = ids.front();
    for (const std::string& id : ids) {
      SlotSet kinds;
      for (const SlotAnnotation& a : annotations_of(rec, id)) kinds.insert(a.kind);
      if (infer_intent(kinds, policy) == rec.intent_label) {
        chosen = id;
        break;
      }
    }
    for (const SlotAnnotation& a : annotations_of(rec, chosen))
      stats.slot_counts[ii][static_cast<std::size_t>(a.kind)] += 1;
  }
  return stats;
}

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot open " + path + " for writing");
  for (const PredictionRow& row : rows) {
    json j;
    j["id"] = row.id;
    j["tree"] = row.tree;
    out << j.dump() << '\n';
  }
  if (!out) throw CorpusError("write failed for " + path);
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path);
  std::vector<PredictionRow> rows;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = std::all_of(line.begin(), line.end(),
                             [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    if (blank) continue;
    try {
      json j = json::parse(line);
      PredictionRow row;
      row.id = require_field(j, "id").get<std::string>();
      row.tree = require_field(j, "tree").get<std::string>();
      if (!seen.insert(row.id).second) throw CorpusError("duplicate id \"" + row.id + "\"");
      rows.push_back(std::move(row));
    } catch (const json::parse_error& e) {
      throw CorpusError(path + ", line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const CorpusError& e) {
      throw CorpusError(path + ", line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace icsf
