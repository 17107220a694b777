#include "icsf/synth.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "icsf/rng.hpp"

namespace icsf {

std::vector<TemplateSpec> default_template_specs() {
  using S = SlotKind;
  const std::vector<std::string> protected_groups = {
      "zorblins", "quandrians", "gleemers", "cloudfolk", "starweavers", "treeborn",
  };
  const std::vector<std::string> plain_targets = {
      "plumbers", "accountants", "landlords", "beekeepers", "auditors", "jugglers",
  };
  const std::vector<std::string> stance_markers = {
      "it is nonsense to say that",
      "i cannot believe anyone thinks",
      "how absurd to claim that",
      "it is ridiculous to argue that",
  };

  TemplateSpec dehu;
  dehu.intent = IntentKind::Dehumanisation;
  dehu.pattern = "everyone knows {Target|ProtectedCharacteristic} {DehumanisingComparison}";
  dehu.lexicons[S::Target] = plain_targets;
  dehu.lexicons[S::ProtectedCharacteristic] = protected_groups;
  dehu.lexicons[S::DehumanisingComparison] = {
      "are basically rusty machines", "are nothing but soggy cardboard",
      "are walking furniture",        "resemble broken umbrellas",
      "are wind-up toys",
  };
  dehu.stance_markers = stance_markers;

  TemplateSpec threat;
  threat.intent = IntentKind::Threatening;
  threat.pattern = "{Target|ProtectedCharacteristic} {ThreateningSpeech} sooner or later";
  threat.lexicons[S::Target] = plain_targets;
  threat.lexicons[S::ProtectedCharacteristic] = protected_groups;
  threat.lexicons[S::ThreateningSpeech] = {
      "should be teleported to the moon", "must be shrunk by the shrink ray",
      "ought to be frozen in carbonite",  "should be banished to the pantry",
      "will be chased out by robots",
  };
  threat.stance_markers = stance_markers;

  TemplateSpec derog;
  derog.intent = IntentKind::Derogation;
  derog.pattern = "frankly {Target|ProtectedCharacteristic} {DerogatoryOpinion}";
  derog.lexicons[S::Target] = plain_targets;
  derog.lexicons[S::ProtectedCharacteristic] = protected_groups;
  derog.lexicons[S::DerogatoryOpinion] = {
      "are dreadfully dull",          "are hopeless at everything",
      "are utterly useless",          "have terrible taste in hats",
      "are embarrassingly clumsy",
  };
  derog.stance_markers = stance_markers;

  TemplateSpec animosity;
  animosity.intent = IntentKind::Animosity;
  animosity.pattern = "{Target|ProtectedCharacteristic} {NegativeOpinion} in my town";
  animosity.lexicons[S::Target] = plain_targets;
  animosity.lexicons[S::ProtectedCharacteristic] = protected_groups;
  animosity.lexicons[S::NegativeOpinion] = {
      "should keep to themselves",     "can stay away from our picnics",
      "do not belong around the square", "should do that somewhere else",
      "had better stay indoors",
  };
  animosity.stance_markers = stance_markers;

  TemplateSpec phc;
  phc.intent = IntentKind::ProHateCrime;
  phc.pattern = "{HateEntity} {Support} apparently";
  phc.lexicons[S::HateEntity] = {
      "the gloom legion", "lord vexar", "the shadow cabal", "the rust barons", "general malgrim",
  };
  phc.lexicons[S::Support] = {
      "was right all along", "did nothing wrong", "deserves our praise", "had the right idea",
  };
  phc.stance_markers = stance_markers;

  std::vector<TemplateSpec> specs = {dehu, threat, derog, animosity, phc};
  for (const char* text : {
           "i enjoyed the harvest festival today",
           "the weather has been lovely this week",
           "we repainted the garden fence yesterday",
           "my soup recipe finally worked out",
       }) {
    TemplateSpec neutral;
    neutral.intent = IntentKind::NotHateful;
    neutral.pattern = text;
    specs.push_back(neutral);
  }
  return specs;
}

namespace {

struct Segment {
  bool placeholder = false;
  std::string literal;
  std::vector<SlotKind> slots;  // for placeholders
};

std::vector<Segment> parse_pattern(const std::string& pattern, std::vector<std::string>* issues) {
  std::vector<Segment> segments;
  std::size_t i = 0;
  auto push_literal = [&](const std::string& s) {
    std::istringstream ss(s);  // normalize interior runs of spaces
    std::string word, joined;
    while (ss >> word) {
      if (!joined.empty()) joined += ' ';
      joined += word;
    }
    if (!joined.empty()) segments.push_back({false, joined, {}});
  };
  while (i < pattern.size()) {
    std::size_t open = pattern.find('{', i);
    if (open == std::string::npos) {
      push_literal(pattern.substr(i));
      break;
    }
    push_literal(pattern.substr(i, open - i));
    std::size_t close = pattern.find('}', open);
    if (close == std::string::npos) {
      if (issues) issues->push_back("pattern: unterminated placeholder in \"" + pattern + "\"");
      break;
    }
    Segment seg;
    seg.placeholder = true;
    std::string body = pattern.substr(open + 1, close - open - 1);
    std::size_t start = 0;
    while (start <= body.size()) {
      std::size_t bar = body.find('|', start);
      std::string name = body.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
      auto kind = slot_from_name(name);
      if (!kind) {
        if (issues) issues->push_back("pattern: unknown slot \"" + name + "\"");
      } else {
        seg.slots.push_back(*kind);
      }
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    segments.push_back(std::move(seg));
    i = close + 1;
  }
  return segments;
}

const PolicyRule* rule_for(IntentKind intent, const Policy& policy) {
  for (const PolicyRule& r : policy.rules)
    if (r.intent == intent) return &r;
  return nullptr;
}

// Slots a near-miss variant may drop: standalone placeholders, or the last
// slot of a compound (the remaining slots then draw from a different
// lexicon, keeping surface forms label-consistent).
std::vector<SlotKind> removable_slots(const std::vector<Segment>& segments) {
  std::vector<SlotKind> out;
  for (const Segment& seg : segments) {
    if (!seg.placeholder) continue;
    if (seg.slots.size() == 1) out.push_back(seg.slots[0]);
    else if (!seg.slots.empty()) out.push_back(seg.slots.back());
  }
  return out;
}

struct Instantiated {
  std::string text;
  std::vector<SlotAnnotation> annotations;
};

Instantiated instantiate(const TemplateSpec& spec, const std::vector<Segment>& segments,
                         const std::vector<SlotKind>& removed, bool stance, Rng& rng) {
  Instantiated out;
  auto append = [&](const std::string& piece) -> std::size_t {
    if (!out.text.empty()) out.text += ' ';
    std::size_t pos = out.text.size();
    out.text += piece;
    return pos;
  };
  for (const Segment& seg : segments) {
    if (!seg.placeholder) {
      append(seg.literal);
      continue;
    }
    std::vector<SlotKind> slots;
    for (SlotKind k : seg.slots)
      if (std::find(removed.begin(), removed.end(), k) == removed.end()) slots.push_back(k);
    if (slots.empty()) continue;
    const std::vector<std::string>& lex = spec.lexicons.at(slots.back());
    const std::string& word = lex[rng.index(lex.size())];
    std::size_t pos = append(word);
    for (SlotKind k : slots)
      out.annotations.push_back({k, pos, pos + word.size(), "a0", std::nullopt});
  }
  if (stance) {
    const std::string& marker = spec.stance_markers[rng.index(spec.stance_markers.size())];
    std::size_t shift = marker.size() + 1;
    for (SlotAnnotation& a : out.annotations) {
      a.start += shift;
      a.end += shift;
    }
    out.text = marker + " " + out.text;
    out.annotations.push_back({SlotKind::NegativeStance, 0, marker.size(), "a0", std::nullopt});
  }
  return out;
}

}  // namespace

std::vector<std::string> validate_specs(const std::vector<TemplateSpec>& specs,
                                        const Policy& policy) {
  std::vector<std::string> issues;
  bool any_hateful = false;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const TemplateSpec& spec = specs[i];
    std::string where = "template " + std::to_string(i) + " (" +
                        std::string(intent_name(spec.intent)) + ")";
    std::vector<std::string> pattern_issues;
    std::vector<Segment> segments = parse_pattern(spec.pattern, &pattern_issues);
    for (const std::string& s : pattern_issues) issues.push_back(where + ": " + s);

    SlotSet placeholder_slots;
    for (const Segment& seg : segments)
      for (SlotKind k : seg.slots) placeholder_slots.insert(k);

    const PolicyRule* rule = rule_for(spec.intent, policy);
    if (rule) {
      any_hateful = true;
      if (!(placeholder_slots == rule->required_slots))
        issues.push_back(where + ": placeholders do not match the rule's required slots");
      if (spec.stance_markers.empty())
        issues.push_back(where + ": hateful template needs stance markers");
    } else if (spec.intent == policy.fallback_intent) {
      if (!placeholder_slots.empty())
        issues.push_back(where + ": fallback-intent template must have no placeholders");
    } else {
      issues.push_back(where + ": intent has no rule in the policy");
    }

    for (SlotKind k : placeholder_slots.to_vector()) {
      auto it = spec.lexicons.find(k);
      if (it == spec.lexicons.end() || it->second.empty())
        issues.push_back(where + ": missing or empty lexicon for " + std::string(slot_name(k)));
      else
        for (const std::string& w : it->second)
          if (w.empty()) issues.push_back(where + ": empty lexicon entry for " + std::string(slot_name(k)));
    }
    if (spec.weight <= 0.0) issues.push_back(where + ": weight must be positive");
  }
  if (!any_hateful && !specs.empty()) issues.push_back("no template instantiates a hateful rule");
  return issues;
}

Generated generate_with_ledger(const std::vector<TemplateSpec>& specs, std::size_t n,
                               std::uint64_t seed, const Policy& policy) {
  if (n == 0) throw std::invalid_argument("generate: n must be at least 1");
  auto issues = validate_specs(specs, policy);
  if (!issues.empty()) throw std::invalid_argument("generate: " + issues.front());

  std::vector<std::size_t> hateful_idx, neutral_idx;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (rule_for(specs[i].intent, policy)) hateful_idx.push_back(i);
    else neutral_idx.push_back(i);
  }

  // category plan: hateful / near-miss / neutral / counter-speech
  enum class Cat { Hateful, NearMiss, Neutral, CounterSpeech };
  std::size_t n_hate = static_cast<std::size_t>(0.60 * static_cast<double>(n) + 0.5);
  std::size_t n_cs = static_cast<std::size_t>(0.15 * static_cast<double>(n) + 0.5);
  if (n_hate + n_cs > n) n_cs = n - n_hate;
  std::size_t n_near = n - n_hate - n_cs;
  std::size_t n_neutral = neutral_idx.empty() ? 0 : n_near / 5;
  n_near -= n_neutral;

  std::vector<Cat> plan;
  plan.insert(plan.end(), n_hate, Cat::Hateful);
  plan.insert(plan.end(), n_near, Cat::NearMiss);
  plan.insert(plan.end(), n_neutral, Cat::Neutral);
  plan.insert(plan.end(), n_cs, Cat::CounterSpeech);

  Rng rng(seed);
  rng.shuffle(plan);

  double hateful_weight = 0.0;
  for (std::size_t i : hateful_idx) hateful_weight += specs[i].weight;
  auto pick_hateful = [&]() -> const TemplateSpec& {
    double x = rng.uniform() * hateful_weight;
    for (std::size_t i : hateful_idx) {
      x -= specs[i].weight;
      if (x <= 0.0) return specs[i];
    }
    return specs[hateful_idx.back()];
  };

  Generated out;
  out.corpus.provenance = "synthetic seed=" + std::to_string(seed);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    PostRecord rec;
    rec.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);

    Instantiated inst;
    switch (plan[i]) {
      case Cat::Hateful: {
        const TemplateSpec& spec = pick_hateful();
        inst = instantiate(spec, parse_pattern(spec.pattern, nullptr), {}, false, rng);
        break;
      }
      case Cat::NearMiss: {
        const TemplateSpec& spec = pick_hateful();
        std::vector<Segment> segments = parse_pattern(spec.pattern, nullptr);
        std::vector<SlotKind> removable = removable_slots(segments);
        SlotKind removed = removable[rng.index(removable.size())];
        inst = instantiate(spec, segments, {removed}, false, rng);
        break;
      }
      case Cat::Neutral: {
        const TemplateSpec& spec = specs[neutral_idx[rng.index(neutral_idx.size())]];
        inst = instantiate(spec, parse_pattern(spec.pattern, nullptr), {}, false, rng);
        break;
      }
      case Cat::CounterSpeech: {
        const TemplateSpec& spec = pick_hateful();
        inst = instantiate(spec, parse_pattern(spec.pattern, nullptr), {}, true, rng);
        rec.counter_speech = true;
        break;
      }
    }

    rec.text = inst.text;
    rec.annotations = inst.annotations;
    SlotSet kinds;
    for (const SlotAnnotation& a : rec.annotations) kinds.insert(a.kind);
    rec.intent_label = infer_intent(kinds, policy);
    for (const SlotAnnotation& a : rec.annotations) {
      if (a.kind == SlotKind::Target || a.kind == SlotKind::HateEntity) {
        rec.targets.push_back(rec.text.substr(a.start, a.end - a.start));
        break;
      }
    }

    std::size_t ii = static_cast<std::size_t>(rec.intent_label);
    out.expected.instances[ii] += 1;
    for (const SlotAnnotation& a : rec.annotations)
      out.expected.slot_counts[ii][static_cast<std::size_t>(a.kind)] += 1;

    out.corpus.records.push_back(std::move(rec));
  }
  return out;
}

Corpus generate(const std::vector<TemplateSpec>& specs, std::size_t n, std::uint64_t seed,
                const Policy& policy) {
  return generate_with_ledger(specs, n, seed, policy).corpus;
}

std::vector<TemplateSpec> load_template_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("template specs " + path + ": " + e.what());
  }
  std::vector<TemplateSpec> specs;
  for (const auto& jt : j.at("templates")) {
    TemplateSpec spec;
    std::string intent = jt.at("intent").get<std::string>();
    auto ik = intent_from_name(intent);
    if (!ik) throw std::runtime_error("template specs: unknown intent \"" + intent + "\"");
    spec.intent = *ik;
    spec.pattern = jt.at("pattern").get<std::string>();
    if (jt.contains("lexicons")) {
      for (const auto& [slot, words] : jt.at("lexicons").items()) {
        auto sk = slot_from_name(slot);
        if (!sk) throw std::runtime_error("template specs: unknown slot \"" + slot + "\"");
        spec.lexicons[*sk] = words.get<std::vector<std::string>>();
      }
    }
    if (jt.contains("stance_markers"))
      spec.stance_markers = jt.at("stance_markers").get<std::vector<std::string>>();
    spec.weight = jt.value("weight", 1.0);
    specs.push_back(std::move(spec));
  }
  return specs;
}

}  // namespace icsf
