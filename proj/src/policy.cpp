#include "icsf/policy.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace icsf {

namespace {

constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "Target",
    "ProtectedCharacteristic",
    "DehumanisingComparison",
    "ThreateningSpeech",
    "DerogatoryOpinion",
    "NegativeOpinion",
    "HateEntity",
    "Support",
    "NegativeStance",
};

constexpr std::array<std::string_view, kIntentCount> kIntentNames = {
    "Dehumanisation", "Threatening", "Derogation",
    "Animosity",      "ProHateCrime", "NotHateful",
};

std::string with_prefix(std::string_view prefix, std::string_view name) {
  std::string s(prefix);
  s += name;
  return s;
}

const std::array<std::string, kSlotCount>& slot_surfaces() {
  static const std::array<std::string, kSlotCount> surfaces = [] {
    std::array<std::string, kSlotCount> a;
    for (std::size_t i = 0; i < kSlotCount; ++i) a[i] = with_prefix("SL:", kSlotNames[i]);
    return a;
  }();
  return surfaces;
}

const std::array<std::string, kIntentCount>& intent_surfaces() {
  static const std::array<std::string, kIntentCount> surfaces = [] {
    std::array<std::string, kIntentCount> a;
    for (std::size_t i = 0; i < kIntentCount; ++i) a[i] = with_prefix("IN:", kIntentNames[i]);
    return a;
  }();
  return surfaces;
}

}  // namespace

const std::vector<SlotKind>& all_slots() {
  static const std::vector<SlotKind> slots = [] {
    std::vector<SlotKind> v;
    for (std::size_t i = 0; i < kSlotCount; ++i) v.push_back(static_cast<SlotKind>(i));
    return v;
  }();
  return slots;
}

const std::vector<IntentKind>& all_intents() {
  static const std::vector<IntentKind> intents = [] {
    std::vector<IntentKind> v;
    for (std::size_t i = 0; i < kIntentCount; ++i) v.push_back(static_cast<IntentKind>(i));
    return v;
  }();
  return intents;
}

std::string_view slot_name(SlotKind k) { return kSlotNames[static_cast<std::size_t>(k)]; }
std::string_view slot_surface(SlotKind k) { return slot_surfaces()[static_cast<std::size_t>(k)]; }
std::string_view intent_name(IntentKind k) { return kIntentNames[static_cast<std::size_t>(k)]; }
std::string_view intent_surface(IntentKind k) { return intent_surfaces()[static_cast<std::size_t>(k)]; }

std::optional<SlotKind> slot_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kSlotCount; ++i)
    if (kSlotNames[i] == name) return static_cast<SlotKind>(i);
  return std::nullopt;
}

std::optional<SlotKind> slot_from_surface(std::string_view surface) {
  if (surface.substr(0, 3) != "SL:") return std::nullopt;
  return slot_from_name(surface.substr(3));
}

std::optional<IntentKind> intent_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kIntentCount; ++i)
    if (kIntentNames[i] == name) return static_cast<IntentKind>(i);
  return std::nullopt;
}

std::optional<IntentKind> intent_from_surface(std::string_view surface) {
  if (surface.substr(0, 3) != "IN:") return std::nullopt;
  return intent_from_name(surface.substr(3));
}

std::vector<SlotKind> SlotSet::to_vector() const {
  std::vector<SlotKind> v;
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    SlotKind k = static_cast<SlotKind>(i);
    if (contains(k)) v.push_back(k);
  }
  return v;
}

Policy default_policy() {
  using S = SlotKind;
  Policy p;
  p.rules = {
      {IntentKind::Dehumanisation,
       {S::Target, S::ProtectedCharacteristic, S::DehumanisingComparison},
       true},
      {IntentKind::Threatening,
       {S::Target, S::ProtectedCharacteristic, S::ThreateningSpeech},
       true},
      {IntentKind::Derogation,
       {S::Target, S::ProtectedCharacteristic, S::DerogatoryOpinion},
       true},
      {IntentKind::Animosity,
       {S::Target, S::ProtectedCharacteristic, S::NegativeOpinion},
       true},
      {IntentKind::ProHateCrime, {S::HateEntity, S::Support}, true},
  };
  p.stance_slot = S::NegativeStance;
  p.fallback_intent = IntentKind::NotHateful;
  return p;
}

namespace {

// Indices of rules matching `filled`, sorted by the tie-break order:
// largest required set first, then earliest declaration.
std::vector<std::size_t> matching_rule_indices(SlotSet filled, const Policy& policy) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < policy.rules.size(); ++i)
    if (policy.rules[i].required_slots.subset_of(filled)) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return policy.rules[a].required_slots.size() > policy.rules[b].required_slots.size();
  });
  return idx;
}

}  // namespace

IntentKind infer_intent(SlotSet filled, const Policy& policy) {
  if (filled.contains(policy.stance_slot)) return policy.fallback_intent;
  auto idx = matching_rule_indices(filled, policy);
  if (idx.empty()) return policy.fallback_intent;
  return policy.rules[idx.front()].intent;
}

bool is_hateful(IntentKind intent, const Policy& policy) {
  for (const PolicyRule& r : policy.rules)
    if (r.intent == intent && r.hateful) return true;
  return false;
}

std::vector<PolicyRule> matching_rules(SlotSet filled, const Policy& policy) {
  std::vector<PolicyRule> out;
  for (std::size_t i : matching_rule_indices(filled, policy)) out.push_back(policy.rules[i]);
  return out;
}

std::vector<std::string> validate_policy(const Policy& policy) {
  std::vector<std::string> issues;
  std::array<int, kIntentCount> rules_per_intent{};
  for (std::size_t i = 0; i < policy.rules.size(); ++i) {
    const PolicyRule& r = policy.rules[i];
    std::string where = "rule " + std::to_string(i) + " (" + std::string(intent_name(r.intent)) + ")";
    if (r.required_slots.empty()) issues.push_back(where + ": required slot set is empty");
    if (r.required_slots.contains(policy.stance_slot))
      issues.push_back(where + ": requires the stance slot " + std::string(slot_name(policy.stance_slot)));
    if (r.intent == policy.fallback_intent)
      issues.push_back(where + ": uses the fallback intent " + std::string(intent_name(policy.fallback_intent)));
    if (r.hateful && r.intent == IntentKind::NotHateful)
      issues.push_back(where + ": hateful rule cannot carry NotHateful");
    rules_per_intent[static_cast<std::size_t>(r.intent)] += 1;
  }
  for (std::size_t i = 0; i < kIntentCount; ++i) {
    if (rules_per_intent[i] > 1)
      issues.push_back("intent " + std::string(intent_name(static_cast<IntentKind>(i))) + " has " +
                       std::to_string(rules_per_intent[i]) + " rules; at most one allowed");
  }
  return issues;
}

std::string policy_to_json(const Policy& policy) {
  nlohmann::json j;
  j["rules"] = nlohmann::json::array();
  for (const PolicyRule& r : policy.rules) {
    nlohmann::json jr;
    jr["intent"] = std::string(intent_name(r.intent));
    jr["required_slots"] = nlohmann::json::array();
    for (SlotKind k : r.required_slots.to_vector()) jr["required_slots"].push_back(std::string(slot_name(k)));
    jr["hateful"] = r.hateful;
    j["rules"].push_back(jr);
  }
  j["stance_slot"] = std::string(slot_name(policy.stance_slot));
  j["fallback_intent"] = std::string(intent_name(policy.fallback_intent));
  return j.dump(2);
}

Policy policy_from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("policy: invalid JSON: ") + e.what());
  }
  auto require = [&](const nlohmann::json& obj, const char* field) -> const nlohmann::json& {
    if (!obj.contains(field))
      throw std::runtime_error(std::string("policy: missing field \"") + field + "\"");
    return obj.at(field);
  };
  Policy p;
  const auto& rules = require(j, "rules");
  if (!rules.is_array()) throw std::runtime_error("policy: \"rules\" must be an array");
  for (const auto& jr : rules) {
    PolicyRule r;
    std::string intent = require(jr, "intent").get<std::string>();
    auto ik = intent_from_name(intent);
    if (!ik) throw std::runtime_error("policy: unknown intent \"" + intent + "\"");
    r.intent = *ik;
    for (const auto& js : require(jr, "required_slots")) {
      std::string slot = js.get<std::string>();
      auto sk = slot_from_name(slot);
      if (!sk) throw std::runtime_error("policy: unknown slot \"" + slot + "\"");
      r.required_slots.insert(*sk);
    }
    r.hateful = require(jr, "hateful").get<bool>();
    p.rules.push_back(r);
  }
  std::string stance = require(j, "stance_slot").get<std::string>();
  auto sk = slot_from_name(stance);
  if (!sk) throw std::runtime_error("policy: unknown stance slot \"" + stance + "\"");
  p.stance_slot = *sk;
  std::string fallback = require(j, "fallback_intent").get<std::string>();
  auto fk = intent_from_name(fallback);
  if (!fk) throw std::runtime_error("policy: unknown fallback intent \"" + fallback + "\"");
  p.fallback_intent = *fk;
  return p;
}

Policy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("policy: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

}  // namespace icsf
