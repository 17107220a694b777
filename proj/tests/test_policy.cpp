#include <doctest.h>

#include <set>

#include "icsf/policy.hpp"
#include "icsf/rng.hpp"

using namespace icsf;

namespace {

// Independent oracle for the built-in policy: the five conjunctions written
// out directly, stance veto first, most-specific rule first. Kept separate
// from the engine on purpose.
IntentKind oracle_default_intent(SlotSet f) {
  using S = SlotKind;
  const bool t = f.contains(S::Target);
  const bool pc = f.contains(S::ProtectedCharacteristic);
  const bool dc = f.contains(S::DehumanisingComparison);
  const bool ts = f.contains(S::ThreateningSpeech);
  const bool dop = f.contains(S::DerogatoryOpinion);
  const bool no = f.contains(S::NegativeOpinion);
  const bool he = f.contains(S::HateEntity);
  const bool su = f.contains(S::Support);
  if (f.contains(S::NegativeStance)) return IntentKind::NotHateful;
  if (t && pc && dc) return IntentKind::Dehumanisation;
  if (t && pc && ts) return IntentKind::Threatening;
  if (t && pc && dop) return IntentKind::Derogation;
  if (t && pc && no) return IntentKind::Animosity;
  if (he && su) return IntentKind::ProHateCrime;
  return IntentKind::NotHateful;
}

// Generic oracle over an arbitrary policy; re-derives the tie-break by
// linear scan with strict size comparison.
IntentKind oracle_generic_intent(SlotSet f, const Policy& p) {
  if (f.contains(p.stance_slot)) return p.fallback_intent;
  int best = -1;
  for (std::size_t i = 0; i < p.rules.size(); ++i) {
    if (!p.rules[i].required_slots.subset_of(f)) continue;
    if (best < 0 ||
        p.rules[i].required_slots.size() > p.rules[static_cast<std::size_t>(best)].required_slots.size())
      best = static_cast<int>(i);
  }
  return best < 0 ? p.fallback_intent : p.rules[static_cast<std::size_t>(best)].intent;
}

Policy random_policy(Rng& rng) {
  Policy p;
  std::vector<IntentKind> intents = {IntentKind::Dehumanisation, IntentKind::Threatening,
                                     IntentKind::Derogation, IntentKind::Animosity,
                                     IntentKind::ProHateCrime};
  rng.shuffle(intents);
  std::size_t n_rules = 1 + rng.index(intents.size());
  for (std::size_t i = 0; i < n_rules; ++i) {
    PolicyRule r;
    r.intent = intents[i];
    // any non-empty subset of the eight non-stance slots
    r.required_slots = SlotSet::from_bits(static_cast<std::uint16_t>(1 + rng.index(255)));
    r.hateful = rng.index(4) != 0;
    p.rules.push_back(r);
  }
  return p;
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("slot and intent enumerations round-trip") {
    CHECK(all_slots().size() == 9);
    CHECK(all_intents().size() == 6);
    std::set<std::string> surfaces;
    for (SlotKind k : all_slots()) {
      std::string surface(slot_surface(k));
      CHECK(surface.rfind("SL:", 0) == 0);
      CHECK(surfaces.insert(surface).second);
      CHECK(slot_from_name(slot_name(k)) == k);
      CHECK(slot_from_surface(surface) == k);
    }
    for (IntentKind k : all_intents()) {
      std::string surface(intent_surface(k));
      CHECK(surface.rfind("IN:", 0) == 0);
      CHECK(surfaces.insert(surface).second);
      CHECK(intent_from_name(intent_name(k)) == k);
      CHECK(intent_from_surface(surface) == k);
    }
    CHECK(!slot_from_name("Bogus"));
    CHECK(!intent_from_surface("SL:Target"));
  }

  TEST_CASE("default policy matches the rule table") {
    using S = SlotKind;
    Policy p = default_policy();
    REQUIRE(p.rules.size() == 5);
    CHECK(p.rules[0].intent == IntentKind::Dehumanisation);
    CHECK(p.rules[0].required_slots ==
          SlotSet{S::Target, S::ProtectedCharacteristic, S::DehumanisingComparison});
    CHECK(p.rules[1].intent == IntentKind::Threatening);
    CHECK(p.rules[1].required_slots ==
          SlotSet{S::Target, S::ProtectedCharacteristic, S::ThreateningSpeech});
    CHECK(p.rules[2].intent == IntentKind::Derogation);
    CHECK(p.rules[2].required_slots ==
          SlotSet{S::Target, S::ProtectedCharacteristic, S::DerogatoryOpinion});
    CHECK(p.rules[3].intent == IntentKind::Animosity);
    CHECK(p.rules[3].required_slots ==
          SlotSet{S::Target, S::ProtectedCharacteristic, S::NegativeOpinion});
    CHECK(p.rules[4].intent == IntentKind::ProHateCrime);
    CHECK(p.rules[4].required_slots == SlotSet{S::HateEntity, S::Support});
    for (const PolicyRule& r : p.rules) {
      CHECK(r.hateful);
      CHECK(r.required_slots.size() >= 2);
      CHECK(r.required_slots.size() <= 3);
    }
    CHECK(p.stance_slot == S::NegativeStance);
    CHECK(p.fallback_intent == IntentKind::NotHateful);
    CHECK(validate_policy(p).empty());
  }

  TEST_CASE("intent inference on the documented cases") {
    using S = SlotKind;
    Policy p = default_policy();
    CHECK(infer_intent({S::Target, S::ProtectedCharacteristic, S::DehumanisingComparison}, p) ==
          IntentKind::Dehumanisation);
    CHECK(infer_intent({S::Target, S::DehumanisingComparison}, p) == IntentKind::NotHateful);
    CHECK(infer_intent({S::Target, S::ProtectedCharacteristic, S::DerogatoryOpinion,
                        S::NegativeStance}, p) == IntentKind::NotHateful);
    CHECK(infer_intent({}, p) == IntentKind::NotHateful);
    CHECK(infer_intent({S::HateEntity, S::Support}, p) == IntentKind::ProHateCrime);
  }

  TEST_CASE("inference agrees with the brute-force oracle on all 512 subsets") {
    Policy p = default_policy();
    for (std::uint16_t bits = 0; bits < kAllSlotSubsets; ++bits) {
      SlotSet f = SlotSet::from_bits(bits);
      CHECK(infer_intent(f, p) == oracle_default_intent(f));
    }
  }

  TEST_CASE("randomized policies agree with the generic oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      Policy p = random_policy(rng);
      for (std::uint16_t bits = 0; bits < kAllSlotSubsets; ++bits) {
        SlotSet f = SlotSet::from_bits(bits);
        REQUIRE(infer_intent(f, p) == oracle_generic_intent(f, p));
      }
    }
  }

  TEST_CASE("the stance slot vetoes every rule") {
    Policy p = default_policy();
    for (std::uint16_t bits = 0; bits < kAllSlotSubsets; ++bits) {
      SlotSet f = SlotSet::from_bits(bits).with(SlotKind::NegativeStance);
      CHECK(infer_intent(f, p) == IntentKind::NotHateful);
    }
  }

  TEST_CASE("hatefulness is monotone below the stance slot") {
    Policy p = default_policy();
    for (std::uint16_t f = 0; f < kAllSlotSubsets; ++f) {
      if (!is_hateful(infer_intent(SlotSet::from_bits(f), p), p)) continue;
      std::uint16_t stance_bit = 1u << static_cast<unsigned>(SlotKind::NegativeStance);
      std::uint16_t free = static_cast<std::uint16_t>(~f & (kAllSlotSubsets - 1) & ~stance_bit);
      // enumerate all supersets of f without the stance slot
      for (std::uint16_t extra = free;; extra = static_cast<std::uint16_t>((extra - 1) & free)) {
        SlotSet g = SlotSet::from_bits(static_cast<std::uint16_t>(f | extra));
        REQUIRE(is_hateful(infer_intent(g, p), p));
        if (extra == 0) break;
      }
    }
  }

  TEST_CASE("is_hateful maps intents through rule flags") {
    Policy p = default_policy();
    CHECK(is_hateful(IntentKind::Derogation, p));
    CHECK(is_hateful(IntentKind::ProHateCrime, p));
    CHECK(!is_hateful(IntentKind::NotHateful, p));
  }

  TEST_CASE("matching_rules lists covered rules in tie-break order") {
    using S = SlotKind;
    Policy p = default_policy();
    auto rules = matching_rules(
        {S::Target, S::ProtectedCharacteristic, S::DehumanisingComparison, S::DerogatoryOpinion}, p);
    REQUIRE(rules.size() == 2);
    CHECK(rules[0].intent == IntentKind::Dehumanisation);
    CHECK(rules[1].intent == IntentKind::Derogation);
    CHECK(matching_rules({}, p).empty());
    CHECK(matching_rules({S::HateEntity}, p).empty());
    // stance is ignored here
    CHECK(matching_rules({S::HateEntity, S::Support, S::NegativeStance}, p).size() == 1);
  }

  TEST_CASE("fallback is returned exactly when nothing matches or stance is present") {
    Policy p = default_policy();
    for (std::uint16_t bits = 0; bits < kAllSlotSubsets; ++bits) {
      SlotSet f = SlotSet::from_bits(bits);
      bool fallback = infer_intent(f, p) == IntentKind::NotHateful;
      bool expected = matching_rules(f, p).empty() || f.contains(SlotKind::NegativeStance);
      CHECK(fallback == expected);
    }
  }

  TEST_CASE("validate_policy reports invariant breaches") {
    Policy p = default_policy();
    p.rules[0].required_slots.insert(SlotKind::NegativeStance);
    auto issues = validate_policy(p);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].find("stance") != std::string::npos);

    Policy q = default_policy();
    q.rules.push_back(q.rules[2]);  // second Derogation rule
    issues = validate_policy(q);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].find("Derogation") != std::string::npos);

    Policy r = default_policy();
    r.rules[0].required_slots = {};
    CHECK(validate_policy(r).size() == 1);

    Policy s = default_policy();
    s.rules[0].intent = IntentKind::NotHateful;
    CHECK(!validate_policy(s).empty());
  }

  TEST_CASE("policies round-trip through JSON") {
    Policy p = default_policy();
    Policy q = policy_from_json(policy_to_json(p));
    REQUIRE(q.rules.size() == p.rules.size());
    for (std::size_t i = 0; i < p.rules.size(); ++i) {
      CHECK(q.rules[i].intent == p.rules[i].intent);
      CHECK(q.rules[i].required_slots == p.rules[i].required_slots);
      CHECK(q.rules[i].hateful == p.rules[i].hateful);
    }
    CHECK(q.stance_slot == p.stance_slot);
    CHECK(q.fallback_intent == p.fallback_intent);

    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      Policy a = random_policy(rng);
      Policy b = policy_from_json(policy_to_json(a));
      for (std::uint16_t bits = 0; bits < kAllSlotSubsets; ++bits)
        REQUIRE(infer_intent(SlotSet::from_bits(bits), a) ==
                infer_intent(SlotSet::from_bits(bits), b));
    }

    CHECK_THROWS_AS(policy_from_json("{"), std::runtime_error);
    CHECK_THROWS_AS(policy_from_json(R"({"rules":[]})"), std::runtime_error);
    CHECK_THROWS_AS(policy_from_json(
                        R"({"rules":[{"intent":"Nope","required_slots":["Target"],"hateful":true}],
                            "stance_slot":"NegativeStance","fallback_intent":"NotHateful"})"),
                    std::runtime_error);
  }
}
