#include <doctest.h>

#include <string>
#include <vector>

#include "icsf/policy.hpp"
#include "icsf/rng.hpp"
#include "icsf/tree.hpp"

using namespace icsf;

namespace {

ParseTree fig_tree() {
  ParseTree t;
  t.intent = IntentKind::Derogation;
  t.slots = {
      SlotFiller::with_words(SlotKind::Target, {"black", "people"}),
      SlotFiller::with_words(SlotKind::ProtectedCharacteristic, {"black"}),
      SlotFiller::with_words(SlotKind::DerogatoryOpinion, {"should", "not", "adopt"}),
  };
  return t;
}

std::string random_word(Rng& rng) {
  static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz";
  std::size_t len = 1 + rng.index(8);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += alphabet[rng.index(26)];
  return w;
}

ParseTree random_tree(Rng& rng, bool allow_masks) {
  ParseTree t;
  t.intent = all_intents()[rng.index(kIntentCount)];
  std::size_t n_slots = rng.index(6);  // repetition allowed, zero allowed
  for (std::size_t i = 0; i < n_slots; ++i) {
    SlotKind kind = all_slots()[rng.index(kSlotCount)];
    if (allow_masks && rng.index(4) == 0) {
      t.slots.push_back(SlotFiller::mask(kind));
    } else {
      std::vector<std::string> words;
      std::size_t n_words = 1 + rng.index(6);
      for (std::size_t w = 0; w < n_words; ++w) words.push_back(random_word(rng));
      t.slots.push_back(SlotFiller::with_words(kind, words));
    }
  }
  return t;
}

}  // namespace

TEST_SUITE("tree") {
  TEST_CASE("canonical linearization") {
    CHECK(linearize(fig_tree()) ==
          "[IN:Derogation [SL:Target black people ] [SL:ProtectedCharacteristic black ] "
          "[SL:DerogatoryOpinion should not adopt ] ]");

    ParseTree empty;
    empty.intent = IntentKind::NotHateful;
    CHECK(linearize(empty) == "[IN:NotHateful ]");

    CHECK(linearize(masked_copy(fig_tree())) ==
          "[IN:Derogation [SL:Target <mask> ] [SL:ProtectedCharacteristic <mask> ] "
          "[SL:DerogatoryOpinion <mask> ] ]");
  }

  TEST_CASE("parse reads canonical and tolerant forms") {
    ParseTree direct = parse("[IN:Derogation [SL:Target black people ] ]");
    CHECK(direct.intent == IntentKind::Derogation);
    REQUIRE(direct.slots.size() == 1);
    CHECK(direct.slots[0].kind == SlotKind::Target);
    REQUIRE(direct.slots[0].tokens.size() == 2);
    CHECK(direct.slots[0].tokens[0].text == "black");

    // commas, repeated spaces, bracket glued to the last word, detached "["
    CHECK(parse("[IN:Derogation, [SL:Target, black, people], ]") == direct);
    CHECK(parse("  [IN:Derogation   [SL:Target black people]]") == direct);
    CHECK(parse("[ IN:Derogation [ SL:Target black people ] ]") == direct);
  }

  TEST_CASE("parse rejects grammar violations with positions") {
    auto kind_of = [](const std::string& s) {
      try {
        parse(s);
      } catch (const TreeParseError& e) {
        return e.kind();
      }
      return static_cast<TreeErrorKind>(255);
    };
    CHECK(kind_of("[SL:Target black ]") == TreeErrorKind::RootNotIntent);
    CHECK(kind_of("[IN:Derogation [SL:Target black people ]") == TreeErrorKind::UnbalancedBrackets);
    CHECK(kind_of("") == TreeErrorKind::UnbalancedBrackets);
    CHECK(kind_of("] [IN:NotHateful ]") == TreeErrorKind::UnbalancedBrackets);
    CHECK(kind_of("[IN:NotHateful ] trailing") == TreeErrorKind::UnbalancedBrackets);
    CHECK(kind_of("[IN:Bogus ]") == TreeErrorKind::UnknownLabel);
    CHECK(kind_of("[IN:NotHateful [SL:Bogus x ] ]") == TreeErrorKind::UnknownLabel);
    CHECK(kind_of("[IN:NotHateful stray ]") == TreeErrorKind::TerminalOutsideSlot);
    CHECK(kind_of("[IN:NotHateful [SL:Target <mask> word ] ]") == TreeErrorKind::MixedMaskAndTokens);
    CHECK(kind_of("[IN:NotHateful [SL:Target <mask> <mask> ] ]") == TreeErrorKind::MixedMaskAndTokens);
    CHECK(kind_of("[IN:NotHateful [SL:Target [SL:Support x ] ] ]") == TreeErrorKind::NestedLabel);
    CHECK(kind_of("[IN:NotHateful [IN:Derogation ] ]") == TreeErrorKind::NestedLabel);
    CHECK(kind_of("[IN:NotHateful [SL:Target ] ]") == TreeErrorKind::EmptySlot);

    // the reported position lands inside the input
    std::string bad = "[IN:NotHateful stray ]";
    try {
      parse(bad);
      FAIL("expected TreeParseError");
    } catch (const TreeParseError& e) {
      CHECK(e.char_offset() < bad.size());
      CHECK(bad.substr(e.char_offset(), 5) == "stray");
      CHECK(e.token_index() == 1);
    }
  }

  TEST_CASE("round trip over random trees") {
    Rng rng(7);
    for (int i = 0; i < 1200; ++i) {
      ParseTree t = random_tree(rng, i % 3 == 0);
      CHECK(parse(linearize(t)) == t);
    }
  }

  TEST_CASE("slot forests parse with and without recovery") {
    ForestParse two = parse_slot_forest("[SL:HateEntity Hitler ] [SL:Support was right all along ]");
    REQUIRE(two.fillers.size() == 2);
    CHECK(two.fillers[0].kind == SlotKind::HateEntity);
    CHECK(two.fillers[1].kind == SlotKind::Support);
    REQUIRE(two.fillers[1].tokens.size() == 4);
    CHECK(two.dropped.empty());

    CHECK(parse_slot_forest("").fillers.empty());

    // recovery drops the empty filler and keeps the rest
    ForestParse rec = parse_slot_forest("[SL:Target ] [SL:Support ok ]", true);
    REQUIRE(rec.fillers.size() == 1);
    CHECK(rec.fillers[0].kind == SlotKind::Support);
    REQUIRE(rec.dropped.size() == 1);
    CHECK(rec.dropped[0].message.find("EmptySlot") != std::string::npos);

    CHECK_THROWS_AS(parse_slot_forest("[SL:Target ] [SL:Support ok ]"), TreeParseError);
    CHECK_THROWS_AS(parse_slot_forest("stray [SL:Support ok ]"), TreeParseError);

    // garbage between healthy subtrees is reported, not fatal
    ForestParse mixed = parse_slot_forest("[SL:Target a ] junk ] [SL:Support ok ]", true);
    CHECK(mixed.fillers.size() == 2);
    CHECK(mixed.dropped.size() == 2);

    // intent root never applies in forests
    ForestParse intent_in_forest = parse_slot_forest("[IN:Derogation x ]", true);
    CHECK(intent_in_forest.fillers.empty());
    CHECK(intent_in_forest.dropped.size() == 1);
  }

  TEST_CASE("sketch extraction is an order-preserving projection") {
    MeaningSketch s = to_sketch(fig_tree());
    CHECK(s == MeaningSketch{SlotKind::Target, SlotKind::ProtectedCharacteristic,
                             SlotKind::DerogatoryOpinion});
    CHECK(to_sketch(ParseTree{}).empty());
    CHECK(to_sketch(masked_copy(fig_tree())) == s);  // idempotent on sketch bodies

    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
      ParseTree t = random_tree(rng, false);
      MeaningSketch sk = to_sketch(t);
      REQUIRE(sk.size() == t.slots.size());
      for (std::size_t j = 0; j < sk.size(); ++j) CHECK(sk[j] == t.slots[j].kind);
    }
  }

  TEST_CASE("attach_intent roots fillers at the inferred intent") {
    Policy p = default_policy();
    std::vector<SlotFiller> dehu = {
        SlotFiller::with_words(SlotKind::Target, {"Immigrants"}),
        SlotFiller::with_words(SlotKind::ProtectedCharacteristic, {"Immigrants"}),
        SlotFiller::with_words(SlotKind::DehumanisingComparison, {"are", "parasites"}),
    };
    ParseTree t = attach_intent(dehu, p);
    CHECK(t.intent == IntentKind::Dehumanisation);
    CHECK(t.slots == dehu);  // preserved verbatim

    CHECK(attach_intent({}, p).intent == IntentKind::NotHateful);

    std::vector<SlotFiller> countered = {
        SlotFiller::with_words(SlotKind::HateEntity, {"Hitler"}),
        SlotFiller::with_words(SlotKind::Support, {"was", "right", "all", "along"}),
        SlotFiller::with_words(SlotKind::NegativeStance, {"It's", "nonsense"}),
    };
    CHECK(attach_intent(countered, p).intent == IntentKind::NotHateful);

    CHECK_THROWS_AS(attach_intent({SlotFiller::mask(SlotKind::Target)}, p), std::invalid_argument);
  }

  TEST_CASE("production decomposition keeps multiset semantics") {
    Policy p = default_policy();
    std::vector<SlotFiller> dehu = {
        SlotFiller::with_words(SlotKind::Target, {"Immigrants"}),
        SlotFiller::with_words(SlotKind::ProtectedCharacteristic, {"Immigrants"}),
        SlotFiller::with_words(SlotKind::DehumanisingComparison, {"are", "parasites"}),
    };
    std::vector<Production> prods = productions(attach_intent(dehu, p));
    REQUIRE(prods.size() == 6);
    std::size_t top = 0, lower = 0;
    for (const Production& pr : prods) {
      if (pr.level == ProductionLevel::Top) ++top;
      else ++lower;
    }
    CHECK(top == 3);
    CHECK(lower == 3);
    CHECK(prods[0].key() == "IN:Dehumanisation -> SL:Target");
    CHECK(prods[5].key() == "SL:DehumanisingComparison -> are parasites");

    CHECK(productions(ParseTree{}).empty());

    ParseTree twice;
    twice.intent = IntentKind::NotHateful;
    twice.slots = {SlotFiller::with_words(SlotKind::Target, {"a"}),
                   SlotFiller::with_words(SlotKind::Target, {"b"})};
    auto prods2 = productions(twice);
    std::size_t target_edges = 0;
    for (const Production& pr : prods2)
      if (pr.level == ProductionLevel::Top && pr.child == "SL:Target") ++target_edges;
    CHECK(target_edges == 2);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      ParseTree t = random_tree(rng, false);
      CHECK(productions(t).size() == 2 * t.slots.size());
    }
  }

  TEST_CASE("attestation checks filler words against post tokens") {
    std::vector<std::string> post = tokenize("black people should not adopt");
    CHECK(check_attested(fig_tree(), post).empty());

    ParseTree bad = fig_tree();
    bad.slots[2] = SlotFiller::with_words(SlotKind::DerogatoryOpinion, {"apes"});
    auto reports = check_attested(bad, post);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].word == "apes");
    CHECK(reports[0].slot_index == 2);

    // one post word may fill several slots
    ParseTree reuse;
    reuse.intent = IntentKind::NotHateful;
    reuse.slots = {SlotFiller::with_words(SlotKind::Target, {"black"}),
                   SlotFiller::with_words(SlotKind::ProtectedCharacteristic, {"black"})};
    CHECK(check_attested(reuse, post).empty());

    // case-sensitive
    ParseTree cased = fig_tree();
    cased.slots[0] = SlotFiller::with_words(SlotKind::Target, {"Black"});
    CHECK(check_attested(cased, post).size() == 1);
  }

  TEST_CASE("tokenizer strips edge punctuation and records offsets") {
    auto toks = tokenize_spans("Hello, world! don't... ((wow))");
    REQUIRE(toks.size() == 4);
    CHECK(toks[0].text == "Hello");
    CHECK(toks[0].begin == 0);
    CHECK(toks[0].end == 5);
    CHECK(toks[1].text == "world");
    CHECK(toks[1].begin == 7);
    CHECK(toks[1].end == 12);
    CHECK(toks[2].text == "don't");
    CHECK(toks[3].text == "wow");
    CHECK(tokenize("...  ,,, ").empty());
    CHECK(tokenize("") == std::vector<std::string>{});
  }
}
