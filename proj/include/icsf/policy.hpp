#pragma once

// Machine-readable moderation policy: slot and intent vocabularies, rules as
// slot conjunctions, and deterministic intent inference with the
// counter-speech exception.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace icsf {

// Span-level properties a post can exhibit. Surface form is "SL:<Name>".
enum class SlotKind : std::uint8_t {
  Target = 0,
  ProtectedCharacteristic,
  DehumanisingComparison,
  ThreateningSpeech,
  DerogatoryOpinion,
  NegativeOpinion,
  HateEntity,
  Support,
  NegativeStance,
};

inline constexpr std::size_t kSlotCount = 9;

// Policy guidelines a post can instantiate. Surface form is "IN:<Name>".
// NotHateful is the designated fallback for posts matching no rule.
enum class IntentKind : std::uint8_t {
  Dehumanisation = 0,
  Threatening,
  Derogation,
  Animosity,
  ProHateCrime,
  NotHateful,
};

inline constexpr std::size_t kIntentCount = 6;

const std::vector<SlotKind>& all_slots();
const std::vector<IntentKind>& all_intents();

std::string_view slot_name(SlotKind k);        // "Target"
std::string_view slot_surface(SlotKind k);     // "SL:Target"
std::string_view intent_name(IntentKind k);    // "Dehumanisation"
std::string_view intent_surface(IntentKind k); // "IN:Dehumanisation"

std::optional<SlotKind> slot_from_name(std::string_view name);
std::optional<SlotKind> slot_from_surface(std::string_view surface);
std::optional<IntentKind> intent_from_name(std::string_view name);
std::optional<IntentKind> intent_from_surface(std::string_view surface);

// Set of slot kinds backed by a 9-bit mask. Value type, cheap to copy.
class SlotSet {
 public:
  constexpr SlotSet() = default;
  constexpr SlotSet(std::initializer_list<SlotKind> kinds) {
    for (SlotKind k : kinds) insert(k);
  }

  static constexpr SlotSet from_bits(std::uint16_t bits) {
    SlotSet s;
    s.bits_ = static_cast<std::uint16_t>(bits & ((1u << kSlotCount) - 1));
    return s;
  }

  constexpr bool contains(SlotKind k) const {
    return (bits_ >> static_cast<unsigned>(k)) & 1u;
  }
  constexpr void insert(SlotKind k) {
    bits_ = static_cast<std::uint16_t>(bits_ | (1u << static_cast<unsigned>(k)));
  }
  constexpr void erase(SlotKind k) {
    bits_ = static_cast<std::uint16_t>(bits_ & ~(1u << static_cast<unsigned>(k)));
  }
  constexpr bool subset_of(SlotSet other) const {
    return (bits_ & ~other.bits_) == 0;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const {
    std::size_t n = 0;
    for (std::uint16_t b = bits_; b; b &= static_cast<std::uint16_t>(b - 1)) ++n;
    return n;
  }
  constexpr std::uint16_t bits() const { return bits_; }
  constexpr SlotSet with(SlotKind k) const {
    SlotSet s = *this;
    s.insert(k);
    return s;
  }

  std::vector<SlotKind> to_vector() const;

  friend constexpr bool operator==(SlotSet a, SlotSet b) { return a.bits_ == b.bits_; }

 private:
  std::uint16_t bits_ = 0;
};

inline constexpr std::uint16_t kAllSlotSubsets = 1u << kSlotCount;  // 512

// One guideline: a post instantiates `intent` when every slot in
// `required_slots` is filled.
struct PolicyRule {
  IntentKind intent = IntentKind::NotHateful;
  SlotSet required_slots;
  bool hateful = false;
};

// A full policy. `stance_slot` vetoes every rule; `fallback_intent` is
// returned when no rule matches. Rules are kept in declaration order; ties
// between matching rules are broken by largest required-slot set first, then
// earliest declaration.
struct Policy {
  std::vector<PolicyRule> rules;
  SlotKind stance_slot = SlotKind::NegativeStance;
  IntentKind fallback_intent = IntentKind::NotHateful;
};

// The built-in hate-speech policy: five hateful rules over two or three
// required slots each.
Policy default_policy();

// Deterministic, total intent inference. If the stance slot is filled the
// fallback intent is returned no matter what else matched.
IntentKind infer_intent(SlotSet filled, const Policy& policy);

// True iff some rule with this intent is flagged hateful.
bool is_hateful(IntentKind intent, const Policy& policy);

// All rules whose required slots are covered by `filled`, in tie-break order.
// Ignores the stance exception; useful for explaining a decision.
std::vector<PolicyRule> matching_rules(SlotSet filled, const Policy& policy);

// Empty iff all Policy invariants hold; otherwise one readable issue each.
std::vector<std::string> validate_policy(const Policy& policy);

// JSON document form:
//   {"rules":[{"intent":str,"required_slots":[str,...],"hateful":bool},...],
//    "stance_slot":str,"fallback_intent":str}
// Names use the plain enumeration names without the SL:/IN: prefixes.
// Parsing throws std::runtime_error on schema violations.
std::string policy_to_json(const Policy& policy);
Policy policy_from_json(std::string_view json_text);
Policy load_policy(const std::string& path);

}  // namespace icsf
