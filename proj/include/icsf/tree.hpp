#pragma once

// Decoupled explanation trees: depth-2 structures with an intent root, slot
// children, and word terminals attested in the post. Includes the bit-exact
// linearization grammar and its parser, sketch extraction, and the
// production decomposition used for scoring.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "icsf/policy.hpp"

namespace icsf {

// One terminal word. `source_index` optionally records the token position in
// the originating post; it is metadata and never part of structural equality.
struct SpanToken {
  std::string text;
  std::optional<int> source_index;

  friend bool operator==(const SpanToken& a, const SpanToken& b) { return a.text == b.text; }
};

// A slot with either a non-empty word sequence or a single mask marker.
struct SlotFiller {
  SlotKind kind = SlotKind::Target;
  std::vector<SpanToken> tokens;  // empty iff masked
  bool masked = false;

  static SlotFiller mask(SlotKind k);
  static SlotFiller with_words(SlotKind k, const std::vector<std::string>& words);
  static SlotFiller with_tokens(SlotKind k, std::vector<SpanToken> tokens);

  friend bool operator==(const SlotFiller& a, const SlotFiller& b) {
    return a.kind == b.kind && a.masked == b.masked && a.tokens == b.tokens;
  }
};

// Root intent plus an ordered slot list. Kinds may repeat; the list may be
// empty. A tree whose fillers are all masks is a sketch-bodied tree.
struct ParseTree {
  IntentKind intent = IntentKind::NotHateful;
  std::vector<SlotFiller> slots;

  bool has_masks() const;
  SlotSet slot_kinds() const;

  friend bool operator==(const ParseTree& a, const ParseTree& b) {
    return a.intent == b.intent && a.slots == b.slots;
  }
};

// The coarse stage-one view of a tree: its slot kinds in order.
using MeaningSketch = std::vector<SlotKind>;

enum class ProductionLevel { Top, Lower };

// One parent -> children rewrite. Top level: (intent, slot kind) edge.
// Lower level: (slot kind, exact word sequence).
struct Production {
  ProductionLevel level = ProductionLevel::Top;
  std::string parent;  // "IN:X" or "SL:A"
  std::string child;   // "SL:A" or the joined word sequence

  std::string key() const { return parent + " -> " + child; }

  friend bool operator==(const Production& a, const Production& b) {
    return a.level == b.level && a.parent == b.parent && a.child == b.child;
  }
  friend bool operator<(const Production& a, const Production& b) {
    if (a.level != b.level) return a.level < b.level;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.child < b.child;
  }
};

enum class TreeErrorKind {
  UnbalancedBrackets,
  UnknownLabel,
  RootNotIntent,
  TerminalOutsideSlot,
  MixedMaskAndTokens,
  NestedLabel,  // a bracketed label where only terminals may appear
  EmptySlot,
};

std::string_view tree_error_kind_name(TreeErrorKind k);

class TreeParseError : public std::runtime_error {
 public:
  TreeParseError(TreeErrorKind kind, std::size_t token_index, std::size_t char_offset,
                 const std::string& what);

  TreeErrorKind kind() const { return kind_; }
  std::size_t token_index() const { return token_index_; }
  std::size_t char_offset() const { return char_offset_; }

 private:
  TreeErrorKind kind_;
  std::size_t token_index_;
  std::size_t char_offset_;
};

// Canonical linearization: "[IN:X [SL:A w1 w2 ] [SL:B w3 ] ]". Every closing
// bracket is its own space-separated token; labels are fused to their opening
// bracket; masked fillers serialize as the single token "<mask>".
std::string linearize(const ParseTree& tree);
std::string linearize_slot_forest(const std::vector<SlotFiller>& fillers);
std::string linearize_sketch_forest(const MeaningSketch& sketch);

// Inverse of linearize. Accepts the canonical form plus tolerant variants
// (optional commas, repeated spaces, a detached "[" before its label).
// Throws TreeParseError on grammar violations.
ParseTree parse(std::string_view s);

struct ForestReport {
  std::size_t token_index = 0;
  std::size_t char_offset = 0;
  std::string message;
};

struct ForestParse {
  std::vector<SlotFiller> fillers;
  std::vector<ForestReport> dropped;  // only populated in recovery mode
};

// Parses a bracketed sequence of slot subtrees with no intent root (the
// model's target-side format). In recovery mode malformed subtrees are
// dropped and reported instead of raising.
ForestParse parse_slot_forest(std::string_view s, bool recover = false);

// Slot kinds in order. Idempotent on sketch-bodied trees.
MeaningSketch to_sketch(const ParseTree& tree);

// Copy of the tree with every filler replaced by a mask.
ParseTree masked_copy(const ParseTree& tree);

// Roots the fillers at the intent the policy infers from their kinds.
ParseTree attach_intent(const std::vector<SlotFiller>& fillers, const Policy& policy);

// Multiset of productions; repeated slot kinds are kept. Requires no masks.
std::vector<Production> productions(const ParseTree& tree);

struct UnattestedReport {
  std::size_t slot_index = 0;
  SlotKind kind = SlotKind::Target;
  std::string word;
};

// Every filler word with no case-sensitive exact match among the post tokens.
std::vector<UnattestedReport> check_attested(const ParseTree& tree,
                                             const std::vector<std::string>& post_tokens);

// Shared tokenizer: whitespace split, then punctuation stripped from word
// edges; empty residues are dropped. Offsets index the stripped text within
// the original string.
struct TextToken {
  std::string text;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

std::vector<TextToken> tokenize_spans(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

}  // namespace icsf
