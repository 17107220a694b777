#include "icsf/tree.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace icsf {

namespace {

constexpr std::string_view kMaskToken = "<mask>";

struct Lexeme {
  std::string text;
  std::size_t offset = 0;  // char offset into the input
  std::size_t index = 0;   // position in the token stream
};

bool is_separator(char c) { return std::isspace(static_cast<unsigned char>(c)) || c == ','; }

// Splits on whitespace and commas. '[' starts a token that swallows the
// following label characters; ']' is always a standalone token.
std::vector<Lexeme> lex(std::string_view s) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  auto push = [&](std::size_t begin, std::size_t end) {
    out.push_back({std::string(s.substr(begin, end - begin)), begin, out.size()});
  };
  while (i < s.size()) {
    char c = s[i];
    if (is_separator(c)) {
      ++i;
      continue;
    }
    if (c == ']') {
      push(i, i + 1);
      ++i;
      continue;
    }
    std::size_t begin = i;
    if (c == '[') ++i;  // label characters may follow directly
    while (i < s.size() && !is_separator(s[i]) && s[i] != '[' && s[i] != ']') ++i;
    push(begin, i);
  }
  return out;
}

[[noreturn]] void fail(TreeErrorKind kind, const Lexeme& at, const std::string& detail) {
  std::ostringstream msg;
  msg << tree_error_kind_name(kind) << " at token " << at.index << " (offset " << at.offset
      << ", \"" << at.text << "\"): " << detail;
  throw TreeParseError(kind, at.index, at.offset, msg.str());
}

[[noreturn]] void fail_eof(TreeErrorKind kind, const std::vector<Lexeme>& toks, std::size_t input_size,
                           const std::string& detail) {
  std::ostringstream msg;
  msg << tree_error_kind_name(kind) << " at end of input: " << detail;
  throw TreeParseError(kind, toks.size(), input_size, msg.str());
}

struct Cursor {
  const std::vector<Lexeme>& toks;
  std::size_t input_size;
  std::size_t pos = 0;

  bool done() const { return pos >= toks.size(); }
  const Lexeme& peek() const { return toks[pos]; }
  const Lexeme& take() { return toks[pos++]; }
};

bool is_open(const Lexeme& t) { return !t.text.empty() && t.text.front() == '['; }
bool is_close(const Lexeme& t) { return t.text == "]"; }

// Reads the label of an opening bracket, tolerating a detached "[".
// Returns the label text and the lexeme the label came from.
std::pair<std::string, const Lexeme*> read_label(Cursor& cur, const Lexeme& open) {
  std::string label = open.text.substr(1);
  const Lexeme* at = &open;
  if (label.empty()) {
    if (cur.done() || is_open(cur.peek()) || is_close(cur.peek()))
      fail(TreeErrorKind::UnknownLabel, open, "opening bracket carries no label");
    const Lexeme& next = cur.take();
    label = next.text;
    at = &next;
  }
  return {label, at};
}

// Parses one "[SL:Kind words... ]" subtree; cursor sits just past the open
// bracket with `label` already read.
SlotFiller parse_slot_body(Cursor& cur, const std::string& label, const Lexeme& label_at) {
  auto kind = slot_from_surface(label);
  if (!kind) {
    if (label.rfind("IN:", 0) == 0)
      fail(TreeErrorKind::NestedLabel, label_at, "intent label in slot position");
    fail(TreeErrorKind::UnknownLabel, label_at, "not a slot label");
  }
  SlotFiller filler;
  filler.kind = *kind;
  bool saw_mask = false;
  while (true) {
    if (cur.done())
      fail_eof(TreeErrorKind::UnbalancedBrackets, cur.toks, cur.input_size,
               "slot " + label + " is never closed");
    const Lexeme& t = cur.take();
    if (is_close(t)) break;
    if (is_open(t)) fail(TreeErrorKind::NestedLabel, t, "subtree inside slot " + label);
    if (t.text == kMaskToken) {
      if (saw_mask || !filler.tokens.empty())
        fail(TreeErrorKind::MixedMaskAndTokens, t, "mask must be the only content of a slot");
      saw_mask = true;
      continue;
    }
    if (saw_mask) fail(TreeErrorKind::MixedMaskAndTokens, t, "word after mask in slot " + label);
    filler.tokens.push_back({t.text, std::nullopt});
  }
  if (!saw_mask && filler.tokens.empty())
    fail(TreeErrorKind::EmptySlot, label_at, "slot " + label + " has no content");
  filler.masked = saw_mask;
  return filler;
}

}  // namespace

SlotFiller SlotFiller::mask(SlotKind k) {
  SlotFiller f;
  f.kind = k;
  f.masked = true;
  return f;
}

SlotFiller SlotFiller::with_words(SlotKind k, const std::vector<std::string>& words) {
  SlotFiller f;
  f.kind = k;
  for (const std::string& w : words) f.tokens.push_back({w, std::nullopt});
  return f;
}

SlotFiller SlotFiller::with_tokens(SlotKind k, std::vector<SpanToken> tokens) {
  SlotFiller f;
  f.kind = k;
  f.tokens = std::move(tokens);
  return f;
}

bool ParseTree::has_masks() const {
  return std::any_of(slots.begin(), slots.end(), [](const SlotFiller& f) { return f.masked; });
}

SlotSet ParseTree::slot_kinds() const {
  SlotSet s;
  for (const SlotFiller& f : slots) s.insert(f.kind);
  return s;
}

std::string_view tree_error_kind_name(TreeErrorKind k) {
  switch (k) {
    case TreeErrorKind::UnbalancedBrackets: return "UnbalancedBrackets";
    case TreeErrorKind::UnknownLabel: return "UnknownLabel";
    case TreeErrorKind::RootNotIntent: return "RootNotIntent";
    case TreeErrorKind::TerminalOutsideSlot: return "TerminalOutsideSlot";
    case TreeErrorKind::MixedMaskAndTokens: return "MixedMaskAndTokens";
    case TreeErrorKind::NestedLabel: return "NestedLabel";
    case TreeErrorKind::EmptySlot: return "EmptySlot";
  }
  return "?";
}

TreeParseError::TreeParseError(TreeErrorKind kind, std::size_t token_index, std::size_t char_offset,
                               const std::string& what)
    : std::runtime_error(what), kind_(kind), token_index_(token_index), char_offset_(char_offset) {}

namespace {

void append_slot(std::string& out, const SlotFiller& f) {
  out += '[';
  out += slot_surface(f.kind);
  if (f.masked) {
    out += ' ';
    out += kMaskToken;
  } else {
    for (const SpanToken& t : f.tokens) {
      out += ' ';
      out += t.text;
    }
  }
  out += " ]";
}

}  // namespace

std::string linearize(const ParseTree& tree) {
  std::string out = "[";
  out += intent_surface(tree.intent);
  for (const SlotFiller& f : tree.slots) {
    out += ' ';
    append_slot(out, f);
  }
  out += " ]";
  return out;
}

std::string linearize_slot_forest(const std::vector<SlotFiller>& fillers) {
  std::string out;
  for (const SlotFiller& f : fillers) {
    if (!out.empty()) out += ' ';
    append_slot(out, f);
  }
  return out;
}

std::string linearize_sketch_forest(const MeaningSketch& sketch) {
  std::vector<SlotFiller> fillers;
  fillers.reserve(sketch.size());
  for (SlotKind k : sketch) fillers.push_back(SlotFiller::mask(k));
  return linearize_slot_forest(fillers);
}

ParseTree parse(std::string_view s) {
  std::vector<Lexeme> toks = lex(s);
  Cursor cur{toks, s.size()};
  if (cur.done())
    fail_eof(TreeErrorKind::UnbalancedBrackets, toks, s.size(), "empty input, no tree");

  const Lexeme& root = cur.take();
  if (is_close(root)) fail(TreeErrorKind::UnbalancedBrackets, root, "stray closing bracket");
  if (!is_open(root)) fail(TreeErrorKind::RootNotIntent, root, "input does not start with a tree");
  auto [label, label_at] = read_label(cur, root);
  if (label.rfind("SL:", 0) == 0) fail(TreeErrorKind::RootNotIntent, *label_at, "root is a slot");
  auto intent = intent_from_surface(label);
  if (!intent) {
    if (label.rfind("IN:", 0) == 0) fail(TreeErrorKind::UnknownLabel, *label_at, "unknown intent");
    fail(TreeErrorKind::RootNotIntent, *label_at, "root label is not an intent");
  }

  ParseTree tree;
  tree.intent = *intent;
  while (true) {
    if (cur.done())
      fail_eof(TreeErrorKind::UnbalancedBrackets, toks, s.size(), "tree is never closed");
    const Lexeme& t = cur.take();
    if (is_close(t)) break;
    if (is_open(t)) {
      auto [slot_label, slot_at] = read_label(cur, t);
      tree.slots.push_back(parse_slot_body(cur, slot_label, *slot_at));
      continue;
    }
    fail(TreeErrorKind::TerminalOutsideSlot, t, "word directly under the intent");
  }
  if (!cur.done())
    fail(TreeErrorKind::UnbalancedBrackets, cur.peek(), "trailing input after the tree");
  return tree;
}

ForestParse parse_slot_forest(std::string_view s, bool recover) {
  std::vector<Lexeme> toks = lex(s);
  Cursor cur{toks, s.size()};
  ForestParse result;

  // Consumes the rest of a broken subtree: everything up to and including
  // the bracket that closes it, or the end of input.
  auto resync = [&](std::size_t depth) {
    while (!cur.done() && depth > 0) {
      const Lexeme& t = cur.take();
      if (is_open(t)) ++depth;
      else if (is_close(t)) --depth;
    }
  };

  while (!cur.done()) {
    const Lexeme& t = cur.take();
    if (is_open(t)) {
      std::size_t start_index = t.index;
      std::size_t start_offset = t.offset;
      try {
        auto [label, label_at] = read_label(cur, t);
        result.fillers.push_back(parse_slot_body(cur, label, *label_at));
      } catch (const TreeParseError& e) {
        if (!recover) throw;
        // EmptySlot is raised after the subtree closed; UnbalancedBrackets
        // means the input ran out. Everything else leaves the subtree open.
        if (e.kind() != TreeErrorKind::UnbalancedBrackets && e.kind() != TreeErrorKind::EmptySlot)
          resync(1);
        result.dropped.push_back({start_index, start_offset, e.what()});
      }
      continue;
    }
    if (!recover) {
      if (is_close(t)) fail(TreeErrorKind::UnbalancedBrackets, t, "stray closing bracket");
      fail(TreeErrorKind::TerminalOutsideSlot, t, "word outside any slot");
    }
    result.dropped.push_back({t.index, t.offset, "stray token \"" + t.text + "\" outside any slot"});
  }
  return result;
}

MeaningSketch to_sketch(const ParseTree& tree) {
  MeaningSketch sketch;
  sketch.reserve(tree.slots.size());
  for (const SlotFiller& f : tree.slots) sketch.push_back(f.kind);
  return sketch;
}

ParseTree masked_copy(const ParseTree& tree) {
  ParseTree out;
  out.intent = tree.intent;
  out.slots.reserve(tree.slots.size());
  for (const SlotFiller& f : tree.slots) out.slots.push_back(SlotFiller::mask(f.kind));
  return out;
}

ParseTree attach_intent(const std::vector<SlotFiller>& fillers, const Policy& policy) {
  SlotSet kinds;
  for (const SlotFiller& f : fillers) {
    if (f.masked) throw std::invalid_argument("attach_intent: masked filler");
    kinds.insert(f.kind);
  }
  ParseTree tree;
  tree.intent = infer_intent(kinds, policy);
  tree.slots = fillers;
  return tree;
}

std::vector<Production> productions(const ParseTree& tree) {
  if (tree.has_masks()) throw std::invalid_argument("productions: tree has masked fillers");
  std::vector<Production> out;
  out.reserve(2 * tree.slots.size());
  for (const SlotFiller& f : tree.slots) {
    out.push_back({ProductionLevel::Top, std::string(intent_surface(tree.intent)),
                   std::string(slot_surface(f.kind))});
    std::string words;
    for (const SpanToken& t : f.tokens) {
      if (!words.empty()) words += ' ';
      words += t.text;
    }
    out.push_back({ProductionLevel::Lower, std::string(slot_surface(f.kind)), words});
  }
  return out;
}

std::vector<UnattestedReport> check_attested(const ParseTree& tree,
                                             const std::vector<std::string>& post_tokens) {
  std::vector<UnattestedReport> reports;
  for (std::size_t i = 0; i < tree.slots.size(); ++i) {
    const SlotFiller& f = tree.slots[i];
    if (f.masked) continue;
    for (const SpanToken& t : f.tokens) {
      bool found = std::find(post_tokens.begin(), post_tokens.end(), t.text) != post_tokens.end();
      if (!found) reports.push_back({i, f.kind, t.text});
    }
  }
  return reports;
}

std::vector<TextToken> tokenize_spans(std::string_view text) {
  std::vector<TextToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    // strip punctuation from the word edges only
    while (begin < end && std::ispunct(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(text[end - 1]))) --end;
    if (begin < end) out.push_back({std::string(text.substr(begin, end - begin)), begin, end});
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (TextToken& t : tokenize_spans(text)) out.push_back(std::move(t.text));
  return out;
}

}  // namespace icsf
