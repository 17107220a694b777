#include <algorithm>
#include <map>

#include "icsf/model.hpp"

namespace icsf {

namespace {

std::vector<std::string> reserved_tokens() {
  std::vector<std::string> toks = {"<pad>", "<s>", "</s>", "<unk>", "<mask>", "[", "]", "<sep>"};
  for (IntentKind k : all_intents()) toks.emplace_back(intent_surface(k));
  for (SlotKind k : all_slots()) toks.emplace_back(slot_surface(k));
  return toks;
}

}  // namespace

Vocab::Vocab() {
  for (const std::string& t : reserved_tokens()) {
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
}

Vocab Vocab::build(const Corpus& corpus, std::size_t max_words) {
  bool tagged = std::any_of(corpus.records.begin(), corpus.records.end(),
                            [](const PostRecord& r) { return r.split.has_value(); });
  std::map<std::string, std::size_t> counts;
  for (const PostRecord& rec : corpus.records) {
    if (tagged && rec.split != Split::Train) continue;
    for (const std::string& w : tokenize(rec.text)) counts[w] += 1;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [word, count] : ranked) {
    (void)count;
    if (v.id_to_token_.size() >= max_words + kFirstWord) break;
    if (v.token_to_id_.count(word)) continue;  // collision with a reserved token
    v.token_to_id_[word] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(word);
  }
  return v;
}

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  Vocab v;
  for (const std::string& word : words) {
    if (v.token_to_id_.count(word)) continue;
    v.token_to_id_[word] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(word);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::words() const {
  return {id_to_token_.begin() + kFirstWord, id_to_token_.end()};
}

std::vector<std::string> forest_model_tokens(const std::vector<SlotFiller>& fillers) {
  std::vector<std::string> toks;
  for (const SlotFiller& f : fillers) {
    toks.emplace_back("[");
    toks.emplace_back(slot_surface(f.kind));
    if (f.masked) {
      toks.emplace_back("<mask>");
    } else {
      for (const SpanToken& t : f.tokens) toks.push_back(t.text);
    }
    toks.emplace_back("]");
  }
  return toks;
}

std::vector<std::string> sketch_model_tokens(const MeaningSketch& sketch) {
  std::vector<SlotFiller> fillers;
  fillers.reserve(sketch.size());
  for (SlotKind k : sketch) fillers.push_back(SlotFiller::mask(k));
  return forest_model_tokens(fillers);
}

std::string detokenize_model_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (!out.empty() && !(out.back() == '[')) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace icsf
