#pragma once

// Desk-scale sequence model: a bidirectional GRU encoder, a sketch decoder,
// re-encoding of source plus sketch, and a refinement decoder with beam
// search, all sharing one output projection. Training couples the two
// token-level cross-entropies with an intent-aware loss computed from
// max-pooled slot-token probabilities through a frozen two-layer head.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icsf/dataset.hpp"
#include "icsf/policy.hpp"
#include "icsf/rng.hpp"
#include "icsf/tape.hpp"
#include "icsf/tree.hpp"

namespace icsf {

// Bidirectional word<->id map with reserved ids for control tokens, bracket
// tokens, and every intent/slot label. Word ids are dense and assigned
// deterministically (count desc, then lexicographic).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kMask = 4;
  static constexpr int kOpen = 5;   // "["
  static constexpr int kClose = 6;  // "]"
  static constexpr int kSep = 7;    // source/sketch separator
  static constexpr int kIntentBase = 8;                          // "IN:*"
  static constexpr int kSlotBase = kIntentBase + kIntentCount;   // "SL:*"
  static constexpr int kFirstWord = kSlotBase + kSlotCount;

  Vocab();  // reserved tokens only

  // Counts words over the train split when split tags exist, otherwise over
  // the whole corpus.
  static Vocab build(const Corpus& corpus, std::size_t max_words);
  static Vocab from_words(const std::vector<std::string>& words);  // checkpoint path

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  bool is_slot_token(int id) const { return id >= kSlotBase && id < kSlotBase + static_cast<int>(kSlotCount); }
  int slot_token(SlotKind k) const { return kSlotBase + static_cast<int>(k); }
  SlotKind slot_of(int id) const { return static_cast<SlotKind>(id - kSlotBase); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  // word tokens only (ids appended after the reserved block)
  std::vector<std::string> words() const;

 private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
};

// Model-side token streams: brackets and labels are separate tokens, e.g.
// "[", "SL:Target", "black", "people", "]".
std::vector<std::string> forest_model_tokens(const std::vector<SlotFiller>& fillers);
std::vector<std::string> sketch_model_tokens(const MeaningSketch& sketch);
// Inverse-ish: joins model tokens into a parseable linearized string.
std::string detokenize_model_tokens(const std::vector<std::string>& tokens);

struct TrainConfig {
  std::size_t hidden_dim = 64;  // d; must be even
  double learning_rate = 1e-3;
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  std::size_t beam_width = 3;
  std::size_t max_src_len = 64;
  std::size_t max_tgt_len = 64;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  std::size_t max_vocab = 20000;
  std::size_t head_epochs = 4000;  // intent-head pretraining (full batch)
  double head_lr = 0.01;
  bool head_strict_as_printed = false;

  std::vector<std::string> validate() const;
};

// Two linear layers mapping pooled slot probabilities to intent scores.
// Pretrained on gold sketches, then frozen for the rest of training.
struct IntentHead {
  Param w_s2s;  // |S| x |S|
  Param b_s2s;  // |S|
  Param w_s2i;  // |S| x |I|, applied transposed
  Param b_s2i;  // |I|
  bool frozen = false;
  // As printed in the source equations the second layer consumes the raw
  // pooled probabilities and the hidden layer output is unused; the default
  // feeds the hidden layer forward instead.
  bool strict_as_printed = false;

  void init(Rng& rng);
  void freeze();
  std::vector<Param*> params();
};

struct GruParams {
  Param wz, uz, bz, wr, ur, br, wn, un, bn;
  void init(const std::string& prefix, std::size_t in_dim, std::size_t hidden, Rng& rng);
  std::vector<Param*> params();
};

struct DecoderParams {
  GruParams cell;     // input d, hidden d
  Param attn;         // d x d attention bilinear map
  Param combine_w;    // d x 2d
  Param combine_b;    // d
  Param init_w;       // d x d
  Param init_b;       // d
  void init(const std::string& prefix, std::size_t d, Rng& rng);
  std::vector<Param*> params();
};

struct ModelParams {
  TrainConfig config;
  Vocab vocab;
  Param embedding;  // |V| x d
  GruParams enc_fwd, enc_bwd;  // input d, hidden d/2 each
  DecoderParams sketch_dec, refine_dec;
  Param proj_w;  // |V| x d, shared by both decoders
  Param proj_b;  // |V|
  IntentHead head;

  // Allocates and seeds every tensor; vocab and config must be set.
  void init();
  std::vector<Param*> all_params();       // includes the head
  std::vector<const Param*> all_params() const;
  std::vector<Param*> trainable_params(); // excludes frozen tensors
};

struct EncoderState {
  std::vector<Tape::Id> states;  // one per input position
};

// Deterministic bidirectional encoding; throws std::invalid_argument on
// empty input.
EncoderState encode(Tape& tape, ModelParams& m, const std::vector<int>& ids);

struct DecodeResult {
  std::vector<Tape::Id> dists;  // softmax over V, one per step
  std::vector<int> ids;         // argmax per step; excludes the final EOS
};

// gold == nullptr: free running (argmax feedback, stops at EOS/max length).
// gold != nullptr: teacher forcing; one distribution per gold position.
DecodeResult decode_sketch(Tape& tape, ModelParams& m, const EncoderState& enc,
                           const std::vector<int>* gold);

// Per step, probability mass restricted to the nine slot tokens and
// renormalized (with a 1e-12 floor); pooled by elementwise max over steps.
Tape::Id slot_probabilities(Tape& tape, const ModelParams& m, const std::vector<Tape::Id>& dists);
// Raw-array variant; throws std::domain_error when a step has zero slot mass.
std::vector<double> slot_probabilities(const std::vector<std::vector<double>>& dists,
                                       const Vocab& vocab);

Tape::Id intent_scores(Tape& tape, IntentHead& head, Tape::Id q);
std::vector<double> intent_scores(const std::vector<double>& q, IntentHead& head);

// Single encoder pass over source ++ <sep> ++ sketch; |x| + T + 1 states.
EncoderState reencode(Tape& tape, ModelParams& m, const std::vector<int>& post_ids,
                      const std::vector<int>& sketch_ids);

struct BeamHypothesis {
  std::vector<int> ids;      // excludes BOS and EOS
  double logprob = 0.0;      // sum of token log-probabilities incl. EOS
  double normalized = 0.0;   // logprob / emitted token count
};

// Beam search over the refinement decoder with length-normalized scores.
// Width 1 reproduces greedy decoding token for token; larger widths always
// include the greedy rollout in the candidate pool, so the returned score
// never falls below it.
BeamHypothesis decode_refined(Tape& tape, ModelParams& m, const EncoderState& states,
                              std::size_t beam_width);

struct TrainExample {
  std::string id;
  std::vector<int> src;         // post tokens
  std::vector<int> sketch_tgt;  // sketch model tokens + EOS
  std::vector<int> tree_tgt;    // filled forest model tokens + EOS
  IntentKind intent = IntentKind::NotHateful;
};

TrainExample make_example(const PostRecord& rec, const ParseTree& gold, const Vocab& vocab,
                          const TrainConfig& cfg);

struct LossBreakdown {
  double sketch = 0.0;  // mean token cross-entropy, sketch decoder
  double refine = 0.0;  // mean token cross-entropy, refinement decoder
  double intent = 0.0;  // cross-entropy of the pooled-slot intent scores
  double total = 0.0;
};

// Builds the full training graph for one example and returns the scalar
// loss node (sketch + refine + intent).
Tape::Id example_loss(Tape& tape, ModelParams& m, const TrainExample& ex, LossBreakdown* out);

// Mean loss over the batch; zeroes and then accumulates gradients of every
// trainable parameter. Throws std::runtime_error on non-finite loss.
LossBreakdown batch_loss(Tape& tape, ModelParams& m, const std::vector<TrainExample>& batch);
LossBreakdown batch_loss(ModelParams& m, const std::vector<TrainExample>& batch);

// Cross-entropy training of the head on (slot indicator set, intent) pairs,
// followed by freezing. Refuses pairs that do not cover every intent the
// policy can produce.
IntentHead pretrain_intent_head(const std::vector<std::pair<SlotSet, IntentKind>>& pairs,
                                const TrainConfig& cfg, const Policy& policy);

struct EpochStats {
  double sketch = 0.0, refine = 0.0, intent = 0.0, total = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t examples_used = 0;
  std::vector<QuarantineEntry> skipped;  // records without a usable gold tree
  std::string kernel_backend;
};

// Full pipeline: vocab construction, gold trees, head pretraining, epochs of
// gradient descent. Deterministic for a given config.
TrainReport train(ModelParams& m, const Corpus& corpus, const Policy& policy);

struct Prediction {
  ParseTree tree;
  std::string sketch;                  // linearized predicted sketch forest
  std::vector<ForestReport> dropped;   // recovery reports from the forest parse
};

Prediction predict_detail(ModelParams& m, const std::string& text, const Policy& policy);
ParseTree predict(ModelParams& m, const std::string& text, const Policy& policy);

std::string train_report_to_json(const TrainReport& report);

// Versioned JSON container with config, vocab, and all parameter tensors.
// Doubles round-trip exactly.
void save_model(const ModelParams& m, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace icsf
