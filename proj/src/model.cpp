#include "icsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "icsf/kernels.hpp"

namespace icsf {

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> issues;
  if (hidden_dim == 0 || hidden_dim % 2 != 0) issues.push_back("hidden_dim must be positive and even");
  if (learning_rate <= 0.0) issues.push_back("learning_rate must be positive");
  if (epochs == 0) issues.push_back("epochs must be positive");
  if (batch_size == 0) issues.push_back("batch_size must be positive");
  if (beam_width == 0) issues.push_back("beam_width must be at least 1");
  if (max_src_len == 0 || max_tgt_len == 0) issues.push_back("max lengths must be positive");
  if (grad_clip <= 0.0) issues.push_back("grad_clip must be positive");
  if (max_vocab == 0) issues.push_back("max_vocab must be positive");
  return issues;
}

namespace {

void init_matrix(Param& p, const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  p.value.resize(rows * cols);
  double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : p.value) v = rng.uniform(-r, r);
  p.trainable = true;
}

void init_vector(Param& p, const std::string& name, std::size_t n, double fill = 0.0) {
  p.name = name;
  p.rows = n;
  p.cols = 1;
  p.value.assign(n, fill);
  p.trainable = true;
}

}  // namespace

void GruParams::init(const std::string& prefix, std::size_t in_dim, std::size_t hidden, Rng& rng) {
  init_matrix(wz, prefix + ".wz", hidden, in_dim, rng);
  init_matrix(uz, prefix + ".uz", hidden, hidden, rng);
  init_vector(bz, prefix + ".bz", hidden);
  init_matrix(wr, prefix + ".wr", hidden, in_dim, rng);
  init_matrix(ur, prefix + ".ur", hidden, hidden, rng);
  init_vector(br, prefix + ".br", hidden);
  init_matrix(wn, prefix + ".wn", hidden, in_dim, rng);
  init_matrix(un, prefix + ".un", hidden, hidden, rng);
  init_vector(bn, prefix + ".bn", hidden);
}

std::vector<Param*> GruParams::params() { return {&wz, &uz, &bz, &wr, &ur, &br, &wn, &un, &bn}; }

void DecoderParams::init(const std::string& prefix, std::size_t d, Rng& rng) {
  cell.init(prefix + ".cell", d, d, rng);
  init_matrix(attn, prefix + ".attn", d, d, rng);
  init_matrix(combine_w, prefix + ".combine_w", d, 2 * d, rng);
  init_vector(combine_b, prefix + ".combine_b", d);
  init_matrix(init_w, prefix + ".init_w", d, d, rng);
  init_vector(init_b, prefix + ".init_b", d);
}

std::vector<Param*> DecoderParams::params() {
  std::vector<Param*> out = cell.params();
  out.push_back(&attn);
  out.push_back(&combine_w);
  out.push_back(&combine_b);
  out.push_back(&init_w);
  out.push_back(&init_b);
  return out;
}

void IntentHead::init(Rng& rng) {
  init_matrix(w_s2s, "head.w_s2s", kSlotCount, kSlotCount, rng);
  init_vector(b_s2s, "head.b_s2s", kSlotCount);
  init_matrix(w_s2i, "head.w_s2i", kSlotCount, kIntentCount, rng);
  init_vector(b_s2i, "head.b_s2i", kIntentCount);
  frozen = false;
}

void IntentHead::freeze() {
  frozen = true;
  for (Param* p : params()) {
    p->trainable = false;
    p->grad.clear();
  }
}

std::vector<Param*> IntentHead::params() { return {&w_s2s, &b_s2s, &w_s2i, &b_s2i}; }

void ModelParams::init() {
  auto issues = config.validate();
  if (!issues.empty()) throw std::invalid_argument("TrainConfig: " + issues.front());
  Rng rng(config.seed);
  const std::size_t d = config.hidden_dim;
  init_matrix(embedding, "embedding", vocab.size(), d, rng);
  for (double& v : embedding.value) v *= 0.5;  // slightly tighter than xavier
  enc_fwd.init("enc_fwd", d, d / 2, rng);
  enc_bwd.init("enc_bwd", d, d / 2, rng);
  sketch_dec.init("sketch_dec", d, rng);
  refine_dec.init("refine_dec", d, rng);
  init_matrix(proj_w, "proj_w", vocab.size(), d, rng);
  init_vector(proj_b, "proj_b", vocab.size());
  head.init(rng);
  head.strict_as_printed = config.head_strict_as_printed;
}

std::vector<Param*> ModelParams::all_params() {
  std::vector<Param*> out = {&embedding};
  for (Param* p : enc_fwd.params()) out.push_back(p);
  for (Param* p : enc_bwd.params()) out.push_back(p);
  for (Param* p : sketch_dec.params()) out.push_back(p);
  for (Param* p : refine_dec.params()) out.push_back(p);
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  for (Param* p : head.params()) out.push_back(p);
  return out;
}

std::vector<const Param*> ModelParams::all_params() const {
  auto mutable_list = const_cast<ModelParams*>(this)->all_params();
  return {mutable_list.begin(), mutable_list.end()};
}

std::vector<Param*> ModelParams::trainable_params() {
  std::vector<Param*> out;
  for (Param* p : all_params())
    if (p->trainable) out.push_back(p);
  return out;
}

namespace {

Tape::Id gru_step(Tape& t, GruParams& g, Tape::Id x, Tape::Id h) {
  Tape::Id z = t.sigmoid(t.add(t.add(t.matvec(g.wz, x), t.matvec(g.uz, h)), t.param_vec(g.bz)));
  Tape::Id r = t.sigmoid(t.add(t.add(t.matvec(g.wr, x), t.matvec(g.ur, h)), t.param_vec(g.br)));
  Tape::Id n =
      t.tanh(t.add(t.add(t.matvec(g.wn, x), t.mul(r, t.matvec(g.un, h))), t.param_vec(g.bn)));
  return t.add(t.mul(t.affine(z, -1.0, 1.0), n), t.mul(z, h));
}

EncoderState run_encoder(Tape& t, ModelParams& m, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  const std::size_t n = ids.size();
  const std::size_t dh = m.config.hidden_dim / 2;
  std::vector<Tape::Id> embs(n);
  for (std::size_t i = 0; i < n; ++i)
    embs[i] = t.embed_row(m.embedding, static_cast<std::size_t>(ids[i]));

  std::vector<double> zeros(dh, 0.0);
  std::vector<Tape::Id> fwd(n), bwd(n);
  Tape::Id h = t.input(zeros);
  for (std::size_t i = 0; i < n; ++i) {
    h = gru_step(t, m.enc_fwd, embs[i], h);
    fwd[i] = h;
  }
  h = t.input(zeros);
  for (std::size_t i = n; i-- > 0;) {
    h = gru_step(t, m.enc_bwd, embs[i], h);
    bwd[i] = h;
  }
  EncoderState enc;
  enc.states.resize(n);
  for (std::size_t i = 0; i < n; ++i) enc.states[i] = t.concat(fwd[i], bwd[i]);
  return enc;
}

Tape::Id decoder_init_state(Tape& t, DecoderParams& dec, const std::vector<Tape::Id>& states) {
  Tape::Id mean = t.mean_of(states);
  return t.tanh(t.add(t.matvec(dec.init_w, mean), t.param_vec(dec.init_b)));
}

struct StepOut {
  Tape::Id state;
  Tape::Id dist;
};

StepOut decoder_step(Tape& t, ModelParams& m, DecoderParams& dec,
                     const std::vector<Tape::Id>& states, Tape::Id prev_state, int prev_token) {
  Tape::Id x = t.embed_row(m.embedding, static_cast<std::size_t>(prev_token));
  Tape::Id s = gru_step(t, dec.cell, x, prev_state);
  Tape::Id query = t.matvec(dec.attn, s);
  Tape::Id alpha = t.softmax(t.attn_scores(states, query));
  Tape::Id ctx = t.attn_context(states, alpha);
  Tape::Id d =
      t.tanh(t.add(t.matvec(dec.combine_w, t.concat(s, ctx)), t.param_vec(dec.combine_b)));
  Tape::Id logits = t.add(t.matvec(m.proj_w, d), t.param_vec(m.proj_b));
  return {s, t.softmax(logits)};
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

DecodeResult run_decoder(Tape& t, ModelParams& m, DecoderParams& dec,
                         const std::vector<Tape::Id>& states, const std::vector<int>* gold,
                         std::size_t max_len) {
  DecodeResult out;
  Tape::Id s = decoder_init_state(t, dec, states);
  int prev = Vocab::kBos;
  std::size_t limit = gold ? gold->size() : max_len;
  for (std::size_t step = 0; step < limit; ++step) {
    StepOut so = decoder_step(t, m, dec, states, s, prev);
    s = so.state;
    out.dists.push_back(so.dist);
    int pred = static_cast<int>(argmax(t.val(so.dist)));
    if (gold) {
      out.ids.push_back(pred);  // diagnostic: argmax under the gold prefix
      prev = (*gold)[step];
    } else {
      if (pred == Vocab::kEos) return out;
      out.ids.push_back(pred);
      prev = pred;
    }
  }
  return out;
}

}  // namespace

EncoderState encode(Tape& tape, ModelParams& m, const std::vector<int>& ids) {
  if (ids.size() > m.config.max_src_len) throw std::invalid_argument("encode: input too long");
  return run_encoder(tape, m, ids);
}

DecodeResult decode_sketch(Tape& tape, ModelParams& m, const EncoderState& enc,
                           const std::vector<int>* gold) {
  return run_decoder(tape, m, m.sketch_dec, enc.states, gold, m.config.max_tgt_len);
}

Tape::Id slot_probabilities(Tape& tape, const ModelParams& m, const std::vector<Tape::Id>& dists) {
  if (dists.empty()) throw std::invalid_argument("slot_probabilities: empty sequence");
  (void)m;
  std::vector<Tape::Id> per_step;
  per_step.reserve(dists.size());
  for (Tape::Id dist : dists)
    per_step.push_back(tape.renorm_floor(tape.slice(dist, Vocab::kSlotBase, kSlotCount), 1e-12));
  return tape.max_elementwise(per_step);
}

std::vector<double> slot_probabilities(const std::vector<std::vector<double>>& dists,
                                       const Vocab& vocab) {
  (void)vocab;
  if (dists.empty()) throw std::invalid_argument("slot_probabilities: empty sequence");
  std::vector<double> q(kSlotCount, 0.0);
  for (const std::vector<double>& dist : dists) {
    double mass = 0.0;
    for (std::size_t s = 0; s < kSlotCount; ++s) mass += dist[Vocab::kSlotBase + s];
    if (mass <= 0.0)
      throw std::domain_error("slot_probabilities: a step has zero mass on slot tokens");
    double denom = mass + 1e-12 * static_cast<double>(kSlotCount);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      double p = (dist[Vocab::kSlotBase + s] + 1e-12) / denom;
      if (p > q[s]) q[s] = p;
    }
  }
  return q;
}

Tape::Id intent_scores(Tape& tape, IntentHead& head, Tape::Id q) {
  Tape::Id hidden =
      tape.relu(tape.add(tape.matvec(head.w_s2s, q), tape.param_vec(head.b_s2s)));
  Tape::Id second_in = head.strict_as_printed ? q : hidden;
  Tape::Id logits = tape.add(tape.matvec_t(head.w_s2i, second_in), tape.param_vec(head.b_s2i));
  return tape.softmax(logits);
}

std::vector<double> intent_scores(const std::vector<double>& q, IntentHead& head) {
  Tape tape;
  Tape::Id node = intent_scores(tape, head, tape.input(q));
  return tape.val(node);
}

EncoderState reencode(Tape& tape, ModelParams& m, const std::vector<int>& post_ids,
                      const std::vector<int>& sketch_ids) {
  std::vector<int> joint;
  joint.reserve(post_ids.size() + sketch_ids.size() + 1);
  joint.insert(joint.end(), post_ids.begin(), post_ids.end());
  joint.push_back(Vocab::kSep);
  joint.insert(joint.end(), sketch_ids.begin(), sketch_ids.end());
  return run_encoder(tape, m, joint);
}

namespace {

struct LiveBeam {
  std::vector<int> ids;
  double logp = 0.0;
  Tape::Id state = -1;
  int prev = Vocab::kBos;
};

bool better_hypothesis(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.normalized != b.normalized) return a.normalized > b.normalized;
  return a.ids < b.ids;
}

BeamHypothesis beam_loop(Tape& tape, ModelParams& m, const std::vector<Tape::Id>& states,
                         std::size_t width, std::size_t max_len) {
  std::vector<LiveBeam> live(1);
  live[0].state = decoder_init_state(tape, m.refine_dec, states);
  std::vector<BeamHypothesis> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      int token;
      double logp;
      Tape::Id state;
    };
    std::vector<Candidate> pool;
    for (std::size_t bi = 0; bi < live.size(); ++bi) {
      StepOut so = decoder_step(tape, m, m.refine_dec, states, live[bi].state, live[bi].prev);
      const std::vector<double>& p = tape.val(so.dist);
      // top `width` tokens of this beam
      std::vector<int> idx(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) idx[i] = static_cast<int>(i);
      std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(std::min(width, idx.size())),
                        idx.end(), [&](int a, int b) {
                          if (p[a] != p[b]) return p[a] > p[b];
                          return a < b;
                        });
      for (std::size_t k = 0; k < std::min(width, idx.size()); ++k) {
        double lp = std::log(p[static_cast<std::size_t>(idx[k])]);
        pool.push_back({bi, idx[k], live[bi].logp + lp, so.state});
      }
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<LiveBeam> next;
    for (const Candidate& c : pool) {
      if (next.size() >= width) break;
      if (c.token == Vocab::kEos) {
        BeamHypothesis h;
        h.ids = live[c.parent].ids;
        h.logprob = c.logp;
        h.normalized = c.logp / static_cast<double>(h.ids.size() + 1);
        finished.push_back(h);
        continue;
      }
      LiveBeam nb;
      nb.ids = live[c.parent].ids;
      nb.ids.push_back(c.token);
      nb.logp = c.logp;
      nb.state = c.state;
      nb.prev = c.token;
      next.push_back(std::move(nb));
    }
    live = std::move(next);
  }

  for (const LiveBeam& b : live) {
    if (b.ids.empty()) continue;
    BeamHypothesis h;
    h.ids = b.ids;
    h.logprob = b.logp;
    h.normalized = b.logp / static_cast<double>(b.ids.size());
    finished.push_back(h);
  }
  if (finished.empty()) return {};
  std::sort(finished.begin(), finished.end(), better_hypothesis);
  return finished.front();
}

}  // namespace

BeamHypothesis decode_refined(Tape& tape, ModelParams& m, const EncoderState& states,
                              std::size_t beam_width) {
  if (beam_width == 0) throw std::invalid_argument("decode_refined: beam width must be >= 1");
  BeamHypothesis best = beam_loop(tape, m, states.states, beam_width, m.config.max_tgt_len);
  if (beam_width > 1) {
    // keep the greedy rollout in the pool so widening the beam never hurts
    BeamHypothesis greedy = beam_loop(tape, m, states.states, 1, m.config.max_tgt_len);
    if (better_hypothesis(greedy, best)) best = greedy;
  }
  return best;
}

TrainExample make_example(const PostRecord& rec, const ParseTree& gold, const Vocab& vocab,
                          const TrainConfig& cfg) {
  TrainExample ex;
  ex.id = rec.id;
  ex.intent = gold.intent;
  ex.src = vocab.encode(tokenize(rec.text));
  if (ex.src.size() > cfg.max_src_len) ex.src.resize(cfg.max_src_len);
  if (ex.src.empty()) ex.src.push_back(Vocab::kUnk);

  ex.sketch_tgt = vocab.encode(sketch_model_tokens(to_sketch(gold)));
  if (ex.sketch_tgt.size() > cfg.max_tgt_len - 1) ex.sketch_tgt.resize(cfg.max_tgt_len - 1);
  ex.sketch_tgt.push_back(Vocab::kEos);

  ex.tree_tgt = vocab.encode(forest_model_tokens(gold.slots));
  if (ex.tree_tgt.size() > cfg.max_tgt_len - 1) ex.tree_tgt.resize(cfg.max_tgt_len - 1);
  ex.tree_tgt.push_back(Vocab::kEos);
  return ex;
}

Tape::Id example_loss(Tape& tape, ModelParams& m, const TrainExample& ex, LossBreakdown* out) {
  EncoderState enc = encode(tape, m, ex.src);

  DecodeResult sk = decode_sketch(tape, m, enc, &ex.sketch_tgt);
  std::vector<Tape::Id> ce_c;
  for (std::size_t i = 0; i < ex.sketch_tgt.size(); ++i)
    ce_c.push_back(tape.pick_neglog(sk.dists[i], static_cast<std::size_t>(ex.sketch_tgt[i])));
  Tape::Id l_c = tape.affine(tape.add_n(ce_c), 1.0 / static_cast<double>(ce_c.size()), 0.0);

  Tape::Id q = slot_probabilities(tape, m, sk.dists);
  Tape::Id s_intent = intent_scores(tape, m.head, q);
  Tape::Id l_intent = tape.pick_neglog(s_intent, static_cast<std::size_t>(ex.intent));

  std::vector<int> gold_sketch(ex.sketch_tgt.begin(), ex.sketch_tgt.end() - 1);  // strip EOS
  EncoderState joint = reencode(tape, m, ex.src, gold_sketch);
  DecodeResult rf = run_decoder(tape, m, m.refine_dec, joint.states, &ex.tree_tgt,
                                m.config.max_tgt_len);
  std::vector<Tape::Id> ce_f;
  for (std::size_t i = 0; i < ex.tree_tgt.size(); ++i)
    ce_f.push_back(tape.pick_neglog(rf.dists[i], static_cast<std::size_t>(ex.tree_tgt[i])));
  Tape::Id l_f = tape.affine(tape.add_n(ce_f), 1.0 / static_cast<double>(ce_f.size()), 0.0);

  Tape::Id total = tape.add(tape.add(l_c, l_f), l_intent);
  if (out) {
    out->sketch = tape.scalar(l_c);
    out->refine = tape.scalar(l_f);
    out->intent = tape.scalar(l_intent);
    out->total = tape.scalar(total);
  }
  return total;
}

LossBreakdown batch_loss(Tape& tape, ModelParams& m, const std::vector<TrainExample>& batch) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  for (Param* p : m.trainable_params()) p->ensure_grad();
  LossBreakdown sum;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    tape.reset();
    LossBreakdown one;
    Tape::Id total = example_loss(tape, m, ex, &one);
    if (!std::isfinite(one.total))
      throw std::runtime_error("non-finite loss on example \"" + ex.id + "\"");
    tape.backward(total, inv);
    sum.sketch += one.sketch * inv;
    sum.refine += one.refine * inv;
    sum.intent += one.intent * inv;
    sum.total += one.total * inv;
  }
  return sum;
}

LossBreakdown batch_loss(ModelParams& m, const std::vector<TrainExample>& batch) {
  Tape tape;
  return batch_loss(tape, m, batch);
}

Prediction predict_detail(ModelParams& m, const std::string& text, const Policy& policy) {
  Prediction out;
  std::vector<int> src = m.vocab.encode(tokenize(text));
  if (src.size() > m.config.max_src_len) src.resize(m.config.max_src_len);
  if (src.empty()) {
    out.tree = attach_intent({}, policy);
    return out;
  }

  Tape tape;
  EncoderState enc = encode(tape, m, src);
  DecodeResult sk = decode_sketch(tape, m, enc, nullptr);
  std::vector<std::string> sketch_tokens;
  for (int id : sk.ids) sketch_tokens.push_back(m.vocab.token(id));
  out.sketch = detokenize_model_tokens(sketch_tokens);

  EncoderState joint = reencode(tape, m, src, sk.ids);
  BeamHypothesis best = decode_refined(tape, m, joint, m.config.beam_width);

  std::vector<std::string> forest_tokens;
  for (int id : best.ids) forest_tokens.push_back(m.vocab.token(id));
  ForestParse parsed = parse_slot_forest(detokenize_model_tokens(forest_tokens), true);
  out.dropped = parsed.dropped;

  std::vector<SlotFiller> fillers;
  for (SlotFiller& f : parsed.fillers) {
    if (f.masked) {
      out.dropped.push_back({0, 0, "masked filler in refined output"});
      continue;
    }
    fillers.push_back(std::move(f));
  }
  out.tree = attach_intent(fillers, policy);
  return out;
}

ParseTree predict(ModelParams& m, const std::string& text, const Policy& policy) {
  return predict_detail(m, text, policy).tree;
}

}  // namespace icsf
