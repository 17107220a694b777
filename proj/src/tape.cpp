#include "icsf/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "icsf/kernels.hpp"

namespace icsf {

namespace {
const kernels::Ops& K() { return kernels::ops(); }
}  // namespace

Tape::Node& Tape::push(Op op, std::size_t val_size) {
  if (size_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[size_++];
  n.op = op;
  n.val.resize(val_size);
  n.grad.clear();
  n.a = n.b = -1;
  n.param = nullptr;
  n.list.clear();
  n.winners.clear();
  n.aux = 0;
  n.k = n.c = 0.0;
  return n;
}

Tape::Id Tape::input(const std::vector<double>& v) { return input(v.data(), v.size()); }

Tape::Id Tape::input(const double* data, std::size_t n) {
  Node& node = push(Op::Input, n);
  std::copy(data, data + n, node.val.begin());
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::param_vec(Param& p) {
  Node& node = push(Op::ParamVec, p.size());
  std::copy(p.value.begin(), p.value.end(), node.val.begin());
  node.param = &p;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::embed_row(Param& table, std::size_t row) {
  Node& node = push(Op::EmbedRow, table.cols);
  const double* src = table.value.data() + row * table.cols;
  std::copy(src, src + table.cols, node.val.begin());
  node.param = &table;
  node.aux = row;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::matvec(Param& w, Id x) {
  assert(nodes_[x].val.size() == w.cols);
  Node& node = push(Op::MatVec, w.rows);
  K().gemv(w.value.data(), nodes_[x].val.data(), node.val.data(), w.rows, w.cols);
  node.param = &w;
  node.a = x;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::matvec_t(Param& w, Id x) {
  assert(nodes_[x].val.size() == w.rows);
  Node& node = push(Op::MatVecT, w.cols);
  std::fill(node.val.begin(), node.val.end(), 0.0);
  K().gemv_t(w.value.data(), nodes_[x].val.data(), node.val.data(), w.rows, w.cols);
  node.param = &w;
  node.a = x;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::add(Id a, Id b) {
  assert(nodes_[a].val.size() == nodes_[b].val.size());
  Node& node = push(Op::Add, nodes_[a].val.size());
  K().add(nodes_[a].val.data(), nodes_[b].val.data(), node.val.data(), node.val.size());
  node.a = a;
  node.b = b;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::mul(Id a, Id b) {
  assert(nodes_[a].val.size() == nodes_[b].val.size());
  Node& node = push(Op::Mul, nodes_[a].val.size());
  K().mul(nodes_[a].val.data(), nodes_[b].val.data(), node.val.data(), node.val.size());
  node.a = a;
  node.b = b;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::affine(Id a, double k, double c) {
  Node& node = push(Op::Affine, nodes_[a].val.size());
  for (std::size_t i = 0; i < node.val.size(); ++i) node.val[i] = k * nodes_[a].val[i] + c;
  node.a = a;
  node.k = k;
  node.c = c;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::tanh(Id a) {
  Node& node = push(Op::Tanh, nodes_[a].val.size());
  for (std::size_t i = 0; i < node.val.size(); ++i) node.val[i] = std::tanh(nodes_[a].val[i]);
  node.a = a;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::sigmoid(Id a) {
  Node& node = push(Op::Sigmoid, nodes_[a].val.size());
  for (std::size_t i = 0; i < node.val.size(); ++i)
    node.val[i] = 1.0 / (1.0 + std::exp(-nodes_[a].val[i]));
  node.a = a;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::relu(Id a) {
  Node& node = push(Op::Relu, nodes_[a].val.size());
  K().relu(nodes_[a].val.data(), node.val.data(), node.val.size());
  node.a = a;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::concat(Id a, Id b) {
  std::size_t na = nodes_[a].val.size(), nb = nodes_[b].val.size();
  Node& node = push(Op::Concat, na + nb);
  std::copy(nodes_[a].val.begin(), nodes_[a].val.end(), node.val.begin());
  std::copy(nodes_[b].val.begin(), nodes_[b].val.end(), node.val.begin() + na);
  node.a = a;
  node.b = b;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::slice(Id a, std::size_t offset, std::size_t len) {
  assert(offset + len <= nodes_[a].val.size());
  Node& node = push(Op::Slice, len);
  std::copy(nodes_[a].val.begin() + offset, nodes_[a].val.begin() + offset + len,
            node.val.begin());
  node.a = a;
  node.aux = offset;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::softmax(Id a) {
  Node& node = push(Op::Softmax, nodes_[a].val.size());
  const std::vector<double>& x = nodes_[a].val;  // resolve after push: it may reallocate
  double m = K().max(x.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) node.val[i] = std::exp(x[i] - m);
  double s = K().sum(node.val.data(), node.val.size());
  K().scale(1.0 / s, node.val.data(), node.val.data(), node.val.size());
  node.a = a;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::pick_neglog(Id probs, std::size_t index) {
  assert(index < nodes_[probs].val.size());
  Node& node = push(Op::PickNegLog, 1);
  node.val[0] = -std::log(nodes_[probs].val[index]);
  node.a = probs;
  node.aux = index;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::add_n(const std::vector<Id>& terms) {
  assert(!terms.empty());
  Node& node = push(Op::AddN, nodes_[terms[0]].val.size());
  std::fill(node.val.begin(), node.val.end(), 0.0);
  for (Id t : terms) {
    assert(nodes_[t].val.size() == node.val.size());
    K().axpy(1.0, nodes_[t].val.data(), node.val.data(), node.val.size());
  }
  node.list = terms;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::mean_of(const std::vector<Id>& vecs) {
  assert(!vecs.empty());
  Node& node = push(Op::MeanOf, nodes_[vecs[0]].val.size());
  std::fill(node.val.begin(), node.val.end(), 0.0);
  double inv = 1.0 / static_cast<double>(vecs.size());
  for (Id v : vecs) K().axpy(inv, nodes_[v].val.data(), node.val.data(), node.val.size());
  node.list = vecs;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::max_elementwise(const std::vector<Id>& vecs) {
  assert(!vecs.empty());
  std::size_t n = nodes_[vecs[0]].val.size();
  Node& node = push(Op::MaxElemwise, n);
  node.winners.assign(n, 0);
  node.val = nodes_[vecs[0]].val;
  for (std::size_t vi = 1; vi < vecs.size(); ++vi) {
    const std::vector<double>& v = nodes_[vecs[vi]].val;
    assert(v.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > node.val[i]) {
        node.val[i] = v[i];
        node.winners[i] = static_cast<std::int32_t>(vi);
      }
    }
  }
  node.list = vecs;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::renorm_floor(Id a, double eps) {
  Node& node = push(Op::RenormFloor, nodes_[a].val.size());
  const std::vector<double>& x = nodes_[a].val;  // resolve after push: it may reallocate
  double s = K().sum(x.data(), x.size()) + eps * static_cast<double>(x.size());
  if (s <= 0.0) throw std::domain_error("renorm_floor: non-positive mass");
  for (std::size_t i = 0; i < x.size(); ++i) node.val[i] = (x[i] + eps) / s;
  node.a = a;
  node.k = s;  // stashed denominator
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::attn_scores(const std::vector<Id>& states, Id query) {
  Node& node = push(Op::AttnScores, states.size());
  const std::vector<double>& q = nodes_[query].val;
  for (std::size_t i = 0; i < states.size(); ++i)
    node.val[i] = K().dot(nodes_[states[i]].val.data(), q.data(), q.size());
  node.list = states;
  node.a = query;
  return static_cast<Id>(size_ - 1);
}

Tape::Id Tape::attn_context(const std::vector<Id>& states, Id alpha) {
  assert(nodes_[alpha].val.size() == states.size());
  Node& node = push(Op::AttnContext, nodes_[states[0]].val.size());
  std::fill(node.val.begin(), node.val.end(), 0.0);
  const std::vector<double>& a = nodes_[alpha].val;
  for (std::size_t i = 0; i < states.size(); ++i)
    K().axpy(a[i], nodes_[states[i]].val.data(), node.val.data(), node.val.size());
  node.list = states;
  node.a = alpha;
  return static_cast<Id>(size_ - 1);
}

void Tape::backward(Id loss, double seed) {
  assert(nodes_[loss].val.size() == 1);
  for (std::size_t i = 0; i <= static_cast<std::size_t>(loss); ++i)
    nodes_[i].grad.assign(nodes_[i].val.size(), 0.0);
  nodes_[loss].grad[0] = seed;
  for (std::int64_t i = loss; i >= 0; --i) backprop_node(nodes_[i]);
}

void Tape::backprop_node(Node& n) {
  const std::size_t len = n.val.size();
  const double* dy = n.grad.data();
  auto g = [&](Id id) { return nodes_[id].grad.data(); };
  auto v = [&](Id id) { return nodes_[id].val.data(); };

  switch (n.op) {
    case Op::Input:
      break;
    case Op::ParamVec:
      if (n.param->trainable) K().axpy(1.0, dy, n.param->grad.data(), len);
      break;
    case Op::EmbedRow:
      if (n.param->trainable)
        K().axpy(1.0, dy, n.param->grad.data() + n.aux * n.param->cols, len);
      break;
    case Op::MatVec:
      if (n.param->trainable)
        K().ger(dy, v(n.a), n.param->grad.data(), n.param->rows, n.param->cols);
      K().gemv_t(n.param->value.data(), dy, g(n.a), n.param->rows, n.param->cols);
      break;
    case Op::MatVecT:
      if (n.param->trainable)
        K().ger(v(n.a), dy, n.param->grad.data(), n.param->rows, n.param->cols);
      K().gemv(n.param->value.data(), dy, nodes_[n.a].grad.data(), n.param->rows, n.param->cols);
      break;
    case Op::Add:
      K().axpy(1.0, dy, g(n.a), len);
      K().axpy(1.0, dy, g(n.b), len);
      break;
    case Op::Mul:
      K().mul_acc(dy, v(n.b), g(n.a), len);
      K().mul_acc(dy, v(n.a), g(n.b), len);
      break;
    case Op::Affine:
      K().axpy(n.k, dy, g(n.a), len);
      break;
    case Op::Tanh:
      K().tanh_bwd_acc(dy, n.val.data(), g(n.a), len);
      break;
    case Op::Sigmoid:
      K().sigmoid_bwd_acc(dy, n.val.data(), g(n.a), len);
      break;
    case Op::Relu:
      K().relu_bwd_acc(dy, v(n.a), g(n.a), len);
      break;
    case Op::Concat: {
      std::size_t na = nodes_[n.a].val.size();
      K().axpy(1.0, dy, g(n.a), na);
      K().axpy(1.0, dy + na, g(n.b), len - na);
      break;
    }
    case Op::Slice:
      K().axpy(1.0, dy, g(n.a) + n.aux, len);
      break;
    case Op::Softmax: {
      double inner = K().dot(dy, n.val.data(), len);
      double* da = g(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += (dy[i] - inner) * n.val[i];
      break;
    }
    case Op::PickNegLog:
      nodes_[n.a].grad[n.aux] += -dy[0] / nodes_[n.a].val[n.aux];
      break;
    case Op::AddN:
      for (Id t : n.list) K().axpy(1.0, dy, g(t), len);
      break;
    case Op::MeanOf: {
      double inv = 1.0 / static_cast<double>(n.list.size());
      for (Id t : n.list) K().axpy(inv, dy, g(t), len);
      break;
    }
    case Op::MaxElemwise:
      for (std::size_t i = 0; i < len; ++i) nodes_[n.list[n.winners[i]]].grad[i] += dy[i];
      break;
    case Op::RenormFloor: {
      double inner = K().dot(dy, n.val.data(), len);
      double* da = g(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += (dy[i] - inner) / n.k;
      break;
    }
    case Op::AttnScores: {
      const double* q = v(n.a);
      double* dq = g(n.a);
      std::size_t d = nodes_[n.a].val.size();
      for (std::size_t i = 0; i < len; ++i) {
        K().axpy(dy[i], q, g(n.list[i]), d);
        K().axpy(dy[i], v(n.list[i]), dq, d);
      }
      break;
    }
    case Op::AttnContext: {
      const double* a = v(n.a);
      double* da = g(n.a);
      for (std::size_t i = 0; i < n.list.size(); ++i) {
        K().axpy(a[i], dy, g(n.list[i]), len);
        da[i] += K().dot(dy, v(n.list[i]), len);
      }
      break;
    }
  }
}

void Tape::reset() { size_ = 0; }

}  // namespace icsf
