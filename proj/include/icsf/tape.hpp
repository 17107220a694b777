#pragma once

// Minimal reverse-mode autodiff over double vectors. Nodes are appended in
// construction order (already topological); backward walks them in reverse.
// The node pool is recycled by reset() so steady-state training does not
// allocate. All inner arithmetic goes through the kernels dispatch.

#include <cstdint>
#include <string>
#include <vector>

namespace icsf {

// A persistent, named tensor. Matrices are row-major rows x cols; vectors
// have cols == 1. Frozen parameters (trainable == false) behave as constants:
// the tape never writes their grad.
struct Param {
  std::string name;
  std::size_t rows = 0, cols = 1;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  std::size_t size() const { return value.size(); }
  void ensure_grad() { grad.assign(value.size(), 0.0); }
};

class Tape {
 public:
  using Id = std::int32_t;

  // leaf holding a copy of raw data; no gradient flows out of it
  Id input(const std::vector<double>& v);
  Id input(const double* data, std::size_t n);

  Id param_vec(Param& p);              // whole parameter as a vector node
  Id embed_row(Param& table, std::size_t row);

  Id matvec(Param& w, Id x);           // y = W x
  Id matvec_t(Param& w, Id x);         // y = W^T x
  Id add(Id a, Id b);
  Id mul(Id a, Id b);
  Id affine(Id a, double k, double c); // y = k*a + c
  Id tanh(Id a);
  Id sigmoid(Id a);
  Id relu(Id a);
  Id concat(Id a, Id b);
  Id slice(Id a, std::size_t offset, std::size_t len);
  Id softmax(Id a);
  Id pick_neglog(Id probs, std::size_t index);     // scalar -log(p[index])
  Id add_n(const std::vector<Id>& terms);          // elementwise sum
  Id mean_of(const std::vector<Id>& vecs);
  Id max_elementwise(const std::vector<Id>& vecs);
  Id renorm_floor(Id a, double eps);               // (a+eps) / sum(a+eps)
  Id attn_scores(const std::vector<Id>& states, Id query);  // out[i] = e_i . q
  Id attn_context(const std::vector<Id>& states, Id alpha); // sum alpha_i e_i

  const std::vector<double>& val(Id id) const { return nodes_[id].val; }
  const std::vector<double>& grad(Id id) const { return nodes_[id].grad; }
  double scalar(Id id) const { return nodes_[id].val[0]; }

  // Accumulates dL/dparam into each trainable Param::grad reachable from
  // `loss` (a scalar node), seeding with `seed`.
  void backward(Id loss, double seed = 1.0);

  void reset();                 // drop all nodes, keep buffers
  std::size_t size() const { return size_; }

 private:
  enum class Op : std::uint8_t {
    Input, ParamVec, EmbedRow, MatVec, MatVecT, Add, Mul, Affine, Tanh, Sigmoid,
    Relu, Concat, Slice, Softmax, PickNegLog, AddN, MeanOf, MaxElemwise,
    RenormFloor, AttnScores, AttnContext,
  };

  struct Node {
    Op op = Op::Input;
    std::vector<double> val;
    std::vector<double> grad;
    Id a = -1, b = -1;
    Param* param = nullptr;
    std::vector<Id> list;
    std::vector<std::int32_t> winners;  // MaxElemwise argmax per coordinate
    std::size_t aux = 0;                // slice offset, pick index, ...
    double k = 0.0, c = 0.0;            // affine coefficients, renorm eps
  };

  Node& push(Op op, std::size_t val_size);
  void backprop_node(Node& n);

  std::vector<Node> nodes_;
  std::size_t size_ = 0;
};

}  // namespace icsf
