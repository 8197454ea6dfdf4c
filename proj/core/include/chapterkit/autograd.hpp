#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chapterkit/tensor.hpp"

namespace chapterkit {

class Rng;

// Square boolean matrix; row i lists the positions i may attend to.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(size_t n, bool value = false)
      : n_(n), cells_(n * n, value ? 1 : 0) {}

  size_t size() const { return n_; }
  bool at(size_t i, size_t j) const { return cells_[i * n_ + j] != 0; }
  void set(size_t i, size_t j, bool v) { cells_[i * n_ + j] = v ? 1 : 0; }

 private:
  size_t n_ = 0;
  std::vector<uint8_t> cells_;
};

namespace autograd {

struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward() walks it in reverse once.
// A tape is single-use: building, one backward pass, then gradient reads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. param() aliases external storage owned by the caller (the
  // caller must keep it alive for the tape's lifetime) and is memoized per
  // pointer, so repeated uses of one parameter share a gradient slot;
  // leaf() copies.
  Var leaf(Tensor value, bool requires_grad = false);
  Var param(const Tensor* value);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Gradient accumulated for a registered parameter; nullptr when the
  // parameter was never used or received no gradient.
  const Tensor* param_grad(const Tensor* value) const;

  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_rowvec(Var a, Var bias);
  Var matmul(Var a, Var b);
  Var softmax(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var rope_rotate(Var x, double base = 10000.0);
  Var masked_attention(Var q, Var k, Var v, const BoolMatrix& mask);
  Var mean_pool(Var x, const std::vector<uint8_t>& valid);
  Var rows_gather(Var table, const std::vector<int>& ids);
  Var col_slice(Var x, size_t begin, size_t width);
  Var col_concat(const std::vector<Var>& parts);
  Var stack_rows(const std::vector<Var>& rows);
  Var row_slice(Var x, size_t begin, size_t count);
  Var gelu(Var x);
  Var sigmoid(Var x);
  Var sum(Var x);
  Var detach(Var x);
  Var dropout(Var x, double rate, Rng& rng, bool training);
  Var weighted_bce(Var probs, const std::vector<int>& labels, double w0,
                   double w1);

  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient accumulated for v; empty tensor when no gradient reached it.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    const char* op = "";
    bool requires_grad = false;
    std::function<void()> backprop;
  };

  const Tensor& val(int i) const {
    const Node& n = nodes_[i];
    return n.external ? *n.external : n.value;
  }
  Tensor& grad_slot(int i);
  bool wants(int i) const { return nodes_[i].requires_grad; }
  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> param_index_;
  bool backward_done_ = false;
  Tensor empty_;
};

// Builds a graph from leaf inputs and returns the scalar loss.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares analytic gradients against central finite differences at
// every input entry. Step is h_scale * max(1, |x|) per entry. Returns the
// maximum relative error, |a - n| / max(|a|, |n|, 1).
double grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs,
                  double h_scale = 1e-4);

}  // namespace autograd
}  // namespace chapterkit
