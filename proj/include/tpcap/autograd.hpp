#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "tpcap/registry.hpp"
#include "tpcap/tensor.hpp"

namespace tpcap {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Mat values. Node order is creation order; backward
// walks it in reverse. Single-threaded and deterministic.
class Tape {
 public:
  Var input(Mat v);
  // One node per Parameter per tape, so shared layers accumulate gradients
  // into a single node. Frozen parameters participate in the forward pass but
  // never receive gradients.
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  Mat& grad(Var v) { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // A * B^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var bias);  // bias is 1 x C, broadcast over rows
  Var scale(Var a, double s);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, int r0, int r1);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int c0, int c1);
  Var softmax_rows(Var a);
  // Square scores only; row i attends to columns 0..i.
  Var softmax_causal(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var gelu(Var a);
  // Gathers rows of `table` at `ids`; scatters gradients back when the table
  // is trainable.
  Var embed(Var table, const std::vector<int>& ids);
  // Sum of -log p(target) over (row, target) pairs; returns a 1x1 scalar.
  Var cross_entropy_sum(Var logits, const std::vector<int>& rows,
                        const std::vector<int>& targets);

  // Affine helper: x * W + b (W: in x out, b: 1 x out).
  Var affine(Var x, Parameter& w, Parameter& b);

  void backward(Var root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
    Parameter* bound_param = nullptr;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Tape&)> back);
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

struct AttnParams {
  Parameter *wq = nullptr, *bq = nullptr;
  Parameter *wk = nullptr, *bk = nullptr;
  Parameter *wv = nullptr, *bv = nullptr;
  Parameter *wo = nullptr, *bo = nullptr;
};

// Multi-head scaled dot-product attention. q_in: Lq x d, kv_in: Lk x d.
// All projection widths equal d; d must be divisible by n_heads.
Var attention(Tape& t, Var q_in, Var kv_in, const AttnParams& w, int n_heads,
              bool causal);

// Declares the eight attention parameters under `prefix` with width d.
AttnParams declare_attention(ParameterRegistry& reg, const std::string& prefix,
                             int d, bool trainable);
void init_attention(const AttnParams& w, Rng& rng, double std);

}  // namespace tpcap
