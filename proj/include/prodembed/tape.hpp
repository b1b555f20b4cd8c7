// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "prodembed/rng.hpp"
#include "prodembed/tensor.hpp"

namespace prodembed::num {

// Ordered record of primitive operations. Building a scalar loss through the
// tape and calling backward() yields exact reverse-mode gradients for every
// registered parameter; gradient shapes always match their parameter shapes.
// A tape is single-threaded and lives for one forward/backward pass.
class GradTape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Leaf referencing external parameter storage. Repeated registration of the
  // same tensor returns the same Var. The storage must outlive the tape.
  Var param(Tensor* storage);
  // Leaf holding a fixed value; no gradient is tracked through it.
  Var constant(Tensor value);
  // Read-only external leaf: like constant but without copying the storage.
  Var input(const Tensor* storage);

  // --- primitive ops -------------------------------------------------------
  Var lookup(Var table, std::vector<int> indices);           // rows gathered from a table
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);                                      // same shape
  Var add_bias(Var x, Var bias);                              // [n,d] + [d]
  Var scale(Var x, double c);
  Var mul(Var a, Var b);                                      // elementwise
  Var relu(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var softmax_rows(Var x);
  Var dropout(Var x, double p, Rng& rng, bool enabled);
  Var slice_cols(Var x, int from, int to);                    // [n, to-from]
  Var gather_rows(Var x, std::vector<int> rows);
  Var sum(Var x);                                             // scalar

  // Multi-head attention plumbing. Tensors are [batch*len, heads*head_dim]
  // (token-major) or [batch*heads*len, head_dim] (head-major).
  Var split_heads(Var x, int batch, int len, int heads);
  Var merge_heads(Var x, int batch, int len, int heads);
  Var attn_scores(Var q, Var k, int blocks, int len, double scl);  // [blocks*len, len]
  Var attn_apply(Var probs, Var v, int blocks, int len);           // [blocks*len, head_dim]

  // Mean over non-pad positions of each row block: [batch*len, d] -> [batch, d].
  Var masked_mean_pool(Var x, int batch, int len, const std::vector<std::uint8_t>& pad_flags);
  // out[b,:] = sum_i w[i] * feats[b*layers+i, :]; feats is [batch*layers, d], w is [layers].
  Var layer_weighted_sum(Var feats, Var w, int batch, int layers);

  // --- losses (scalar outputs) ---------------------------------------------
  Var cross_entropy_mean(Var logits, std::vector<int> targets);
  Var masked_cross_entropy(Var logits, std::vector<int> targets, std::vector<std::uint8_t> mask_flags);
  Var bce_with_logits(Var logits, std::vector<double> labels);

  // --- access ---------------------------------------------------------------
  const Tensor& value(Var v) const;
  double scalar_value(Var v) const;
  // Reverse pass from a scalar loss. May be called once per tape.
  void backward(Var loss);
  // Gradient of the loss w.r.t. a node; valid after backward(). Zero tensor
  // for params the loss does not depend on.
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // set for params/inputs; value lives outside
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloced = false;
    std::function<void(GradTape&, int)> back;  // empty for leaves; arg is own id
  };

  const Tensor& val(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  Tensor& grad_buf(int id);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> param_ids_;
  bool backward_done_ = false;
};

}  // namespace prodembed::num
