#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "textsr/tensor.hpp"

namespace textsr {

// Reverse-mode tape over dense tensors. Nodes are created in topological
// order, so backward is a reverse sweep over creation order. Graphs are
// built per forward pass and discarded; parameters are bound as leaves.
class Graph {
 public:
  int leaf(Tensor t, bool needs_grad);
  int constant(Tensor t) { return leaf(std::move(t), false); }

  const Tensor& val(int id) const { return nodes_[id].val; }
  const Tensor& grad_of(int id) const;

  // Elementwise.
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double s);
  int silu(int a);

  // Dense algebra on (N,D) matrices.
  int matmul(int a, int b);     // (m,k)x(k,n)
  int matmul_nt(int a, int b);  // (m,k)x(n,k)^T -> (m,n)
  int linear(int x, int w, int b);  // x(N,Din), w(Din,Dout), b(Dout); b = -1 for none
  int softmax_rows(int x);
  int row_layernorm(int x, int gain, int bias);

  // Convolutional stack on (B,C,H,W).
  int conv2d(int x, int w, int b, int ksize);  // ksize in {1,3}, same padding
  int chan_layernorm(int x, int gain, int bias);
  int avgpool_hw(int x, int ph, int pw);
  int upsample2(int x);
  int concat_ch(int a, int b);
  int add_bc(int x, int v);  // x(B,C,H,W) + v(B,C)

  // Token plumbing.
  int chw_to_tokens(int x);  // (B,C,H,W) -> (B*H*W, C), rows ordered (b,y,x)
  int tokens_to_chw(int x, int B, int C, int H, int W);
  int slice_rows(int x, int r0, int nrows);
  int concat_rows(const std::vector<int>& parts);
  int add_rows_grouped(int x, int v, int rows_per_group);  // x(G*R,D) + v(G,D)
  int embed(int table, std::vector<int> idx);

  // Losses (scalar nodes of shape {1}).
  int mse_loss(int pred, Tensor target);
  int softmax_ce_loss(int logits, std::vector<int> targets);
  int weighted_sum(int x, Tensor weights);

  void backward(int loss_id);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    std::vector<int> parents;
    std::function<void(Graph&, int)> back;
  };
  // deque keeps val()/grad_of() references stable while the graph grows.
  std::deque<Node> nodes_;

  int make(Tensor val, std::vector<int> parents, std::function<void(Graph&, int)> back);
  Tensor& grad_mut(int id);
  bool any_needs_grad(const std::vector<int>& ids) const;

  friend struct GraphTestAccess;
};

}  // namespace textsr
