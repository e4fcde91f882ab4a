#pragma once

#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "lrdcast/nn/attention.hpp"
#include "lrdcast/nn/ndarray.hpp"

namespace lrdcast::nn {

/// One value on the tape. Parameters are long-lived nodes whose grad
/// accumulates across backward calls until zero_grad().
struct Node {
  NdArray value;
  NdArray grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

using Var = std::shared_ptr<Node>;

Var constant(NdArray value);
Var parameter(NdArray value);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// x (n, m) + b (1, m) broadcast over rows.
Var add_row(const Var& x, const Var& b);
Var linear(const Var& x, const Var& w, const Var& b);
Var scale(const Var& x, double s);
/// tanh approximation of GELU.
Var gelu(const Var& x);
/// Row-wise layer normalization with affine (1, m) gain and bias.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Inverted dropout; identity when `training` is false or p == 0.
Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng);
Var slice_rows(const Var& x, std::size_t start, std::size_t count);
/// Scalar mean squared error against a constant target of the same shape.
Var mse_loss(const Var& pred, const NdArray& target);

struct AttentionSpec {
  std::size_t n_heads = 1;
  bool causal = false;
  /// When false every query is active (full attention).
  bool sparse = true;
  double factor_c = 5.0;
};

/// Multi-head attention on already projected q (L_Q, d), k, v (L_K, d).
/// Per head, sparse mode scores queries by max-mean over all keys and keeps
/// the top u = max(1, ceil(c ln L_Q)); the selection is a constant for the
/// backward pass.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec,
                         AttentionOpCounter* counter = nullptr);

/// Reverse sweep from a scalar node.
void backward(const Var& loss);

}  // namespace lrdcast::nn
