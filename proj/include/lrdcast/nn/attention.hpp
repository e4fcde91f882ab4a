#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "lrdcast/nn/ndarray.hpp"

namespace lrdcast::nn {

/// Multiply-add counts of one attention evaluation, split by phase.
struct AttentionOpCounter {
  std::uint64_t score_ops = 0;      // query-key products spent on sparsity scoring
  std::uint64_t attention_ops = 0;  // softmax rows of the active queries
  std::uint64_t fill_ops = 0;       // mean-of-V rows for lazy queries

  std::uint64_t attention_and_fill() const noexcept { return attention_ops + fill_ops; }
  void reset() noexcept { *this = {}; }
};

/// Softmax probabilities of the active queries, kept for the backward pass.
struct HeadCache {
  std::vector<std::size_t> active;  // query indices with full attention rows
  std::vector<char> is_active;      // per query
  NdArray probs;                    // (active.size(), L_K), zero past the causal limit
};

/// Number of active queries: max(1, ceil(c ln L_Q)) capped at L_Q.
std::size_t sparse_query_count(double factor_c, std::size_t L_Q);

/// softmax(Q K^T / sqrt(d_k)) V. With `causal`, query i attends to keys 0..i.
NdArray full_attention(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal = false);

/// Max-minus-mean of the scaled scores q_i . k_j / sqrt(d_k) over all keys.
std::vector<double> sparsity_score(const NdArray& Q, const NdArray& K);

/// Same criterion over `sample_k` keys drawn uniformly with replacement.
std::vector<double> sampled_sparsity_score(const NdArray& Q, const NdArray& K, std::size_t sample_k,
                                           std::mt19937_64& rng, AttentionOpCounter* counter = nullptr);

/// Indices of the u largest scores in ascending index order; ties prefer the lower index.
std::vector<std::size_t> select_top_u(const std::vector<double>& scores, std::size_t u);

struct ProbSparseOptions {
  bool causal = false;
  /// Score queries against a key sample of size ceil(c ln L_K) instead of all keys.
  bool sample_keys = false;
  double factor_c = 5.0;
  std::uint64_t sample_seed = 0;
};

/// Top-u queries by sparsity score get full attention rows; the others
/// output the mean of V (prefix mean of the visible rows under a causal mask).
NdArray prob_sparse_attention(const NdArray& Q, const NdArray& K, const NdArray& V, std::size_t u,
                              const ProbSparseOptions& options = {}, AttentionOpCounter* counter = nullptr);

/// Shared kernel. `active` = nullopt makes every query active.
NdArray attention_kernel(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal,
                         const std::optional<std::vector<std::size_t>>& active, HeadCache* cache,
                         AttentionOpCounter* counter);

/// Gradients of attention_kernel given the cached probabilities.
void attention_kernel_backward(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal,
                               const HeadCache& cache, const NdArray& grad_out, NdArray& grad_q, NdArray& grad_k,
                               NdArray& grad_v);

}  // namespace lrdcast::nn
