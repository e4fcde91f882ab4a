#include "lrdcast/nn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lrdcast::nn {

namespace {

void check_shapes(const NdArray& Q, const NdArray& K, const NdArray& V) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2) throw std::invalid_argument("attention: rank-2 inputs required");
  if (Q.cols() != K.cols()) {
    throw std::invalid_argument("attention: Q " + Q.shape_string() + " and K " + K.shape_string() +
                                " differ in d_k");
  }
  if (K.rows() != V.rows()) {
    throw std::invalid_argument("attention: K " + K.shape_string() + " and V " + V.shape_string() +
                                " differ in length");
  }
  if (K.rows() == 0) throw std::invalid_argument("attention: no keys");
}

std::size_t visible_keys(std::size_t query, std::size_t L_K, bool causal) {
  return causal ? std::min(query + 1, L_K) : L_K;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::size_t sparse_query_count(double factor_c, std::size_t L_Q) {
  if (L_Q == 0) return 0;
  const double u = std::ceil(factor_c * std::log(static_cast<double>(L_Q)));
  return std::min(L_Q, static_cast<std::size_t>(std::max(1.0, u)));
}

NdArray attention_kernel(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal,
                         const std::optional<std::vector<std::size_t>>& active, HeadCache* cache,
                         AttentionOpCounter* counter) {
  check_shapes(Q, K, V);
  const std::size_t L_Q = Q.rows(), L_K = K.rows(), d_k = Q.cols(), d_v = V.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));

  std::vector<std::size_t> rows;
  if (active) {
    rows = *active;
  } else {
    rows.resize(L_Q);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  std::vector<char> is_active(L_Q, 0);
  for (std::size_t i : rows) {
    if (i >= L_Q) throw std::out_of_range("attention: active query index out of range");
    is_active[i] = 1;
  }

  NdArray out = NdArray::matrix(L_Q, d_v);
  NdArray probs = NdArray::matrix(rows.size(), L_K);
  std::vector<double> s(L_K);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const std::size_t limit = visible_keys(i, L_K, causal);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < limit; ++j) {
      s[j] = dot(Q.row(i), K.row(j)) * scale;
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      s[j] = std::exp(s[j] - mx);
      z += s[j];
    }
    auto prow = probs.row(r);
    auto orow = out.row(i);
    for (std::size_t j = 0; j < limit; ++j) {
      const double pj = s[j] / z;
      prow[j] = pj;
      const auto vrow = V.row(j);
      for (std::size_t c = 0; c < d_v; ++c) orow[c] += pj * vrow[c];
    }
    if (counter) counter->attention_ops += limit * (d_k + d_v);
  }

  if (rows.size() < L_Q) {
    // Lazy queries: mean of the visible V rows, from running prefix sums.
    std::vector<double> prefix(d_v, 0.0);
    std::size_t next_lazy = 0;
    const auto emit = [&](std::size_t count) {
      while (next_lazy < L_Q && (causal ? visible_keys(next_lazy, L_K, true) == count : count == L_K)) {
        if (!is_active[next_lazy]) {
          auto orow = out.row(next_lazy);
          for (std::size_t c = 0; c < d_v; ++c) orow[c] = prefix[c] / static_cast<double>(count);
          if (counter) counter->fill_ops += d_v;
        }
        ++next_lazy;
      }
    };
    for (std::size_t j = 0; j < L_K; ++j) {
      const auto vrow = V.row(j);
      for (std::size_t c = 0; c < d_v; ++c) prefix[c] += vrow[c];
      if (counter) counter->fill_ops += d_v;
      emit(j + 1);
    }
  }

  if (cache) {
    cache->active = std::move(rows);
    cache->is_active = std::move(is_active);
    cache->probs = std::move(probs);
  }
  return out;
}

void attention_kernel_backward(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal,
                               const HeadCache& cache, const NdArray& grad_out, NdArray& grad_q, NdArray& grad_k,
                               NdArray& grad_v) {
  const std::size_t L_Q = Q.rows(), L_K = K.rows(), d_k = Q.cols(), d_v = V.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  std::vector<double> dp(L_K);

  for (std::size_t r = 0; r < cache.active.size(); ++r) {
    const std::size_t i = cache.active[r];
    const std::size_t limit = visible_keys(i, L_K, causal);
    const auto prow = cache.probs.row(r);
    const auto go = grad_out.row(i);
    double weighted = 0.0;
    for (std::size_t j = 0; j < limit; ++j) {
      dp[j] = dot(go, V.row(j));
      weighted += prow[j] * dp[j];
      auto gv = grad_v.row(j);
      for (std::size_t c = 0; c < d_v; ++c) gv[c] += prow[j] * go[c];
    }
    auto gq = grad_q.row(i);
    const auto qi = Q.row(i);
    for (std::size_t j = 0; j < limit; ++j) {
      const double ds = prow[j] * (dp[j] - weighted) * scale;
      if (ds == 0.0) continue;
      const auto kj = K.row(j);
      auto gk = grad_k.row(j);
      for (std::size_t c = 0; c < d_k; ++c) {
        gq[c] += ds * kj[c];
        gk[c] += ds * qi[c];
      }
    }
  }

  if (cache.active.size() < L_Q) {
    // Lazy query i spreads grad/limit_i over V rows 0..limit_i-1.
    std::vector<double> suffix(d_v, 0.0);
    if (causal) {
      // Accumulate from the last key backwards: rows j receive every lazy
      // query whose limit exceeds j.
      std::vector<std::vector<double>> by_limit(L_K + 1, std::vector<double>());
      for (std::size_t i = 0; i < L_Q; ++i) {
        if (cache.is_active[i]) continue;
        const std::size_t limit = visible_keys(i, L_K, true);
        auto& acc = by_limit[limit];
        if (acc.empty()) acc.assign(d_v, 0.0);
        const auto go = grad_out.row(i);
        for (std::size_t c = 0; c < d_v; ++c) acc[c] += go[c] / static_cast<double>(limit);
      }
      for (std::size_t j = L_K; j-- > 0;) {
        if (!by_limit[j + 1].empty()) {
          for (std::size_t c = 0; c < d_v; ++c) suffix[c] += by_limit[j + 1][c];
        }
        auto gv = grad_v.row(j);
        for (std::size_t c = 0; c < d_v; ++c) gv[c] += suffix[c];
      }
    } else {
      for (std::size_t i = 0; i < L_Q; ++i) {
        if (cache.is_active[i]) continue;
        const auto go = grad_out.row(i);
        for (std::size_t c = 0; c < d_v; ++c) suffix[c] += go[c] / static_cast<double>(L_K);
      }
      for (std::size_t j = 0; j < L_K; ++j) {
        auto gv = grad_v.row(j);
        for (std::size_t c = 0; c < d_v; ++c) gv[c] += suffix[c];
      }
    }
  }
}

NdArray full_attention(const NdArray& Q, const NdArray& K, const NdArray& V, bool causal) {
  return attention_kernel(Q, K, V, causal, std::nullopt, nullptr, nullptr);
}

std::vector<double> sparsity_score(const NdArray& Q, const NdArray& K) {
  if (Q.rank() != 2 || K.rank() != 2 || Q.cols() != K.cols() || K.rows() == 0) {
    throw std::invalid_argument("sparsity_score: Q and K must be (L, d_k) with matching d_k");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  std::vector<double> out(Q.rows());
  for (std::size_t i = 0; i < Q.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity(), sum = 0.0;
    for (std::size_t j = 0; j < K.rows(); ++j) {
      const double s = dot(Q.row(i), K.row(j)) * scale;
      mx = std::max(mx, s);
      sum += s;
    }
    out[i] = mx - sum / static_cast<double>(K.rows());
  }
  return out;
}

std::vector<double> sampled_sparsity_score(const NdArray& Q, const NdArray& K, std::size_t sample_k,
                                           std::mt19937_64& rng, AttentionOpCounter* counter) {
  if (sample_k == 0) throw std::invalid_argument("sampled_sparsity_score: sample size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, K.rows() - 1);
  std::vector<std::size_t> keys(sample_k);
  for (auto& k : keys) k = pick(rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  std::vector<double> out(Q.rows());
  for (std::size_t i = 0; i < Q.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity(), sum = 0.0;
    for (std::size_t j : keys) {
      const double s = dot(Q.row(i), K.row(j)) * scale;
      mx = std::max(mx, s);
      sum += s;
    }
    out[i] = mx - sum / static_cast<double>(sample_k);
  }
  if (counter) counter->score_ops += Q.rows() * sample_k * Q.cols();
  return out;
}

std::vector<std::size_t> select_top_u(const std::vector<double>& scores, std::size_t u) {
  if (u < 1 || u > scores.size()) throw std::invalid_argument("select_top_u: u must lie in [1, L_Q]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(u);
  std::sort(order.begin(), order.end());
  return order;
}

NdArray prob_sparse_attention(const NdArray& Q, const NdArray& K, const NdArray& V, std::size_t u,
                              const ProbSparseOptions& options, AttentionOpCounter* counter) {
  check_shapes(Q, K, V);
  if (u < 1 || u > Q.rows()) throw std::invalid_argument("prob_sparse_attention: u must lie in [1, L_Q]");
  std::vector<double> scores;
  if (options.sample_keys) {
    std::mt19937_64 rng(options.sample_seed);
    scores = sampled_sparsity_score(Q, K, sparse_query_count(options.factor_c, K.rows()), rng, counter);
  } else {
    scores = sparsity_score(Q, K);
    if (counter) counter->score_ops += Q.rows() * K.rows() * Q.cols();
  }
  return attention_kernel(Q, K, V, options.causal, select_top_u(scores, u), nullptr, counter);
}

}  // namespace lrdcast::nn
