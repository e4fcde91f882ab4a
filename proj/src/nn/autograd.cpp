#include "lrdcast/nn/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace lrdcast::nn {

namespace {

Var make_node(NdArray value, std::vector<Var> parents, const char* op) {
  value.check_finite(op);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return n;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shapes " + a->value.shape_string() + " and " +
                                b->value.shape_string() + " differ");
  }
}

NdArray columns(const NdArray& x, std::size_t start, std::size_t width) {
  NdArray out = NdArray::matrix(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r).subspan(start, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void add_columns(NdArray& dst, const NdArray& src, std::size_t start) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto d = dst.row(r).subspan(start, src.cols());
    const auto s = src.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) d[c] += s[c];
  }
}

constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluB = 0.044715;

}  // namespace

void Node::ensure_grad() {
  if (!grad.same_shape(value)) grad = NdArray(value.shape(), 0.0);
}

Var constant(NdArray value) { return make_node(std::move(value), {}, "constant"); }

Var parameter(NdArray value) {
  auto n = make_node(std::move(value), {}, "parameter");
  n->requires_grad = true;
  n->ensure_grad();
  return n;
}

Var matmul(const Var& a, const Var& b) {
  auto out = make_node(matmul(a->value, b->value), {a, b}, "matmul");
  out->backward_fn = [](Node& self) {
    const auto& A = self.parents[0];
    const auto& B = self.parents[1];
    if (A->requires_grad) {
      A->ensure_grad();
      matmul_a_bt_acc(self.grad, B->value, A->grad);
    }
    if (B->requires_grad) {
      B->ensure_grad();
      matmul_at_b_acc(A->value, self.grad, B->grad);
    }
  };
  return out;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  NdArray v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
  auto out = make_node(std::move(v), {a, b}, "add");
  out->backward_fn = [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  };
  return out;
}

Var add_row(const Var& x, const Var& b) {
  if (b->value.rank() != 2 || b->value.rows() != 1 || b->value.cols() != x->value.cols()) {
    throw std::invalid_argument("add_row: bias " + b->value.shape_string() + " does not fit " +
                                x->value.shape_string());
  }
  NdArray v = x->value;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b->value[c];
  }
  auto out = make_node(std::move(v), {x, b}, "add_row");
  out->backward_fn = [](Node& self) {
    const auto& X = self.parents[0];
    const auto& B = self.parents[1];
    if (X->requires_grad) {
      X->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) X->grad[i] += self.grad[i];
    }
    if (B->requires_grad) {
      B->ensure_grad();
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        const auto g = self.grad.row(r);
        for (std::size_t c = 0; c < g.size(); ++c) B->grad[c] += g[c];
      }
    }
  };
  return out;
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

Var scale(const Var& x, double s) {
  NdArray v = x->value;
  for (auto& e : v.data()) e *= s;
  auto out = make_node(std::move(v), {x}, "scale");
  out->backward_fn = [s](Node& self) {
    const auto& X = self.parents[0];
    if (!X->requires_grad) return;
    X->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X->grad[i] += s * self.grad[i];
  };
  return out;
}

Var gelu(const Var& x) {
  NdArray v = x->value;
  for (auto& e : v.data()) {
    const double t = std::tanh(kGeluA * (e + kGeluB * e * e * e));
    e = 0.5 * e * (1.0 + t);
  }
  auto out = make_node(std::move(v), {x}, "gelu");
  out->backward_fn = [](Node& self) {
    const auto& X = self.parents[0];
    if (!X->requires_grad) return;
    X->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double e = X->value[i];
      const double t = std::tanh(kGeluA * (e + kGeluB * e * e * e));
      const double dt = (1.0 - t * t) * kGeluA * (1.0 + 3.0 * kGeluB * e * e);
      X->grad[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * e * dt);
    }
  };
  return out;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t n = x->value.rows(), m = x->value.cols();
  if (gamma->value.size() != m || beta->value.size() != m) {
    throw std::invalid_argument("layer_norm: affine parameters do not match " + x->value.shape_string());
  }
  auto xhat = std::make_shared<NdArray>(NdArray::matrix(n, m));
  auto inv_sigma = std::make_shared<std::vector<double>>(n);
  NdArray v = NdArray::matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x->value.row(r);
    double mu = 0.0;
    for (double e : row) mu += e;
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (double e : row) var += (e - mu) * (e - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    auto xh = xhat->row(r);
    auto o = v.row(r);
    for (std::size_t c = 0; c < m; ++c) {
      xh[c] = (row[c] - mu) * is;
      o[c] = gamma->value[c] * xh[c] + beta->value[c];
    }
  }
  auto out = make_node(std::move(v), {x, gamma, beta}, "layer_norm");
  out->backward_fn = [xhat, inv_sigma](Node& self) {
    const auto& X = self.parents[0];
    const auto& G = self.parents[1];
    const auto& B = self.parents[2];
    const std::size_t n = self.grad.rows(), m = self.grad.cols();
    if (G->requires_grad) G->ensure_grad();
    if (B->requires_grad) B->ensure_grad();
    if (X->requires_grad) X->ensure_grad();
    std::vector<double> dxh(m);
    for (std::size_t r = 0; r < n; ++r) {
      const auto g = self.grad.row(r);
      const auto xh = xhat->row(r);
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        if (G->requires_grad) G->grad[c] += g[c] * xh[c];
        if (B->requires_grad) B->grad[c] += g[c];
        dxh[c] = g[c] * G->value[c];
        mean_d += dxh[c];
        mean_dx += dxh[c] * xh[c];
      }
      if (!X->requires_grad) continue;
      mean_d /= static_cast<double>(m);
      mean_dx /= static_cast<double>(m);
      auto gx = X->grad.row(r);
      for (std::size_t c = 0; c < m; ++c) gx[c] += (*inv_sigma)[r] * (dxh[c] - mean_d - xh[c] * mean_dx);
    }
  };
  return out;
}

Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x->value.size());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  NdArray v = x->value;
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0;
    v[i] *= (*mask)[i];
  }
  auto out = make_node(std::move(v), {x}, "dropout");
  out->backward_fn = [mask](Node& self) {
    const auto& X = self.parents[0];
    if (!X->requires_grad) return;
    X->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X->grad[i] += (*mask)[i] * self.grad[i];
  };
  return out;
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
  if (start + count > x->value.rows()) throw std::out_of_range("slice_rows: range exceeds " + x->value.shape_string());
  const std::size_t m = x->value.cols();
  NdArray v = NdArray::matrix(count, m);
  const auto src = x->value.data().subspan(start * m, count * m);
  std::copy(src.begin(), src.end(), v.data().begin());
  auto out = make_node(std::move(v), {x}, "slice_rows");
  out->backward_fn = [start, m](Node& self) {
    const auto& X = self.parents[0];
    if (!X->requires_grad) return;
    X->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X->grad[start * m + i] += self.grad[i];
  };
  return out;
}

Var mse_loss(const Var& pred, const NdArray& target) {
  if (!pred->value.same_shape(target)) {
    throw std::invalid_argument("mse_loss: prediction " + pred->value.shape_string() + " vs target " +
                                target.shape_string());
  }
  const double n = static_cast<double>(target.size());
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = pred->value[i] - target[i];
    s += e * e;
  }
  auto out = make_node(NdArray({1, 1}, s / n), {pred}, "mse_loss");
  out->backward_fn = [target, n](Node& self) {
    const auto& P = self.parents[0];
    if (!P->requires_grad) return;
    P->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < target.size(); ++i) P->grad[i] += g * 2.0 * (P->value[i] - target[i]) / n;
  };
  return out;
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec,
                         AttentionOpCounter* counter) {
  const std::size_t d = q->value.cols();
  if (spec.n_heads == 0 || d % spec.n_heads != 0) {
    throw std::invalid_argument("multi_head_attention: width not divisible by head count");
  }
  if (k->value.cols() != d || v->value.cols() != d || k->value.rows() != v->value.rows()) {
    throw std::invalid_argument("multi_head_attention: q " + q->value.shape_string() + ", k " +
                                k->value.shape_string() + ", v " + v->value.shape_string());
  }
  const std::size_t dh = d / spec.n_heads;
  const std::size_t L_Q = q->value.rows(), L_K = k->value.rows();

  struct Head {
    NdArray Q, K, V;
    HeadCache cache;
  };
  auto heads = std::make_shared<std::vector<Head>>(spec.n_heads);
  NdArray out = NdArray::matrix(L_Q, d);
  const std::size_t u = spec.sparse ? sparse_query_count(spec.factor_c, L_Q) : L_Q;
  for (std::size_t h = 0; h < spec.n_heads; ++h) {
    Head& hd = (*heads)[h];
    hd.Q = columns(q->value, h * dh, dh);
    hd.K = columns(k->value, h * dh, dh);
    hd.V = columns(v->value, h * dh, dh);
    std::optional<std::vector<std::size_t>> active;
    if (u < L_Q) {
      active = select_top_u(sparsity_score(hd.Q, hd.K), u);
      if (counter) counter->score_ops += L_Q * L_K * dh;
    }
    const NdArray o = attention_kernel(hd.Q, hd.K, hd.V, spec.causal, active, &hd.cache, counter);
    add_columns(out, o, h * dh);
  }

  auto node = make_node(std::move(out), {q, k, v}, "attention");
  node->backward_fn = [heads, dh, causal = spec.causal](Node& self) {
    const auto& Qv = self.parents[0];
    const auto& Kv = self.parents[1];
    const auto& Vv = self.parents[2];
    if (!(Qv->requires_grad || Kv->requires_grad || Vv->requires_grad)) return;
    Qv->ensure_grad();
    Kv->ensure_grad();
    Vv->ensure_grad();
    for (std::size_t h = 0; h < heads->size(); ++h) {
      const Head& hd = (*heads)[h];
      NdArray gq = NdArray::matrix(hd.Q.rows(), dh), gk = NdArray::matrix(hd.K.rows(), dh),
              gv = NdArray::matrix(hd.V.rows(), dh);
      attention_kernel_backward(hd.Q, hd.K, hd.V, causal, hd.cache, columns(self.grad, h * dh, dh), gq, gk, gv);
      add_columns(Qv->grad, gq, h * dh);
      add_columns(Kv->grad, gk, h * dh);
      add_columns(Vv->grad, gv, h * dh);
    }
  };
  return node;
}

void backward(const Var& loss) {
  if (loss->value.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->requires_grad) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace lrdcast::nn
