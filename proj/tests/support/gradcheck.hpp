#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lrdcast/nn/autograd.hpp"

namespace gradcheck {

struct GroupError {
  std::string name;
  double relative = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

/// Relative L2 error between the tape gradient and central differences of
/// `loss_fn` for each parameter group.
inline std::vector<GroupError> compare(const std::function<lrdcast::nn::Var()>& loss_fn,
                                       const std::vector<std::pair<std::string, lrdcast::nn::Var>>& groups,
                                       double h = 1e-6) {
  for (const auto& [name, p] : groups) p->grad.fill(0.0);
  lrdcast::nn::backward(loss_fn());
  std::vector<GroupError> out;
  for (const auto& [name, p] : groups) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss_fn()->value[0];
      p->value[i] = keep - h;
      const double down = loss_fn()->value[0];
      p->value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      diff += (numeric - analytic) * (numeric - analytic);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
    out.push_back({name, std::sqrt(diff) / scale, std::sqrt(na), std::sqrt(nn)});
  }
  return out;
}

/// Key projection biases shift every score of a query by the same amount,
/// which softmax ignores, so their exact gradient is zero.
inline bool is_invariant_group(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, ".k.b") == 0;
}

/// Relative error for ordinary groups; the invariant groups must be zero on
/// the tape and within difference noise numerically.
inline bool passes(const GroupError& e, double tol = 1e-4) {
  if (is_invariant_group(e.name)) return e.analytic_norm < 1e-12 && e.numeric_norm < 1e-7;
  return e.relative < tol;
}

}  // namespace gradcheck
