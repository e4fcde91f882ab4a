#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "gradcheck.hpp"
#include "lrdcast/bench.hpp"
#include "lrdcast/farima.hpp"
#include "lrdcast/nn/attention.hpp"
#include "lrdcast/selfsim_stats.hpp"
#include "lrdcast/traffic_gen.hpp"
#include "lrdcast/transformer.hpp"

using namespace lrdcast;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;  // 0 = no runtime limit
  std::function<Outcome()> run;
};

fs::path g_work;
std::string g_cli;
std::uint64_t g_seed = 1;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

std::vector<double> simulate_ar(const std::vector<double>& phi, std::size_t n, std::uint64_t seed) {
  const std::size_t burn = 1000;
  const auto e = gaussian(n + burn, seed);
  std::vector<double> x(n + burn, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double v = e[t];
    for (std::size_t j = 0; j < phi.size() && j < t; ++j) v += phi[j] * x[t - j - 1];
    x[t] = v;
  }
  return {x.begin() + static_cast<std::ptrdiff_t>(burn), x.end()};
}

/// Small transformer used by the trend criteria.
TransformerConfig trend_transformer() {
  TransformerConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.enc_layers = 2;
  c.dec_layers = 1;
  c.d_ff = 32;
  c.dropout = 0.05;
  c.learning_rate = 1e-3;
  c.batch_size = 32;
  c.epochs = 6;
  c.patience = 3;
  c.max_train_windows = 1000;
  c.max_val_windows = 256;
  return c;
}

GridSpec trend_grid(DemandLevel scenario, std::int64_t gran, std::size_t samples) {
  GridSpec g;
  g.scenarios = {scenario};
  g.granularities_ms = {gran};
  g.num_samples = samples;
  g.seed = g_seed;
  g.transformer = trend_transformer();
  return g;
}

const Dataset& dataset(const GridSpec& g, DemandLevel scenario, std::int64_t gran) {
  static std::map<std::tuple<DemandLevel, std::int64_t, std::size_t>, Dataset> cache;
  const auto key = std::make_tuple(scenario, gran, g.num_samples);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, make_dataset(g, scenario, gran)).first;
  return it->second;
}

double cell_mse(const GridSpec& g, const CellKey& key) {
  const std::size_t index = static_cast<std::size_t>(key.pred_len * 16 + key.seq_len + static_cast<int>(key.model));
  const CellResult r = run_cell(g, key, dataset(g, key.scenario, key.granularity_ms), index);
  std::cout << "    " << key.id() << ": mse " << fmt(r.mse) << " over " << r.n_windows << " windows"
            << (r.n_failed ? " (" + std::to_string(r.n_failed) + " failed)" : std::string()) << "\n"
            << std::flush;
  return r.mse;
}

Outcome hurst_recovery() {
  Outcome o{true, ""};
  for (auto level : {DemandLevel::medium, DemandLevel::low, DemandLevel::high}) {
    const ScenarioSpec spec = ScenarioSpec::preset(level, 60000, substream_seed(g_seed, static_cast<std::uint64_t>(level)));
    const Trace t = generate_scenario(spec);
    const double target = (3.0 - spec.shape_a) / 2.0;
    const double tol = spec.shape_a < 1.1 ? 0.15 : 0.10;
    const double h = rescaled_range_hurst(t.values).H;
    const bool ok = std::abs(h - target) <= tol;
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += "a=" + fmt(spec.shape_a, 2) + " H_RS=" + fmt(h, 3) + " target " + fmt(target, 3) + "±" + fmt(tol, 2) +
                (ok ? "" : " (out)");
  }
  return o;
}

Outcome estimator_calibration() {
  Outcome o{true, ""};
  for (double H : {0.55, 0.7, 0.9}) {
    double worst_rs = 0.0, worst_vt = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto x = fgn_oracle(1 << 14, H, s);
      worst_rs = std::max(worst_rs, std::abs(rescaled_range_hurst(x).H - H));
      worst_vt = std::max(worst_vt, std::abs(variance_time_hurst(x).H - H));
    }
    o.pass = o.pass && worst_rs <= 0.07 && worst_vt <= 0.07;
    o.detail += "H=" + fmt(H, 2) + " max|err| rs " + fmt(worst_rs, 3) + " vt " + fmt(worst_vt, 3) + "; ";
  }
  return o;
}

Outcome fractional_differencing() {
  const auto x = gaussian(4096, 3);
  double worst_fft = 0.0, worst_trip = 0.0;
  for (double d : {0.1, 0.3, 0.45}) {
    const auto fast = fracdiff_apply(x, d, FracDiffMode::fft);
    const auto slow = fracdiff_apply(x, d, FracDiffMode::naive);
    const auto back = fracdiff_invert(fast, d);
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst_fft = std::max(worst_fft, std::abs(fast[i] - slow[i]));
      worst_trip = std::max(worst_trip, std::abs(back[i] - x[i]));
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "fft vs naive %.2e (< 1e-8), round trip %.2e (< 1e-6)", worst_fft, worst_trip);
  return {worst_fft < 1e-8 && worst_trip < 1e-6, buf};
}

Outcome durbin_levinson_vs_dense() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> order(1, 20);
  std::uniform_real_distribution<double> coef(-0.95, 0.95);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = order(rng);
    const auto x = simulate_ar({coef(rng)}, 500, 1000 + static_cast<std::uint64_t>(trial));
    std::vector<double> gamma(static_cast<std::size_t>(p) + 1);
    for (std::size_t k = 0; k < gamma.size(); ++k) {
      double s = 0.0;
      for (std::size_t t = k; t < x.size(); ++t) s += x[t] * x[t - k];
      gamma[k] = s / static_cast<double>(x.size());
    }
    const LevinsonResult r = durbin_levinson(gamma);
    Eigen::MatrixXd R(p, p);
    Eigen::VectorXd rhs(p);
    for (int i = 0; i < p; ++i) {
      rhs(i) = gamma[static_cast<std::size_t>(i) + 1];
      for (int j = 0; j < p; ++j) R(i, j) = gamma[static_cast<std::size_t>(std::abs(i - j))];
    }
    const Eigen::VectorXd phi = R.ldlt().solve(rhs);
    for (int i = 0; i < p; ++i) worst = std::max(worst, std::abs(phi(i) - r.phi[static_cast<std::size_t>(i)]));
    const double v = gamma[0] - phi.dot(rhs);
    worst = std::max(worst, std::abs(v - r.innovation_variance));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "100 instances, p <= 20, max|diff| %.2e (< 1e-10)", worst);
  return {worst < 1e-10, buf};
}

Outcome parameter_recovery() {
  Outcome o{true, ""};
  const auto x = simulate_ar({0.5, -0.3}, 10000, 5);
  for (auto method : {ArmaMethod::css, ArmaMethod::whittle}) {
    const FarimaModel m = fit_arma(x, 2, 0, {.method = method});
    const bool ok = std::abs(m.phi[0] - 0.5) <= 0.05 && std::abs(m.phi[1] + 0.3) <= 0.05;
    o.pass = o.pass && ok;
    o.detail += to_string(method) + " phi=(" + fmt(m.phi[0], 3) + ", " + fmt(m.phi[1], 3) + "); ";
  }
  const auto y = fracdiff_invert(gaussian(10000, 21), 0.3);
  const double d = fit_farima(y, 0, 0).d;
  o.pass = o.pass && std::abs(d - 0.3) <= 0.10;
  o.detail += "FARIMA d=" + fmt(d, 3) + " (0.3±0.10)";
  return o;
}

Outcome prob_sparse_correctness() {
  using nn::NdArray;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const auto random = [&](std::size_t r, std::size_t c) {
    NdArray m = NdArray::matrix(r, c);
    for (double& v : m.storage()) v = nd(rng);
    return m;
  };
  std::uniform_int_distribution<std::size_t> len(1, 64), dim(1, 16);
  double worst_full = 0.0;
  bool rows_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L_Q = len(rng), L_K = len(rng), d_k = dim(rng), d_v = dim(rng);
    const NdArray Q = random(L_Q, d_k), K = random(L_K, d_k), V = random(L_K, d_v);
    const NdArray full = nn::full_attention(Q, K, V);
    const NdArray all = nn::prob_sparse_attention(Q, K, V, L_Q);
    for (std::size_t i = 0; i < full.size(); ++i) worst_full = std::max(worst_full, std::abs(full[i] - all[i]));
    const auto scores = nn::sparsity_score(Q, K);
    for (std::size_t u = 1; u <= L_Q; ++u) {
      const NdArray out = nn::prob_sparse_attention(Q, K, V, u);
      for (std::size_t i : nn::select_top_u(scores, u))
        for (std::size_t c = 0; c < d_v; ++c) rows_exact = rows_exact && out(i, c) == full(i, c);
    }
  }

  const std::size_t d = 8;
  std::vector<double> measured, predicted;
  for (std::size_t L : {64, 512}) {
    const NdArray Q = random(L, d), K = random(L, d), V = random(L, d);
    const std::size_t u = nn::sparse_query_count(5.0, L);
    nn::AttentionOpCounter counter;
    nn::prob_sparse_attention(Q, K, V, u, {}, &counter);
    measured.push_back(static_cast<double>(counter.attention_and_fill()));
    predicted.push_back(static_cast<double>(u * L));
  }
  const double ratio_measured = measured[1] / measured[0];
  const double ratio_predicted = predicted[1] / predicted[0];
  const double rel = std::abs(ratio_measured / ratio_predicted - 1.0);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "u=L_Q max|diff| %.1e (< 1e-12); selected rows exact: %s; op ratio 512/64 measured %.3f vs u*L_K %.3f "
                "(%.1f%% off, <= 20%%)",
                worst_full, rows_exact ? "yes" : "no", ratio_measured, ratio_predicted, 100.0 * rel);
  return {worst_full < 1e-12 && rows_exact && rel <= 0.20, buf};
}

Outcome gradient_check() {
  TransformerConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.seq_len = 16;
  c.pred_len = 4;
  c.dropout = 0.0;
  c.seed = 3;
  Transformer model(c);
  Trace trace;
  trace.granularity_ms = 10;
  trace.values = gaussian(64, 8);
  for (double& v : trace.values) v = std::abs(v);
  const auto z = Standardizer::fit(trace).apply(trace.values);
  const ModelInput in = make_input(c, z, trace, 7);
  nn::NdArray target = nn::NdArray::matrix(4, 1);
  const auto t = gaussian(4, 9);
  std::copy(t.begin(), t.end(), target.storage().begin());
  std::vector<std::pair<std::string, nn::Var>> groups;
  for (const auto& p : model.parameters()) groups.emplace_back(p.name, p.var);
  const auto errors = gradcheck::compare([&] { return nn::mse_loss(model.forward(in, false), target); }, groups);
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0, invariant = 0;
  for (const auto& e : errors) {
    if (!gradcheck::passes(e)) ++failed;
    if (gradcheck::is_invariant_group(e.name)) {
      ++invariant;
    } else if (e.relative > worst) {
      worst = e.relative;
      worst_name = e.name;
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu groups, worst relative %.2e (%s), %zu zero-gradient key-bias groups, %zu failing",
                errors.size(), worst, worst_name.c_str(), invariant, failed);
  return {failed == 0 && errors.size() == model.parameters().size(), buf};
}

Outcome horizon_monotonicity() {
  GridSpec g = trend_grid(DemandLevel::medium, 100, 20000);
  Outcome o{true, ""};
  for (auto model : {ModelKind::informer_like, ModelKind::farima, ModelKind::arima}) {
    std::vector<double> m;
    for (std::size_t pred : {1, 12, 24, 48}) m.push_back(cell_mse(g, {DemandLevel::medium, 100, 64, pred, model}));
    bool ok = true;
    for (std::size_t i = 1; i < m.size(); ++i) ok = ok && m[i] >= m[i - 1] * (1.0 - 0.03);
    o.pass = o.pass && ok;
    o.detail += to_string(model) + " " + fmt(m[0], 3) + "/" + fmt(m[1], 3) + "/" + fmt(m[2], 3) + "/" + fmt(m[3], 3) +
                (ok ? "" : " (not monotone)") + "; ";
  }
  return o;
}

Outcome difficulty_ordering() {
  Outcome o{true, ""};
  for (auto model : {ModelKind::farima, ModelKind::informer_like}) {
    const GridSpec lo = trend_grid(DemandLevel::low, 10, 60000);
    const GridSpec hi = trend_grid(DemandLevel::high, 10, 60000);
    const double m_low = cell_mse(lo, {DemandLevel::low, 10, 128, 24, model});
    const double m_high = cell_mse(hi, {DemandLevel::high, 10, 128, 24, model});
    const bool ok = m_low >= m_high * (1.0 - 0.05);
    o.pass = o.pass && ok;
    o.detail += to_string(model) + " a=1.9 " + fmt(m_low, 3) + " vs a=1.04 " + fmt(m_high, 3) + (ok ? "" : " (reversed)") +
                "; ";
  }
  return o;
}

Outcome unpredictability_ceiling() {
  const GridSpec g = trend_grid(DemandLevel::low, 10, 60000);
  Outcome o{true, ""};
  for (std::size_t seq : {64, 128}) {
    double best = std::numeric_limits<double>::infinity();
    for (auto model : {ModelKind::informer_like, ModelKind::farima, ModelKind::arima}) {
      best = std::min(best, cell_mse(g, {DemandLevel::low, 10, seq, 48, model}));
    }
    const bool ok = best >= 0.85 && best <= 1.10;
    o.pass = o.pass && ok;
    o.detail += "seq " + std::to_string(seq) + " best " + fmt(best, 3) + (ok ? "" : " (outside [0.85, 1.10])") + "; ";
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome end_to_end_determinism() {
  if (g_cli.empty() || !fs::exists(g_cli)) return {false, "CLI binary not found (pass --cli)"};
  const fs::path dir = g_work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path grid = dir / "grid.cfg";
  {
    std::ofstream out(grid);
    out << "scenarios = medium\n"
           "granularities_ms = 100\n"
           "seq_lens = 64\n"
           "pred_lens = 12\n"
           "models = informer_like, farima\n"
           "num_samples = 4000\n"
           "seed = "
        << g_seed
        << "\n"
           "transformer.d_model = 16\n"
           "transformer.n_heads = 2\n"
           "transformer.d_ff = 32\n"
           "transformer.learning_rate = 0.001\n"
           "transformer.epochs = 2\n"
           "transformer.max_train_windows = 128\n"
           "transformer.max_val_windows = 32\n";
  }
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"run_a", "run_b"}) {
    const fs::path out = dir / name;
    const std::string cmd = "\"" + g_cli + "\" bench --grid \"" + grid.string() + "\" --out \"" + out.string() +
                            "\" > \"" + (dir / (std::string(name) + ".log")).string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, std::string("bench exited with status ") + std::to_string(rc) + " in " + name};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(out)) {
      if (e.path().extension() == ".csv") files[e.path().filename().string()] = slurp(e.path());
    }
    runs.push_back(std::move(files));
  }
  const bool same = !runs[0].empty() && runs[0] == runs[1];
  std::string names;
  for (const auto& [n, body] : runs[0]) names += (names.empty() ? "" : ", ") + n;
  return {same, std::to_string(runs[0].size()) + " CSV files (" + names + ") " + (same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "lrdcast_acceptance").string();
  app.add_option("--only", only, "criteria to run (default: all)");
  app.add_option("--cli", g_cli, "path to the lrdcast executable");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--seed", g_seed, "data seed for the trend criteria");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria{
      {1, "Hurst recovery", 120, hurst_recovery},
      {2, "Estimator calibration", 60, estimator_calibration},
      {3, "Fractional differencing", 10, fractional_differencing},
      {4, "Durbin-Levinson vs dense solve", 5, durbin_levinson_vs_dense},
      {5, "Parameter recovery", 60, parameter_recovery},
      {6, "ProbSparse correctness", 30, prob_sparse_correctness},
      {7, "Gradient check", 60, gradient_check},
      {8, "Horizon monotonicity", 1800, horizon_monotonicity},
      {9, "Difficulty ordering", 1800, difficulty_ordering},
      {10, "Near-unpredictability ceiling", 0, unpredictability_ceiling},
      {11, "End-to-end determinism", 0, end_to_end_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " " << c.title << ": " << o.detail << " ["
              << fmt(secs, 1) << " s" << (c.budget_s ? " of " + fmt(c.budget_s, 0) + " s" : std::string()) << "]"
              << (in_time ? "" : " (over time budget)") << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
