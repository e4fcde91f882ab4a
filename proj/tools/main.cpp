#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "lrdcast/bench.hpp"
#include "lrdcast/farima.hpp"
#include "lrdcast/selfsim_stats.hpp"
#include "lrdcast/trace_io.hpp"
#include "lrdcast/traffic_gen.hpp"
#include "lrdcast/transformer.hpp"

using namespace lrdcast;

namespace {

struct FitArgs {
  std::string in;
  std::string model = "farima";
  int p = 2;
  int q = 0;
  bool select = false;
  int p_max = 3;
  std::string method = "css";
  std::size_t window = 0;  // trailing values used; 0 = whole trace
  std::size_t h = 1;
};

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--in", a.in, "trace CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--model", a.model, "arima or farima")->check(CLI::IsMember({"arima", "farima"}));
  cmd->add_option("--p", a.p, "AR order")->check(CLI::NonNegativeNumber);
  cmd->add_option("--q", a.q, "MA order")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--select-order", a.select, "pick (p, q) by AIC up to --p-max");
  cmd->add_option("--p-max", a.p_max, "largest order tried by --select-order")->check(CLI::Range(0, 5));
  cmd->add_option("--method", a.method, "css or whittle")->check(CLI::IsMember({"css", "whittle"}));
  cmd->add_option("--window", a.window, "fit on the last N values (0 = all)");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

FarimaModel fit_from_args(FitArgs& a, std::vector<double>& window) {
  const Trace trace = read_trace(a.in);
  const std::size_t n = trace.size();
  const std::size_t w = a.window ? std::min(a.window, n) : n;
  window.assign(trace.values.end() - static_cast<std::ptrdiff_t>(w), trace.values.end());
  const ArmaMethod method = parse_arma_method(a.method);
  if (a.select) {
    // Orders are chosen on the series the ARMA part actually sees.
    std::vector<double> base;
    if (a.model == "farima") {
      const double d = estimate_d_preliminary(window).d;
      std::vector<double> centered(window);
      double mean = 0.0;
      for (double v : centered) mean += v;
      mean /= static_cast<double>(centered.size());
      for (double& v : centered) v -= mean;
      base = fracdiff_apply(centered, d);
    } else {
      base = window;
      for (int k = 0; k < choose_arima_d(window); ++k) {
        std::vector<double> diff(base.size() - 1);
        for (std::size_t i = 1; i < base.size(); ++i) diff[i - 1] = base[i] - base[i - 1];
        base = std::move(diff);
      }
    }
    const OrderSelection sel = select_order(base, a.p_max, OrderCriterion::aic, method);
    a.p = sel.p;
    a.q = sel.q;
  }
  return a.model == "farima" ? fit_farima(window, a.p, a.q, {method, {}}) : fit_arima(window, a.p, a.q, std::nullopt, method);
}

void print_model(const FarimaModel& m, const std::string& kind) {
  std::cout << "model: " << kind << "(" << m.p << ", " << num(m.d) << ", " << m.q << ")\n";
  std::cout << "d: " << num(m.d) << (m.d_clamped ? " (clamped)" : "") << "\n";
  for (std::size_t i = 0; i < m.phi.size(); ++i) std::cout << "phi_" << i + 1 << ": " << num(m.phi[i]) << "\n";
  for (std::size_t i = 0; i < m.psi.size(); ++i) std::cout << "psi_" << i + 1 << ": " << num(m.psi[i]) << "\n";
  std::cout << "sigma2: " << num(m.sigma2_eps) << "\n";
  std::cout << "mean: " << num(m.mean) << "\n";
  std::cout << "n_obs: " << m.n_obs << "\n";
  std::cout << "aic: " << num(m.aic()) << "\n";
  std::cout << "bic: " << num(m.bic()) << "\n";
  std::cout << "converged: " << (m.converged ? "yes" : "no") << "\n";
  if (m.reflected) std::cout << "note: roots reflected into the admissible region\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-range-dependent traffic generation, analysis and forecasting"};
  app.require_subcommand(1);

  std::string scenario = "medium", out;
  std::int64_t granularity = 10;
  std::size_t ticks = 60000;
  std::uint64_t seed = 1;
  auto* gen = app.add_subcommand("generate", "generate a synthetic demand trace");
  gen->add_option("--scenario", scenario, "high, medium or low")->check(CLI::IsMember({"high", "medium", "low"}));
  gen->add_option("--granularity", granularity, "sample spacing in ms")->check(CLI::IsMember({10, 100, 1000}));
  gen->add_option("--ticks", ticks, "number of samples at the chosen granularity")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--out", out, "output CSV")->required();

  std::string in, method = "rs";
  auto* analyze = app.add_subcommand("analyze", "estimate the Hurst parameter of a trace");
  analyze->add_option("--in", in, "trace CSV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--method", method, "rs or vt")->check(CLI::IsMember({"rs", "vt"}));

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit an ARIMA or FARIMA model");
  add_fit_options(fit, fit_args);

  FitArgs fc_args;
  auto* fc = app.add_subcommand("forecast", "fit on the trace tail and forecast h steps");
  fc->set_help_flag("--help", "print this help message and exit");
  add_fit_options(fc, fc_args);
  fc->add_option("--h", fc_args.h, "forecast horizon")->required()->check(CLI::PositiveNumber);

  std::string config_path, model_path;
  std::size_t seq_len = 64, pred_len = 12;
  auto* tr = app.add_subcommand("train", "train the sparse-attention transformer");
  tr->add_option("--in", in, "trace CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--seq-len", seq_len, "input length")->required()->check(CLI::PositiveNumber);
  tr->add_option("--pred-len", pred_len, "forecast horizon")->required()->check(CLI::PositiveNumber);
  tr->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--out", model_path, "model file")->required();

  auto* pr = app.add_subcommand("predict", "forecast the trace tail with a trained model");
  pr->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  pr->add_option("--in", in, "trace CSV")->required()->check(CLI::ExistingFile);

  std::string grid_path, dir, format = "text";
  bool resume = false;
  auto* bench = app.add_subcommand("bench", "run a benchmark grid");
  bench->add_option("--grid", grid_path, "grid config file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", dir, "output directory")->required();
  bench->add_flag("--resume", resume, "skip cells already in the journal");

  auto* report = app.add_subcommand("report", "print tables from a benchmark directory");
  report->add_option("--in", dir, "benchmark directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "csv or text")->check(CLI::IsMember({"csv", "text"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto level = parse_demand_level(scenario);
      const Trace t = generate_dataset(ScenarioSpec::preset(level, ticks, seed), granularity, ticks);
      write_trace(t, out);
      std::cout << "wrote " << t.size() << " samples (" << scenario << ", " << granularity << " ms) to " << out << "\n";
    } else if (*analyze) {
      const Trace t = read_trace(in);
      const HurstEstimate e = method == "rs" ? rescaled_range_hurst(t.values) : variance_time_hurst(t.values);
      std::cout << "method: " << to_string(e.method) << "\n";
      std::cout << "H: " << num(e.H) << (e.clamped ? " (clamped)" : "") << "\n";
      std::cout << "beta: " << num(e.beta()) << "\n";
      std::cout << "d: " << num(e.d()) << "\n";
      std::cout << "slope: " << num(e.slope) << "\n";
      std::cout << "r2: " << num(e.regression_r2) << "\n";
      std::cout << "block_sizes: " << e.block_sizes.size() << " (" << e.block_sizes.front() << ".."
                << e.block_sizes.back() << ")\n";
      std::cout << "n: " << t.size() << "\n";
    } else if (*fit) {
      std::vector<double> window;
      print_model(fit_from_args(fit_args, window), fit_args.model);
    } else if (*fc) {
      std::vector<double> window;
      const FarimaModel m = fit_from_args(fc_args, window);
      const auto f = forecast(m, window, fc_args.h);
      for (std::size_t i = 0; i < f.size(); ++i) std::cout << i + 1 << "," << num(f[i]) << "\n";
    } else if (*tr) {
      TransformerConfig cfg;
      if (!config_path.empty()) cfg = TransformerConfig::from_kv(KeyValueConfig::load(config_path));
      cfg.seq_len = seq_len;
      cfg.pred_len = pred_len;
      if (cfg.label_len > cfg.seq_len) cfg.label_len = 0;
      const TraceSplit split = split_chronological(read_trace(in));
      const TrainedModel m = train(split.train, split.val, cfg, [](const EpochStats& s) {
        std::cout << "epoch " << s.epoch << ": train " << num(s.train_loss) << ", val " << num(s.val_loss)
                  << std::endl;
      });
      save_model(m, model_path);
      std::cout << "best epoch " << m.best_epoch << "; " << m.model.parameter_count() << " parameters written to "
                << model_path << "\n";
    } else if (*pr) {
      const TrainedModel m = load_model(model_path);
      const Trace t = read_trace(in);
      const std::size_t L = m.model.config().seq_len;
      if (t.size() < L) throw std::invalid_argument("trace is shorter than the model's seq_len");
      const std::size_t start = t.size() - L;
      const auto f = m.predict(std::span<const double>(t.values).subspan(start), t.timestamp(start));
      for (std::size_t i = 0; i < f.size(); ++i) std::cout << i + 1 << "," << num(f[i]) << "\n";
    } else if (*bench) {
      const GridSpec grid = GridSpec::from_kv(KeyValueConfig::load(grid_path));
      GridRunOptions opts;
      opts.resume = resume;
      opts.on_cell = [](const CellResult& r) {
        std::cerr << r.key.id() << ": mse " << num(r.mse) << " (" << r.n_windows << " windows)\n";
      };
      const GridRunSummary s = run_grid(grid, dir, opts);
      std::cout << s.results.size() << " of " << grid.cell_count() << " cells complete\n";
      for (const auto& f : s.flagged) std::cout << "flagged: " << f << "\n";
      for (const auto& f : s.failed) std::cout << "failed: " << f << "\n";
      return s.complete() ? 0 : 1;
    } else if (*report) {
      const auto results = read_journal(std::filesystem::path(dir) / "journal.jsonl");
      if (results.empty()) throw std::runtime_error("no completed cells in " + dir);
      std::vector<CellResult> ordered = results;
      std::sort(ordered.begin(), ordered.end(), [](const CellResult& a, const CellResult& b) { return a.key < b.key; });
      for (const auto& t : build_tables(ordered)) std::cout << (format == "csv" ? render_csv(t) : render_text(t)) << "\n";
      std::cout << render_winners(winner_report(ordered));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
