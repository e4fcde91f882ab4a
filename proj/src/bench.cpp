#include "lrdcast/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace lrdcast {

namespace {

using json = nlohmann::json;

constexpr double kFlagFraction = 0.05;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json to_json(const CellResult& r) {
  return json{{"scenario", to_string(r.key.scenario)},
              {"granularity_ms", r.key.granularity_ms},
              {"seq_len", r.key.seq_len},
              {"pred_len", r.key.pred_len},
              {"model", to_string(r.key.model)},
              {"mse", r.mse},
              {"n_windows", r.n_windows},
              {"n_failed", r.n_failed},
              {"wall_time_s", r.wall_time_s},
              {"flagged", r.flagged}};
}

CellResult from_json(const json& j) {
  CellResult r;
  r.key.scenario = parse_demand_level(j.at("scenario").get<std::string>());
  r.key.granularity_ms = j.at("granularity_ms").get<std::int64_t>();
  r.key.seq_len = j.at("seq_len").get<std::size_t>();
  r.key.pred_len = j.at("pred_len").get<std::size_t>();
  r.key.model = parse_model_kind(j.at("model").get<std::string>());
  r.mse = j.at("mse").get<double>();
  r.n_windows = j.at("n_windows").get<std::size_t>();
  r.n_failed = j.at("n_failed").get<std::size_t>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.flagged = j.at("flagged").get<bool>();
  return r;
}

std::vector<std::size_t> capped_indices(std::size_t available, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || cap >= available) {
    for (std::size_t i = 0; i < available; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t i = 0; i < cap; ++i) idx.push_back(i * (available - 1) / std::max<std::size_t>(1, cap - 1));
  return idx;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::informer_like: return "informer_like";
    case ModelKind::farima: return "farima";
    case ModelKind::arima: return "arima";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "informer_like") return ModelKind::informer_like;
  if (name == "farima") return ModelKind::farima;
  if (name == "arima") return ModelKind::arima;
  throw std::invalid_argument("unknown model '" + name + "' (expected informer_like, farima or arima)");
}

void GridSpec::validate() const {
  if (scenarios.empty() || granularities_ms.empty() || seq_lens.empty() || pred_lens.empty() || models.empty()) {
    throw std::invalid_argument("grid: every axis needs at least one entry");
  }
  for (auto g : granularities_ms) {
    if (g <= 0 || g % 10 != 0) throw std::invalid_argument("grid: granularity must be a positive multiple of 10 ms");
  }
  for (auto s : seq_lens) {
    if (s == 0) throw std::invalid_argument("grid: seq_len must be >= 1");
  }
  for (auto p : pred_lens) {
    if (p == 0) throw std::invalid_argument("grid: pred_len must be >= 1");
  }
  if (workers == 0) throw std::invalid_argument("grid: workers must be >= 1");
  if (arma_p < 0 || arma_q < 0) throw std::invalid_argument("grid: ARMA orders must be non-negative");
  split.validate();
}

GridSpec GridSpec::from_kv(const KeyValueConfig& cfg) {
  GridSpec g;
  KeyValueConfig tcfg;
  for (const auto& [key, value] : cfg.entries()) {
    if (key.rfind("transformer.", 0) == 0) tcfg.set(key.substr(12), value);
  }
  static const std::vector<std::string> known{
      "scenarios", "granularities_ms", "seq_lens", "pred_lens", "models", "eval_stride", "seed", "num_samples",
      "train_frac", "val_frac", "test_frac", "arma_p", "arma_q", "arma_method", "max_eval_windows", "workers"};
  for (const auto& [key, value] : cfg.entries()) {
    if (key.rfind("transformer.", 0) != 0 && std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("grid: unknown key '" + key + "'");
    }
  }
  const auto non_negative = [](long long v, const char* key) {
    if (v < 0) throw ConfigError(std::string("grid: '") + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  if (cfg.has("scenarios")) {
    g.scenarios.clear();
    for (const auto& s : cfg.get_list("scenarios", {})) g.scenarios.push_back(parse_demand_level(s));
  }
  if (cfg.has("granularities_ms")) {
    g.granularities_ms.clear();
    for (auto v : cfg.get_int_list("granularities_ms", {})) g.granularities_ms.push_back(v);
  }
  if (cfg.has("seq_lens")) {
    g.seq_lens.clear();
    for (auto v : cfg.get_int_list("seq_lens", {})) g.seq_lens.push_back(non_negative(v, "seq_lens"));
  }
  if (cfg.has("pred_lens")) {
    g.pred_lens.clear();
    for (auto v : cfg.get_int_list("pred_lens", {})) g.pred_lens.push_back(non_negative(v, "pred_lens"));
  }
  if (cfg.has("models")) {
    g.models.clear();
    for (const auto& m : cfg.get_list("models", {})) g.models.push_back(parse_model_kind(m));
  }
  g.eval_stride = non_negative(cfg.get_int("eval_stride", 0), "eval_stride");
  g.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(g.seed)));
  g.num_samples = non_negative(cfg.get_int("num_samples", static_cast<long long>(g.num_samples)), "num_samples");
  g.split.train_frac = cfg.get_double("train_frac", g.split.train_frac);
  g.split.val_frac = cfg.get_double("val_frac", g.split.val_frac);
  g.split.test_frac = cfg.get_double("test_frac", g.split.test_frac);
  g.arma_p = static_cast<int>(cfg.get_int("arma_p", g.arma_p));
  g.arma_q = static_cast<int>(cfg.get_int("arma_q", g.arma_q));
  g.arma_method = parse_arma_method(cfg.get_string("arma_method", to_string(g.arma_method)));
  g.max_eval_windows = non_negative(cfg.get_int("max_eval_windows", 0), "max_eval_windows");
  g.workers = non_negative(cfg.get_int("workers", static_cast<long long>(g.workers)), "workers");
  g.transformer = TransformerConfig::from_kv(tcfg, g.transformer);
  g.validate();
  return g;
}

std::string CellKey::id() const {
  return to_string(scenario) + "/" + std::to_string(granularity_ms) + "ms/seq" + std::to_string(seq_len) + "/pred" +
         std::to_string(pred_len) + "/" + to_string(model);
}

std::vector<CellKey> enumerate_cells(const GridSpec& grid) {
  std::vector<CellKey> cells;
  for (auto s : grid.scenarios)
    for (auto g : grid.granularities_ms)
      for (auto seq : grid.seq_lens)
        for (auto pred : grid.pred_lens)
          for (auto m : grid.models) cells.push_back({s, g, seq, pred, m});
  return cells;
}

double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument("mse: lengths differ (" + std::to_string(y_true.size()) + " vs " +
                                std::to_string(y_pred.size()) + ")");
  }
  if (y_true.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

std::vector<EvalWindow> evaluation_windows(std::span<const double> test, std::size_t seq_len, std::size_t pred_len,
                                           std::size_t stride) {
  if (stride == 0 || seq_len == 0 || pred_len == 0) throw std::invalid_argument("evaluation_windows: zero length");
  if (test.size() < seq_len + pred_len) {
    throw std::invalid_argument("evaluation_windows: test split of " + std::to_string(test.size()) +
                                " values is shorter than seq_len + pred_len");
  }
  const std::size_t count = (test.size() - seq_len - pred_len) / stride + 1;
  std::vector<EvalWindow> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t s = k * stride;
    out.push_back({s, test.subspan(s, seq_len), test.subspan(s + seq_len, pred_len)});
  }
  return out;
}

Dataset make_dataset(const Trace& trace, const SplitSpec& split) {
  Dataset d;
  d.raw = split_chronological(trace, split);
  d.standardizer = Standardizer::fit(d.raw.train);
  d.test_z = d.standardizer.apply(d.raw.test.values);
  return d;
}

Dataset make_dataset(const GridSpec& grid, DemandLevel scenario, std::int64_t granularity_ms) {
  const auto level = static_cast<std::uint64_t>(scenario);
  const ScenarioSpec spec = ScenarioSpec::preset(scenario, grid.num_samples, substream_seed(grid.seed, level));
  return make_dataset(generate_dataset(spec, granularity_ms, grid.num_samples), grid.split);
}

CellResult run_cell(const GridSpec& grid, const CellKey& key, const Dataset& data, std::size_t cell_index,
                    unsigned window_threads) {
  const auto t0 = std::chrono::steady_clock::now();
  CellResult result{key};
  const std::size_t stride = grid.eval_stride ? grid.eval_stride : key.pred_len;
  const auto all_windows = evaluation_windows(data.test_z, key.seq_len, key.pred_len, stride);
  const auto chosen = capped_indices(all_windows.size(), grid.max_eval_windows);

  // Squared-error sums per window; NaN marks a failed window.
  std::vector<double> sse(chosen.size(), std::numeric_limits<double>::quiet_NaN());
  if (key.model == ModelKind::informer_like) {
    TransformerConfig cfg = grid.transformer;
    cfg.seq_len = key.seq_len;
    cfg.pred_len = key.pred_len;
    if (cfg.label_len > cfg.seq_len) cfg.label_len = 0;
    cfg.seed = substream_seed(grid.seed ^ grid.transformer.seed, cell_index);
    const TrainedModel trained = train(data.raw.train, data.raw.val, cfg);
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const auto& w = all_windows[chosen[k]];
      const ModelInput in = make_input(cfg, data.test_z, data.raw.test, w.start);
      const nn::Var y = trained.model.forward(in, false);
      sse[k] = mse(w.target, y->value.data()) * static_cast<double>(key.pred_len);
    }
  } else {
    const auto evaluate = [&](std::size_t k) {
      const auto& w = all_windows[chosen[k]];
      try {
        const FarimaModel model = key.model == ModelKind::farima
                                      ? fit_farima(w.input, grid.arma_p, grid.arma_q, {grid.arma_method, {}})
                                      : fit_arima(w.input, grid.arma_p, grid.arma_q, std::nullopt, grid.arma_method);
        const auto f = forecast(model, w.input, key.pred_len);
        const double e = mse(w.target, f);
        if (std::isfinite(e)) sse[k] = e * static_cast<double>(key.pred_len);
      } catch (const std::exception&) {
      }
    };
    const unsigned threads = std::max(1u, window_threads);
    if (threads == 1) {
      for (std::size_t k = 0; k < chosen.size(); ++k) evaluate(k);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t k = next++; k < chosen.size(); k = next++) evaluate(k);
        });
      }
    }
  }

  double total = 0.0;
  for (double s : sse) {
    if (std::isnan(s)) {
      ++result.n_failed;
    } else {
      total += s;
      ++result.n_windows;
    }
  }
  if (result.n_windows == 0) throw std::runtime_error(key.id() + ": every evaluation window failed");
  result.mse = total / static_cast<double>(result.n_windows * key.pred_len);
  result.flagged = static_cast<double>(result.n_failed) > kFlagFraction * static_cast<double>(chosen.size());
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<CellResult> read_journal(const std::filesystem::path& path) {
  std::vector<CellResult> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const std::exception& e) {
      // A crash can leave a torn final line; anything earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad journal entry: " + e.what());
    }
  }
  return out;
}

GridRunSummary run_grid(const GridSpec& grid, const std::filesystem::path& out_dir, const GridRunOptions& options) {
  grid.validate();
  std::filesystem::create_directories(out_dir);
  const auto journal_path = out_dir / "journal.jsonl";
  const auto cells = enumerate_cells(grid);

  std::map<CellKey, CellResult> done;
  if (options.resume) {
    for (const auto& r : read_journal(journal_path)) done[r.key] = r;
    // Rewrite without any torn tail so appends start on a clean line.
    std::ofstream clean(journal_path, std::ios::trunc);
    for (const auto& [k, r] : done) clean << to_json(r).dump() << '\n';
  } else {
    std::ofstream(journal_path, std::ios::trunc);
  }

  std::vector<std::size_t> pending;
  std::set<std::pair<DemandLevel, std::int64_t>> needed;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (done.count(cells[i])) continue;
    pending.push_back(i);
    needed.insert({cells[i].scenario, cells[i].granularity_ms});
  }
  std::map<std::pair<DemandLevel, std::int64_t>, Dataset> datasets;
  for (const auto& [scenario, gran] : needed) datasets[{scenario, gran}] = make_dataset(grid, scenario, gran);

  GridRunSummary summary;
  std::mutex mu;
  std::ofstream journal(journal_path, std::ios::app);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t p = next++; p < pending.size(); p = next++) {
      const std::size_t i = pending[p];
      const CellKey& key = cells[i];
      try {
        const CellResult r = run_cell(grid, key, datasets.at({key.scenario, key.granularity_ms}), i);
        std::lock_guard lock(mu);
        done[key] = r;
        journal << to_json(r).dump() << '\n';
        journal.flush();
        if (options.on_cell) options.on_cell(r);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        summary.failed.push_back(key.id() + ": " + e.what());
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(grid.workers, std::max<std::size_t>(1, pending.size()));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  std::sort(summary.failed.begin(), summary.failed.end());

  for (const auto& key : cells) {
    const auto it = done.find(key);
    if (it == done.end()) continue;
    summary.results.push_back(it->second);
    if (it->second.flagged) {
      summary.flagged.push_back(key.id() + ": " + std::to_string(it->second.n_failed) + " failed windows");
    }
  }
  emit_tables(summary.results, out_dir);
  return summary;
}

std::vector<Table> build_tables(const std::vector<CellResult>& results) {
  std::vector<DemandLevel> scenarios;
  std::vector<std::int64_t> grans;
  std::vector<std::size_t> seqs, preds;
  std::vector<ModelKind> models;
  const auto add = [](auto& list, auto v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  for (const auto& r : results) {
    add(scenarios, r.key.scenario);
    add(grans, r.key.granularity_ms);
    add(seqs, r.key.seq_len);
    add(preds, r.key.pred_len);
    add(models, r.key.model);
  }
  std::sort(scenarios.begin(), scenarios.end());
  std::sort(grans.begin(), grans.end());
  std::sort(seqs.begin(), seqs.end());
  std::sort(preds.begin(), preds.end());
  std::sort(models.begin(), models.end());

  std::map<CellKey, double> value;
  for (const auto& r : results) value[r.key] = r.mse;

  std::vector<Table> tables;
  for (auto s : scenarios) {
    Table t{s, {"pred_len", "model"}, {}};
    for (auto g : grans)
      for (auto q : seqs) t.header.push_back(std::to_string(g) + "ms_seq" + std::to_string(q));
    for (auto p : preds) {
      std::vector<std::vector<std::string>> block;
      for (auto m : models) block.push_back({std::to_string(p), to_string(m)});
      for (auto g : grans) {
        for (auto q : seqs) {
          std::vector<std::optional<double>> col;
          for (auto m : models) {
            const auto it = value.find({s, g, q, p, m});
            col.push_back(it == value.end() ? std::nullopt : std::optional<double>(it->second));
          }
          std::optional<double> best;
          for (const auto& v : col) {
            if (v && (!best || std::round(*v * 1e4) < std::round(*best * 1e4))) best = v;
          }
          for (std::size_t k = 0; k < col.size(); ++k) {
            std::string cell = col[k] ? fixed(*col[k], 4) : "NA";
            if (col[k] && std::round(*col[k] * 1e4) == std::round(*best * 1e4)) cell += "*";
            block[k].push_back(cell);
          }
        }
      }
      for (auto& row : block) t.rows.push_back(std::move(row));
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::string render_csv(const Table& table) {
  std::ostringstream out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out.str();
}

std::string render_text(const Table& table) {
  std::vector<std::size_t> width(table.header.size(), 0);
  for (std::size_t c = 0; c < table.header.size(); ++c) width[c] = table.header[c].size();
  for (const auto& row : table.rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  out << "scenario: " << to_string(table.scenario) << "  (* = best in column)\n";
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      out << (c ? "  " : "") << (c < 2 ? cells[c] + pad : pad + cells[c]);
    }
    out << '\n';
  };
  line(table.header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : table.rows) line(row);
  return out.str();
}

WinnerReport winner_report(const std::vector<CellResult>& results) {
  std::map<std::tuple<DemandLevel, std::int64_t, std::size_t, std::size_t>, std::vector<const CellResult*>> cases;
  for (const auto& r : results) cases[{r.key.scenario, r.key.granularity_ms, r.key.seq_len, r.key.pred_len}].push_back(&r);
  WinnerReport report;
  for (const auto& r : results) report.wins.try_emplace(r.key.model, 0);
  for (const auto& [key, cell] : cases) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto* r : cell) best = std::min(best, std::round(r->mse * 1e4));
    std::size_t winners = 0;
    for (const auto* r : cell) {
      if (std::round(r->mse * 1e4) == best) {
        ++report.wins[r->key.model];
        ++winners;
      }
    }
    ++report.cases;
    if (winners > 1) ++report.tied_cases;
  }
  return report;
}

std::string render_winners(const WinnerReport& report) {
  std::ostringstream out;
  out << "cases: " << report.cases << "\n";
  out << "tied cases: " << report.tied_cases << "\n";
  for (const auto& [model, wins] : report.wins) out << to_string(model) << ": " << wins << "\n";
  return out.str();
}

std::string render_results_csv(const std::vector<CellResult>& results) {
  std::ostringstream out;
  out << "scenario,granularity_ms,seq_len,pred_len,model,mse,n_windows,n_failed,flagged\n";
  for (const auto& r : results) {
    char mse_buf[64];
    std::snprintf(mse_buf, sizeof mse_buf, "%.17g", r.mse);
    out << to_string(r.key.scenario) << ',' << r.key.granularity_ms << ',' << r.key.seq_len << ',' << r.key.pred_len
        << ',' << to_string(r.key.model) << ',' << mse_buf << ',' << r.n_windows << ',' << r.n_failed << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
  return out.str();
}

void emit_tables(const std::vector<CellResult>& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "results.csv", render_results_csv(results));
  for (const auto& t : build_tables(results)) {
    write_file(dir / ("table_" + to_string(t.scenario) + ".csv"), render_csv(t));
    write_file(dir / ("table_" + to_string(t.scenario) + ".txt"), render_text(t));
  }
  write_file(dir / "winners.txt", render_winners(winner_report(results)));
}

}  // namespace lrdcast
