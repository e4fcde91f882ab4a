#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lrdcast/bench.hpp"

using namespace lrdcast;

namespace {

CellResult cell(DemandLevel s, std::size_t seq, std::size_t pred, ModelKind m, double v) {
  CellResult r;
  r.key = {s, 100, seq, pred, m};
  r.mse = v;
  r.n_windows = 10;
  return r;
}

GridSpec small_grid() {
  GridSpec g;
  g.scenarios = {DemandLevel::medium};
  g.granularities_ms = {100};
  g.seq_lens = {64};
  g.pred_lens = {1, 12};
  g.models = {ModelKind::farima, ModelKind::arima};
  g.num_samples = 3000;
  g.seed = 5;
  return g;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("mse examples") {
  const std::vector<double> y{1, 2, 3};
  CHECK(mse(y, y) == 0.0);
  CHECK(mse(std::vector<double>{1, 2}, std::vector<double>{2, 2}) == 0.5);
  CHECK_THROWS(mse(std::vector<double>{1, 2}, std::vector<double>{1}));
  CHECK_THROWS(mse(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("mse is non-negative and the zero forecast gives the mean square") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(3.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(50), b(50);
    for (auto& v : a) v = nd(rng);
    for (auto& v : b) v = nd(rng);
    CHECK(mse(a, b) >= 0.0);
    const std::vector<double> zero(a.size(), 0.0);
    double sq = 0.0;
    for (double v : a) sq += v * v / 50.0;
    CHECK(mse(a, zero) == doctest::Approx(sq).epsilon(1e-14));

    const auto z = Standardizer::fit(a).apply(a);
    double mean = 0.0, var = 0.0;
    for (double v : z) mean += v / 50.0;
    for (double v : z) var += (v - mean) * (v - mean) / 50.0;
    CHECK(mse(z, zero) == doctest::Approx(var).epsilon(1e-12));
  }
}

TEST_CASE("standardized test split against its mean") {
  GridSpec g = small_grid();
  g.num_samples = 20000;
  const Dataset d = make_dataset(g, DemandLevel::medium, 100);
  CHECK(d.test_z.size() == 4000);
  const auto own = Standardizer::fit(d.raw.test).apply(d.raw.test.values);
  const double n = static_cast<double>(own.size());
  CHECK(mse(own, std::vector<double>(own.size(), 0.0)) == doctest::Approx((n - 1.0) / n).epsilon(1e-12));
  double mean = 0.0, var = 0.0;
  for (double v : d.test_z) mean += v / n;
  for (double v : d.test_z) var += (v - mean) * (v - mean) / n;
  CHECK(mse(d.test_z, std::vector<double>(d.test_z.size(), 0.0)) == doctest::Approx(var + mean * mean).epsilon(1e-12));
  const double base = mse(d.test_z, std::vector<double>(d.test_z.size(), 0.0));
  CHECK(base > 0.5);
  CHECK(base < 2.0);
}

TEST_CASE("evaluation window count") {
  const std::vector<double> test(1000, 0.0);
  for (std::size_t seq : {64, 128, 512}) {
    for (std::size_t pred : {1, 12, 24, 48}) {
      for (std::size_t stride : {std::size_t{1}, pred, std::size_t{7}}) {
        const auto w = evaluation_windows(test, seq, pred, stride);
        CHECK(w.size() == (1000 - seq - pred) / stride + 1);
        for (std::size_t k = 0; k < w.size(); ++k) {
          CHECK(w[k].start == k * stride);
          CHECK(w[k].input.size() == seq);
          CHECK(w[k].target.size() == pred);
          CHECK(w[k].target.data() == w[k].input.data() + seq);
        }
        CHECK(w.back().start + seq + pred <= 1000);
      }
    }
  }
  CHECK(evaluation_windows(std::vector<double>(76, 0.0), 64, 12, 12).size() == 1);
  CHECK_THROWS(evaluation_windows(std::vector<double>(75, 0.0), 64, 12, 12));
  CHECK_THROWS(evaluation_windows(test, 64, 12, 0));
}

TEST_CASE("grid shape") {
  const GridSpec g;
  CHECK(g.case_count() == 144);
  CHECK(g.cell_count() == 432);
  const auto cells = enumerate_cells(g);
  CHECK(cells.size() == 432);
  std::set<CellKey> unique(cells.begin(), cells.end());
  CHECK(unique.size() == 432);
  CHECK(cells.front().id() == "high/10ms/seq64/pred1/informer_like");
}

TEST_CASE("grid file parsing") {
  const auto g = GridSpec::from_kv(KeyValueConfig::parse(
      "scenarios = low, high\n"
      "granularities_ms = 10\n"
      "seq_lens = 128\n"
      "pred_lens = 24, 48\n"
      "models = farima, informer_like\n"
      "seed = 9\n"
      "max_eval_windows = 50\n"
      "transformer.d_model = 16\n"
      "transformer.n_heads = 2\n"));
  CHECK(g.scenarios == std::vector<DemandLevel>{DemandLevel::low, DemandLevel::high});
  CHECK(g.cell_count() == 8);
  CHECK(g.seed == 9);
  CHECK(g.max_eval_windows == 50);
  CHECK(g.transformer.d_model == 16);
  CHECK(g.transformer.n_heads == 2);
  CHECK_THROWS_AS(GridSpec::from_kv(KeyValueConfig::parse("sead = 1")), ConfigError);
  CHECK_THROWS_AS(GridSpec::from_kv(KeyValueConfig::parse("transformer.bogus = 1")), ConfigError);
  CHECK_THROWS(GridSpec::from_kv(KeyValueConfig::parse("models = lstm")));
  CHECK_THROWS(GridSpec::from_kv(KeyValueConfig::parse("granularities_ms = 15")));
}

TEST_CASE("winner report with a three-way tie") {
  std::vector<CellResult> results;
  for (auto s : {DemandLevel::high, DemandLevel::low})
    for (std::size_t seq : {64, 128})
      for (std::size_t pred : {1, 12})
        for (auto m : {ModelKind::informer_like, ModelKind::farima, ModelKind::arima})
          results.push_back(cell(s, seq, pred, m, 0.75));
  const auto w = winner_report(results);
  CHECK(w.cases == 8);
  CHECK(w.tied_cases == 8);
  for (const auto& [m, n] : w.wins) CHECK(n == 8);
}

TEST_CASE("winner report ties at four decimals") {
  std::vector<CellResult> r{cell(DemandLevel::high, 64, 1, ModelKind::informer_like, 0.12344),
                            cell(DemandLevel::high, 64, 1, ModelKind::farima, 0.12341),
                            cell(DemandLevel::high, 64, 1, ModelKind::arima, 0.2),
                            cell(DemandLevel::high, 64, 12, ModelKind::informer_like, 0.5),
                            cell(DemandLevel::high, 64, 12, ModelKind::farima, 0.4),
                            cell(DemandLevel::high, 64, 12, ModelKind::arima, 0.4001)};
  const auto w = winner_report(r);
  CHECK(w.cases == 2);
  CHECK(w.tied_cases == 1);
  CHECK(w.wins.at(ModelKind::informer_like) == 1);
  CHECK(w.wins.at(ModelKind::farima) == 2);
  CHECK(w.wins.at(ModelKind::arima) == 0);
  std::size_t total = 0;
  for (const auto& [m, n] : w.wins) total += n;
  CHECK(total >= w.cases);
  const auto text = render_winners(w);
  CHECK(text.find("cases: 2") != std::string::npos);
  CHECK(text.find("farima: 2") != std::string::npos);
}

TEST_CASE("tables mark the best model per column") {
  std::vector<CellResult> r{cell(DemandLevel::medium, 64, 1, ModelKind::farima, 0.3),
                            cell(DemandLevel::medium, 64, 1, ModelKind::arima, 0.5),
                            cell(DemandLevel::medium, 128, 1, ModelKind::farima, 0.6),
                            cell(DemandLevel::medium, 128, 1, ModelKind::arima, 0.4)};
  const auto tables = build_tables(r);
  REQUIRE(tables.size() == 1);
  const Table& t = tables[0];
  CHECK(t.header == std::vector<std::string>{"pred_len", "model", "100ms_seq64", "100ms_seq128"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "farima", "0.3000*", "0.6000"});
  CHECK(t.rows[1] == std::vector<std::string>{"1", "arima", "0.5000", "0.4000*"});
  CHECK(render_csv(t) == "pred_len,model,100ms_seq64,100ms_seq128\n1,farima,0.3000*,0.6000\n1,arima,0.5000,0.4000*\n");
  CHECK(render_text(t).find("0.4000*") != std::string::npos);
}

TEST_CASE("classical cells are deterministic") {
  const GridSpec g = small_grid();
  const Dataset d = make_dataset(g, DemandLevel::medium, 100);
  const Dataset d2 = make_dataset(g, DemandLevel::medium, 100);
  CHECK(d.test_z == d2.test_z);
  for (auto m : {ModelKind::farima, ModelKind::arima}) {
    const CellKey key{DemandLevel::medium, 100, 64, 12, m};
    const CellResult a = run_cell(g, key, d, 0);
    const CellResult b = run_cell(g, key, d, 0, 3);
    CHECK(a.mse == b.mse);
    CHECK(a.n_windows + a.n_failed == (600 - 64 - 12) / 12 + 1);
    CHECK(a.n_windows >= 1);
    CHECK(std::isfinite(a.mse));
    CHECK(a.mse >= 0.0);
  }
}

TEST_CASE("evaluation window cap") {
  GridSpec g = small_grid();
  g.max_eval_windows = 5;
  const Dataset d = make_dataset(g, DemandLevel::medium, 100);
  const CellResult r = run_cell(g, {DemandLevel::medium, 100, 64, 1, ModelKind::arima}, d, 0);
  CHECK(r.n_windows + r.n_failed == 5);
}

TEST_CASE("grid journal resume") {
  const GridSpec g = small_grid();
  const auto dir = fresh_dir("lrdcast_bench_resume");
  std::size_t computed = 0;
  GridRunOptions opts;
  opts.on_cell = [&](const CellResult&) { ++computed; };
  const auto first = run_grid(g, dir, opts);
  CHECK(first.complete());
  CHECK(first.results.size() == 4);
  CHECK(computed == 4);
  const std::string csv = slurp(dir / "results.csv");
  CHECK(std::filesystem::exists(dir / "table_medium.csv"));
  CHECK(std::filesystem::exists(dir / "table_medium.txt"));
  CHECK(std::filesystem::exists(dir / "winners.txt"));

  // Drop the last entry and leave a torn line behind it.
  std::string journal = slurp(dir / "journal.jsonl");
  journal.erase(journal.rfind('\n', journal.size() - 2) + 1);
  journal += "{\"scenario\": \"med";
  {
    std::ofstream out(dir / "journal.jsonl", std::ios::binary | std::ios::trunc);
    out << journal;
  }
  CHECK(read_journal(dir / "journal.jsonl").size() == 3);

  computed = 0;
  opts.resume = true;
  const auto second = run_grid(g, dir, opts);
  CHECK(second.complete());
  CHECK(computed == 1);
  CHECK(second.results.size() == 4);
  CHECK(slurp(dir / "results.csv") == csv);
  CHECK(read_journal(dir / "journal.jsonl").size() == 4);

  computed = 0;
  run_grid(g, dir, opts);
  CHECK(computed == 0);
  CHECK(slurp(dir / "results.csv") == csv);

  {
    std::ofstream out(dir / "journal.jsonl", std::ios::binary | std::ios::trunc);
    out << "garbage\n" << journal.substr(0, journal.find('\n') + 1);
  }
  CHECK_THROWS(read_journal(dir / "journal.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid with parallel workers matches serial run") {
  GridSpec g = small_grid();
  const auto a = fresh_dir("lrdcast_bench_serial");
  const auto b = fresh_dir("lrdcast_bench_parallel");
  run_grid(g, a);
  g.workers = 3;
  run_grid(g, b);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(slurp(a / "table_medium.csv") == slurp(b / "table_medium.csv"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("shipped config files parse") {
  const std::filesystem::path dir = LRDCAST_CONFIG_DIR;
  const GridSpec full = GridSpec::from_kv(KeyValueConfig::load(dir / "grid_full.cfg"));
  CHECK(full.cell_count() == 432);
  CHECK(full.transformer.d_model == 64);
  const GridSpec quick = GridSpec::from_kv(KeyValueConfig::load(dir / "grid_quick.cfg"));
  CHECK(quick.cell_count() == 18);
  CHECK(quick.max_eval_windows == 200);
  const TransformerConfig c = TransformerConfig::from_kv(KeyValueConfig::load(dir / "transformer.cfg"));
  CHECK(c.n_heads == 4);
  CHECK(c.sparse_attention);
  CHECK_NOTHROW(c.validate());
}
