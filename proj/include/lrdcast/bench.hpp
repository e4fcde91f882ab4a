#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrdcast/farima.hpp"
#include "lrdcast/kv_config.hpp"
#include "lrdcast/trace_io.hpp"
#include "lrdcast/traffic_gen.hpp"
#include "lrdcast/transformer.hpp"

namespace lrdcast {

enum class ModelKind { informer_like, farima, arima };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct GridSpec {
  std::vector<DemandLevel> scenarios{DemandLevel::high, DemandLevel::medium, DemandLevel::low};
  std::vector<std::int64_t> granularities_ms{10, 100, 1000};
  std::vector<std::size_t> seq_lens{64, 128, 256, 512};
  std::vector<std::size_t> pred_lens{1, 12, 24, 48};
  std::vector<ModelKind> models{ModelKind::informer_like, ModelKind::farima, ModelKind::arima};
  std::size_t eval_stride = 0;  // 0 = pred_len
  std::uint64_t seed = 1;
  /// Samples per generated trace, counted at the cell granularity.
  std::size_t num_samples = 60000;
  SplitSpec split;
  int arma_p = 2;
  int arma_q = 0;
  ArmaMethod arma_method = ArmaMethod::css;
  /// Evenly spaced subset of evaluation windows per cell (0 = all).
  std::size_t max_eval_windows = 0;
  /// Concurrent cells.
  std::size_t workers = 1;
  /// Base transformer settings; seq_len, pred_len and seed are set per cell.
  TransformerConfig transformer;

  void validate() const;
  std::size_t case_count() const noexcept {
    return scenarios.size() * granularities_ms.size() * seq_lens.size() * pred_lens.size();
  }
  std::size_t cell_count() const noexcept { return case_count() * models.size(); }

  /// Keys: scenarios, granularities_ms, seq_lens, pred_lens, models,
  /// eval_stride, seed, num_samples, train_frac, val_frac, test_frac, arma_p,
  /// arma_q, arma_method, max_eval_windows, workers, and transformer.<key>.
  static GridSpec from_kv(const KeyValueConfig& cfg);
};

struct CellKey {
  DemandLevel scenario = DemandLevel::high;
  std::int64_t granularity_ms = 10;
  std::size_t seq_len = 64;
  std::size_t pred_len = 1;
  ModelKind model = ModelKind::farima;

  std::string id() const;
  auto operator<=>(const CellKey&) const = default;
};

struct CellResult {
  CellKey key;
  double mse = 0.0;
  std::size_t n_windows = 0;
  std::size_t n_failed = 0;
  double wall_time_s = 0.0;
  bool flagged = false;  // more than 5% of windows failed
};

/// Cells in grid order: scenario, granularity, seq_len, pred_len, model.
std::vector<CellKey> enumerate_cells(const GridSpec& grid);

double mse(std::span<const double> y_true, std::span<const double> y_pred);

struct EvalWindow {
  std::size_t start = 0;
  std::span<const double> input;
  std::span<const double> target;
};

/// Rolling windows over `test`: floor((n - seq - pred) / stride) + 1 of them.
std::vector<EvalWindow> evaluation_windows(std::span<const double> test, std::size_t seq_len, std::size_t pred_len,
                                           std::size_t stride);

/// Generated trace split chronologically and standardized with the
/// training statistics.
struct Dataset {
  TraceSplit raw;
  Standardizer standardizer;
  std::vector<double> test_z;
};

Dataset make_dataset(const GridSpec& grid, DemandLevel scenario, std::int64_t granularity_ms);
Dataset make_dataset(const Trace& trace, const SplitSpec& split);

/// Evaluates one cell. `cell_index` seeds the transformer so results do
/// not depend on execution order.
CellResult run_cell(const GridSpec& grid, const CellKey& key, const Dataset& data, std::size_t cell_index,
                    unsigned window_threads = 1);

struct GridRunOptions {
  bool resume = false;
  std::function<void(const CellResult&)> on_cell;
};

struct GridRunSummary {
  std::vector<CellResult> results;  // grid order
  std::vector<std::string> failed;  // cells that threw
  std::vector<std::string> flagged;

  bool complete() const noexcept { return failed.empty(); }
};

/// Runs every cell not already in `out_dir/journal.jsonl`, appending each
/// finished cell to the journal, then writes the report files.
GridRunSummary run_grid(const GridSpec& grid, const std::filesystem::path& out_dir, const GridRunOptions& options = {});

std::vector<CellResult> read_journal(const std::filesystem::path& path);

struct Table {
  DemandLevel scenario;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// One table per scenario: rows (pred_len, model), columns (granularity,
/// seq_len). The best model of each column within a pred_len block is
/// suffixed with '*'.
std::vector<Table> build_tables(const std::vector<CellResult>& results);
std::string render_csv(const Table& table);
std::string render_text(const Table& table);

struct WinnerReport {
  std::map<ModelKind, std::size_t> wins;
  std::size_t cases = 0;
  std::size_t tied_cases = 0;
};

/// Minimal-MSE model per case; ties (equal at 4 decimals) credit every tied model.
WinnerReport winner_report(const std::vector<CellResult>& results);
std::string render_winners(const WinnerReport& report);

/// Long-form CSV of all cell results (no timings, so reruns compare equal).
std::string render_results_csv(const std::vector<CellResult>& results);

/// Writes results.csv, table_<scenario>.csv/.txt and winners.txt into `dir`.
void emit_tables(const std::vector<CellResult>& results, const std::filesystem::path& dir);

}  // namespace lrdcast
