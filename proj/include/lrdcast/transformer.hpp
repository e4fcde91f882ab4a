#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lrdcast/kv_config.hpp"
#include "lrdcast/nn/autograd.hpp"
#include "lrdcast/trace_io.hpp"

namespace lrdcast {

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  std::size_t d_ff = 128;
  double sampling_factor_c = 5.0;
  std::size_t seq_len = 64;
  std::size_t label_len = 0;  // 0 selects seq_len / 2
  std::size_t pred_len = 12;
  double dropout = 0.05;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  /// Off turns every attention block into full attention.
  bool sparse_attention = true;
  bool zero_init_head = false;
  /// Training windows drawn per epoch (0 = every stride-1 window).
  std::size_t max_train_windows = 0;
  /// Validation windows, evenly spaced (0 = all).
  std::size_t max_val_windows = 0;

  std::size_t d_k() const noexcept { return n_heads ? d_model / n_heads : 0; }
  std::size_t decoder_label_len() const noexcept { return label_len ? label_len : std::max<std::size_t>(1, seq_len / 2); }
  std::size_t decoder_len() const noexcept { return decoder_label_len() + pred_len; }
  void validate() const;

  /// Overrides the fields named in `cfg`; unknown keys are an error.
  static TransformerConfig from_kv(const KeyValueConfig& cfg);
  static TransformerConfig from_kv(const KeyValueConfig& cfg, TransformerConfig base);
  KeyValueConfig to_kv() const;
};

struct NamedParameter {
  std::string name;
  nn::Var var;
};

/// One training or inference input: standardized values plus calendar
/// features of the encoder and decoder ranges.
struct ModelInput {
  std::vector<double> x_enc;  // seq_len values
  nn::NdArray t_enc;          // (seq_len, 7)
  nn::NdArray t_dec;          // (label_len + pred_len, 7)
};

class Transformer {
 public:
  Transformer() = default;
  explicit Transformer(const TransformerConfig& config);

  const TransformerConfig& config() const noexcept { return config_; }
  std::vector<NamedParameter>& parameters() noexcept { return params_; }
  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Builds the (pred_len, 1) output node. Dropout is active only when
  /// `training` is set; `rng` feeds the dropout masks.
  nn::Var forward(const ModelInput& input, bool training, std::mt19937_64* rng = nullptr,
                  nn::AttentionOpCounter* counter = nullptr) const;

  /// Inference over several inputs; one row of pred_len values each.
  std::vector<std::vector<double>> forward_batch(const std::vector<ModelInput>& batch) const;

  std::size_t forward_calls() const noexcept { return forward_calls_; }
  void reset_forward_calls() noexcept { forward_calls_ = 0; }

  /// Snapshot and restore of parameter values (used for early stopping).
  std::vector<nn::NdArray> snapshot() const;
  void restore(const std::vector<nn::NdArray>& values);

 private:
  const nn::Var& param(std::size_t index) const { return params_[index].var; }
  nn::Var add_param(std::string name, nn::NdArray init);

  TransformerConfig config_;
  std::vector<NamedParameter> params_;
  mutable std::size_t forward_calls_ = 0;
};

/// Builds the model input for the window of `trace` starting at `start`.
/// `standardized` holds the trace values already standardized.
ModelInput make_input(const TransformerConfig& config, std::span<const double> standardized, const Trace& trace,
                      std::size_t start);

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainedModel {
  Transformer model;
  Standardizer standardizer;
  std::int64_t granularity_ms = 10;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;

  /// Raw-scale forecasts of the next pred_len values after `window`, whose
  /// first value is stamped `start_ms`. Exactly one forward pass.
  std::vector<double> predict(std::span<const double> window, TimestampMs start_ms) const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam on the mean squared error of stride-1 windows; stops when the
/// validation loss has not improved for `patience` epochs and keeps the
/// best parameters.
TrainedModel train(const Trace& train_split, const Trace& val_split, const TransformerConfig& config,
                   const EpochCallback& on_epoch = {});

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace lrdcast
