#include "lrdcast/transformer.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "lrdcast/time_features.hpp"

namespace lrdcast {

namespace {

using nn::NdArray;
using nn::Var;

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

NdArray positional_encoding(std::size_t length, std::size_t d) {
  NdArray pe = NdArray::matrix(length, d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

NdArray column(std::span<const double> v) { return NdArray({v.size(), 1}, std::vector<double>(v.begin(), v.end())); }

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(double learning_rate, const std::vector<NamedParameter>& params) : lr(learning_rate) {
    for (const auto& p : params) {
      m.emplace_back(p.var->value.size(), 0.0);
      v.emplace_back(p.var->value.size(), 0.0);
    }
  }

  void step(std::vector<NamedParameter>& params) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& node = *params[k].var;
      for (std::size_t i = 0; i < node.value.size(); ++i) {
        const double g = node.grad[i];
        m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g;
        v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g * g;
        node.value[i] -= lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
      }
      node.grad.fill(0.0);
    }
  }
};

std::size_t window_count(std::size_t n, const TransformerConfig& c) {
  return n >= c.seq_len + c.pred_len ? n - c.seq_len - c.pred_len + 1 : 0;
}

std::vector<std::size_t> evenly_spaced(std::size_t available, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || cap >= available) {
    idx.resize(available);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  for (std::size_t i = 0; i < cap; ++i) idx.push_back(i * (available - 1) / std::max<std::size_t>(1, cap - 1));
  return idx;
}

constexpr char kMagic[8] = {'L', 'R', 'D', 'C', 'T', 'R', 'F', '1'};
constexpr std::uint8_t kBlobVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated model file " + path);
  return v;
}

}  // namespace

void TransformerConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("transformer: d_model must be a positive multiple of n_heads");
  }
  if (enc_layers == 0 || dec_layers == 0 || d_ff == 0) throw std::invalid_argument("transformer: empty layer stack");
  if (seq_len == 0 || pred_len == 0) throw std::invalid_argument("transformer: seq_len and pred_len must be >= 1");
  if (decoder_label_len() > seq_len) throw std::invalid_argument("transformer: label_len exceeds seq_len");
  if (!(sampling_factor_c > 0.0)) throw std::invalid_argument("transformer: sampling factor must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("transformer: dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("transformer: learning rate must be > 0");
  if (batch_size == 0 || epochs == 0) throw std::invalid_argument("transformer: batch size and epochs must be >= 1");
}

TransformerConfig TransformerConfig::from_kv(const KeyValueConfig& cfg) { return from_kv(cfg, TransformerConfig{}); }

TransformerConfig TransformerConfig::from_kv(const KeyValueConfig& cfg, TransformerConfig base) {
  cfg.check_known({"d_model", "n_heads", "enc_layers", "dec_layers", "d_ff", "sampling_factor_c", "seq_len",
                   "label_len", "pred_len", "dropout", "learning_rate", "batch_size", "epochs", "patience", "seed",
                   "sparse_attention", "zero_init_head", "max_train_windows", "max_val_windows"});
  const auto size = [&](const char* key, std::size_t fallback) {
    const long long v = cfg.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string("config key '") + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  TransformerConfig c = base;
  c.d_model = size("d_model", c.d_model);
  c.n_heads = size("n_heads", c.n_heads);
  c.enc_layers = size("enc_layers", c.enc_layers);
  c.dec_layers = size("dec_layers", c.dec_layers);
  c.d_ff = size("d_ff", c.d_ff);
  c.sampling_factor_c = cfg.get_double("sampling_factor_c", c.sampling_factor_c);
  c.seq_len = size("seq_len", c.seq_len);
  c.label_len = size("label_len", c.label_len);
  c.pred_len = size("pred_len", c.pred_len);
  c.dropout = cfg.get_double("dropout", c.dropout);
  c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
  c.batch_size = size("batch_size", c.batch_size);
  c.epochs = size("epochs", c.epochs);
  c.patience = size("patience", c.patience);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
  c.sparse_attention = cfg.get_bool("sparse_attention", c.sparse_attention);
  c.zero_init_head = cfg.get_bool("zero_init_head", c.zero_init_head);
  c.max_train_windows = size("max_train_windows", c.max_train_windows);
  c.max_val_windows = size("max_val_windows", c.max_val_windows);
  return c;
}

KeyValueConfig TransformerConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("d_model", std::to_string(d_model));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("enc_layers", std::to_string(enc_layers));
  kv.set("dec_layers", std::to_string(dec_layers));
  kv.set("d_ff", std::to_string(d_ff));
  kv.set("sampling_factor_c", shortest(sampling_factor_c));
  kv.set("seq_len", std::to_string(seq_len));
  kv.set("label_len", std::to_string(label_len));
  kv.set("pred_len", std::to_string(pred_len));
  kv.set("dropout", shortest(dropout));
  kv.set("learning_rate", shortest(learning_rate));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("patience", std::to_string(patience));
  kv.set("seed", std::to_string(static_cast<long long>(seed)));
  kv.set("sparse_attention", sparse_attention ? "true" : "false");
  kv.set("zero_init_head", zero_init_head ? "true" : "false");
  kv.set("max_train_windows", std::to_string(max_train_windows));
  kv.set("max_val_windows", std::to_string(max_val_windows));
  return kv;
}

Var Transformer::add_param(std::string name, NdArray init) {
  params_.push_back({std::move(name), nn::parameter(std::move(init))});
  return params_.back().var;
}

Transformer::Transformer(const TransformerConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  const auto weight = [&](std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    NdArray w = NdArray::matrix(fan_in, fan_out);
    for (auto& e : w.data()) e = dist(rng);
    return w;
  };
  const auto zeros = [](std::size_t n) { return NdArray::matrix(1, n); };
  const auto ones = [](std::size_t n) { return NdArray::matrix(1, n, 1.0); };
  const auto embedding = [&](const std::string& p) {
    add_param(p + ".value.w", weight(1, d));
    add_param(p + ".value.b", zeros(d));
    add_param(p + ".time.w", weight(kTimeFeatureCount, d));
  };
  const auto attention = [&](const std::string& p) {
    for (const char* m : {"q", "k", "v", "o"}) {
      add_param(p + "." + m + ".w", weight(d, d));
      add_param(p + "." + m + ".b", zeros(d));
    }
  };
  const auto norm = [&](const std::string& p) {
    add_param(p + ".gamma", ones(d));
    add_param(p + ".beta", zeros(d));
  };
  const auto feed_forward = [&](const std::string& p) {
    add_param(p + ".w1", weight(d, ff));
    add_param(p + ".b1", zeros(ff));
    add_param(p + ".w2", weight(ff, d));
    add_param(p + ".b2", zeros(d));
  };

  // Creation order is the order forward() consumes them.
  embedding("enc.embed");
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    attention(p + ".attn");
    norm(p + ".norm1");
    feed_forward(p + ".ff");
    norm(p + ".norm2");
  }
  norm("enc.norm");
  embedding("dec.embed");
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    attention(p + ".self");
    norm(p + ".norm1");
    attention(p + ".cross");
    norm(p + ".norm2");
    feed_forward(p + ".ff");
    norm(p + ".norm3");
  }
  norm("dec.norm");
  add_param("head.w", config_.zero_init_head ? NdArray::matrix(d, 1) : weight(d, 1));
  add_param("head.b", zeros(1));
}

std::size_t Transformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

Var Transformer::forward(const ModelInput& input, bool training, std::mt19937_64* rng,
                         nn::AttentionOpCounter* counter) const {
  const auto& c = config_;
  const std::size_t dec_len = c.decoder_len();
  if (input.x_enc.size() != c.seq_len || input.t_enc.rows() != c.seq_len || input.t_dec.rows() != dec_len ||
      input.t_enc.cols() != kTimeFeatureCount || input.t_dec.cols() != kTimeFeatureCount) {
    throw std::invalid_argument("transformer: input shapes do not match seq_len " + std::to_string(c.seq_len) +
                                " / decoder length " + std::to_string(dec_len));
  }
  if (training && c.dropout > 0.0 && rng == nullptr) throw std::invalid_argument("transformer: training needs an rng");
  ++forward_calls_;

  std::mt19937_64 unused(0);
  std::mt19937_64& gen = rng ? *rng : unused;
  std::size_t cursor = 0;
  const auto next = [&]() -> const Var& { return param(cursor++); };
  const auto drop = [&](const Var& x) { return nn::dropout(x, c.dropout, training, gen); };

  const auto embed = [&](const NdArray& values, const NdArray& times) {
    const Var& wv = next();
    const Var& bv = next();
    const Var& wt = next();
    Var e = nn::add(nn::linear(nn::constant(values), wv, bv), nn::matmul(nn::constant(times), wt));
    e = nn::add(e, nn::constant(positional_encoding(values.rows(), c.d_model)));
    return drop(e);
  };
  const auto attention = [&](const Var& xq, const Var& xkv, bool causal, bool sparse) {
    const Var& wq = next();
    const Var& bq = next();
    const Var& wk = next();
    const Var& bk = next();
    const Var& wv = next();
    const Var& bv = next();
    const Var& wo = next();
    const Var& bo = next();
    nn::AttentionSpec spec{c.n_heads, causal, sparse && c.sparse_attention, c.sampling_factor_c};
    Var a = nn::multi_head_attention(nn::linear(xq, wq, bq), nn::linear(xkv, wk, bk), nn::linear(xkv, wv, bv), spec,
                                     counter);
    return nn::linear(a, wo, bo);
  };
  const auto norm = [&](const Var& x) {
    const Var& g = next();
    const Var& b = next();
    return nn::layer_norm(x, g, b);
  };
  const auto feed_forward = [&](const Var& x) {
    const Var& w1 = next();
    const Var& b1 = next();
    const Var& w2 = next();
    const Var& b2 = next();
    return nn::linear(nn::gelu(nn::linear(x, w1, b1)), w2, b2);
  };

  Var x = embed(column(input.x_enc), input.t_enc);
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    x = norm(nn::add(x, drop(attention(x, x, false, true))));
    x = norm(nn::add(x, drop(feed_forward(x))));
  }
  const Var memory = norm(x);

  const std::size_t label = c.decoder_label_len();
  std::vector<double> dec_values(dec_len, 0.0);
  std::copy(input.x_enc.end() - static_cast<std::ptrdiff_t>(label), input.x_enc.end(), dec_values.begin());
  Var y = embed(column(dec_values), input.t_dec);
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    y = norm(nn::add(y, drop(attention(y, y, true, true))));
    y = norm(nn::add(y, drop(attention(y, memory, false, false))));
    y = norm(nn::add(y, drop(feed_forward(y))));
  }
  y = norm(y);
  const Var& hw = next();
  const Var& hb = next();
  return nn::linear(nn::slice_rows(y, label, c.pred_len), hw, hb);
}

std::vector<std::vector<double>> Transformer::forward_batch(const std::vector<ModelInput>& batch) const {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& input : batch) {
    const Var y = forward(input, false);
    out.emplace_back(y->value.data().begin(), y->value.data().end());
  }
  return out;
}

std::vector<NdArray> Transformer::snapshot() const {
  std::vector<NdArray> out;
  for (const auto& p : params_) out.push_back(p.var->value);
  return out;
}

void Transformer::restore(const std::vector<NdArray>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("transformer: snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i].var->value)) {
      throw std::invalid_argument("transformer: snapshot shape mismatch for " + params_[i].name);
    }
    params_[i].var->value = values[i];
  }
}

ModelInput make_input(const TransformerConfig& config, std::span<const double> standardized, const Trace& trace,
                      std::size_t start) {
  const std::size_t label = config.decoder_label_len();
  if (start + config.seq_len > standardized.size()) throw std::out_of_range("make_input: window exceeds series");
  ModelInput in;
  in.x_enc.assign(standardized.begin() + static_cast<std::ptrdiff_t>(start),
                  standardized.begin() + static_cast<std::ptrdiff_t>(start + config.seq_len));
  in.t_enc = time_embed(trace.timestamp(start), trace.granularity_ms, config.seq_len);
  in.t_dec = time_embed(trace.timestamp(start + config.seq_len - label), trace.granularity_ms, config.decoder_len());
  return in;
}

std::vector<double> TrainedModel::predict(std::span<const double> window, TimestampMs start_ms) const {
  const auto& c = model.config();
  if (window.size() != c.seq_len) {
    throw std::invalid_argument("predict: window length " + std::to_string(window.size()) + " != seq_len " +
                                std::to_string(c.seq_len));
  }
  ModelInput in;
  in.x_enc = standardizer.apply(window);
  in.t_enc = time_embed(start_ms, granularity_ms, c.seq_len);
  in.t_dec = time_embed(start_ms + static_cast<TimestampMs>(c.seq_len - c.decoder_label_len()) * granularity_ms,
                        granularity_ms, c.decoder_len());
  const Var y = model.forward(in, false);
  return standardizer.invert(y->value.data());
}

TrainedModel train(const Trace& train_split, const Trace& val_split, const TransformerConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  const std::size_t n_train = window_count(train_split.size(), config);
  const std::size_t n_val = window_count(val_split.size(), config);
  if (n_train == 0 || n_val == 0) {
    throw std::invalid_argument("train: splits are shorter than seq_len + pred_len = " +
                                std::to_string(config.seq_len + config.pred_len));
  }

  TrainedModel out{Transformer(config), Standardizer::fit(train_split), train_split.granularity_ms, {}, 0};
  const auto train_z = out.standardizer.apply(train_split.values);
  const auto val_z = out.standardizer.apply(val_split.values);
  const auto target = [&](std::span<const double> z, std::size_t start) {
    return column(z.subspan(start + config.seq_len, config.pred_len));
  };

  std::vector<ModelInput> val_inputs;
  std::vector<NdArray> val_targets;
  for (std::size_t s : evenly_spaced(n_val, config.max_val_windows)) {
    val_inputs.push_back(make_input(config, val_z, val_split, s));
    val_targets.push_back(target(val_z, s));
  }

  std::mt19937_64 rng(config.seed ^ 0x5eed5eed5eedULL);
  Adam adam(config.learning_rate, out.model.parameters());
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::vector<NdArray> best_params = out.model.snapshot();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t used =
        config.max_train_windows ? std::min(config.max_train_windows, n_train) : n_train;
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < used; b0 += config.batch_size) {
      const std::size_t b1 = std::min(used, b0 + config.batch_size);
      const double weight = 1.0 / static_cast<double>(b1 - b0);
      try {
        for (std::size_t i = b0; i < b1; ++i) {
          const std::size_t s = order[i];
          const Var pred = out.model.forward(make_input(config, train_z, train_split, s), true, &rng);
          const Var loss = nn::mse_loss(pred, target(train_z, s));
          loss_sum += loss->value[0];
          nn::backward(nn::scale(loss, weight));
        }
        for (const auto& p : out.model.parameters()) p.var->grad.check_finite(p.name.c_str());
      } catch (const nn::NonFiniteError& e) {
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ", batch starting at " +
                               std::to_string(b0) + ": " + e.what());
      }
      adam.step(out.model.parameters());
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(used), 0.0};
    double val_sum = 0.0;
    try {
      for (std::size_t i = 0; i < val_inputs.size(); ++i) {
        val_sum += nn::mse_loss(out.model.forward(val_inputs[i], false), val_targets[i])->value[0];
      }
    } catch (const nn::NonFiniteError& e) {
      throw TrainingDiverged("validation diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    stats.val_loss = val_sum / static_cast<double>(val_inputs.size());
    if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": loss is not finite");
    }
    out.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (stats.val_loss < best) {
      best = stats.val_loss;
      best_params = out.model.snapshot();
      out.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  out.model.restore(best_params);
  out.model.reset_forward_calls();
  return out;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kBlobVersion);
  std::string cfg;
  const KeyValueConfig kv = model.model.config().to_kv();
  for (const auto& [k, v] : kv.entries()) cfg += k + " = " + v + "\n";
  put(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put(out, model.standardizer.mean());
  put(out, model.standardizer.std());
  put(out, static_cast<std::int64_t>(model.granularity_ms));
  const auto& params = model.model.parameters();
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.var->value.shape();
    put(out, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t dim : shape) put(out, static_cast<std::uint64_t>(dim));
    const auto data = p.var->value.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + where);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(where + " is not a model file");
  }
  const auto version = get<std::uint8_t>(in, where);
  if (version != kBlobVersion) throw std::runtime_error(where + ": unsupported model version " + std::to_string(version));
  std::string cfg(get<std::uint32_t>(in, where), '\0');
  if (!in.read(cfg.data(), static_cast<std::streamsize>(cfg.size()))) throw std::runtime_error("truncated " + where);
  const TransformerConfig config = TransformerConfig::from_kv(KeyValueConfig::parse(cfg, where));
  const double mean = get<double>(in, where);
  const double sd = get<double>(in, where);
  TrainedModel out{Transformer(config), Standardizer(mean, sd), get<std::int64_t>(in, where), {}, 0};
  auto& params = out.model.parameters();
  if (get<std::uint32_t>(in, where) != params.size()) throw std::runtime_error(where + ": parameter count mismatch");
  for (auto& p : params) {
    std::string name(get<std::uint16_t>(in, where), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<std::size_t> shape(get<std::uint8_t>(in, where));
    for (auto& dim : shape) dim = static_cast<std::size_t>(get<std::uint64_t>(in, where));
    if (name != p.name || shape != p.var->value.shape()) {
      throw std::runtime_error(where + ": unexpected parameter " + name + " (expected " + p.name + ")");
    }
    auto data = p.var->value.data();
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw std::runtime_error("truncated " + where);
    }
  }
  return out;
}

}  // namespace lrdcast
