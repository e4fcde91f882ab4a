#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lrdcast/bench.hpp"
#include "lrdcast/farima.hpp"
#include "lrdcast/nn/attention.hpp"
#include "lrdcast/selfsim_stats.hpp"
#include "lrdcast/trace_io.hpp"
#include "lrdcast/traffic_gen.hpp"
#include "lrdcast/transformer.hpp"

namespace py = pybind11;
using namespace lrdcast;

namespace {

using Vector = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Vector& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

nn::NdArray to_matrix(const Vector& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  nn::NdArray m = nn::NdArray::matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.storage().begin());
  return m;
}

py::array_t<double> to_numpy(const nn::NdArray& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Trace make_trace(const Vector& values, std::int64_t granularity_ms, TimestampMs start_ms) {
  Trace t;
  t.values = to_vector(values);
  t.granularity_ms = granularity_ms;
  t.start_time_ms = start_ms;
  validate(t);
  return t;
}

py::dict trace_dict(const Trace& t) {
  py::dict d;
  d["values"] = to_numpy(t.values);
  d["granularity_ms"] = t.granularity_ms;
  d["start_time_ms"] = t.start_time_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(lrdcast, m) {
  m.doc() = "Self-similar traffic generation and long-range-dependent forecasting";

  py::register_exception<TraceFormatError>(m, "TraceFormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<nn::NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

  m.def(
      "generate",
      [](const std::string& scenario, std::int64_t granularity_ms, std::size_t num_samples, std::uint64_t seed) {
        const ScenarioSpec spec = ScenarioSpec::preset(parse_demand_level(scenario), num_samples, seed);
        Trace t;
        {
          py::gil_scoped_release release;
          t = generate_dataset(spec, granularity_ms, num_samples);
        }
        return trace_dict(t);
      },
      py::arg("scenario") = "medium", py::arg("granularity_ms") = 10, py::arg("num_samples") = 60000,
      py::arg("seed") = 1, "Synthetic ON/OFF demand trace for a preset scenario.");

  m.def("hurst_from_shape", &hurst_from_shape, py::arg("a"));

  m.def(
      "aggregate",
      [](const Vector& values, std::int64_t granularity_ms, std::size_t factor) {
        return trace_dict(aggregate(make_trace(values, granularity_ms, kDefaultStartMs), factor));
      },
      py::arg("values"), py::arg("granularity_ms"), py::arg("factor"));

  m.def(
      "read_trace", [](const std::filesystem::path& p) { return trace_dict(read_trace(p)); }, py::arg("path"));
  m.def(
      "write_trace",
      [](const Vector& values, std::int64_t granularity_ms, const std::filesystem::path& p, TimestampMs start_ms) {
        write_trace(make_trace(values, granularity_ms, start_ms), p);
      },
      py::arg("values"), py::arg("granularity_ms"), py::arg("path"), py::arg("start_time_ms") = kDefaultStartMs);

  m.def(
      "hurst",
      [](const Vector& values, const std::string& method) {
        const auto x = to_vector(values);
        HurstEstimate e;
        if (method == "rs") {
          e = rescaled_range_hurst(x);
        } else if (method == "vt") {
          e = variance_time_hurst(x);
        } else {
          throw std::invalid_argument("method must be 'rs' or 'vt'");
        }
        py::dict d;
        d["H"] = e.H;
        d["slope"] = e.slope;
        d["r2"] = e.regression_r2;
        d["block_sizes"] = e.block_sizes;
        d["clamped"] = e.clamped;
        return d;
      },
      py::arg("values"), py::arg("method") = "rs");

  m.def(
      "autocorrelation",
      [](const Vector& values, std::size_t max_lag) { return to_numpy(autocorrelation(to_vector(values), max_lag)); },
      py::arg("values"), py::arg("max_lag"));

  m.def(
      "fgn", [](std::size_t n, double H, std::uint64_t seed) { return to_numpy(fgn_oracle(n, H, seed)); },
      py::arg("n"), py::arg("H"), py::arg("seed") = 1, "Exact fractional Gaussian noise sample.");

  m.def(
      "fracdiff",
      [](const Vector& values, double d, bool naive) {
        return to_numpy(fracdiff_apply(to_vector(values), d, naive ? FracDiffMode::naive : FracDiffMode::fft));
      },
      py::arg("values"), py::arg("d"), py::arg("naive") = false);
  m.def(
      "fracdiff_invert",
      [](const Vector& values, double d) { return to_numpy(fracdiff_invert(to_vector(values), d)); },
      py::arg("values"), py::arg("d"));

  m.def(
      "durbin_levinson",
      [](const Vector& autocov) {
        const LevinsonResult r = durbin_levinson(to_vector(autocov));
        return py::make_tuple(to_numpy(r.phi), r.innovation_variance);
      },
      py::arg("autocov"));

  py::class_<FarimaModel>(m, "FarimaModel")
      .def_readonly("p", &FarimaModel::p)
      .def_readonly("d", &FarimaModel::d)
      .def_readonly("q", &FarimaModel::q)
      .def_readonly("phi", &FarimaModel::phi)
      .def_readonly("psi", &FarimaModel::psi)
      .def_readonly("sigma2", &FarimaModel::sigma2_eps)
      .def_readonly("mean", &FarimaModel::mean)
      .def_readonly("n_obs", &FarimaModel::n_obs)
      .def_readonly("converged", &FarimaModel::converged)
      .def("aic", &FarimaModel::aic)
      .def("bic", &FarimaModel::bic)
      .def(
          "forecast",
          [](const FarimaModel& model, const Vector& window, std::size_t h) {
            return to_numpy(forecast(model, to_vector(window), h));
          },
          py::arg("window"), py::arg("h"));

  m.def(
      "fit_arma",
      [](const Vector& values, int p, int q, const std::string& method) {
        return fit_arma(to_vector(values), p, q, {.method = parse_arma_method(method)});
      },
      py::arg("values"), py::arg("p") = 2, py::arg("q") = 0, py::arg("method") = "css");
  m.def(
      "fit_farima",
      [](const Vector& values, int p, int q, const std::string& method) {
        return fit_farima(to_vector(values), p, q, {.method = parse_arma_method(method)});
      },
      py::arg("values"), py::arg("p") = 2, py::arg("q") = 0, py::arg("method") = "css");
  m.def(
      "fit_arima",
      [](const Vector& values, int p, int q, const std::string& method) {
        return fit_arima(to_vector(values), p, q, std::nullopt, parse_arma_method(method));
      },
      py::arg("values"), py::arg("p") = 2, py::arg("q") = 0, py::arg("method") = "css");

  m.def(
      "full_attention",
      [](const Vector& Q, const Vector& K, const Vector& V, bool causal) {
        return to_numpy(nn::full_attention(to_matrix(Q), to_matrix(K), to_matrix(V), causal));
      },
      py::arg("Q"), py::arg("K"), py::arg("V"), py::arg("causal") = false);
  m.def(
      "prob_sparse_attention",
      [](const Vector& Q, const Vector& K, const Vector& V, std::size_t u, bool causal) {
        return to_numpy(
            nn::prob_sparse_attention(to_matrix(Q), to_matrix(K), to_matrix(V), u, {.causal = causal}));
      },
      py::arg("Q"), py::arg("K"), py::arg("V"), py::arg("u"), py::arg("causal") = false);
  m.def("sparse_query_count", &nn::sparse_query_count, py::arg("factor_c"), py::arg("L_Q"));

  m.def(
      "mse",
      [](const Vector& y_true, const Vector& y_pred) { return mse(to_vector(y_true), to_vector(y_pred)); },
      py::arg("y_true"), py::arg("y_pred"));

  m.def(
      "run_grid",
      [](const std::filesystem::path& grid_file, const std::filesystem::path& out_dir, bool resume) {
        const GridSpec grid = GridSpec::from_kv(KeyValueConfig::load(grid_file));
        GridRunSummary s;
        {
          py::gil_scoped_release release;
          s = run_grid(grid, out_dir, {.resume = resume});
        }
        py::list rows;
        for (const auto& r : s.results) {
          py::dict d;
          d["cell"] = r.key.id();
          d["mse"] = r.mse;
          d["n_windows"] = r.n_windows;
          d["n_failed"] = r.n_failed;
          d["flagged"] = r.flagged;
          rows.append(d);
        }
        return py::make_tuple(rows, s.complete());
      },
      py::arg("grid_file"), py::arg("out_dir"), py::arg("resume") = false);
}
