import math

import numpy as np
import pytest

import lrdcast


def test_generate_preset_trace():
    t = lrdcast.generate("medium", granularity_ms=100, num_samples=500, seed=3)
    assert t["granularity_ms"] == 100
    assert t["values"].shape == (500,)
    assert np.all(t["values"] >= 0)
    again = lrdcast.generate("medium", granularity_ms=100, num_samples=500, seed=3)
    assert np.array_equal(t["values"], again["values"])


def test_hurst_of_exact_fgn():
    x = lrdcast.fgn(1 << 13, 0.8, seed=2)
    for method in ("rs", "vt"):
        assert abs(lrdcast.hurst(x, method)["H"] - 0.8) < 0.1
    with pytest.raises(ValueError):
        lrdcast.hurst(x, "bogus")


def test_fracdiff_round_trip():
    x = np.random.default_rng(0).normal(size=1024)
    y = lrdcast.fracdiff(x, 0.3)
    assert np.allclose(y, lrdcast.fracdiff(x, 0.3, naive=True), atol=1e-10)
    assert np.allclose(lrdcast.fracdiff_invert(y, 0.3), x, atol=1e-8)


def test_durbin_levinson_matches_numpy_solve():
    gamma = np.array([1.0, 0.5, 0.2, 0.05])
    phi, v = lrdcast.durbin_levinson(gamma)
    R = np.array([[gamma[abs(i - j)] for j in range(3)] for i in range(3)])
    assert np.allclose(phi, np.linalg.solve(R, gamma[1:]), atol=1e-12)
    assert math.isclose(v, gamma[0] - phi @ gamma[1:], abs_tol=1e-12)


def test_arma_fit_and_forecast():
    rng = np.random.default_rng(1)
    e = rng.normal(size=6000)
    x = np.zeros_like(e)
    for t in range(2, len(x)):
        x[t] = 0.5 * x[t - 1] - 0.3 * x[t - 2] + e[t]
    m = lrdcast.fit_arma(x, 2, 0)
    assert abs(m.phi[0] - 0.5) < 0.05 and abs(m.phi[1] + 0.3) < 0.05
    f = m.forecast(x[-64:], 5)
    assert f.shape == (5,)
    assert np.all(np.isfinite(f))
    assert lrdcast.fit_farima(x, 1, 0).n_obs > 0


def test_attention_full_equivalence():
    rng = np.random.default_rng(2)
    Q, K, V = rng.normal(size=(12, 4)), rng.normal(size=(9, 4)), rng.normal(size=(9, 3))
    s = Q @ K.T / 2.0
    p = np.exp(s - s.max(axis=1, keepdims=True))
    expected = (p / p.sum(axis=1, keepdims=True)) @ V
    assert np.allclose(lrdcast.full_attention(Q, K, V), expected, atol=1e-12)
    assert np.allclose(lrdcast.prob_sparse_attention(Q, K, V, 12), expected, atol=1e-12)
    assert lrdcast.sparse_query_count(5.0, 64) == 21


def test_trace_file_round_trip(tmp_path):
    values = np.array([1.5, 2.0, 0.0, 3.25])
    path = tmp_path / "trace.csv"
    lrdcast.write_trace(values, 100, path)
    t = lrdcast.read_trace(path)
    assert t["granularity_ms"] == 100
    assert np.allclose(t["values"], values)
    bad = tmp_path / "bad.csv"
    bad.write_text("not a trace\n")
    with pytest.raises(ValueError):
        lrdcast.read_trace(bad)


def test_mse():
    assert lrdcast.mse([1.0, 2.0], [1.0, 4.0]) == 2.0
