import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pencilfft import perfmodel as pm
from pencilfft.perfmodel import ModelParams, TimingSample


def params(**kw):
    base = dict(flops=1e9, mem_accesses=4.0, mem_bandwidth=5e9, contention=1.0,
                bisection=pm.torus_bisection(1e9), elem_bytes=16.0)
    base.update(kw)
    return ModelParams(**base)


def test_compute_term_isolated():
    p = params(mem_accesses=1e-300, bisection=lambda _: 1e300)
    n, P = 256, 32
    assert math.isclose(pm.predict(p, n, P), 2.5 * n ** 3 * 8 / (P * p.flops), rel_tol=1e-12)


def test_comm_term_scales_with_p():
    p = params()
    _, _, c1 = pm.predict_terms(p, 128, 64)
    _, _, c2 = pm.predict_terms(p, 128, 128)
    assert math.isclose(c1 / c2, 2 ** (2 / 3), rel_tol=1e-12)


def test_constructed_terms():
    n, P = 64, 8
    vol, lg = n ** 3, math.log2(n)
    flops = vol * 2.5 * lg / (P * 1.0)
    mem_bw = vol * 1.0 * 16 / (P * 0.5)
    sigma = vol * 1.0 * 16 / (2 * 0.25)
    p = ModelParams(flops, 1.0, mem_bw, 1.0, lambda _: sigma, 16.0)
    t = pm.predict_terms(p, n, P)
    assert np.allclose(t, (1.0, 0.5, 0.25), rtol=1e-14)
    assert math.isclose(pm.predict(p, n, P), 1.75, rel_tol=1e-14)


@given(st.integers(2, 4096), st.integers(1, 10 ** 5), st.floats(1.01, 10))
def test_predict_monotone(n, P, f):
    p = params()
    t = pm.predict(p, n, P)
    assert pm.predict(p, n, P * 2) < t
    assert pm.predict(p, n * 2, P) > t
    for name in ("flops", "mem_bandwidth"):
        assert pm.predict(params(**{name: getattr(p, name) * f}), n, P) < t
    for name in ("mem_accesses", "contention", "elem_bytes"):
        assert pm.predict(params(**{name: getattr(p, name) * f}), n, P) > t
    assert pm.predict(params(bisection=pm.torus_bisection(1e9 * f)), n, P) < t


def test_params_positive():
    with pytest.raises(ValueError):
        params(flops=0)


PS = [16, 128, 1024, 8192]


def synth(a, d, ps=PS):
    return [(p, a / p + d / p ** (2 / 3)) for p in ps]


def test_fit_exact():
    fit = pm.fit_strong_scaling(synth(100, 10))
    assert math.isclose(fit.a, 100, rel_tol=1e-10) and math.isclose(fit.d, 10, rel_tol=1e-10)
    assert fit.residual < 1e-10


def test_fit_single_basis():
    fit = pm.fit_strong_scaling([(p, 5 / p) for p in PS])
    assert math.isclose(fit.a, 5, rel_tol=1e-10) and abs(fit.d) < 1e-10


def test_fit_accepts_samples_and_rescales():
    samples = [TimingSample(p, 4096, t) for p, t in synth(100, 10)]
    fit = pm.fit_strong_scaling(samples)
    fit3 = pm.fit_strong_scaling([(p, 3 * t) for p, t in synth(100, 10)])
    assert math.isclose(fit3.a, 3 * fit.a, rel_tol=1e-10)
    assert math.isclose(fit3.d, 3 * fit.d, rel_tol=1e-10)


def test_fit_noise():
    good = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noisy = [(p, t * (1 + 0.01 * rng.standard_normal())) for p, t in synth(100, 10)]
        fit = pm.fit_strong_scaling(noisy)
        good += abs(fit.a - 100) <= 5 and abs(fit.d - 10) <= 0.5
    assert good >= 95


def test_fit_errors():
    with pytest.raises(ValueError):
        pm.fit_strong_scaling([(16, 1.0), (16, 2.0)])
    with pytest.raises(ValueError):
        pm.fit_strong_scaling([(16, 0.0), (32, 0.0)])


def test_bandwidth_inverse_proportional():
    a = pm.effective_bandwidth(4.0, 1024, 16, 64)
    b = pm.effective_bandwidth(2.0, 1024, 16, 64)
    assert math.isclose(b, 2 * a, rel_tol=1e-14)


def test_bandwidth_reported_value():
    n, m, P = 4096, 16, 65536
    t_net = 2 * m * n ** 3 / (2 * 212e9)
    d = t_net * P ** (2 / 3)
    assert math.isclose(pm.effective_bandwidth(d, n, m, P, transposes=2), 212e9, rel_tol=1e-12)


def test_network_efficiency_reported_value():
    peak = 16 * 24 * 9.6
    assert peak == pytest.approx(3686.4)
    eff = pm.network_efficiency(212, peak)
    assert round(100 * eff, 2) == 5.75
    assert round(100 * eff) == 6


@pytest.mark.parametrize("P", [8, 512, 65536])
def test_bandwidth_inverts_comm_term(P):
    p = params(contention=2.5)
    n = 1024
    _, _, t_net = pm.predict_terms(p, n, P)
    d = t_net * P ** (2 / 3)
    sigma = pm.effective_bandwidth(d, n, p.elem_bytes, P, transposes=1)
    assert math.isclose(sigma, p.bisection(P) / p.contention, rel_tol=1e-12)


def test_bandwidth_undefined_for_zero_d():
    with pytest.raises(ValueError):
        pm.effective_bandwidth(0.0, 64, 16, 8)


def work(n):
    return n ** 3 * math.log2(n)


def test_weak_scaling_ideal():
    base = TimingSample(128, 1024, 2.0)
    pts = [(16, 512), (1024, 2048), (8192, 4096), (65536, 8192)]
    samples = [TimingSample(p, n, 2.0 * (work(n) / p) / (work(1024) / 128)) for p, n in pts]
    assert np.allclose(pm.weak_scaling_efficiency(base, samples), 1.0, rtol=1e-12)
    assert pm.weak_scaling_efficiency(base, [base]) == [1.0]


def test_weak_scaling_reported_value():
    base = TimingSample(128, 1024, 1.0)
    # time that yields 45% once the N^3 log N work growth is accounted for
    t = (work(8192) / work(1024)) / (0.45 * 65536 / 128)
    (eff,) = pm.weak_scaling_efficiency(base, [TimingSample(65536, 8192, t)])
    assert round(eff, 4) == 0.45


def test_weak_scaling_doubling_time_halves():
    base = TimingSample(8, 64, 1.0)
    e1, e2 = pm.weak_scaling_efficiency(base, [TimingSample(64, 128, 3.0), TimingSample(64, 128, 6.0)])
    assert math.isclose(e2, e1 / 2, rel_tol=1e-14)


def test_weak_scaling_zero_base():
    with pytest.raises(ValueError):
        TimingSample(8, 64, 0.0, 0.1)
    with pytest.raises(ValueError):
        pm.weak_scaling_efficiency(TimingSample(8, 64, 0.0), [])


def test_flops_rate():
    assert pm.flops_rate(2 ** 30, 1.0) == 2 * 2.5 * 2 ** 30 * 30
    assert pm.flops_rate((1024, 1024, 1024), 1.0) == pytest.approx(1.61e11, rel=1e-3)
    assert pm.flops_rate((64, 64, 64), 0.5) == 2 * pm.flops_rate((64, 64, 64), 1.0)
    with pytest.raises(ValueError):
        pm.flops_rate(8, 0)


def test_fit_report_from_bench_rows(tmp_path):
    rows = []
    for p, t in synth(100, 10):
        rows.append({"nx": "64", "ny": "64", "nz": "64", "P": str(p), "t_mean": str(t), "pass": "true"})
        rows.append({"nx": "64", "ny": "64", "nz": "64", "P": str(p), "t_mean": str(2 * t), "pass": "true"})
    rows.append({"nx": "64", "ny": "64", "nz": "64", "P": "16", "t_mean": "1e-9", "pass": "false"})
    (rep,) = pm.fit_bench_records(rows)
    assert math.isclose(rep["a"], 100, rel_tol=1e-9) and math.isclose(rep["d"], 10, rel_tol=1e-9)
    assert rep["p_max"] == 8192
    assert math.isclose(rep["sigma_eff"], pm.effective_bandwidth(10, 64, 16, 8192, 4), rel_tol=1e-9)
    out = tmp_path / "fit.csv"
    pm.write_fit_report(out, [rep])
    assert pm.read_bench_csv(out)[0]["points"] == "4"
