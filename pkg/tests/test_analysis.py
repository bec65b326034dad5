import io
import json
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from derw.analysis import (
    GaussianProcessOracle,
    TestReport,
    condition_a_checkpoints,
    dr_condition_a_check,
    empirical_covariance,
    fclt_verify,
    gp_covariance,
    kolmogorov_q,
    ks_normal_test,
    normal_cdf,
    normalize_critical,
    normalize_diffusive,
    oracle_for,
    over_seeds,
    slln_check,
    strong_elephant_test,
)
from derw.errors import BudgetError, DiagnosticsMissing, RegimeError
from derw.model import Constant, ModelParams
from derw.sequences import build_tables
from derw.simulator import make_generator, simulate_ensemble


def prm(p, alpha, beta=0.5, q=0.5):
    return ModelParams(p, q, Constant(alpha), Constant(beta))


# ---------------------------------------------------------------- distributions

def test_normal_cdf_examples():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.0) == pytest.approx(0.841345, abs=1e-6)
    for x in np.linspace(-8, 8, 161):
        assert abs(normal_cdf(-x) - (1 - normal_cdf(x))) <= 1e-12
        assert normal_cdf(x) == pytest.approx(scipy.stats.norm.cdf(x), abs=1e-10)


def test_ks_three_points_by_hand():
    d, p = ks_normal_test([-1.0, 0.0, 1.0], 1.0, min_samples=1)
    # largest gap is 1/3 - Phi(-1) at the first order statistic
    assert d == pytest.approx(1 / 3 - normal_cdf(-1.0), abs=1e-12)
    assert d == pytest.approx(0.174678, abs=1e-6)
    assert 0.0 <= p <= 1.0


def test_ks_needs_samples_and_variance():
    with pytest.raises(ValueError):
        ks_normal_test([0.0] * 10, 1.0)
    with pytest.raises(ValueError):
        ks_normal_test([0.0] * 100, 0.0)


def test_kolmogorov_q_examples():
    # the series gives 0.05003 at 1.358
    assert kolmogorov_q(1.358) == pytest.approx(0.0500, abs=1e-4)
    assert kolmogorov_q(1e-3) == pytest.approx(1.0, abs=1e-12)
    assert kolmogorov_q(0.0) == 1.0
    for x in np.linspace(0.05, 3.0, 60):
        assert kolmogorov_q(x) == pytest.approx(scipy.special.kolmogorov(x), abs=1e-10)


def test_kolmogorov_q_branches_meet():
    assert kolmogorov_q(1.18 - 1e-12) == pytest.approx(kolmogorov_q(1.18), abs=1e-10)


def test_vectorized_cdf_matches_scalar():
    from derw.analysis import _normal_cdf_vec

    x = np.linspace(-9, 9, 1001)
    assert np.array_equal(_normal_cdf_vec(x), [normal_cdf(v) for v in x])


def test_ks_matches_scipy():
    rng = make_generator(3)
    for var in (1.0, 2.5):
        x = rng.normal(0.0, math.sqrt(var), 400)
        d, p = ks_normal_test(x, var)
        ref = scipy.stats.kstest(x, "norm", args=(0, math.sqrt(var)), method="asymp")
        assert d == pytest.approx(ref.statistic, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, abs=1e-9)


def test_ks_p_values_are_uniform_under_the_null():
    rng = make_generator(2024)
    # asymptotic p-values are visibly conservative at m = 200; m = 2000 is past that bias
    draws = rng.normal(size=(10_000, 2000))
    pvals = np.array([ks_normal_test(row, 1.0)[1] for row in draws])
    _, p_of_p = ks_uniform(pvals)
    assert p_of_p > 0.001


def ks_uniform(u):
    u = np.sort(u)
    m = u.size
    i = np.arange(1, m + 1)
    d = max(np.max(i / m - u), np.max(u - (i - 1) / m))
    return d, kolmogorov_q(math.sqrt(m) * d)


# ---------------------------------------------------------------- oracles

def test_gp_covariance_examples():
    o = GaussianProcessOracle("diffusive", 5 / 3, 0.2)
    assert gp_covariance(o, 0.5, 1.0) == pytest.approx(0.957248, abs=1e-6)
    assert gp_covariance(o, 0.7, 0.7) == pytest.approx(5 / 3 * 0.7)
    assert gp_covariance(o, 0.0, 1.0) == 0.0
    b = GaussianProcessOracle("diffusive", 0.75, 0.0)
    assert gp_covariance(b, 0.3, 0.9) == pytest.approx(0.75 * 0.3)
    c = GaussianProcessOracle("critical", 0.91)
    assert gp_covariance(c, 0.4, 2.0) == pytest.approx(0.91 * 0.4)
    with pytest.raises(ValueError):
        gp_covariance(o, 1.0, 0.5)


def test_oracle_matrices_from_params():
    grid = [0.5, 1.0]
    assert np.allclose(oracle_for(prm(0.6, 0.0)).matrix(grid), [[0.5, 0.5], [0.5, 1.0]])
    assert np.allclose(
        oracle_for(prm(0.6, 1.0)).matrix(grid), [[5 / 6, 0.957248], [0.957248, 5 / 3]], atol=1e-6
    )
    assert np.allclose(oracle_for(prm(0.75, 1.0)).matrix(grid), [[0.5, 0.5], [0.5, 1.0]])
    with pytest.raises(RegimeError):
        oracle_for(prm(0.9, 0.8))


def test_erw_reduction_identity():
    for p in np.linspace(0.05, 0.74, 15):
        o = oracle_for(prm(float(p), 1.0))
        for s in (0.1, 0.4, 1.0):
            for t in (s, 1.3, 2.0):
                ref = s / (3 - 4 * p) * (t / s) ** (2 * p - 1)
                assert gp_covariance(o, s, t) == pytest.approx(ref, rel=1e-12)


def test_oracle_matrices_are_psd():
    rng = make_generator(7)
    for _ in range(200):
        g = np.sort(rng.uniform(0, 3, int(rng.integers(1, 9))))
        o = GaussianProcessOracle("diffusive", rng.uniform(0.1, 5), rng.uniform(0, 0.5))
        assert o.is_psd(g)
        assert GaussianProcessOracle("critical", rng.uniform(0.1, 2)).is_psd(g)


# ---------------------------------------------------------------- covariance and normalization

def test_empirical_covariance_examples():
    cov, se = empirical_covariance(np.ones((10, 3)))
    assert np.all(cov == 0) and np.all(se == 0)
    cov, _ = empirical_covariance([[1.0], [-1.0]])
    assert cov[0, 0] == 2.0
    with pytest.raises(ValueError):
        empirical_covariance([[1.0, 2.0]])


def test_empirical_covariance_matches_numpy():
    x = make_generator(1).normal(size=(300, 4))
    cov, se = empirical_covariance(x)
    assert np.allclose(cov, np.cov(x, rowvar=False))
    assert np.all(se >= 0)


def test_normalize_diffusive_examples():
    det = prm(0.6, 0.0, 1.0)
    t = build_tables(det, 100)
    ens = simulate_ensemble(det, 100, 5, 0, [50, 100], threads=1)
    z = normalize_diffusive(ens, t, 100, [0.0, 0.5, 1.0])
    assert np.all(z == 0)

    walk = prm(0.6, 0.0)
    n = 10**4
    t = build_tables(walk, n)
    ens = simulate_ensemble(walk, n, 4000, 1, [n // 2, n], threads=1)
    z = normalize_diffusive(ens, t, n, [0.0, 0.5, 1.0])
    assert np.all(z[:, 0] == 0)
    cov, se = empirical_covariance(z[:, 1:])
    assert abs(cov[1, 1] - 1.0) < 3 * se[1, 1]
    assert abs(cov[0, 1] - 0.5) < 3 * se[0, 1]


def test_normalize_diffusive_missing_checkpoint():
    walk = prm(0.6, 0.0)
    ens = simulate_ensemble(walk, 100, 3, 0, [100], threads=1)
    with pytest.raises(KeyError):
        normalize_diffusive(ens, build_tables(walk, 100), 100, [0.5])


def test_normalize_critical_examples():
    params = prm(0.75, 1.0)
    n = 10**4
    t = build_tables(params, n)
    ens = simulate_ensemble(params, n, 3000, 2, [1, 100, n], threads=1)
    z = normalize_critical(ens, t, n, [0.0, 0.5, 1.0])
    # symmetric beta and q: E S = 0, so values are S / sqrt(n^t log n)
    assert np.allclose(z[:, 0], ens.at(1) / math.sqrt(math.log(n)))
    assert np.allclose(z[:, 2], ens.at(n) / math.sqrt(n * math.log(n)))
    cov, se = empirical_covariance(z[:, 2:])
    exact = t.var(n) / (n * math.log(n))
    assert abs(cov[0, 0] - exact) < 3 * se[0, 0]
    with pytest.raises(ValueError):
        normalize_critical(ens, t, 1, [1.0])


# ---------------------------------------------------------------- checks

def test_slln_examples():
    det = prm(0.5, 0.0, 1.0)
    rep = slln_check(det, None, 1000, 0, [10, 100])
    assert rep.passed and rep.details["deviation"] == 0.0
    assert [r["statistic"] for r in rep.rows] == [1.0, 1.0, 1.0]

    rep = slln_check(prm(0.5, 0.0, 0.5), None, 10**6, 1)
    assert abs(rep.rows[-1]["statistic"]) <= 0.005

    rep = slln_check(prm(1.0, 0.5, 0.8), None, 10**6, 2)
    assert rep.details["limit"] == pytest.approx(0.6)
    assert rep.passed


def test_slln_precondition():
    with pytest.raises(RegimeError):
        slln_check(prm(1.0, 1.0), None, 100, 0)


def _condition_a(params, n, grid, P=200, seed=0):
    ck = condition_a_checkpoints(params, n, grid)
    t = build_tables(params, n)
    ens = simulate_ensemble(params, n, P, seed, ck, diagnostics=True, tables=t, threads=1)
    return dr_condition_a_check(ens, t, n, grid)


def test_condition_a_simple_walk_is_exact():
    rep = _condition_a(prm(0.6, 0.0), 1000, [0.25, 0.5, 1.0])
    assert rep.passed
    for r in rep.rows:
        assert r["statistic"] == pytest.approx(r["oracle"], abs=1e-12)


def test_condition_a_oracles():
    rep = _condition_a(prm(0.6, 1.0), 2000, [0.5, 1.0])
    assert rep.rows[0]["oracle"] == pytest.approx(0.659754, abs=1e-6)
    rep = _condition_a(prm(0.75, 1.0), 2000, [1.0])
    assert rep.rows[0]["oracle"] == 1.0


def test_condition_a_needs_diagnostics():
    params = prm(0.6, 1.0)
    ens = simulate_ensemble(params, 100, 3, 0, [100], threads=1)
    with pytest.raises(DiagnosticsMissing):
        dr_condition_a_check(ens, build_tables(params, 100), 100, [1.0])


def test_strong_elephant_rejects_degenerate_and_wrong_regimes():
    # p = 1, alpha = 1 is the deterministic walk; it has no classified regime
    with pytest.raises(RegimeError):
        strong_elephant_test(prm(1.0, 1.0, q=1.0), 10, 1000, 60, 0)
    with pytest.raises(RegimeError):
        strong_elephant_test(prm(0.6, 1.0), 10, 1000, 60, 0)
    with pytest.raises(ValueError):
        strong_elephant_test(prm(0.9, 0.8), 10, 999, 60, 0)
    with pytest.raises(BudgetError):
        strong_elephant_test(prm(0.9, 0.8), 10, 1000, 60, 0, step_cap=10_000)


def test_deterministic_walk_has_zero_martingale_limit():
    params = prm(1.0, 1.0, q=1.0)
    t = build_tables(params, 1000)
    ens = simulate_ensemble(params, 1000, 16, 0, [10, 1000], threads=1)
    m_hat = (ens.at(1000) - t.mean_s[1000]) / t.a[1000]
    fluct = ens.at(10) - t.mean_s[10] - t.a[10] * m_hat
    assert np.all(np.abs(m_hat) < 1e-12) and np.all(np.abs(fluct) < 1e-9)


def test_strong_elephant_report_fields():
    rep = strong_elephant_test(prm(0.9, 0.8), 10, 1000, 200, 0, tail_horizon=10**5)
    d = rep.details
    assert d["c_strong"] == pytest.approx(3.571429, abs=1e-6)
    assert d["gate_fraction"] == pytest.approx(d["gate_bound"] / d["c_strong"])
    assert d["armed"] == (d["gate_fraction"] < 0.05)
    assert 0.0 <= rep.rows[0]["ks_p"] <= 1.0
    assert -1.0 <= d["m_hat_correlation"] <= 1.0


def test_fclt_verify_donsker():
    rep = fclt_verify(prm(0.6, 0.0), 2000, 2000, [0.0, 0.5, 1.0], 5, threads=1)
    d = rep.details
    assert np.allclose(d["asymptotic_cov"], [[0, 0, 0], [0, 0.5, 0.5], [0, 0.5, 1.0]])
    assert np.allclose(d["exact_cov"], d["asymptotic_cov"])
    assert rep.rows[0]["ks_p"] is None
    assert rep.passed


def test_fclt_verify_erw_oracle_matrix():
    rep = fclt_verify(prm(0.6, 1.0), 1000, 200, [0.5, 1.0], 5, threads=1)
    assert np.allclose(rep.details["asymptotic_cov"], [[5 / 6, 0.957248], [0.957248, 5 / 3]], atol=1e-6)
    for r in rep.rows:
        assert 0 <= r["ks_p"] <= 1 and r["se"] >= 0
    with pytest.raises(RegimeError):
        fclt_verify(prm(0.9, 0.8), 100, 60, [1.0], 0)


def test_report_serialization():
    rep = fclt_verify(prm(0.6, 0.0), 200, 60, [0.5, 1.0], 1, threads=1)
    body = json.loads(rep.to_json())
    assert body["verdict"] in ("pass", "fail") and "runtime" not in body
    assert "runtime" in json.loads(rep.to_json(include_runtime=True))
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,statistic,oracle,se,ks_d,ks_p,verdict"
    assert len(lines) == 3


def test_over_seeds_policy():
    calls = []

    def run(seed):
        calls.append(seed)
        return TestReport("x", passed=seed == 2)

    rep = over_seeds(run, [1, 2, 3], min_passes=1)
    assert rep.passed and calls == [1, 2]
    calls.clear()
    rep = over_seeds(run, [1, 3, 4], min_passes=2)
    # after two failures two passes are out of reach
    assert not rep.passed and calls == [1, 3]
