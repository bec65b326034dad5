import io

import numpy as np
import pytest

from derw.errors import BudgetError, DiagnosticsMissing
from derw.model import Constant, LimitPlusPower, ModelParams, Table
from derw.sequences import build_tables
from derw.simulator import (
    conditional_variance_profile,
    simulate_ensemble,
    simulate_path,
    step_probability,
    write_samples_csv,
)


def prm(p, alpha, beta=0.5, q=0.5):
    a = alpha if not isinstance(alpha, float | int) else Constant(alpha)
    b = beta if not isinstance(beta, float | int) else Constant(beta)
    return ModelParams(p, q, a, b)


MIXED = prm(0.8, LimitPlusPower(0.7, -0.3, 0.5), Table([0.9, 0.2, 0.7], 0.6), q=0.3)


def test_step_probability_examples():
    assert step_probability(prm(0.3, 1.0, q=1.0), None, 0, 0) == 1.0
    assert step_probability(prm(0.3, 0.0, 0.9), None, 5, 3) == pytest.approx(0.9)
    assert step_probability(prm(0.75, 1.0), None, 4, 2) == pytest.approx(0.625)
    with pytest.raises(ValueError):
        step_probability(prm(0.75, 1.0), None, 3, 5)
    with pytest.raises(ValueError):
        step_probability(prm(0.75, 1.0), None, -1, 0)


def test_step_probability_matches_rule():
    n, s = 7, -3
    al, be = MIXED.alpha.terms(n + 1, n + 2)[0], MIXED.beta.terms(n + 1, n + 2)[0]
    m = al * (2 * MIXED.p - 1) * s / n + (1 - al) * (2 * be - 1)
    assert step_probability(MIXED, None, n, s) == pytest.approx((1 + m) / 2, abs=1e-15)


def test_deterministic_paths():
    ck = [1, 2, 10, 100]
    up = simulate_path(prm(0.5, 0.0, 1.0), None, 100, 1, ck)
    assert up.s_values.tolist() == ck
    up = simulate_path(prm(1.0, 1.0, q=1.0), None, 100, 2, ck)
    assert up.s_values.tolist() == ck
    down = simulate_path(prm(1.0, 1.0, q=0.0), None, 100, 3, ck)
    assert down.s_values.tolist() == [-c for c in ck]


def test_reproducible_and_path_matches_ensemble():
    ck = list(range(1, 301))
    ens = simulate_ensemble(MIXED, 300, 20, 42, ck, threads=1)
    ens2 = simulate_ensemble(MIXED, 300, 20, 42, ck, threads=1)
    assert np.array_equal(ens.s, ens2.s)
    from derw.simulator import path_seed

    for i in (0, 7, 8, 19):
        single = simulate_path(MIXED, None, 300, path_seed(42, i), ck)
        assert np.array_equal(single.s_values, ens.s[i])
    other = simulate_ensemble(MIXED, 300, 20, 43, ck, threads=1)
    assert not np.array_equal(ens.s, other.s)


def test_threads_do_not_change_output():
    ck = [10, 500, 1000]
    a = simulate_ensemble(MIXED, 1000, 37, 5, ck, threads=1, diagnostics=True)
    b = simulate_ensemble(MIXED, 1000, 37, 5, ck, threads=8, diagnostics=True)
    assert np.array_equal(a.s, b.s)
    assert np.array_equal(a.profile, b.profile)
    assert np.array_equal(a.bound_excess, b.bound_excess)


def test_diagnostics_do_not_change_path():
    ck = list(range(1, 201))
    plain = simulate_path(MIXED, None, 200, 9, ck)
    diag = simulate_path(MIXED, None, 200, 9, ck, diagnostics=True)
    assert np.array_equal(plain.s_values, diag.s_values)


def test_parity_and_range():
    ck = np.arange(1, 401)
    ens = simulate_ensemble(MIXED, 400, 50, 11, ck, threads=1)
    assert np.all(np.abs(ens.s) <= ck)
    assert np.all((ens.s - ck) % 2 == 0)
    steps = np.diff(np.concatenate([np.zeros((50, 1), dtype=np.int64), ens.s], axis=1), axis=1)
    assert set(np.unique(steps).tolist()) <= {-1, 1}


def test_martingale_increment_bound():
    t = build_tables(MIXED, 500)
    path = simulate_path(MIXED, t, 500, 3, [500], diagnostics=True)
    assert np.all(np.abs(path.y) <= 2.0 / t.a[1:501] + 1e-12)
    ens = simulate_ensemble(MIXED, 500, 30, 3, [500], diagnostics=True, tables=t, threads=1)
    assert np.all(ens.bound_excess <= 1e-12)


def test_martingale_increments_are_centered_given_the_past():
    # bucket Y_n by the sign of S_{n-1}; each bucket mean must be 0 within 4 SE
    params = prm(0.85, 0.9, 0.7, q=0.8)
    t = build_tables(params, 40)
    ck = list(range(1, 41))
    ys, signs = [], []
    for seed in range(1500):
        path = simulate_path(params, t, 40, seed, ck, diagnostics=True)
        prev = np.concatenate([[0], path.s_values[:-1]])
        ys.append(path.y[1:] * t.a[2:41])
        signs.append(np.sign(prev[1:]))
    ys, signs = np.concatenate(ys), np.concatenate(signs)
    for sgn in (-1, 0, 1):
        sel = ys[signs == sgn]
        assert sel.size > 1000
        se = sel.std(ddof=1) / np.sqrt(sel.size)
        assert abs(sel.mean()) < 4 * se + 1e-12


@pytest.mark.parametrize("params", [MIXED, prm(0.3, 0.6, 0.4), prm(0.95, 0.9, 0.5, q=0.9)])
def test_empirical_moments_match_exact(params):
    N = 2000
    ck = [10, 200, N]
    t = build_tables(params, N)
    ens = simulate_ensemble(params, N, 4000, 17, ck, threads=1)
    for n in ck:
        x = ens.at(n).astype(float)
        se_mean = np.sqrt(t.var_s[n] / x.size)
        assert abs(x.mean() - t.mean_s[n]) < 4 * se_mean
        # SE of the sample variance from the fourth central moment
        d = x - x.mean()
        se_var = np.sqrt((np.mean(d**4) - np.mean(d**2) ** 2) / x.size)
        assert abs(x.var(ddof=1) - t.var_s[n]) < 4 * se_var


def test_conditional_variance_profile_examples():
    params = prm(0.7, 0.0, 0.5)
    t = build_tables(params, 50)
    path = simulate_path(params, t, 50, 0, [50], diagnostics=True)
    # a_n = 1 and every step has conditional variance 1
    assert conditional_variance_profile(path, t, [1, 10, 50]).tolist() == [1.0, 10.0, 50.0]

    params = prm(0.6, 0.0, 1.0)
    t = build_tables(params, 50)
    path = simulate_path(params, t, 50, 0, [50], diagnostics=True)
    assert conditional_variance_profile(path, t, [1, 50]).tolist() == [0.0, 0.0]


def test_profile_mean_matches_martingale_variance():
    N = 1000
    t = build_tables(MIXED, N)
    ens = simulate_ensemble(MIXED, N, 3000, 8, [100, N], diagnostics=True, tables=t, threads=1)
    for n in (100, N):
        prof = ens.profile_at(n)
        target = t.var_s[n] / t.a[n] ** 2
        assert abs(prof.mean() - target) < 4 * prof.std(ddof=1) / np.sqrt(prof.size)


def test_profile_of_path_matches_ensemble_profile():
    from derw.simulator import path_seed

    N = 300
    t = build_tables(MIXED, N)
    ens = simulate_ensemble(MIXED, N, 9, 4, [50, N], diagnostics=True, tables=t, threads=1)
    path = simulate_path(MIXED, t, N, path_seed(4, 8), [N], diagnostics=True)
    assert np.allclose(conditional_variance_profile(path, t, [50, N]), ens.profile[8], rtol=1e-12)


def test_profile_needs_diagnostics():
    path = simulate_path(MIXED, None, 20, 0, [20])
    with pytest.raises(DiagnosticsMissing):
        conditional_variance_profile(path, build_tables(MIXED, 20), [20])
    ens = simulate_ensemble(MIXED, 20, 2, 0, [20], threads=1)
    with pytest.raises(DiagnosticsMissing):
        ens.profile_at(20)


def test_budget_and_argument_errors():
    with pytest.raises(BudgetError):
        simulate_ensemble(MIXED, 10, 100, 0, range(1, 11), max_values=999)
    with pytest.raises(ValueError):
        simulate_ensemble(MIXED, 10, 2, 0, [])
    with pytest.raises(ValueError):
        simulate_ensemble(MIXED, 10, 2, 0, [11])
    with pytest.raises(ValueError):
        simulate_path(MIXED, None, 0, 0, [1])
    with pytest.raises(ValueError):
        simulate_ensemble(MIXED, 10, 0, 0, [5])
    ens = simulate_ensemble(MIXED, 10, 2, 0, [5, 10], threads=1)
    with pytest.raises(KeyError):
        ens.at(7)


def test_samples_csv_and_metadata():
    ens = simulate_ensemble(MIXED, 10, 2, 0, [5, 10], threads=1)
    buf = io.StringIO()
    write_samples_csv(ens, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_index,checkpoint,s_value"
    assert len(lines) == 5
    assert lines[1].startswith("0,5,")
    meta = ens.metadata()
    assert meta["params_fingerprint"] == MIXED.fingerprint()
    assert meta["master_seed"] == 0 and meta["paths"] == 2
