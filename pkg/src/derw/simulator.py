"""Path sampler for the dynamic elephant random walk.

The walk is defined only through the conditional mean of its +-1 steps, so a
step is drawn as ``X_{n+1} = +1`` iff ``U < (1 + E[X_{n+1} | F_n]) / 2`` with
one uniform ``U`` per step. The conditional mean depends on the history only
through ``(n, S_n)``, which keeps the per-path state O(1).

RNG: each path owns a ``numpy.random.Philox`` stream (counter based). Path
``i`` of an ensemble with master seed ``m`` is keyed by
``SeedSequence(m, spawn_key=(i,))``, the same derivation as
``SeedSequence(m).spawn(...)[i]``. Uniforms are consumed strictly in step
order, so a path is bit-identical whether it is run alone, inside an ensemble,
with or without diagnostics, and for any thread count.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import BudgetError, DiagnosticsMissing

RNG_ID = "numpy.random.Philox(4x64-10); path i <- SeedSequence(master_seed, spawn_key=(i,))"
MAX_STEPS = 2**40
DEFAULT_MAX_VALUES = 10**8

_LANES = 8
_CHUNK = 1 << 14
_COEF_CACHE_LIMIT = 1 << 24


def path_seed(master_seed, index):
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


def make_generator(seed):
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def _step_coefficients(params, n0, n1):
    """slope, drift with E[X_n | F_{n-1}] = slope[n] * S_{n-1} + drift[n], n in [n0, n1)."""
    alpha = params.alpha.terms(n0, n1)
    beta = params.beta.terms(n0, n1)
    w = 2.0 * params.p - 1.0
    drift = (1.0 - alpha) * (2.0 * beta - 1.0)
    k = np.arange(n0 - 1, n1 - 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = w * alpha / k
    if n0 == 1:
        slope[0] = 0.0
        drift[0] += alpha[0] * (2.0 * params.q - 1.0)
    return slope, drift


def step_probability(params, tables, n, s):
    """P(X_{n+1} = +1 | S_n = s) for n >= 0 (``tables`` is not needed)."""
    n, s = int(n), int(s)
    if n < 0 or abs(s) > n:
        raise ValueError(f"need |s| <= n, got n={n}, s={s}")
    slope, drift = _step_coefficients(params, n + 1, n + 2)
    m = slope[0] * s + drift[0]
    return min(1.0, max(0.0, (1.0 + m) * 0.5))


@numba.njit(cache=True, nogil=True)
def _advance(u, s, slope, drift, n0, ck, pos, out):
    K, B = u.shape
    for j in range(B):
        sl = slope[j]
        dr = drift[j]
        for i in range(K):
            m = sl * s[i] + dr
            s[i] += 2 * np.int64(u[i, j] < (1.0 + m) * 0.5) - 1
        if pos < ck.shape[0] and ck[pos] == n0 + j:
            for i in range(K):
                out[i, pos] = s[i]
            pos += 1
    return pos


@numba.njit(cache=True, nogil=True)
def _advance_diag(u, s, slope, drift, a, n0, ck, pos, out, cum, prof, excess, y, cv):
    K, B = u.shape
    for j in range(B):
        sl = slope[j]
        dr = drift[j]
        an = a[j]
        inv2 = 1.0 / (an * an)
        for i in range(K):
            m = sl * s[i] + dr
            step = 2 * np.int64(u[i, j] < (1.0 + m) * 0.5) - 1
            s[i] += step
            yi = (step - m) / an
            v = 1.0 - m * m
            y[i, j] = yi
            cv[i, j] = v
            cum[i] += v * inv2
            e = abs(yi) - 2.0 / an
            if e > excess[i]:
                excess[i] = e
        if pos < ck.shape[0] and ck[pos] == n0 + j:
            for i in range(K):
                out[i, pos] = s[i]
                prof[i, pos] = cum[i]
            pos += 1
    return pos


class _Coefficients:
    def __init__(self, params, N):
        self.params = params
        self.full = _step_coefficients(params, 1, N + 1) if N <= _COEF_CACHE_LIMIT else None

    def chunk(self, n0, n1):
        if self.full is not None:
            return self.full[0][n0 - 1 : n1 - 1], self.full[1][n0 - 1 : n1 - 1]
        return _step_coefficients(self.params, n0, n1)


def _run_lanes(coefs, seeds, N, ck, a=None, keep_steps=False):
    """Run len(seeds) paths in lockstep; returns S at checkpoints and diagnostics."""
    K = len(seeds)
    gens = [make_generator(sd) for sd in seeds]
    s = np.zeros(K, dtype=np.int64)
    out = np.zeros((K, ck.size), dtype=np.int64)
    diag = a is not None
    if diag:
        cum = np.zeros(K)
        prof = np.zeros((K, ck.size))
        excess = np.full(K, -np.inf)
        y_all = np.empty((K, N)) if keep_steps else None
        cv_all = np.empty((K, N)) if keep_steps else None
    pos = 0
    for n0 in range(1, N + 1, _CHUNK):
        n1 = min(n0 + _CHUNK, N + 1)
        b = n1 - n0
        u = np.empty((K, b))
        for i, g in enumerate(gens):
            g.random(out=u[i])
        slope, drift = coefs.chunk(n0, n1)
        if diag:
            y = np.empty((K, b))
            cv = np.empty((K, b))
            pos = _advance_diag(u, s, slope, drift, a[n0:n1], n0, ck, pos, out, cum, prof, excess, y, cv)
            if keep_steps:
                y_all[:, n0 - 1 : n1 - 1] = y
                cv_all[:, n0 - 1 : n1 - 1] = cv
        else:
            pos = _advance(u, s, slope, drift, n0, ck, pos, out)
    if diag:
        return out, prof, excess, y_all, cv_all
    return out, None, None, None, None


def _checkpoints(checkpoints, N):
    ck = np.unique(np.asarray(list(checkpoints), dtype=np.int64))
    if ck.size == 0:
        raise ValueError("checkpoint list is empty")
    if ck[0] < 1 or ck[-1] > N:
        raise ValueError(f"checkpoints must lie in [1, {N}]")
    return ck


def _check_horizon(N):
    N = int(N)
    if not 1 <= N <= MAX_STEPS:
        raise ValueError(f"N must be in [1, 2**40], got {N}")
    return N


def _normalizer(params, tables, N):
    if tables is None or tables.horizon < N:
        from .sequences import build_tables

        tables = build_tables(params, N)
    return np.asarray(tables.a)


@dataclass
class PathSample:
    """One sampled path: S_n at the checkpoints, optional per-step diagnostics.

    ``y[n-1]`` is the martingale increment ``Y_n = (X_n - E[X_n | F_{n-1}]) / a_n``
    and ``cond_var[n-1]`` is ``1 - E[X_n | F_{n-1}]^2``, the conditional variance
    of the step ``X_n``.
    """

    N: int
    checkpoints: np.ndarray
    s_values: np.ndarray
    y: np.ndarray | None = None
    cond_var: np.ndarray | None = None


def simulate_path(params, tables, N, seed, checkpoints, diagnostics=False):
    """Sample X_1..X_N sequentially and record S at ``checkpoints``.

    ``tables`` supplies a_n for diagnostics and may be None (built on demand).
    """
    N = _check_horizon(N)
    ck = _checkpoints(checkpoints, N)
    coefs = _Coefficients(params, N)
    a = _normalizer(params, tables, N) if diagnostics else None
    out, _, _, y, cv = _run_lanes(coefs, [seed], N, ck, a=a, keep_steps=diagnostics)
    return PathSample(
        N=N,
        checkpoints=ck,
        s_values=out[0],
        y=None if y is None else y[0],
        cond_var=None if cv is None else cv[0],
    )


@dataclass
class EnsembleSample:
    """Independent paths sharing parameters; row i is path i.

    ``s`` is (paths x checkpoints). With diagnostics, ``profile[i, j]`` is
    ``sum_{k <= checkpoints[j]} (1 - E[X_k | F_{k-1}]^2) / a_k^2`` along path i
    and ``bound_excess[i]`` is ``max_k |Y_k| - 2 / a_k`` (never positive
    beyond rounding).
    """

    params: object
    params_fingerprint: str
    master_seed: int
    n_paths: int
    N: int
    checkpoints: np.ndarray
    s: np.ndarray
    profile: np.ndarray | None = None
    bound_excess: np.ndarray | None = None
    rng: str = RNG_ID

    def at(self, n):
        """Column of S_n over paths."""
        j = np.searchsorted(self.checkpoints, n)
        if j >= self.checkpoints.size or self.checkpoints[j] != n:
            raise KeyError(f"step {n} is not a recorded checkpoint")
        return self.s[:, j]

    def profile_at(self, n):
        if self.profile is None:
            raise DiagnosticsMissing("ensemble was simulated without diagnostics")
        j = np.searchsorted(self.checkpoints, n)
        if j >= self.checkpoints.size or self.checkpoints[j] != n:
            raise KeyError(f"step {n} is not a recorded checkpoint")
        return self.profile[:, j]

    def metadata(self):
        from . import __version__

        return {
            "params": self.params.to_dict(),
            "params_fingerprint": self.params_fingerprint,
            "master_seed": self.master_seed,
            "paths": self.n_paths,
            "N": self.N,
            "rng": self.rng,
            "version": __version__,
        }


def default_threads():
    env = os.environ.get("DERW_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_ensemble(
    params,
    N,
    P,
    master_seed,
    checkpoints,
    diagnostics=False,
    threads=None,
    tables=None,
    max_values=DEFAULT_MAX_VALUES,
):
    """P independent paths, data-parallel over blocks of paths.

    Output does not depend on ``threads``: every block writes its own rows.
    """
    N = _check_horizon(N)
    P = int(P)
    if P < 1:
        raise ValueError(f"need at least one path, got P={P}")
    ck = _checkpoints(checkpoints, N)
    if P * ck.size > max_values:
        raise BudgetError(f"{P} paths x {ck.size} checkpoints exceeds the cap of {max_values} values")
    coefs = _Coefficients(params, N)
    a = _normalizer(params, tables, N) if diagnostics else None

    s = np.zeros((P, ck.size), dtype=np.int64)
    profile = np.zeros((P, ck.size)) if diagnostics else None
    excess = np.zeros(P) if diagnostics else None

    def block(start):
        stop = min(start + _LANES, P)
        seeds = [path_seed(master_seed, i) for i in range(start, stop)]
        out, prof, exc, _, _ = _run_lanes(coefs, seeds, N, ck, a=a)
        s[start:stop] = out
        if diagnostics:
            profile[start:stop] = prof
            excess[start:stop] = exc

    starts = range(0, P, _LANES)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        for st in starts:
            block(st)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(block, starts))

    return EnsembleSample(
        params=params,
        params_fingerprint=params.fingerprint(),
        master_seed=int(master_seed),
        n_paths=P,
        N=N,
        checkpoints=ck,
        s=s,
        profile=profile,
        bound_excess=excess,
    )


def conditional_variance_profile(path, tables, checkpoints):
    """sum_{k <= m} (1 - E[X_k | F_{k-1}]^2) / a_k^2 for each checkpoint m of one path."""
    if path.cond_var is None:
        raise DiagnosticsMissing("path was simulated without diagnostics")
    ck = _checkpoints(checkpoints, path.N)
    a = np.asarray(tables.a[1 : path.N + 1])
    cum = np.cumsum(path.cond_var / (a * a))
    return cum[ck - 1]


def write_samples_csv(ensemble, fh):
    """Raw dump with header (path_index, checkpoint, s_value)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("path_index", "checkpoint", "s_value"))
    for i in range(ensemble.n_paths):
        for n, v in zip(ensemble.checkpoints.tolist(), ensemble.s[i].tolist()):
            w.writerow((i, n, v))
