"""Characteristic sequences, exact moments and their asymptotic forms.

Every array in :class:`SequenceTables` is indexed by the step ``n``; index 0
stands for the empty walk ``S_0 = 0`` (moments 0, normalizers 1) so that
``tables.a[n]`` reads naturally. All columns come out of one forward recursion
in float64:

* ``a_n = prod_{k<n} (1 + (2p-1) alpha_{k+1} / k)``, and its split
  ``a_n = g_n * ell_n`` into the pure power part and the slowly varying part;
* ``rho_n``, the exponential-sum companion of ``ell_n``;
* ``E[X_n]``, ``E[S_n]``, ``E[S_n^2]`` (tower property on the conditional
  step mean), plus ``Var(S_n)`` by its own recursion, which stays
  nonnegative where ``E[S^2] - E[S]^2`` would cancel;
* ``A_n^2 = sum (1 - E[X_k]^2) / a_k^2`` and ``B_n^2 = sum 1 / a_k^2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from .constants import (  # noqa: F401  (re-exported)
    c_critical,
    c_diffusive,
    c_strong,
    gamma_function,
    slln_limit,
)
from .errors import DomainError

COLUMNS = ("a", "g", "ell", "rho", "mean_x", "mean_s", "second_s", "var_s", "A_sq", "B_sq")
CSV_COLUMNS = ("n", "a", "g", "ell", "rho", "mean_x", "mean_s", "second_s", "A_sq", "B_sq")

_CHUNK = 1 << 20
_DEFAULT_TAIL_HORIZON = 10**7


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _recurse(alpha, beta, p, q, alpha_lim, n0, state, out):
    """Advance the recursion over n = n0 .. n0 + len(alpha) - 1.

    ``state`` holds (a, g, ell, log_rho, mean_s, second_s, var_s, A_sq, B_sq)
    at n0 - 1 and is updated in place; ``out`` receives one row per step in
    COLUMNS order.
    """
    a, g, ell, lrho, ms, ss, vs, asq, bsq = state
    w = 2.0 * p - 1.0
    x = alpha_lim * w
    mx = 0.0
    for j in range(alpha.shape[0]):
        n = n0 + j
        al = alpha[j]
        d = (1.0 - al) * (2.0 * beta[j] - 1.0)
        if n == 1:
            a = 1.0
            g = 1.0
            ell = 1.0
            lrho = 0.0
            mx = al * (2.0 * q - 1.0) + d
            ms = mx
            ss = 1.0
            vs = 1.0 - mx * mx
        else:
            k = n - 1.0
            slope = w * al / k
            a *= 1.0 + slope
            g *= 1.0 + x / k
            ell *= 1.0 + w * (al - alpha_lim) / (k + x)
            if n >= 3:
                lrho += w * (al - alpha_lim) / k
            mx = slope * ms + d
            ss = (1.0 + 2.0 * slope) * ss + 2.0 * d * ms + 1.0
            vs = (1.0 + 2.0 * slope) * vs + 1.0 - mx * mx
            ms = (1.0 + slope) * ms + d
        inv = 1.0 / (a * a)
        asq += (1.0 - mx * mx) * inv
        bsq += inv
        out[j, 0] = a
        out[j, 1] = g
        out[j, 2] = ell
        out[j, 3] = math.exp(lrho)
        out[j, 4] = mx
        out[j, 5] = ms
        out[j, 6] = ss
        out[j, 7] = vs
        out[j, 8] = asq
        out[j, 9] = bsq
    state[0] = a
    state[1] = g
    state[2] = ell
    state[3] = lrho
    state[4] = ms
    state[5] = ss
    state[6] = vs
    state[7] = asq
    state[8] = bsq


def _initial_state():
    return np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def _run_chunk(params, n0, n1, state):
    alpha = params.alpha.terms(n0, n1)
    beta = params.beta.terms(n0, n1)
    out = np.empty((n1 - n0, len(COLUMNS)))
    _recurse(alpha, beta, params.p, params.q, params.alpha_limit, n0, state, out)
    if not np.all(np.isfinite(out)) or np.any(out[:, 0] <= 0.0):
        raise DomainError(
            "characteristic sequence a_n vanished or overflowed "
            f"(p={params.p}, alpha_2={params.alpha.terms(2, 3)[0]})"
        )
    return out


@dataclass(frozen=True)
class SequenceTables:
    """Exact sequences for n = 0..horizon (row 0 is the empty walk)."""

    params: object
    horizon: int
    a: np.ndarray
    g: np.ndarray
    ell: np.ndarray
    rho: np.ndarray
    mean_x: np.ndarray
    mean_s: np.ndarray
    second_s: np.ndarray
    var_s: np.ndarray
    A_sq: np.ndarray
    B_sq: np.ndarray

    def var(self, n):
        """Exact Var(S_n)."""
        return float(self.var_s[n])

    def row(self, n):
        return {name: float(getattr(self, name)[n]) for name in COLUMNS}


def build_tables(params, N):
    """Run the exact recursions up to horizon ``N``; O(N) time and memory."""
    N = int(N)
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    cols = np.empty((N + 1, len(COLUMNS)))
    cols[0] = (1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    state = _initial_state()
    for n0 in range(1, N + 1, _CHUNK):
        n1 = min(n0 + _CHUNK, N + 1)
        cols[n0:n1] = _run_chunk(params, n0, n1, state)
    arrays = {name: np.ascontiguousarray(cols[:, i]) for i, name in enumerate(COLUMNS)}
    for arr in arrays.values():
        arr.flags.writeable = False
    return SequenceTables(params=params, horizon=N, **arrays)


def moments_at(params, indices):
    """Rows of the recursion at selected ``indices`` without storing the full tables.

    Returns a dict column -> array aligned with ``sorted(set(indices))``.
    Memory is O(chunk) regardless of the largest index.
    """
    idx = np.array(sorted(set(int(i) for i in indices)), dtype=np.int64)
    if idx.size == 0 or idx[0] < 1:
        raise ValueError("indices must be >= 1")
    N = int(idx[-1])
    picked = np.empty((idx.size, len(COLUMNS)))
    state = _initial_state()
    pos = 0
    for n0 in range(1, N + 1, _CHUNK):
        n1 = min(n0 + _CHUNK, N + 1)
        out = _run_chunk(params, n0, n1, state)
        hi = np.searchsorted(idx, n1)
        picked[pos:hi] = out[idx[pos:hi] - n0]
        pos = hi
    res = {name: picked[:, i].copy() for i, name in enumerate(COLUMNS)}
    res["n"] = idx
    return res


def _index(params):
    return params.alpha_limit * (2.0 * params.p - 1.0)


def _a_asym(params, n, ell_n):
    x = _index(params)
    return n**x * ell_n / gamma_function(x + 1.0)


def _A_asym(params, n, ell_n, const):
    x = _index(params)
    return const * gamma_function(x + 1.0) ** 2 * n ** (1.0 - 2.0 * x) / ell_n**2


def a_asymptotic(tables, n):
    """n^x ell_n / Gamma(x + 1) with x = alpha (2p - 1); a_n is asymptotic to it."""
    return _a_asym(tables.params, n, float(tables.ell[n]))


def A_sq_asymptotic(tables, n):
    """Regularly varying equivalent of A_n^2 in the diffusive regime."""
    prm = tables.params
    if not 1.0 - 2.0 * _index(prm) > 0.0:
        raise DomainError("A_sq_asymptotic needs 1 - 2 alpha (2p-1) > 0")
    const = c_diffusive(prm.alpha_limit, prm.beta_limit, prm.p)
    return _A_asym(prm, n, float(tables.ell[n]), const)


def _tail_asym(params, n, ell_n):
    if not 1.0 - 2.0 * _index(params) < 0.0:
        raise DomainError("tail asymptotics need 2 alpha (2p-1) > 1")
    const = c_strong(params.alpha_limit, params.beta_limit, params.p)
    return _A_asym(params, n, ell_n, const)


def tail_asymptotic(tables, n):
    """Regularly varying equivalent of A_inf^2 - A_n^2 in the strong-elephant regime."""
    return _tail_asym(tables.params, n, float(tables.ell[n]))


@dataclass(frozen=True)
class TailEstimate:
    value: float
    exact_part: float
    remainder: float
    horizon: int

    @property
    def remainder_fraction(self):
        return self.remainder / self.value if self.value > 0 else 0.0

    @property
    def trusted(self):
        return self.remainder_fraction < 0.01


def tail_A_sq(params, n, N_max=_DEFAULT_TAIL_HORIZON):
    """A_inf^2 - A_n^2: exact sum over (n, N_max] plus the asymptotic remainder past N_max.

    ``trusted`` on the result is False when the remainder carries 1% or more
    of the total.
    """
    n, N_max = int(n), int(N_max)
    if N_max < n:
        raise ValueError(f"N_max={N_max} must be >= n={n}")
    if not 2.0 * _index(params) - 1.0 > 0.0:
        raise DomainError("tail_A_sq is only finite in the strong-elephant regime")
    rows = moments_at(params, [n, N_max])
    A = rows["A_sq"]
    exact = float(A[-1] - A[0])
    rem = _tail_asym(params, N_max, float(rows["ell"][-1]))
    return TailEstimate(value=exact + rem, exact_part=exact, remainder=rem, horizon=N_max)


def exact_covariance(tables, m, k):
    """Exact Cov(S_m, S_k) for m <= k, from the martingale (S_n - E S_n) / a_n."""
    if m > k:
        m, k = k, m
    if m == 0:
        return 0.0
    return float(tables.a[k] / tables.a[m] * tables.var_s[m])


CRITICAL_A_CANDIDATES = {
    "inverse_gamma_three_halves": 2.0 / math.sqrt(math.pi),
    "four_over_pi": 4.0 / math.pi,
}


def critical_a_constant(tables, n, rel_tol=0.005):
    """Observed a_n / sqrt(n) and which candidate constant it matches within ``rel_tol``."""
    observed = float(tables.a[n]) / math.sqrt(n)
    matches = [
        name
        for name, value in CRITICAL_A_CANDIDATES.items()
        if abs(observed / value - 1.0) <= rel_tol
    ]
    return {"n": int(n), "observed": observed, "matches": matches}


def write_tables_csv(tables, fh, rows=None):
    """CSV dump (n, a, g, ell, rho, mean_x, mean_s, second_s, A_sq, B_sq)."""
    rows = range(1, tables.horizon + 1) if rows is None else rows
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for n in rows:
        if not 1 <= n <= tables.horizon:
            raise ValueError(f"row {n} outside 1..{tables.horizon}")
        w.writerow([n] + [repr(float(getattr(tables, c)[n])) for c in CSV_COLUMNS[1:]])
