"""Model parameters, memory/drift sequences and regime classification.

A dynamic elephant random walk is fixed by two constants ``p`` (memory
repetition probability) and ``q`` (law of the first step) together with two
[0, 1]-valued sequences: ``alpha_n`` (weight of the elephant component) and
``beta_n`` (bias of the dynamic component). Sequences are given by one of
three convergent families, see :class:`Constant`, :class:`LimitPlusPower`
and :class:`Table`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import constants

# absolute tolerance for "alpha == 1/(4p-2)", "p == 3/4", "alpha == 0", ...
TOL = 1e-12


def _check_unit(name, x):
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")
    return x


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        object.__setattr__(self, "c", _check_unit("Constant.c", self.c))

    @property
    def limit(self):
        return self.c

    def terms(self, start, stop):
        return np.full(stop - start, self.c)

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class LimitPlusPower:
    """``clamp(limit + coeff * n**(-exponent), 0, 1)``."""

    limit: float
    coeff: float
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "limit", _check_unit("LimitPlusPower.limit", self.limit))
        object.__setattr__(self, "coeff", float(self.coeff))
        object.__setattr__(self, "exponent", float(self.exponent))
        if not self.exponent > 0 or not math.isfinite(self.coeff):
            raise ValueError("LimitPlusPower needs exponent > 0 and a finite coeff")

    def terms(self, start, stop):
        n = np.arange(start, stop, dtype=np.float64)
        return np.clip(self.limit + self.coeff * n ** (-self.exponent), 0.0, 1.0)

    def to_dict(self):
        return {
            "kind": "limit_power",
            "limit": self.limit,
            "coeff": self.coeff,
            "exponent": self.exponent,
        }


@dataclass(frozen=True)
class Table:
    """Explicit first terms ``values[0], values[1], ...`` (n = 1, 2, ...) then ``tail``."""

    values: tuple
    tail: float

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(_check_unit("Table.values", v) for v in self.values))
        object.__setattr__(self, "tail", _check_unit("Table.tail", self.tail))

    @property
    def limit(self):
        return self.tail

    def terms(self, start, stop):
        out = np.full(stop - start, self.tail)
        hi = min(stop, len(self.values) + 1)
        if hi > start:
            out[: hi - start] = self.values[start - 1 : hi - 1]
        return out

    def to_dict(self):
        return {"kind": "table", "values": list(self.values), "tail": self.tail}


SequenceSpec = Union[Constant, LimitPlusPower, Table]


def eval_sequence(spec, n):
    """n-th term (n >= 1) of a sequence spec."""
    if n < 1:
        raise ValueError(f"sequence index must be >= 1, got {n}")
    return float(spec.terms(n, n + 1)[0])


def limit_of(spec):
    return spec.limit


def spec_from_dict(d):
    kind = d.get("kind")
    if kind == "constant":
        return Constant(d["c"])
    if kind == "limit_power":
        return LimitPlusPower(d["limit"], d["coeff"], d["exponent"])
    if kind == "table":
        return Table(d["values"], d["tail"])
    raise ValueError(f"unknown sequence kind {kind!r}")


@dataclass(frozen=True)
class ModelParams:
    p: float
    q: float
    alpha: SequenceSpec
    beta: SequenceSpec

    def __post_init__(self):
        object.__setattr__(self, "p", _check_unit("p", self.p))
        object.__setattr__(self, "q", _check_unit("q", self.q))

    @classmethod
    def erw(cls, p, q=0.5):
        """Classical elephant random walk (alpha_n = 1)."""
        return cls(p, q, Constant(1.0), Constant(0.5))

    @property
    def alpha_limit(self):
        return self.alpha.limit

    @property
    def beta_limit(self):
        return self.beta.limit

    def to_dict(self):
        return {
            "p": self.p,
            "q": self.q,
            "alpha": self.alpha.to_dict(),
            "beta": self.beta.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["p"], d.get("q", 0.5), spec_from_dict(d["alpha"]), spec_from_dict(d["beta"]))

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Regime:
    """Which limit theorem applies.

    ``kind`` is one of ``"DiffusiveGaussian"``, ``"CriticalLog"``,
    ``"StrongElephant"`` or ``"Unclassified"``; ``case`` is the roman numeral of
    the matching condition. ``constant`` is the limit variance constant and
    ``normalization`` one of ``sqrt_n``, ``sqrt_n_log_n``, ``a_n_fluctuation``.
    """

    kind: str
    case: str | None = None
    constant: float | None = None
    normalization: str | None = None
    reason: str | None = None

    @property
    def classified(self):
        return self.kind != "Unclassified"

    def label(self):
        if self.classified:
            return f"{self.kind}({self.case})"
        return f"Unclassified: {self.reason}"

    def to_dict(self):
        return {
            "kind": self.kind,
            "case": self.case,
            "constant": self.constant,
            "normalization": self.normalization,
            "reason": self.reason,
        }


def _eq(a, b):
    return abs(a - b) <= TOL


def _lt(a, b):
    return a < b - TOL


def _critical_alpha(p):
    return 1.0 / (4.0 * p - 2.0) if p > 0.5 else math.inf


def critical_case(params):
    """Case ('i'/'ii') of the sqrt(n log n) theorem, or None."""
    p, beta = params.p, params.beta_limit
    if not isinstance(params.alpha, Constant):
        return None
    if p < 0.75 - TOL or not _eq(params.alpha.c, _critical_alpha(p)):
        return None
    if _lt(p, 1.0):
        return "i"
    if _eq(p, 1.0) and _lt(0.0, beta) and _lt(beta, 1.0):
        return "ii"
    return None


def diffusive_case(params):
    """Case ('i'..'v') of the sqrt(n) theorem, or None."""
    p, a, b = params.p, params.alpha_limit, params.beta_limit
    crit = _critical_alpha(p)
    if _lt(p, 0.75) and _lt(0.0, a):
        return "i"
    if _eq(p, 0.75) and _lt(0.0, a) and _lt(a, 1.0):
        return "ii"
    if _lt(0.75, p) and _lt(p, 1.0) and _lt(0.0, a) and _lt(a, crit):
        return "iii"
    if _eq(p, 1.0) and _lt(0.0, a) and _lt(a, crit) and _lt(0.0, b) and _lt(b, 1.0):
        return "iv"
    if _eq(a, 0.0) and _lt(0.0, b) and _lt(b, 1.0):
        return "v"
    return None


def strong_case(params):
    """Case ('i'/'ii') of the strong-elephant fluctuation result, or None."""
    p, a, b = params.p, params.alpha_limit, params.beta_limit
    crit = _critical_alpha(p)
    if _lt(0.75, p) and _lt(p, 1.0) and _lt(crit, a):
        return "i"
    if _eq(p, 1.0) and _lt(crit, a) and _lt(a, 1.0) and _lt(0.0, b) and _lt(b, 1.0):
        return "ii"
    return None


def classify(params):
    """Map parameters to the applicable regime.

    Precedence: critical (exactly constant alpha at 1/(4p-2)), then diffusive,
    then strong elephant. Convergent non-constant alpha sequences whose limit
    is critical are left unclassified.
    """
    a, b, p = params.alpha_limit, params.beta_limit, params.p
    case = critical_case(params)
    if case is not None:
        return Regime("CriticalLog", case, constants.c_critical(b, p), "sqrt_n_log_n")
    case = diffusive_case(params)
    if case is not None:
        return Regime("DiffusiveGaussian", case, constants.c_diffusive(a, b, p), "sqrt_n")
    case = strong_case(params)
    if case is not None:
        return Regime("StrongElephant", case, constants.c_strong(a, b, p), "a_n_fluctuation")

    if p >= 0.75 - TOL and _eq(a, _critical_alpha(p)):
        reason = "alpha limit is critical but the alpha sequence is not exactly constant"
    elif _eq(p, 1.0) and not (_lt(0.0, b) and _lt(b, 1.0)):
        reason = "p = 1 requires 0 < beta < 1"
    elif _eq(p, 1.0) and not _lt(a, 1.0):
        reason = "p = 1 with alpha = 1 is degenerate"
    elif _eq(a, 0.0):
        reason = "alpha = 0 requires 0 < beta < 1"
    elif _eq(p, 0.75):
        reason = "p = 3/4 with alpha = 1 needs the exactly constant critical sequence"
    else:
        reason = "no limit theorem covers these parameters"
    return Regime("Unclassified", reason=reason)
