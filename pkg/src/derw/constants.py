"""Closed-form limit constants of the dynamic elephant random walk.

All functions take the *limits* alpha = lim alpha_n, beta = lim beta_n and the
memory parameter p. Each raises :class:`DomainError` outside the range where
the corresponding limit theorem is stated.
"""

import math

from .errors import DomainError


def gamma_function(x):
    """Gamma function for x > 0.

    Backed by :func:`math.gamma` (relative error near machine epsilon on
    (0, 10]); only the domain check is added here.
    """
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma_function needs x > 0, got {x!r}")
    return math.gamma(x)


def _drift_ratio(alpha, beta, p):
    # (1 - alpha)(2 beta - 1) / (1 - alpha (2p - 1)), the limiting E[X_n];
    # alpha = p = 1 makes it 0/0 and the elephant part alone gives 0
    num = (1.0 - alpha) * (2.0 * beta - 1.0)
    if num == 0.0:
        return 0.0
    return num / (1.0 - alpha * (2.0 * p - 1.0))


def c_diffusive(alpha, beta, p):
    """Variance constant of the sqrt(n) functional CLT."""
    denom = 1.0 - 2.0 * alpha * (2.0 * p - 1.0)
    if not denom > 0.0:
        raise DomainError(
            f"c_diffusive needs 1 - 2*alpha*(2p-1) > 0, got {denom!r} "
            f"(alpha={alpha}, p={p})"
        )
    return (1.0 - _drift_ratio(alpha, beta, p) ** 2) / denom


def c_critical(beta, p):
    """Variance constant of the sqrt(n log n) functional CLT (alpha_n = 1/(4p-2))."""
    if p < 0.75 - 1e-12:
        raise DomainError(f"c_critical needs p >= 3/4, got {p!r}")
    return 1.0 - 4.0 * (1.0 - 1.0 / (4.0 * p - 2.0)) ** 2 * (2.0 * beta - 1.0) ** 2


def c_strong(alpha, beta, p):
    """Variance constant of the fluctuations around a_n * M (strong elephant)."""
    denom = 2.0 * alpha * (2.0 * p - 1.0) - 1.0
    if not denom > 0.0:
        raise DomainError(
            f"c_strong needs 2*alpha*(2p-1) - 1 > 0, got {denom!r} "
            f"(alpha={alpha}, p={p})"
        )
    return (1.0 - _drift_ratio(alpha, beta, p) ** 2) / denom


def slln_limit(alpha, beta, p):
    """Almost-sure limit of S_n / n, valid when p * alpha < 1."""
    if not p * alpha < 1.0:
        raise DomainError(f"slln_limit needs p*alpha < 1, got p={p}, alpha={alpha}")
    return _drift_ratio(alpha, beta, p)
