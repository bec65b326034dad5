"""The characteristic sequences behind every normalization.

a_n grows like n^x with x = alpha (2p - 1); the split a_n = g_n * ell_n puts
the pure power in g_n and everything slowly varying in ell_n. A_n^2 is the
variance budget of the martingale (S_n - E S_n) / a_n.
"""

from derw import sequences
from derw.model import Constant, LimitPlusPower, ModelParams

params = ModelParams(p=0.75, q=0.5, alpha=LimitPlusPower(0.5, 1.0, 1.0), beta=Constant(0.5))
t = sequences.build_tables(params, 2 * 10**6)

print("n        a_n/asym   A_n^2/asym  ell_2n/ell_n")
for n in (10**2, 10**4, 10**6):
    print(
        f"{n:<8d} {t.a[n] / sequences.a_asymptotic(t, n):.6f}   "
        f"{t.A_sq[n] / sequences.A_sq_asymptotic(t, n):.6f}    {t.ell[2 * n] / t.ell[n]:.6f}"
    )

# At the critical point alpha = 1, p = 3/4 the constant in a_n ~ C sqrt(n) is 1/Gamma(3/2).
crit = sequences.build_tables(ModelParams.erw(0.75), 10**6)
print("critical a_n/sqrt(n):", sequences.critical_a_constant(crit, 10**6))
