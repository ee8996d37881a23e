"""Fast invariant checks run by ``lodpd selftest`` (a few seconds in total)."""
from __future__ import annotations

import math

import numpy as np

from .combinatorics import partitions_of
from .ergodic import bound_curve, decay_rate_fit, tv_lower_bound
from .lod_coefficients import (
    PureDeathChainSpec,
    chain_eigenvalues,
    d_vector,
    eigen_matrices,
    martingale_check,
    pure_death_generator,
    tail_bounds,
    transition_matrix_oracle,
    transition_matrix_spectral,
)
from .pd_measures import RankedMass, p_eta, p_eta_dp, sampling_formula_mean


def _eigen(theta=0.5, m=8):
    U, V = eigen_matrices(theta, m, exact=True)
    err = np.abs((U.dot(V) - np.eye(m, dtype=object)).astype(float)).max()
    Q = pure_death_generator(PureDeathChainSpec(theta, m))
    err_q = np.abs(V.astype(float) @ np.diag(chain_eigenvalues(theta, m)) @ U.astype(float) - Q).max()
    return max(err, err_q) <= 1e-9, f"UV=I and Q=V Lambda U, max error {err_q:.2e}"


def _spectral(theta=1.0, m=10, t=1.0):
    err = np.abs(transition_matrix_spectral(theta, m, t) - transition_matrix_oracle(theta, m, t)).max()
    return err <= 1e-8, f"spectral vs ODE oracle, max error {err:.2e}"


def _coefficients():
    worst = 0.0
    for theta in (-0.5, 1.0, 5.0):
        for t in (0.1, 1.0):
            c = d_vector(theta, t, 1e-12)
            worst = max(worst, abs(c.residual), -min(0.0, c.d.min()))
    return worst <= 1e-9, f"coefficients nonnegative, sum to one within {worst:.2e}"


def _sandwich():
    ok = True
    for theta in (-0.5, 1.0):
        c = d_vector(theta, 1.0, 1e-12)
        for n in range(2, 7):
            lo, hi = tail_bounds(theta, n, 1.0)
            ok &= lo <= c.tail_from(n) * (1 + 1e-9) and c.tail_from(n) <= hi * (1 + 1e-9)
    return ok, "tail sums inside their sandwich bounds"


def _martingale():
    dev = max(martingale_check(1.0, 10, n, 0.7).deviation for n in range(1, 5))
    return dev <= 1e-9, f"martingale mean preserved within {dev:.2e}"


def _sampling():
    worst = max(abs(math.fsum(sampling_formula_mean(th, al, e) for e in partitions_of(n)) - 1)
                for th, al in ((1.0, 0.0), (1.0, 0.5)) for n in range(1, 7))
    x = RankedMass([0.5, 0.3, 0.1], 0.1)
    gap = max(abs(p_eta(x, e) - p_eta_dp(x, e)) for e in partitions_of(5))
    return worst <= 1e-10 and gap <= 1e-12, f"sampling formulas sum to one ({worst:.1e}), p_eta routes agree ({gap:.1e})"


def _ergodic():
    a = np.linspace(0, 1, 200)
    ok = tv_lower_bound(a, a.copy()) == 0.0
    t = np.linspace(0, 2, 9)
    rate, r2 = decay_rate_fit(t, 3.0 * np.exp(-1.7 * t))
    ok &= abs(rate - 1.7) <= 1e-10 and abs(r2 - 1) <= 1e-12
    ok &= abs(bound_curve(1.0, [1.0])[0] - 6 * math.exp(-2)) <= 1e-14
    return ok, "TV of identical sets is 0, exponential fit exact, bound curve value"


CHECKS = [
    ("eigenstructure", _eigen),
    ("spectral", _spectral),
    ("coefficients", _coefficients),
    ("sandwich", _sandwich),
    ("martingale", _martingale),
    ("sampling", _sampling),
    ("ergodic", _ergodic),
]


def run_checks():
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the rest
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
