"""Lines-of-descent coefficients and the pure-death block-counting chain.

``d_n(t)`` is the probability that the ancestral process started from
infinitely many lines has ``n`` lines left at time ``t``; the series for it
alternates with terms that grow like ``(2/t)^n`` before ``exp(-lambda_m t)``
takes over, so evaluation escalates from compensated double sums to mpmath
when the cancellation would eat all double-precision digits.

The block-counting chain lives on ``{1, ..., m}`` with ``1`` absorbing and
death rates ``lambda_k = k (k + theta - 1) / 2``.  States 0 and 1 of the
mutation-killed ancestral process are merged in it.  For ``theta <= 0`` the
separate ``d_0`` expression is not a probability (it goes negative), so there
the merged mass is reported as ``d_1`` and ``d_0`` is zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
import scipy.sparse
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .combinatorics import LogReal, falling_factorial, rising_factorial
from .errors import IntegratorError, LimitError, ParameterError, PrecisionError

DEFAULT_MAX_DPS = 4000
ORACLE_MAX_M = 500
CHAIN_FALLBACK_M = 400
_LN10 = math.log(10.0)
# digits of cancellation a compensated double sum can absorb
_DOUBLE_DIGITS = 12


def _check_theta(theta):
    if not theta > -1:
        raise ParameterError(f"theta must exceed -1, got {theta}")


def eigenvalue(theta: float, m: int) -> float:
    """Death rate out of ``m`` lines, ``m (m + theta - 1) / 2``."""
    if m < 0:
        raise ParameterError(f"m must be nonnegative, got {m}")
    return m * (m + theta - 1) / 2


# ---------------------------------------------------------------------------
# adaptive-precision alternating series


@dataclass(frozen=True)
class SeriesResult:
    value: float
    error_bound: float
    terms: int
    dps: int  # 0 when the double-precision path was used


def _sum_series(log_coef, mp_coef, theta, t, m_start, tol, m_stop=None,
                constant=0, max_dps=DEFAULT_MAX_DPS):
    """``constant + sum_m c_m exp(-lambda_m t)`` to absolute error ``tol``.

    ``log_coef(m)`` gives ``c_m`` as a :class:`LogReal` (for the magnitude
    scan), ``mp_coef(m)`` gives it as an mpmath number at the current
    working precision.  Infinite series stop once terms are past their peak,
    below ``tol / 10`` and shrinking geometrically with ratio under 1/2, which
    bounds the dropped tail by the last kept term.
    """
    logs = []
    signs = []
    log_max = -math.inf
    log_stop = math.log(tol / 10)
    prev = None
    m = m_start
    tail = 0.0
    while True:
        if m_stop is not None and m > m_stop:
            break
        c = log_coef(m)
        lt = c.log_magnitude - eigenvalue(theta, m) * t if c.sign else -math.inf
        logs.append(lt)
        signs.append(c.sign)
        log_max = max(log_max, lt)
        if m_stop is None and prev is not None and lt < log_stop and lt - prev < -math.log(2):
            tail = math.exp(lt)
            break
        if c.sign:
            prev = lt
        m += 1
        if m - m_start > 200_000:
            raise PrecisionError("series failed to converge", achieved=math.inf)

    terms = len(logs)
    if log_max == -math.inf:
        return SeriesResult(float(constant), tail, terms, 0)
    digits = max(log_max, 0.0) / _LN10 - math.log10(tol)
    if digits <= _DOUBLE_DIGITS:
        vals = [s * math.exp(lg) for s, lg in zip(signs, logs) if s]
        total = math.fsum(vals + [float(constant)])
        return SeriesResult(total, tail + 10 ** (-_DOUBLE_DIGITS) * math.exp(max(log_max, 0.0)), terms, 0)

    dps = int(math.ceil(digits)) + 15
    if dps > max_dps:
        achieved = 10 ** (max(log_max, 0.0) / _LN10 - max_dps + 15)
        raise PrecisionError(
            f"series needs ~{dps} digits but the cap is {max_dps}", achieved=achieved)
    with mpmath.workdps(dps):
        th = mpmath.mpf(theta)
        tt = mpmath.mpf(t)
        acc = mpmath.mpf(constant)
        for k in range(terms):
            if not signs[k]:
                continue
            mm = m_start + k
            acc += mp_coef(mm) * mpmath.exp(-mm * (mm + th - 1) / 2 * tt)
        value = float(acc)
    return SeriesResult(value, tail, terms, dps)


# coefficient families ------------------------------------------------------


def _dn_log_coef(theta, n):
    lfac_n = math.lgamma(n + 1)

    def f(m):
        r = rising_factorial(n + theta, m - 1)
        mag = math.log(2 * m + theta - 1) - lfac_n - math.lgamma(m - n + 1)
        s = r.sign * (1 if (m - n) % 2 == 0 else -1)
        return LogReal(s, mag + r.log_magnitude) if s else LogReal.zero()

    return f


def _dn_mp_coef(theta, n):
    def f(m):
        th = mpmath.mpf(theta)
        c = (2 * m + th - 1) / (mpmath.factorial(n) * mpmath.factorial(m - n)) * mpmath.rf(n + th, m - 1)
        return c if (m - n) % 2 == 0 else -c

    return f


def _d0_log_coef(theta):
    # d_0 = 1 - sum_{m>=1} (2m+theta-1)/m! (-1)^{m-1} theta_(m-1) e^{-lambda_m t}
    def f(m):
        r = rising_factorial(theta, m - 1)
        s = -r.sign * (1 if (m - 1) % 2 == 0 else -1)
        mag = math.log(2 * m + theta - 1) - math.lgamma(m + 1) + r.log_magnitude
        return LogReal(s, mag) if s else LogReal.zero()

    return f


def _d0_mp_coef(theta):
    def f(m):
        th = mpmath.mpf(theta)
        c = (2 * m + th - 1) / mpmath.factorial(m) * mpmath.rf(th, m - 1)
        return -c if (m - 1) % 2 == 0 else c

    return f


def _merged_log_coef(theta):
    # d_0 + d_1 = 1 - sum_{m>=2} (2m+theta-1)/m! (-1)^{m-1} [theta_(m-1) - m (theta+1)_(m-1)] e^{-lambda_m t}
    def f(m):
        bracket = rising_factorial(theta, m - 1) - rising_factorial(theta + 1, m - 1) * m
        if bracket.sign == 0:
            return LogReal.zero()
        s = -bracket.sign * (1 if (m - 1) % 2 == 0 else -1)
        mag = math.log(2 * m + theta - 1) - math.lgamma(m + 1) + bracket.log_magnitude
        return LogReal(s, mag)

    return f


def _merged_mp_coef(theta):
    def f(m):
        th = mpmath.mpf(theta)
        bracket = mpmath.rf(th, m - 1) - m * mpmath.rf(th + 1, m - 1)
        c = (2 * m + th - 1) / mpmath.factorial(m) * bracket
        return -c if (m - 1) % 2 == 0 else c

    return f


def d_series(theta: float, t: float, n: int, target_abs_err: float = 1e-13,
             max_dps: int = DEFAULT_MAX_DPS) -> SeriesResult:
    """Series evaluation of ``d_n(t)`` with diagnostics; see :func:`d_coefficient`."""
    _check_theta(theta)
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    if n < 0:
        raise ParameterError(f"n must be nonnegative, got {n}")
    if n == 0:
        if theta <= 0:
            return SeriesResult(0.0, 0.0, 0, 0)
        return _sum_series(_d0_log_coef(theta), _d0_mp_coef(theta), theta, t, 1,
                           target_abs_err, constant=1, max_dps=max_dps)
    if n == 1 and theta <= 0:
        return _sum_series(_merged_log_coef(theta), _merged_mp_coef(theta), theta, t, 2,
                           target_abs_err, constant=1, max_dps=max_dps)
    return _sum_series(_dn_log_coef(theta, n), _dn_mp_coef(theta, n), theta, t, n,
                       target_abs_err, max_dps=max_dps)


def d_coefficient(theta: float, t: float, n: int, target_abs_err: float = 1e-13,
                  max_dps: int = DEFAULT_MAX_DPS) -> float:
    """Probability ``d_n(t)`` of ``n`` surviving lines of descent at time ``t``.

    For ``n >= 1`` this sums ``(2m+theta-1)/m! (-1)^(m-n) C(m,n) (n+theta)_(m-1)
    exp(-lambda_m t)`` over ``m >= n``; ``d_0`` uses its own series.  When the
    cancellation exceeds ``max_dps`` digits the value is taken from the
    block-counting chain with ``m = 400`` (Richardson-extrapolated in ``m``);
    if that estimate is not within ``target_abs_err`` a
    :class:`PrecisionError` carrying the achieved bound is raised.
    """
    try:
        return d_series(theta, t, n, target_abs_err, max_dps).value
    except PrecisionError as exc:
        if n < 2:
            raise
        value, err = d_coefficient_chain(theta, t, n, CHAIN_FALLBACK_M)
        if err <= target_abs_err:
            return value
        raise PrecisionError(
            f"d_{n}({t}) unreachable: series needs too many digits and chain "
            f"estimate is only good to {err:.3g}", achieved=min(err, exc.achieved)) from exc


def d_coefficient_chain(theta: float, t: float, n: int, m: int = CHAIN_FALLBACK_M):
    """``d_n(t)`` approximated through the chain started from ``m`` lines.

    Integrates the forward equation for rows ``m`` and ``2m`` and extrapolates
    assuming the ``O(1/m)`` entrance-time error.  Returns ``(value, error)``
    with ``error = |P_{2m,n} - P_{m,n}|``, a conservative estimate.
    """
    _check_theta(theta)
    if n < 2:
        raise ParameterError("chain route only covers n >= 2")
    p_m = _forward_row(theta, m, t)[n - 1]
    p_2m = _forward_row(theta, 2 * m, t)[n - 1]
    return 2 * p_2m - p_m, abs(p_2m - p_m)


@dataclass(frozen=True)
class LodCoefficients:
    """Certified truncation of the lines-of-descent distribution.

    ``d[k]`` is ``d_k(t)`` for ``k = 0..truncation_N``; ``tail_mass_bound``
    bounds the mass on ``k > truncation_N`` and ``residual`` is
    ``1 - sum(d)``.
    """

    theta: float
    t: float
    d: np.ndarray
    truncation_N: int
    tail_mass_bound: float

    @property
    def residual(self) -> float:
        return 1.0 - math.fsum(self.d)

    def merged(self) -> np.ndarray:
        """Weights indexed by line count with states 0 and 1 merged into index 1."""
        out = self.d.copy()
        out[1] += out[0]
        out[0] = 0.0
        return out

    def tail_from(self, n: int) -> float:
        """``sum_{k >= n} d_k`` to about ten significant digits.

        Large tails come from the complement ``1 - sum_{k < n} d_k``.  Once
        that loses relative accuracy the coefficients are summed directly,
        continuing past ``truncation_N`` until the certified remainder is
        negligible.  The direct terms are recomputed to an accuracy relative
        to ``exp(-lambda_n t)``.
        """
        if n <= 0:
            return 1.0
        head = min(n, self.truncation_N + 1)
        complement = 1.0 - math.fsum(self.d[:head])
        if n == 1 or complement > 1e-5:
            return complement - math.fsum(self.d[head:n])
        tol = 1e-13 * math.exp(-eigenvalue(self.theta, n) * self.t)
        terms = []
        k = n
        while tail_upper(self.theta, k, self.t) > tol:
            terms.append(d_coefficient(self.theta, self.t, k, target_abs_err=tol))
            k += 1
        return math.fsum(terms)


def d_vector(theta: float, t: float, tol: float = 1e-10) -> LodCoefficients:
    """All ``d_n(t)`` up to a truncation whose certified tail is below ``tol``."""
    _check_theta(theta)
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    return _d_vector_cached(float(theta), float(t), float(tol))


@lru_cache(maxsize=256)
def _d_vector_cached(theta, t, tol):
    N = 2
    while tail_upper(theta, N + 1, t) > tol:
        N += 1
        if N > 100_000:
            raise PrecisionError("truncation search diverged")
    per_term = min(1e-13, tol / 100) / (N + 1)
    d = np.array([d_coefficient(theta, t, k, target_abs_err=per_term) for k in range(N + 1)])
    d[(d < 0) & (d >= -1e-12)] = 0.0
    d.setflags(write=False)
    return LodCoefficients(theta, t, d, N, tail_upper(theta, N + 1, t))


# ---------------------------------------------------------------------------
# tail sandwich


def tail_bounds(theta: float, n: int, t: float) -> tuple[float, float]:
    """Lower and upper bounds on ``sum_{k >= n} d_k(t)``.

    ``exp(-lambda_n t) <= tail <= (n+theta)_(n) / n! * exp(-lambda_n t)``.
    The sandwich comes from the chain's ``n``-th eigenvector, which exists
    for ``n >= 2`` whenever ``theta > -1``; for ``n == 1`` it needs the
    unmerged chain and so ``theta >= 0``.
    """
    _check_theta(theta)
    if n < 1:
        raise ParameterError(f"n must be at least 1, got {n}")
    if n == 1 and theta < 0:
        raise ParameterError("the n = 1 sandwich requires theta >= 0")
    base = math.exp(-eigenvalue(theta, n) * t)
    if n <= 60:
        # plain products keep small cases exact, e.g. (2+theta)(3+theta)/2
        ratio = math.prod(n + theta + k for k in range(n)) / math.factorial(n)
    else:
        ratio = float(rising_factorial(n + theta, n) / falling_factorial(n, n))
    return base, ratio * base


def tail_upper(theta: float, n: int, t: float) -> float:
    return tail_bounds(theta, n, t)[1]


# ---------------------------------------------------------------------------
# pure-death chain


@dataclass(frozen=True)
class PureDeathChainSpec:
    theta: float
    m: int

    def __post_init__(self):
        _check_theta(self.theta)
        if self.m < 2:
            raise ParameterError(f"chain needs m >= 2, got {self.m}")

    @property
    def rates(self) -> np.ndarray:
        """``lambda_k`` for ``k = 2..m``."""
        k = np.arange(2, self.m + 1)
        return k * (k + self.theta - 1) / 2


def pure_death_generator(spec: PureDeathChainSpec) -> np.ndarray:
    """Lower-bidiagonal generator on states ``1..m`` (row ``i-1`` is state ``i``)."""
    m = spec.m
    Q = np.zeros((m, m))
    idx = np.arange(1, m)
    Q[idx, idx - 1] = spec.rates
    Q[idx, idx] = -spec.rates
    return Q


def _rf_exact(x: Fraction, n: int) -> Fraction:
    out = Fraction(1)
    for k in range(n):
        out *= x + k
    return out


@lru_cache(maxsize=64)
def _eigen_exact(theta: float, m: int):
    th = Fraction(theta)
    U = [[Fraction(0)] * m for _ in range(m)]
    V = [[Fraction(0)] * m for _ in range(m)]
    U[0][0] = Fraction(1)
    for i in range(1, m + 1):
        V[i - 1][0] = Fraction(1)
        denom_u = _rf_exact(i + th, i - 1)
        for j in range(2, i + 1):
            V[i - 1][j - 1] = math.comb(i, j) * _rf_exact(j + th, j) / _rf_exact(i + th, j)
            if i > 1:
                U[i - 1][j - 1] = (-1) ** (i - j) * math.comb(i, j) * _rf_exact(j + th, i - 1) / denom_u
        if i > 1:
            # column 1 carries the merged states 0 and 1 of the unmerged chain
            U[i - 1][0] = ((-1) ** (i - 1) * i * _rf_exact(1 + th, i - 1)
                           + (-1) ** i * _rf_exact(th, i - 1)) / denom_u
    return U, V


def eigen_matrices(theta: float, m: int, exact: bool = False):
    """Left (rows of ``U``) and right (columns of ``V``) eigenvectors of the chain.

    ``u_ij = (-1)^(i-j) C(i,j) (j+theta)_(i-1) / (i+theta)_(i-1)`` for
    ``2 <= j <= i``; the first column absorbs the mutation-death state so that
    rows ``i > 1`` sum to zero.  ``v_i1 = 1`` and
    ``v_ij = C(i,j) (j+theta)_(j) / (i+theta)_(j)``.

    With ``exact=True`` the entries are :class:`fractions.Fraction` (``theta``
    converted exactly from its binary value) in object arrays; otherwise
    correctly-rounded float arrays.
    """
    _check_theta(theta)
    if m < 2:
        raise ParameterError(f"m must be at least 2, got {m}")
    U, V = _eigen_exact(float(theta), int(m))
    if exact:
        return np.array(U, dtype=object), np.array(V, dtype=object)
    return (np.array([[float(x) for x in row] for row in U]),
            np.array([[float(x) for x in row] for row in V]))


def chain_eigenvalues(theta: float, m: int) -> np.ndarray:
    """Diagonal of ``Lambda``: ``0, -lambda_2, ..., -lambda_m``."""
    k = np.arange(1, m + 1)
    lam = -k * (k + theta - 1) / 2
    lam[0] = 0.0
    return lam


def transition_matrix_spectral(theta: float, m: int, t: float) -> np.ndarray:
    """``V exp(Lambda t) U`` evaluated in extended precision, returned as floats."""
    _check_theta(theta)
    if m < 2:
        raise ParameterError(f"m must be at least 2, got {m}")
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    U, V = _eigen_exact(float(theta), int(m))
    scale = max(abs(x) for row in U for x in row) * max(abs(x) for row in V for x in row) * m
    dps = 30 + int(math.log10(float(scale)) + 1)
    with mpmath.workdps(dps):
        th = mpmath.mpf(theta)
        decay = [mpmath.mpf(1)] + [mpmath.exp(-k * (k + th - 1) / 2 * mpmath.mpf(t)) for k in range(2, m + 1)]
        Um = [[mpmath.mpf(x.numerator) / x.denominator for x in row] for row in U]
        Vm = [[mpmath.mpf(x.numerator) / x.denominator for x in row] for row in V]
        P = np.zeros((m, m))
        for i in range(m):
            # V lower-triangular, U lower-triangular: k runs j..i
            for j in range(i + 1):
                acc = mpmath.mpf(0)
                for k in range(j, i + 1):
                    acc += Vm[i][k] * decay[k] * Um[k][j]
                P[i, j] = float(acc)
    return P


def _bidiagonal_sparse(theta, m):
    spec = PureDeathChainSpec(theta, m)
    rates = spec.rates
    main = np.concatenate([[0.0], -rates])
    return scipy.sparse.diags([rates, main], [-1, 0], shape=(m, m), format="csr")


def _integrate(theta, m, t, P0, rtol=1e-12, atol=1e-14):
    """Integrate ``dP/dt = P Q`` for the rows of ``P0``."""
    if t == 0:
        return P0.copy()
    QT = _bidiagonal_sparse(theta, m).T.tocsr()
    r = P0.shape[0]
    J = scipy.sparse.kron(scipy.sparse.identity(r), QT, format="csr")

    def rhs(_, y):
        return J @ y

    sol = solve_ivp(rhs, (0.0, t), P0.ravel(), method="Radau", jac=J,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorError(f"forward-equation integration failed: {sol.message}")
    return sol.y[:, -1].reshape(P0.shape)


def transition_matrix_oracle(theta: float, m: int, t: float) -> np.ndarray:
    """``exp(tQ)`` by integrating the Kolmogorov forward equation from the identity."""
    _check_theta(theta)
    if m < 2:
        raise ParameterError(f"m must be at least 2, got {m}")
    if m > ORACLE_MAX_M:
        raise LimitError(f"oracle limited to m <= {ORACLE_MAX_M}, got {m}")
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    return _integrate(theta, m, t, np.eye(m))


def _forward_row(theta, m, t):
    e = np.zeros((1, m))
    e[0, m - 1] = 1.0
    return _integrate(theta, m, t, e)[0]


def _pmn_log_coef(theta, m, n):
    def f(k):
        r1 = rising_factorial(theta + n, k - 1)
        r2 = rising_factorial(theta + m, k)
        mag = (math.lgamma(m + 1) - math.lgamma(m - k + 1) - math.lgamma(n + 1) - math.lgamma(k - n + 1)
               + math.log(2 * k + theta - 1) + r1.log_magnitude - r2.log_magnitude)
        s = r1.sign * r2.sign * (1 if (k - n) % 2 == 0 else -1)
        return LogReal(s, mag)

    return f


def _pmn_mp_coef(theta, m, n):
    def f(k):
        th = mpmath.mpf(theta)
        c = (mpmath.binomial(m, k) * mpmath.binomial(k, n) * (2 * k + th - 1)
             * mpmath.rf(th + n, k - 1) / mpmath.rf(th + m, k))
        return c if (k - n) % 2 == 0 else -c

    return f


def p_mn_closed_form(theta: float, m: int, n: int, t: float, target_abs_err: float = 1e-14,
                     max_dps: int = DEFAULT_MAX_DPS) -> float:
    """``P(B_t = n | B_0 = m)`` from the closed-form alternating sum over ``k = n..m``."""
    _check_theta(theta)
    if not 2 <= n <= m:
        raise ParameterError(f"need 2 <= n <= m, got n={n}, m={m}")
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    res = _sum_series(_pmn_log_coef(theta, m, n), _pmn_mp_coef(theta, m, n), theta, t, n,
                      target_abs_err, m_stop=m, max_dps=max_dps)
    return res.value


# ---------------------------------------------------------------------------
# martingale


@dataclass(frozen=True)
class MartingaleReport:
    theta: float
    m: int
    n: int
    t: float
    expectation: float
    initial: float

    @property
    def deviation(self) -> float:
        return abs(self.expectation - self.initial)


def _martingale_weight(theta, k, n):
    f = falling_factorial(k, n)
    if f.sign == 0:
        return 0.0
    return float(f / rising_factorial(k + theta, n))


def _unmerged_transition(theta, m, t):
    # states 0..m, the single remaining line dies by mutation at rate theta/2
    Q = np.zeros((m + 1, m + 1))
    for k in range(1, m + 1):
        rate = k * (k + theta - 1) / 2
        Q[k, k - 1] = rate
        Q[k, k] = -rate
    return expm(Q * t)


def martingale_check(theta: float, m: int, n: int, t: float) -> MartingaleReport:
    """Exact ``E[Z_n(t) | B_0 = m]`` for ``Z_n = exp(lambda_n t) (B)_[n] / (B+theta)_(n)``.

    ``n >= 2`` uses the merged chain (any ``theta > -1``).  ``n == 1`` needs
    the chain with the separate mutation-death state 0, hence ``theta >= 0``.
    """
    _check_theta(theta)
    if not 0 <= n <= m:
        raise ParameterError(f"need 0 <= n <= m, got n={n}, m={m}")
    initial = _martingale_weight(theta, m, n)
    if n == 0 or t == 0:
        return MartingaleReport(theta, m, n, t, initial, initial)
    if n == 1:
        if theta < 0:
            raise ParameterError("n = 1 martingale needs theta >= 0")
        row = _unmerged_transition(theta, m, t)[m]
        states = range(0, m + 1)
        lam = eigenvalue(theta, 1)
    else:
        row = transition_matrix_spectral(theta, m, t)[m - 1]
        states = range(1, m + 1)
        lam = eigenvalue(theta, n)
    w = np.array([_martingale_weight(theta, k, n) for k in states])
    expectation = math.exp(lam * t) * math.fsum(row * w)
    return MartingaleReport(theta, m, n, t, expectation, initial)
