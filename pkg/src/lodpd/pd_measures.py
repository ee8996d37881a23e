"""Poisson-Dirichlet samplers, partition kernels and sampling-formula means.

A :class:`RankedMass` is a finite ranked prefix of a point of the infinite
ordered simplex plus the leftover ``remainder``.  The remainder is treated as
dust: mass split into infinitely many vanishing atoms.  It therefore shows up
in the first power sum only, and every draw that lands in it starts a new
singleton block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .combinatorics import Partition, partition_prefactor, rising_factorial
from .errors import ParameterError

# Stick-breaking for alpha > 0 leaves mass ~ k^{-(1-alpha)/alpha} after k
# sticks, so 1e-8 is out of reach there; the dust bias on p_k (k >= 2) is
# O(eps^2 / (theta + k alpha)), about 1e-7 at 1e-2.
DEFAULT_EPS_ONE_PARAMETER = 1e-8
DEFAULT_EPS_TWO_PARAMETER = 1e-2
# Set partitions of the parts are enumerated up to this many parts; longer
# partitions go through the atom-by-atom recursion.
MOBIUS_MAX_PARTS = 10


def default_eps(alpha: float) -> float:
    return DEFAULT_EPS_ONE_PARAMETER if alpha == 0 else DEFAULT_EPS_TWO_PARAMETER


def check_pd_parameters(theta: float, alpha: float) -> None:
    if not 0 <= alpha < 1:
        raise ParameterError(f"alpha must lie in [0, 1), got {alpha}")
    if not theta + alpha > 0:
        raise ParameterError(f"need theta + alpha > 0, got theta={theta}, alpha={alpha}")


@dataclass(frozen=True)
class RankedMass:
    """Ranked atoms (non-increasing, positive) plus unresolved dust mass."""

    atoms: np.ndarray
    remainder: float = 0.0

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        if atoms.size and (atoms.min() <= 0 or np.any(np.diff(atoms) > 0)):
            raise ParameterError("atoms must be positive and non-increasing")
        if not 0 <= self.remainder < 1:
            raise ParameterError(f"remainder must lie in [0, 1), got {self.remainder}")
        if abs(math.fsum(atoms) + self.remainder - 1) > 1e-12:
            raise ParameterError("atoms and remainder must sum to 1")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "remainder", float(self.remainder))

    @classmethod
    def from_atoms(cls, atoms: Sequence[float], remainder: float | None = None) -> "RankedMass":
        """Rank ``atoms``, drop zeros, and fill ``remainder`` as ``1 - sum`` if omitted."""
        a = np.sort(np.asarray(atoms, dtype=float))[::-1]
        a = a[a > 0]
        if remainder is None:
            remainder = max(0.0, 1.0 - math.fsum(a))
        return cls(a, remainder)

    @property
    def phi2(self) -> float:
        """Homozygosity ``sum x_i^2``."""
        return float(np.dot(self.atoms, self.atoms))

    @property
    def top(self) -> float:
        return float(self.atoms[0]) if self.atoms.size else 0.0

    def __len__(self) -> int:
        return self.atoms.size


# ---------------------------------------------------------------------------
# samplers


def sample_pd(theta: float, alpha: float = 0.0, eps: float | None = None,
              rng: np.random.Generator | None = None) -> RankedMass:
    """One ranked draw from PD(theta, alpha) by residual allocation.

    The ``k``-th stick takes a Beta(1 - alpha, theta + k alpha) fraction of
    what is left; breaking stops once the leftover is below ``eps``.
    """
    check_pd_parameters(theta, alpha)
    eps = default_eps(alpha) if eps is None else eps
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    rng = np.random.default_rng() if rng is None else rng
    return RankedMass(*_stick_break(theta, alpha, eps, rng))


def _stick_break(theta, alpha, eps, rng):
    pieces = []
    rem = 1.0
    k = 0
    chunk = 32 if alpha == 0 else 256
    while rem >= eps:
        ks = np.arange(k + 1, k + chunk + 1)
        v = rng.beta(1 - alpha, theta + ks * alpha)
        left = rem * np.cumprod(1 - v)
        before = np.concatenate(([rem], left[:-1]))
        stop = np.flatnonzero(left < eps)
        if stop.size:
            j = stop[0] + 1
            pieces.append(before[:j] * v[:j])
            rem = float(left[j - 1])
            break
        pieces.append(before * v)
        rem = float(left[-1])
        k += chunk
        chunk *= 2
    atoms = np.concatenate(pieces)
    atoms = np.sort(atoms[atoms > 0])[::-1]
    return atoms, max(0.0, 1.0 - math.fsum(atoms))


def sample_pd_many(theta: float, alpha: float, size: int, eps: float | None = None,
                   rng: np.random.Generator | None = None) -> list[RankedMass]:
    rng = np.random.default_rng() if rng is None else rng
    return [sample_pd(theta, alpha, eps, rng) for _ in range(size)]


def sample_partition_from_mass(x: RankedMass, n: int, rng: np.random.Generator) -> Partition:
    """Partition induced by ``n`` independent picks from ``x``; dust picks are singletons."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    p = np.append(x.atoms, x.remainder)
    p = p / p.sum()
    counts = rng.multinomial(n, p)
    blocks = [int(c) for c in counts[:-1] if c > 0]
    blocks.extend([1] * int(counts[-1]))
    return Partition.from_blocks(blocks)


def posterior_sample(theta: float, alpha: float, eta: Partition, eps: float | None = None,
                     rng: np.random.Generator | None = None, method: str = "dirichlet") -> RankedMass:
    """Draw from the PD(theta, alpha) law tilted by ``p_eta``.

    ``method="dirichlet"``: the ``l`` blocks of ``eta`` get Dirichlet
    (eta_1 - alpha, ..., eta_l - alpha, theta + l alpha) masses and the last
    coordinate scales an independent PD(theta + l alpha, alpha) draw.
    ``method="rejection"``: PD(theta, alpha) proposals accepted with
    probability ``p_eta(y)``; exact in law but slow for rare shapes.
    """
    check_pd_parameters(theta, alpha)
    eps = default_eps(alpha) if eps is None else eps
    rng = np.random.default_rng() if rng is None else rng
    if method == "rejection":
        while True:
            y = sample_pd(theta, alpha, eps, rng)
            if rng.random() < p_eta(y, eta):
                return y
    if method != "dirichlet":
        raise ParameterError(f"unknown posterior method {method!r}")
    l = eta.length
    w = rng.dirichlet([p - alpha for p in eta.parts] + [theta + l * alpha])
    atoms = [w[:l]]
    rest = float(w[l])
    if rest >= eps:
        inner, _ = _stick_break(theta + l * alpha, alpha, eps / rest, rng)
        atoms.append(rest * inner)
    a = np.concatenate(atoms)
    a = np.sort(a[a > 0])[::-1]
    return RankedMass(a, max(0.0, 1.0 - math.fsum(a)))


# ---------------------------------------------------------------------------
# power sums and partition kernels


def power_sums(x: RankedMass, up_to: int) -> np.ndarray:
    """``p_k = sum_i x_i^k`` for ``k = 1..up_to``; dust enters ``p_1`` only."""
    if up_to < 1:
        raise ParameterError(f"up_to must be at least 1, got {up_to}")
    out = np.empty(up_to)
    out[0] = math.fsum(x.atoms) + x.remainder
    powered = x.atoms.copy()
    for k in range(1, up_to):
        powered = powered * x.atoms
        out[k] = powered.sum()
    return out


def power_sum_matrix(samples: Sequence[RankedMass], up_to: int) -> np.ndarray:
    """Row ``i`` holds :func:`power_sums` of ``samples[i]``."""
    return np.array([power_sums(x, up_to) for x in samples])


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in _set_partitions(rest):
        yield [[first]] + sub
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1:]


@lru_cache(maxsize=None)
def monomial_expansion(parts: tuple[int, ...]) -> tuple[tuple[float, tuple[int, ...]], ...]:
    """Augmented monomial of ``parts`` as ``sum coef * prod p_s`` over power sums.

    Mobius inversion on the lattice of set partitions of the parts: a block
    ``B`` contributes ``(-1)^{|B|-1} (|B|-1)!`` and the power sum of the
    summed part sizes.  Equal products are merged.
    """
    if len(parts) > MOBIUS_MAX_PARTS:
        raise ParameterError(f"expansion limited to {MOBIUS_MAX_PARTS} parts")
    acc: dict[tuple[int, ...], int] = {}
    for sp in _set_partitions(list(range(len(parts)))):
        coef = 1
        sums = []
        for block in sp:
            b = len(block)
            coef *= (-1) ** (b - 1) * math.factorial(b - 1)
            sums.append(sum(parts[j] for j in block))
        key = tuple(sorted(sums, reverse=True))
        acc[key] = acc.get(key, 0) + coef
    return tuple((float(c), k) for k, c in sorted(acc.items(), reverse=True) if c != 0)


def _augmented_monomial_dp(atoms: np.ndarray, remainder: float, parts: tuple[int, ...]) -> float:
    """Same quantity as the Mobius route, by assigning atoms to labelled parts one at a time."""
    sizes = sorted(set(parts), reverse=True)
    full = tuple(parts.count(s) for s in sizes)
    table = {full: 1.0}
    for a in atoms:
        new = dict(table)
        for state, val in table.items():
            for j, c in enumerate(state):
                if c:
                    nxt = state[:j] + (c - 1,) + state[j + 1:]
                    new[nxt] = new.get(nxt, 0.0) + val * c * a ** sizes[j]
        table = new
    one = sizes.index(1) if 1 in sizes else None
    total = 0.0
    for state, val in table.items():
        if all(c == 0 for j, c in enumerate(state) if j != one):
            s = state[one] if one is not None else 0
            total += val * remainder ** s
    return total


def p_eta_from_power_sums(P: np.ndarray, eta: Partition) -> np.ndarray:
    """Vectorised :func:`p_eta` given rows of power sums (column ``k-1`` is ``p_k``)."""
    P = np.atleast_2d(P)
    total = np.zeros(P.shape[0])
    for coef, key in monomial_expansion(eta.parts):
        term = np.full(P.shape[0], coef)
        for s in key:
            term = term * P[:, s - 1]
        total += term
    return np.clip(float(partition_prefactor(eta)) * total, 0.0, 1.0)


def p_eta(x: RankedMass, eta: Partition) -> float:
    """Probability that ``n = |eta|`` picks from ``x`` fall into blocks of shape ``eta``."""
    if eta.length <= MOBIUS_MAX_PARTS:
        return float(p_eta_from_power_sums(power_sums(x, eta.n)[None, :], eta)[0])
    mono = _augmented_monomial_dp(x.atoms, x.remainder, eta.parts)
    return float(np.clip(float(partition_prefactor(eta)) * mono, 0.0, 1.0))


def p_eta_dp(x: RankedMass, eta: Partition) -> float:
    """:func:`p_eta` through the atom-assignment recursion only."""
    mono = _augmented_monomial_dp(x.atoms, x.remainder, eta.parts)
    return float(np.clip(float(partition_prefactor(eta)) * mono, 0.0, 1.0))


# ---------------------------------------------------------------------------
# sampling-formula means


def esf_mean(theta: float, eta: Partition) -> float:
    """Ewens sampling formula: ``n! theta^l / (theta_(n) prod eta_j prod a_j!)``."""
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    log_val = (math.lgamma(eta.n + 1) + eta.length * math.log(theta)
               - rising_factorial(theta, eta.n).log_magnitude
               - sum(math.log(p) for p in eta.parts)
               - sum(math.lgamma(a + 1) for a in eta.multiplicities.values()))
    return math.exp(log_val)


def psf_mean(theta: float, alpha: float, eta: Partition) -> float:
    """Pitman sampling formula for the block shape ``eta`` under PD(theta, alpha)."""
    check_pd_parameters(theta, alpha)
    log_val = partition_prefactor(eta).log_magnitude
    log_val += sum(math.log(theta + i * alpha) for i in range(1, eta.length))
    log_val -= rising_factorial(theta + 1, eta.n - 1).log_magnitude
    log_val += sum(rising_factorial(1 - alpha, p - 1).log_magnitude for p in eta.parts)
    return math.exp(log_val)


def sampling_formula_mean(theta: float, alpha: float, eta: Partition) -> float:
    return esf_mean(theta, eta) if alpha == 0 else psf_mean(theta, alpha, eta)


# ---------------------------------------------------------------------------
# statistics on ranked masses

STATISTICS: dict[str, Callable[[RankedMass], float]] = {
    "phi2": lambda x: x.phi2,
    "y1": lambda x: x.top,
    "p3": lambda x: float(np.sum(x.atoms ** 3)),
}


def resolve_statistic(statistic) -> Callable[[RankedMass], float]:
    if callable(statistic):
        return statistic
    try:
        return STATISTICS[statistic]
    except KeyError:
        raise ParameterError(f"unknown statistic {statistic!r}; known: {sorted(STATISTICS)}") from None


def evaluate(samples: Sequence[RankedMass], statistic="phi2") -> np.ndarray:
    f = resolve_statistic(statistic)
    return np.array([f(x) for x in samples])
