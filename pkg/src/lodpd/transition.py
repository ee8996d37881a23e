"""Exact transition draws and truncated densities for the neutral and two-parameter diffusions.

The transition law started from ``x`` is a mixture over the number ``N`` of
surviving lines of descent, ``N ~ d(t)``.  With zero or one line the new
state is a fresh stationary draw; with ``N >= 2`` lines an ``N``-sample from
``x`` fixes a block shape ``eta`` and the new state is drawn from the
stationary law tilted by ``p_eta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .combinatorics import PARTITION_CAP, Partition, partitions_of
from .errors import LimitError, ParameterError
from .lod_coefficients import LodCoefficients, d_vector, tail_upper
from .pd_measures import (
    RankedMass,
    check_pd_parameters,
    p_eta,
    posterior_sample,
    sample_partition_from_mass,
    sample_pd,
    sampling_formula_mean,
)

COEFFICIENT_TOL = 1e-12


def check_model_parameters(theta: float, alpha: float) -> None:
    if alpha == 0 and not theta > 0:
        raise ParameterError(f"the neutral model needs theta > 0, got {theta}")
    check_pd_parameters(theta, alpha)


@dataclass(frozen=True)
class TransitionSampleRecord:
    start: RankedMass
    theta: float
    alpha: float
    t: float
    chosen_n: int
    eta: Partition | None
    result: RankedMass

    def __post_init__(self):
        if self.chosen_n < 0:
            raise ValueError("chosen_n must be nonnegative")
        if (self.eta is not None) != (self.chosen_n >= 2):
            raise ValueError("eta must be present exactly when chosen_n >= 2")

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "alpha": self.alpha,
            "t": self.t,
            "start": {"atoms": self.start.atoms.tolist(), "remainder": self.start.remainder},
            "chosen_n": self.chosen_n,
            "eta": list(self.eta.parts) if self.eta is not None else None,
            "result": {"atoms": self.result.atoms.tolist(), "remainder": self.result.remainder},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionSampleRecord":
        return cls(
            start=RankedMass(d["start"]["atoms"], d["start"]["remainder"]),
            theta=d["theta"], alpha=d["alpha"], t=d["t"], chosen_n=d["chosen_n"],
            eta=Partition(tuple(d["eta"])) if d["eta"] is not None else None,
            result=RankedMass(d["result"]["atoms"], d["result"]["remainder"]),
        )


def _draw_line_count(coeffs: LodCoefficients, rng) -> int | None:
    cdf = np.cumsum(coeffs.d)
    u = rng.random()
    k = int(np.searchsorted(cdf, u, side="right"))
    return k if k <= coeffs.truncation_N else None


def draw_line_count(theta: float, t: float, rng, tol: float = COEFFICIENT_TOL) -> int:
    """Sample ``N ~ d(t)`` by inverse CDF, deepening the truncation on overflow."""
    while True:
        n = _draw_line_count(d_vector(theta, t, tol), rng)
        if n is not None:
            return n
        tol /= 1000
        if tol < 1e-300:
            raise ParameterError("line-count truncation could not be deepened further")


def sample_transition(x: RankedMass, theta: float, alpha: float, t: float,
                      rng: np.random.Generator, eps: float | None = None,
                      posterior_method: str = "dirichlet") -> TransitionSampleRecord:
    """Draw ``y ~ P(t, x, .)`` exactly (up to stick-breaking dust ``eps``)."""
    check_model_parameters(theta, alpha)
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    n = draw_line_count(theta, t, rng)
    if n <= 1:
        return TransitionSampleRecord(x, theta, alpha, t, n, None, sample_pd(theta, alpha, eps, rng))
    eta = sample_partition_from_mass(x, n, rng)
    y = posterior_sample(theta, alpha, eta, eps, rng, method=posterior_method)
    return TransitionSampleRecord(x, theta, alpha, t, n, eta, y)


def sample_transitions(x: RankedMass, theta: float, alpha: float, t: float, size: int,
                       rng: np.random.Generator, eps: float | None = None) -> list[TransitionSampleRecord]:
    return [sample_transition(x, theta, alpha, t, rng, eps) for _ in range(size)]


def chain_transitions(x: RankedMass, theta: float, alpha: float, times, rng,
                      eps: float | None = None) -> RankedMass:
    """Apply successive transitions of the given durations starting from ``x``."""
    for t in times:
        x = sample_transition(x, theta, alpha, t, rng, eps).result
    return x


@dataclass(frozen=True)
class DensityEstimate:
    """Truncated density value and the certified bound on the dropped coefficient mass.

    The bound covers ``sum_{n > N_max} d_n`` only; the kernels multiplying
    those coefficients are unbounded, so ``value`` is a diagnostic and not a
    normalised density.
    """

    value: float
    coefficient_tail: float


def density_truncated(t: float, x: RankedMass, y: RankedMass, theta: float, alpha: float,
                      N_max: int) -> DensityEstimate:
    """``d_0 + d_1 + sum_{n=2}^{N_max} d_n sum_{|eta|=n} p_eta(x) p_eta(y) / E p_eta``."""
    check_model_parameters(theta, alpha)
    if N_max > PARTITION_CAP:
        raise LimitError(f"N_max={N_max} exceeds the partition cap {PARTITION_CAP}")
    if N_max < 1:
        raise ParameterError("N_max must be at least 1")
    coeffs = d_vector(theta, t, COEFFICIENT_TOL)
    d = coeffs.d
    dk = lambda k: float(d[k]) if k <= coeffs.truncation_N else 0.0  # noqa: E731
    total = dk(0) + dk(1)
    for n in range(2, N_max + 1):
        w = dk(n)
        if w == 0.0:
            continue
        kernel = math.fsum(
            p_eta(x, eta) * p_eta(y, eta) / sampling_formula_mean(theta, alpha, eta)
            for eta in partitions_of(n)
        )
        total += w * kernel
    return DensityEstimate(total, tail_upper(theta, N_max + 1, t))
