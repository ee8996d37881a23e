"""Empirical checks of the ergodic inequalities.

Total variation between the transition law and its stationary law can only be
certified from below here.  Pushing both laws through a scalar statistic and
binning can only shrink TV (data processing), so a binned two-sample distance
is a lower bound up to sampling noise.  The measured value is compared with
the analytic upper bound ``(2+theta)(3+theta)/2 * exp(-(theta+1) t)``.  A pass
means the data are consistent with the inequality.  It says nothing about how
tight the bound is.

The plug-in binned distance is biased upward: two samples of ``10^4`` from
the same law sit about 0.031 apart on average with 30 bins.  Once the bound drops
below that floor (``t = 4`` at ``theta = 1``) the plug-in value alone would
"violate" a true inequality.  Certification therefore uses a debiased lower
bound: the plug-in value minus the 99% quantile of its permutation null,
floored at zero.

For the selection model only the shape of the decay is checked, since the
constant and the rate in the corresponding statement are existential.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import FitError, ParameterError
from .lod_coefficients import tail_upper
from .pd_measures import RankedMass, evaluate, resolve_statistic, sample_pd
from .transition import check_model_parameters, sample_transition
from .wf_sim import PathRecord, SimConfig, simulate_path

DEFAULT_BINS = 30
NULL_PERMUTATIONS = 200
NULL_QUANTILE = 0.99
CHUNK = 500


def _bin_edges(pooled: np.ndarray, bins: int) -> np.ndarray:
    qs = np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.unique(qs)


def _binned_tv(labels_a: np.ndarray, labels_b: np.ndarray, nbins: int) -> float:
    fa = np.bincount(labels_a, minlength=nbins) / labels_a.size
    fb = np.bincount(labels_b, minlength=nbins) / labels_b.size
    return 0.5 * float(np.abs(fa - fb).sum())


def _as_values(samples, statistic) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 1:
        return samples.astype(float)
    return evaluate(list(samples), resolve_statistic(statistic))


def tv_lower_bound(samples_a, samples_b, statistic="phi2", bins: int = DEFAULT_BINS) -> float:
    """Half the L1 distance between binned empirical laws of ``statistic``.

    Bin edges are equal-probability quantiles of the pooled values, so the
    result is symmetric in the two sets.  Either set may also be given as a
    1-d array of precomputed statistic values.
    """
    a = _as_values(samples_a, statistic)
    b = _as_values(samples_b, statistic)
    if a.size == 0 or b.size == 0:
        raise ParameterError("both sample sets must be nonempty")
    if bins < 2:
        raise ParameterError("need at least two bins")
    edges = _bin_edges(np.concatenate([a, b]), bins)
    la, lb = np.searchsorted(edges, a, side="right"), np.searchsorted(edges, b, side="right")
    if np.unique(np.concatenate([la, lb])).size < 2:
        warnings.warn("all values fall in one bin; TV lower bound is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return _binned_tv(la, lb, edges.size + 1)


def permutation_noise_floor(values_a: np.ndarray, values_b: np.ndarray, bins: int = DEFAULT_BINS,
                            permutations: int = NULL_PERMUTATIONS, quantile: float = NULL_QUANTILE,
                            rng: np.random.Generator | None = None) -> float:
    """Quantile of the binned distance when the pooled values are split at random."""
    rng = np.random.default_rng() if rng is None else rng
    pooled = np.concatenate([values_a, values_b])
    edges = _bin_edges(pooled, bins)
    if edges.size == 0:
        return 0.0
    labels = np.searchsorted(edges, pooled, side="right")
    nb = edges.size + 1
    na = values_a.size
    null = np.empty(permutations)
    for i in range(permutations):
        perm = rng.permutation(labels)
        null[i] = _binned_tv(perm[:na], perm[na:], nb)
    return float(np.quantile(null, quantile))


def bound_curve(theta: float, t_grid) -> np.ndarray:
    """``(2+theta)(3+theta)/2 * exp(-(theta+1) t)`` on the grid."""
    return np.array([tail_upper(theta, 2, float(t)) for t in t_grid])


def decay_rate_fit(t_grid, deviations, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Least-squares slope of ``log deviation`` against ``t``; returns ``(rate, r_squared)``.

    Nonpositive deviations and points outside ``window`` are dropped.
    """
    t = np.asarray(t_grid, dtype=float)
    y = np.asarray(deviations, dtype=float)
    if t.shape != y.shape:
        raise ParameterError("t_grid and deviations differ in length")
    keep = y > 0
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if keep.sum() < 4:
        raise FitError(f"only {int(keep.sum())} positive points in the fit window, need 4")
    fit = stats.linregress(t[keep], np.log(y[keep]))
    return float(-fit.slope), float(fit.rvalue ** 2)


@dataclass
class DecayReport:
    t_grid: np.ndarray
    tv_lower: np.ndarray
    bound: np.ndarray
    fitted_rate: float = math.nan
    fit_window: tuple[float, float] | None = None
    tv_plugin: np.ndarray | None = None
    noise_floor: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.tv_lower = np.asarray(self.tv_lower, dtype=float)
        self.bound = np.asarray(self.bound, dtype=float)
        if not (self.t_grid.shape == self.tv_lower.shape == self.bound.shape):
            raise ParameterError("t_grid, tv_lower and bound must have equal length")
        if np.any((self.tv_lower < 0) | (self.tv_lower > 1)):
            raise ParameterError("tv_lower entries must lie in [0, 1]")
        if np.any(self.bound <= 0):
            raise ParameterError("bound entries must be positive")

    @property
    def violations(self) -> np.ndarray:
        return self.tv_lower > self.bound

    @property
    def passed(self) -> bool:
        return not bool(self.violations.any())

    def rows(self):
        plug = self.tv_plugin if self.tv_plugin is not None else self.tv_lower
        floor = self.noise_floor if self.noise_floor is not None else np.zeros_like(self.tv_lower)
        for i, t in enumerate(self.t_grid):
            yield float(t), float(plug[i]), float(floor[i]), float(self.tv_lower[i]), float(self.bound[i])


def _chunk_values(task):
    kind, theta, alpha, x0, t, size, seed, statistic, eps = task
    rng = np.random.default_rng(seed)
    stat = resolve_statistic(statistic)
    if kind == "pd":
        return np.array([stat(sample_pd(theta, alpha, eps, rng)) for _ in range(size)])
    return np.array([stat(sample_transition(x0, theta, alpha, t, rng, eps).result) for _ in range(size)])


def replicate_values(kind: str, theta: float, alpha: float, x0: RankedMass | None, t: float, reps: int,
                     seed: int, statistic="phi2", eps: float | None = None, workers: int = 1) -> np.ndarray:
    """Statistic values of ``reps`` draws, generated in fixed-size seeded chunks.

    Chunk ``i`` uses the seed ``SeedSequence((seed, i))``, so the output does
    not depend on ``workers``.
    """
    if kind not in ("pd", "transition"):
        raise ParameterError(f"unknown replicate kind {kind!r}")
    sizes = [min(CHUNK, reps - s) for s in range(0, reps, CHUNK)]
    tasks = [(kind, theta, alpha, x0, t, size, np.random.SeedSequence((seed, i)), statistic, eps)
             for i, size in enumerate(sizes)]
    if workers <= 1 or len(tasks) == 1 or callable(statistic):
        parts = [_chunk_values(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_values, tasks))
    return np.concatenate(parts)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def certify_two_parameter(theta: float, alpha: float, x0: RankedMass, t_grid, reps: int,
                          rng: np.random.Generator, statistic="phi2", bins: int = DEFAULT_BINS,
                          eps: float | None = None, workers: int = 1,
                          min_reps: int = 1000) -> DecayReport:
    """Debiased binned TV between ``P(t, x0, .)`` and the stationary law, against the bound.

    Each grid time gets ``reps`` transition draws from ``x0`` and ``reps``
    fresh stationary draws.
    """
    check_model_parameters(theta, alpha)
    if reps < min_reps:
        raise ParameterError(f"reps must be at least {min_reps}, got {reps}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ParameterError("grid times must be positive")
    plug, floor, lower = [], [], []
    for t in t_grid:
        seed_a, seed_b = (int(s) for s in rng.integers(0, 2 ** 63, size=2))
        a = replicate_values("transition", theta, alpha, x0, float(t), reps, seed_a, statistic, eps, workers)
        b = replicate_values("pd", theta, alpha, None, float(t), reps, seed_b, statistic, eps, workers)
        tv = tv_lower_bound(a, b, bins=bins)
        noise = permutation_noise_floor(a, b, bins, rng=rng)
        plug.append(tv)
        floor.append(noise)
        lower.append(max(0.0, tv - noise))
    report = DecayReport(t_grid, np.array(lower), bound_curve(theta, t_grid),
                         tv_plugin=np.array(plug), noise_floor=np.array(floor),
                         meta={"theta": theta, "alpha": alpha, "reps": reps, "bins": bins,
                               "statistic": statistic if isinstance(statistic, str) else "custom"})
    try:
        report.fitted_rate, _ = decay_rate_fit(t_grid, report.tv_lower)
        report.fit_window = (float(t_grid.min()), float(t_grid.max()))
    except FitError:
        pass
    return report


@dataclass
class RelaxationFit:
    """Decay of ``|E phi_2(X_t) - target|`` along simulated paths."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    target: float
    rate: float
    r_squared: float
    fit_window: tuple[float, float]

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.mean - self.target)


def phi2_relaxation(cfg: SimConfig, target: float, window: tuple[float, float],
                    record: PathRecord | None = None) -> RelaxationFit:
    """Simulate (unless ``record`` is given) and fit the decay of ``E phi_2`` towards ``target``."""
    record = simulate_path(cfg, ("phi2",)) if record is None else record
    mean = record.mean("phi2")
    rate, r2 = decay_rate_fit(record.times, np.abs(mean - target), window)
    return RelaxationFit(record.times, mean, record.stderr("phi2"), target, rate, r2, window)
