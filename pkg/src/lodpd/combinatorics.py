"""Integer partitions, rising/falling factorials and sign-aware log-domain reals.

Factorial-scale numbers appearing in the lines-of-descent series overflow
double precision long before they cancel, so everything here returns a
:class:`LogReal` and callers convert to ``float`` at the very end.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

from .errors import LimitError, ParameterError

PARTITION_CAP = 30


@dataclass(frozen=True)
class LogReal:
    """A real number stored as ``sign * exp(log_magnitude)``.

    ``sign == 0`` is the only representation of zero (its log magnitude is
    ``-inf``).
    """

    sign: int
    log_magnitude: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_magnitude != -math.inf:
            object.__setattr__(self, "log_magnitude", -math.inf)
        if self.sign != 0 and math.isnan(self.log_magnitude):
            raise ValueError("log magnitude is NaN")

    @classmethod
    def zero(cls) -> "LogReal":
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> "LogReal":
        return cls(1, 0.0)

    @classmethod
    def from_float(cls, x: float) -> "LogReal":
        if x == 0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log_magnitude)
        except OverflowError:
            return self.sign * math.inf

    def to_float(self) -> float:
        return float(self)

    def _coerce(self, other) -> "LogReal":
        if isinstance(other, LogReal):
            return other
        return LogReal.from_float(float(other))

    def __mul__(self, other) -> "LogReal":
        other = self._coerce(other)
        if self.sign == 0 or other.sign == 0:
            return LogReal.zero()
        return LogReal(self.sign * other.sign, self.log_magnitude + other.log_magnitude)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogReal":
        other = self._coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("LogReal division by zero")
        if self.sign == 0:
            return LogReal.zero()
        return LogReal(self.sign * other.sign, self.log_magnitude - other.log_magnitude)

    def __neg__(self) -> "LogReal":
        return LogReal(-self.sign, self.log_magnitude)

    def __add__(self, other) -> "LogReal":
        other = self._coerce(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        big, small = (self, other) if self.log_magnitude >= other.log_magnitude else (other, self)
        delta = small.log_magnitude - big.log_magnitude
        if big.sign == small.sign:
            return LogReal(big.sign, big.log_magnitude + math.log1p(math.exp(delta)))
        if delta == 0.0:
            return LogReal.zero()
        return LogReal(big.sign, big.log_magnitude + math.log1p(-math.exp(delta)))

    __radd__ = __add__

    def __sub__(self, other) -> "LogReal":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LogReal":
        return self._coerce(other) - self

    def __pow__(self, k: int) -> "LogReal":
        if k == 0:
            return LogReal.one()
        if self.sign == 0:
            return LogReal.zero()
        return LogReal(self.sign ** (k % 2) if self.sign < 0 else 1, self.log_magnitude * k)

    def isclose(self, other, rel_tol: float = 1e-12) -> bool:
        """Relative comparison carried out on log magnitudes."""
        other = self._coerce(other)
        if self.sign != other.sign:
            return False
        if self.sign == 0:
            return True
        return abs(self.log_magnitude - other.log_magnitude) <= rel_tol * max(1.0, abs(self.log_magnitude))


def rising_factorial(x: float, n: int) -> LogReal:
    """``x (x+1) ... (x+n-1)``, one for ``n == 0``."""
    if n < 0:
        raise ParameterError(f"n must be nonnegative, got {n}")
    if n == 0:
        return LogReal.one()
    if x > 0:
        return LogReal(1, math.lgamma(x + n) - math.lgamma(x))
    sign = 1
    log_mag = 0.0
    for k in range(n):
        f = x + k
        if f == 0:
            return LogReal.zero()
        if f > 0:
            # remaining factors are all positive
            log_mag += math.lgamma(x + n) - math.lgamma(f)
            break
        sign = -sign
        log_mag += math.log(-f)
    return LogReal(sign, log_mag)


def falling_factorial(x: float, n: int) -> LogReal:
    """``x (x-1) ... (x-n+1)``, one for ``n == 0``."""
    if n < 0:
        raise ParameterError(f"n must be nonnegative, got {n}")
    if n == 0:
        return LogReal.one()
    if x - n + 1 > 0:
        return LogReal(1, math.lgamma(x + 1) - math.lgamma(x - n + 1))
    r = rising_factorial(-x, n)
    return -r if n % 2 else r


def log_binomial(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class Partition:
    """An integer partition, parts stored in decreasing order."""

    parts: tuple[int, ...]
    _mult: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts:
            raise ParameterError("a partition needs at least one part")
        if any(p <= 0 for p in parts):
            raise ParameterError(f"parts must be positive: {parts}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise ParameterError(f"parts must be non-increasing: {parts}")
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "_mult", tuple(sorted(Counter(parts).items())))

    @classmethod
    def from_blocks(cls, sizes) -> "Partition":
        """Build from block sizes in any order."""
        return cls(tuple(sorted((int(s) for s in sizes), reverse=True)))

    @property
    def n(self) -> int:
        return sum(self.parts)

    @property
    def length(self) -> int:
        return len(self.parts)

    @property
    def multiplicities(self) -> dict[int, int]:
        """Map ``j -> a_j``, the number of parts equal to ``j``."""
        return dict(self._mult)

    def __iter__(self) -> Iterator[int]:
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __str__(self) -> str:
        return "(" + ",".join(map(str, self.parts)) + ")"


@lru_cache(maxsize=None)
def _partition_tuples(n: int, max_part: int) -> tuple[tuple[int, ...], ...]:
    if n == 0:
        return ((),)
    out = []
    for first in range(min(n, max_part), 0, -1):
        for rest in _partition_tuples(n - first, first):
            out.append((first,) + rest)
    return tuple(out)


def partitions_of(n: int, cap: int = PARTITION_CAP) -> list[Partition]:
    """All partitions of ``n`` in reverse-lexicographic order of parts."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    if n > cap:
        raise LimitError(f"partitions of {n} requested but the cap is {cap}")
    return [Partition(p) for p in _partition_tuples(n, n)]


def partition_prefactor(eta: Partition) -> LogReal:
    """``n! / (prod eta_j! * prod a_j!)``: number of set partitions of shape eta."""
    log_val = math.lgamma(eta.n + 1)
    log_val -= sum(math.lgamma(p + 1) for p in eta.parts)
    log_val -= sum(math.lgamma(a + 1) for a in eta.multiplicities.values())
    return LogReal(1, log_val)
