"""Distributions on a finite alphabet and the Fisher-metric quantities built on them.

Coordinates follow a fixed chart: a distribution ``(p_1, ..., p_k)`` is
represented by its first ``k - 1`` entries, the last entry being
``1 - sum``.  Every matrix in the package lives in that chart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatch, NonPositiveEntry, NotNormalized

INPUT_TOL = 1e-9
INVARIANT_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Distribution:
    """Strictly positive probability vector."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DimensionMismatch(f"need a 1-D vector of length >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise NonPositiveEntry(f"all entries must be > 0, got {p.tolist()}")
        if abs(p.sum() - 1.0) > INVARIANT_TOL:
            raise NotNormalized(f"entries sum to {p.sum()!r}")
        object.__setattr__(self, "probs", _readonly(p))

    @property
    def k(self) -> int:
        return self.probs.size

    @property
    def coords(self) -> np.ndarray:
        return self.probs[:-1]

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.k == other.k and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"Distribution({self.probs.tolist()})"

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Distribution":
        return make_distribution(json.loads(text))

    @classmethod
    def from_coords(cls, coords: Sequence[float]) -> "Distribution":
        x = np.asarray(coords, dtype=float)
        return make_distribution(np.append(x, 1.0 - x.sum()))


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """Empirical distribution of a length-``n`` sequence (zero counts allowed)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts)
        if c.ndim != 1 or c.size < 2:
            raise DimensionMismatch(f"need a 1-D count vector of length >= 2, got shape {c.shape}")
        if not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0):
            raise NonPositiveEntry(f"counts must be nonnegative integers, got {c.tolist()}")
        c = c.astype(np.int64)
        if c.sum() < 1:
            raise DimensionMismatch("a type needs n >= 1")
        object.__setattr__(self, "counts", _readonly(c))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return self.counts.size

    @property
    def freqs(self) -> np.ndarray:
        return self.counts / self.n

    def exact_freqs(self) -> list[Fraction]:
        return [Fraction(int(c), self.n) for c in self.counts]

    def __eq__(self, other):
        if not isinstance(other, TypeDistribution):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash(self.counts.tobytes())

    def __repr__(self):
        return f"TypeDistribution({self.counts.tolist()})"


DistLike = Union[Distribution, TypeDistribution]


def make_distribution(values: Sequence[float]) -> Distribution:
    """Validate ``values`` as a positive probability vector.

    Sums within ``1e-9`` of one are renormalized; anything further off is
    rejected rather than silently fixed.
    """
    p = np.asarray(values, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise DimensionMismatch(f"need at least two entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise NonPositiveEntry(f"all entries must be > 0, got {p.tolist()}")
    s = p.sum()
    if abs(s - 1.0) > INPUT_TOL:
        raise NotNormalized(f"entries sum to {s!r}, off by more than {INPUT_TOL}")
    # literals like (0.6, 0.3, 0.1) already meet the invariant; keep them verbatim
    return Distribution(p if abs(s - 1.0) <= INVARIANT_TOL else p / s)


def as_probs(T: DistLike | np.ndarray) -> np.ndarray:
    if isinstance(T, Distribution):
        return T.probs
    if isinstance(T, TypeDistribution):
        return T.freqs
    return np.asarray(T, dtype=float)


def _check_same_k(*dists) -> int:
    ks = {as_probs(d).shape[-1] for d in dists}
    if len(ks) != 1:
        raise DimensionMismatch(f"alphabet sizes differ: {sorted(ks)}")
    return ks.pop()


def fisher_matrix(P: Distribution) -> np.ndarray:
    """Fisher information matrix in the (k-1)-coordinate chart."""
    p = P.probs
    m = np.full((p.size - 1, p.size - 1), 1.0 / p[-1])
    m[np.diag_indices_from(m)] += 1.0 / p[:-1]
    return m


def fisher_inverse(P: Distribution) -> np.ndarray:
    """Closed-form inverse of :func:`fisher_matrix` (the multinomial covariance)."""
    x = P.coords
    return np.diag(x) - np.outer(x, x)


def kl_divergence(T: DistLike | np.ndarray, Q: Distribution) -> float | np.ndarray:
    """KL divergence ``D(T || Q)``, with ``0 ln 0 = 0`` for boundary types.

    ``T`` may also be a 2-D array whose rows are frequency vectors; the
    result is then one value per row.
    """
    t = as_probs(T)
    _check_same_k(t, Q)
    q = Q.probs
    val = np.sum(xlogy(t, t) - xlogy(t, q), axis=-1)
    # rounding can leave tiny negatives at T == Q
    val = np.maximum(val, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def kl_variance(P: Distribution, Q: Distribution) -> float:
    _check_same_k(P, Q)
    lr = np.log(P.probs) - np.log(Q.probs)
    mean = P.probs @ lr
    return float(max(P.probs @ (lr - mean) ** 2, 0.0))


def tilt_vector(P: Distribution, Q: Distribution) -> np.ndarray:
    """Log-likelihood-ratio differences against the last symbol."""
    _check_same_k(P, Q)
    lr = np.log(P.probs) - np.log(Q.probs)
    return lr[:-1] - lr[-1]


def random_distribution(rng: np.random.Generator, k: int, floor: float = 0.0) -> Distribution:
    """Dirichlet(1) draw mixed with ``floor`` mass spread uniformly; handy for tests and sweeps."""
    p = rng.dirichlet(np.ones(k))
    p = (1.0 - floor) * p + floor / k
    return make_distribution(p / p.sum())
