"""Exact finite-n error probabilities by enumerating types, plus the ellipsoid
minimizer and lattice rounding used to reason about the optimal acceptance set.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np
from scipy.special import gammaln, xlogy

from .divergences import DivergenceSpec, evaluate
from .errors import DomainError, InfeasibleRounding, NotPositiveDefinite, RadiusTooLarge, SizeLimit
from .simplex import Distribution, TypeDistribution

DEFAULT_ENUM_CAP = 10**8
TIE_RTOL = 1e-12


def enumeration_cap() -> int:
    raw = os.environ.get("DIVTEST_ENUM_CAP")
    return int(float(raw)) if raw else DEFAULT_ENUM_CAP


def type_count(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def _check_size(n: int, k: int, cap: Optional[int]) -> None:
    if n < 1 or k < 2:
        raise DomainError(f"need n >= 1 and k >= 2, got n={n}, k={k}")
    cap = enumeration_cap() if cap is None else cap
    count = type_count(n, k)
    if count > cap:
        raise SizeLimit(f"{count} types for n={n}, k={k} exceeds the cap of {cap}")


@lru_cache(maxsize=64)
def _compositions(m: int, parts: int) -> np.ndarray:
    """All compositions of ``m`` into ``parts`` nonnegative parts, lexicographically descending."""
    if parts == 1:
        return np.array([[m]], dtype=np.int64)
    if parts == 2:
        j = np.arange(m + 1, dtype=np.int64)
        return np.column_stack([m - j, j])
    blocks = []
    for first in range(m, -1, -1):
        rest = _compositions(m - first, parts - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def iter_type_chunks(n: int, k: int, cap: Optional[int] = None) -> Iterator[np.ndarray]:
    """Count arrays of shape (N, k), one chunk per value of the first count."""
    _check_size(n, k, cap)
    for first in range(n, -1, -1):
        rest = _compositions(n - first, k - 1)
        yield np.column_stack([np.full(len(rest), first, dtype=np.int64), rest])
    _compositions.cache_clear()


def enumerate_types(n: int, k: int, cap: Optional[int] = None) -> Iterator[TypeDistribution]:
    for chunk in iter_type_chunks(n, k, cap):
        for row in chunk:
            yield TypeDistribution(row)


def log_type_probs(counts: np.ndarray, R: Distribution) -> np.ndarray:
    """Vectorized log-probability of the type classes in ``counts`` under ``R^n``."""
    counts = np.asarray(counts)
    n = counts.sum(axis=-1)
    return gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1) + xlogy(counts, R.probs).sum(axis=-1)


def type_log_prob(T: TypeDistribution, R: Distribution) -> float:
    """Exact log-probability of the type class of ``T`` under ``R^n``."""
    return float(log_type_probs(T.counts, R))


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """Deterministic tests of one family at sample size ``n``.

    Points are ordered by growing acceptance region, so ``alpha`` is
    nonincreasing and ``beta`` nondecreasing.  For divergence tests
    (accept iff statistic < r) that is ascending ``r``; for the NP test
    (accept iff log-likelihood ratio >= t) it is descending ``t``.
    """

    test: str
    n: int
    thresholds: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    ln_alpha: Optional[np.ndarray] = None
    ln_beta: Optional[np.ndarray] = None

    def __post_init__(self):
        with np.errstate(divide="ignore"):
            if self.ln_alpha is None:
                object.__setattr__(self, "ln_alpha", np.log(self.alpha))
            if self.ln_beta is None:
                object.__setattr__(self, "ln_beta", np.log(self.beta))

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.alpha.tolist(), self.beta.tolist()))

    def __len__(self):
        return self.thresholds.size

    def best_index(self, alpha: float) -> int:
        """Point with the smallest type-II error among those with type-I error <= ``alpha``."""
        ok = np.nonzero(self.alpha <= alpha * (1 + 1e-12))[0]
        return int(ok[0]) if ok.size else len(self) - 1

    def best_beta(self, alpha: float) -> float:
        return float(self.beta[self.best_index(alpha)])

    def best_ln_beta(self, alpha: float) -> float:
        return float(self.ln_beta[self.best_index(alpha)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "alpha", "beta", "ln_alpha", "ln_beta"])
        for row in zip(self.thresholds, self.alpha, self.beta, self.ln_alpha, self.ln_beta):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, test: str = "", n: int = 0) -> "TradeoffCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda name: np.array([float(r[name]) for r in rows])
        return cls(test, n, col("threshold"), col("alpha"), col("beta"), col("ln_alpha"), col("ln_beta"))


@dataclass(frozen=True)
class _Masses:
    """Per-group probability masses, kept both linearly and as logs."""

    lin: np.ndarray
    log: np.ndarray

    def suffix(self):
        """``sum_{i >= j}`` for every ``j``, plus a trailing empty sum."""
        lin = np.concatenate([np.cumsum(self.lin[::-1])[::-1], [0.0]])
        log = np.concatenate([np.logaddexp.accumulate(self.log[::-1])[::-1], [-np.inf]])
        return lin, _prefer_linear(lin, log)

    def prefix(self):
        """``sum_{i < j}`` for every ``j``, including the leading empty sum."""
        lin = np.concatenate([[0.0], np.cumsum(self.lin)])
        log = np.concatenate([[-np.inf], np.logaddexp.accumulate(self.log)])
        return lin, _prefer_linear(lin, log)


def _prefer_linear(lin: np.ndarray, log: np.ndarray) -> np.ndarray:
    # linear sums are exact to rounding; logs only take over once they underflow
    with np.errstate(divide="ignore"):
        return np.where(lin > 1e-250, np.log(np.maximum(lin, 1e-300)), log)


def _sweep(stat: np.ndarray, lp: np.ndarray, lq: np.ndarray):
    """Sort by statistic, group ties, and sum masses per group."""
    order = np.argsort(stat, kind="stable")
    s, lp, lq = stat[order], lp[order], lq[order]
    gap = np.diff(s) > TIE_RTOL * np.maximum(1.0, np.abs(s[1:]))
    starts = np.concatenate([[0], np.nonzero(gap)[0] + 1])
    group = lambda lm: _Masses(np.add.reduceat(np.exp(lm), starts), np.logaddexp.reduceat(lm, starts))
    return s[starts], group(lp), group(lq)


def _collect(D: DivergenceSpec | None, P: Distribution, Q: Distribution | None, n: int, workers: int, cap):
    """Per-type statistic with log P- and Q-masses; D=None means the NP log-likelihood ratio."""
    chunks = list(iter_type_chunks(n, P.k, cap))
    llr = None if Q is None else np.log(P.probs) - np.log(Q.probs)

    def work(counts):
        if D is None:
            stat = counts @ llr
        else:
            stat = evaluate(D, counts / n, P)
        stat = np.atleast_1d(stat)
        lp = log_type_probs(counts, P)
        lq = log_type_probs(counts, Q) if Q is not None else np.full_like(lp, -np.inf)
        return stat, lp, lq

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    # fixed chunk order keeps the reduction bit-stable regardless of workers
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def divergence_tradeoff_curve(
    D: DivergenceSpec, P: Distribution, Q: Distribution, n: int, workers: int = 1, cap: Optional[int] = None
) -> TradeoffCurve:
    """Exact (alpha, beta) of ``accept iff D(T||P) < r`` at every distinct breakpoint ``r``."""
    stat, pm, qm = _collect(D, P, Q, n, workers, cap)
    s, gp, gq = _sweep(stat, pm, qm)
    # alpha(r = s_j) = P(stat >= s_j): suffix sums avoid 1 - x cancellation in deep tails
    alpha, ln_alpha = gp.suffix()
    beta, ln_beta = gq.prefix()
    thresholds = np.concatenate([s, [np.inf]])
    return _curve(D.name, n, thresholds, alpha, beta, ln_alpha, ln_beta)


def _curve(test, n, thresholds, alpha, beta, ln_alpha, ln_beta) -> TradeoffCurve:
    return TradeoffCurve(
        test, n, thresholds, np.minimum(alpha, 1.0), np.minimum(beta, 1.0), np.minimum(ln_alpha, 0.0), np.minimum(ln_beta, 0.0)
    )


def np_tradeoff_curve(P: Distribution, Q: Distribution, n: int, workers: int = 1, cap: Optional[int] = None) -> TradeoffCurve:
    """Exact (alpha, beta) of the deterministic likelihood-ratio tests ``accept iff LLR >= t``."""
    stat, pm, qm = _collect(None, P, Q, n, workers, cap)
    s, gp, gq = _sweep(-stat, pm, qm)
    # point j + 1 accepts groups 0..j, i.e. every LLR >= -s_j
    alpha, ln_alpha = gp.suffix()
    beta, ln_beta = gq.prefix()
    thresholds = np.concatenate([[np.inf], -s])
    return _curve("np", n, thresholds, alpha, beta, ln_alpha, ln_beta)


@dataclass(frozen=True)
class Calibration:
    """Smallest threshold meeting the type-I constraint.

    ``threshold`` is the infimum ``s_j`` of ``{r : alpha(r) <= eps}``; it is
    not attained, ``alpha`` is the error for every ``r`` in ``(s_j, s_{j+1}]``
    and ``alpha_at_threshold = P(stat >= s_j) > eps``.
    """

    threshold: float
    alpha: float
    alpha_at_threshold: float


def calibrate_threshold(
    D: DivergenceSpec, P: Distribution, n: int, eps: float, workers: int = 1, cap: Optional[int] = None
) -> Calibration:
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    stat, lp, lq = _collect(D, P, None, n, workers, cap)
    s, gp, _ = _sweep(stat, lp, lq)
    at_or_above, _ = gp.suffix()
    above = at_or_above[1:]  # P(stat > s_j)
    j = int(np.nonzero(above <= eps)[0][0])
    return Calibration(float(s[j]), float(above[j]), float(at_or_above[j]))


@dataclass(frozen=True)
class KKTSolution:
    gamma_star: Distribution
    x_star: np.ndarray
    ell_value: float
    radius: float
    multiplier: float
    b: np.ndarray
    psi: float
    tau: float

    def to_dict(self) -> dict:
        return {
            "gamma_star": self.gamma_star.probs.tolist(),
            "x_star": self.x_star.tolist(),
            "ell_value": self.ell_value,
            "radius": self.radius,
            "multiplier": self.multiplier,
            "b": self.b.tolist(),
            "psi": self.psi,
            "tau": self.tau,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def ellipsoid_constants(A: np.ndarray, c: np.ndarray, P: Distribution) -> tuple[np.ndarray, float, float]:
    """``b = A^{-1} c``, ``psi = min P`` and ``tau = max(tau1, tau2)``."""
    b = np.linalg.solve(A, c)
    psi = float(P.probs.min())
    tau1 = -float(b.sum()) if b.sum() < 0 else 0.0
    pos = b[b > 0]
    tau2 = float(pos.max()) if pos.size else 0.0
    return b, psi, max(tau1, tau2)


def kkt_minimizer(A: np.ndarray, c: np.ndarray, radius: float, P: Distribution) -> KKTSolution:
    """Minimize ``c^T (Gamma - P)`` over ``(Gamma - P)^T A (Gamma - P) <= radius``."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("A is not positive definite") from None
    if not np.any(c != 0):
        raise DomainError("c must be nonzero")
    if not radius > 0:
        raise DomainError(f"radius must be > 0, got {radius}")
    b, psi, tau = ellipsoid_constants(A, c, P)
    quad = float(c @ b)
    limit = psi / tau * math.sqrt(quad)
    if not math.sqrt(radius) < limit:
        raise RadiusTooLarge(f"sqrt(radius) = {math.sqrt(radius):.4g} must be < psi/tau*sqrt(c'A^-1c) = {limit:.4g}")
    x = -math.sqrt(radius) * b / math.sqrt(quad)
    x_full = np.append(x, -x.sum())
    gamma = P.probs + x_full
    return KKTSolution(
        gamma_star=Distribution(gamma / gamma.sum()),
        x_star=x_full,
        ell_value=-math.sqrt(radius) * math.sqrt(quad),
        radius=float(radius),
        multiplier=math.sqrt(quad) / (2.0 * math.sqrt(radius)),
        b=b,
        psi=psi,
        tau=tau,
    )


def default_alpha_bar(A: np.ndarray, radius: float, n: int) -> float:
    """Shrink factor ``2 lambda_max (k-1) / (M n)`` with ``M = n * radius``."""
    lam_max = float(np.linalg.eigvalsh(A).max())
    return 2.0 * lam_max * A.shape[0] / (n * n * radius)


def nearest_feasible_type(
    gamma_star: Distribution,
    x_star: np.ndarray,
    A: np.ndarray,
    P: Distribution,
    n: int,
    alpha_bar: Optional[float] = None,
) -> TypeDistribution:
    """Round the shrunk minimizer ``P + (1 - alpha_bar) x*`` to a lattice type inside the ellipsoid.

    Coordinate ``i`` is floored where ``(A x*)_i > 0`` and ceiled otherwise;
    the last count absorbs the remainder.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    x = np.asarray(x_star, dtype=float)[:m]
    if not np.allclose(gamma_star.coords, P.coords + x, atol=1e-12):
        raise DomainError("gamma_star and x_star are inconsistent")
    radius = float(x @ A @ x)
    if alpha_bar is None:
        alpha_bar = default_alpha_bar(A, radius, n)
    if not 0.0 < alpha_bar < 1.0:
        raise InfeasibleRounding(f"alpha_bar = {alpha_bar:.4g} is outside (0, 1) at n={n}; increase n")
    target = n * (P.coords + (1.0 - alpha_bar) * x)
    grad = A @ x
    counts = np.where(grad > 0, np.floor(target), np.ceil(target)).astype(np.int64)
    counts = np.append(counts, n - counts.sum())
    if np.any(counts < 1):
        raise InfeasibleRounding(f"rounded counts {counts.tolist()} are not all positive at n={n}")
    d = counts[:-1] / n - P.coords
    if d @ A @ d > radius:
        raise InfeasibleRounding(f"rounded type leaves the ellipsoid at n={n}: {d @ A @ d:.6g} > {radius:.6g}")
    return TypeDistribution(counts)
