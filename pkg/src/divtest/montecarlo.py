"""Seeded simulation of divergence statistics and test errors.

Randomness is derived from ``SeedSequence([seed, stream, chunk_index])``:
draws under P and under Q use separate streams, and every chunk of
``CHUNK`` samples has its own generator.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import genchisq
from .asymptotics import local_eigenvalues
from .divergences import DivergenceSpec, evaluate, hessian_matrix
from .errors import DomainError
from .simplex import Distribution, TypeDistribution

CHUNK = 20_000
PROBE_POINTS = 200


@dataclass(frozen=True)
class SimulationReport:
    n: int
    samples: int
    seed: int
    statistic: str
    probes: list = field(default_factory=list)
    empirical_tail: list = field(default_factory=list)
    reference_tail: list = field(default_factory=list)
    reference: Optional[dict] = None
    ks_distance: Optional[float] = None
    mean_statistic: Optional[float] = None
    alpha_hat: Optional[float] = None
    alpha_ci: Optional[tuple] = None
    beta_hat: Optional[float] = None
    beta_ci: Optional[tuple] = None
    threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def probes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["probe", "empirical_tail", "reference_tail"])
        for row in zip(self.probes, self.empirical_tail, self.reference_tail):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _rng(seed: int, chunk: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, chunk]))


def sample_counts(P: Distribution, n: int, samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """``samples`` multinomial count vectors, drawn chunk by chunk with derived seeds."""
    if n < 1 or samples < 1:
        raise DomainError("n and samples must be >= 1")
    out = np.empty((samples, P.k), dtype=np.int64)
    for i, start in enumerate(range(0, samples, CHUNK)):
        stop = min(start + CHUNK, samples)
        out[start:stop] = _rng(seed, i, stream).multinomial(n, P.probs, size=stop - start)
    return out


def sample_type(P: Distribution, n: int, seed: int) -> TypeDistribution:
    return TypeDistribution(sample_counts(P, n, 1, seed)[0])


def limit_law(D: DivergenceSpec, P: Distribution) -> genchisq.GenChiSq:
    """Limiting law of ``n D(T_n || P)`` under ``P``."""
    return genchisq.from_eigenvalues(local_eigenvalues(hessian_matrix(D, P), P))


def statistic_convergence(
    D: DivergenceSpec,
    P: Distribution,
    n: int,
    samples: int,
    seed: int,
    reference: genchisq.GenChiSq | None = None,
) -> SimulationReport:
    """Compare the empirical tail of ``n D(T_n || P)`` with its limit law.

    Probes sit at the reference quantiles ``0.5/200, ..., 199.5/200``;
    ``ks_distance`` is the largest tail gap over them.  ``reference``
    overrides the limit law (negative controls).
    """
    if samples < 10_000:
        raise DomainError("need at least 10^4 samples")
    ref = limit_law(D, P) if reference is None else reference
    counts = sample_counts(P, n, samples, seed)
    stat = np.sort(n * evaluate(D, counts / n, P))
    levels = (np.arange(PROBE_POINTS) + 0.5) / PROBE_POINTS
    probes = np.array([genchisq.inverse_tail(ref, e) for e in levels])
    emp = 1.0 - np.searchsorted(stat, probes, side="left") / samples
    ref_tail = genchisq.tail(ref, probes)
    return SimulationReport(
        n=n,
        samples=samples,
        seed=seed,
        statistic=f"n*{D.name}",
        probes=probes.tolist(),
        empirical_tail=emp.tolist(),
        reference_tail=np.asarray(ref_tail).tolist(),
        reference=ref.to_dict(),
        ks_distance=float(np.abs(emp - ref_tail).max()),
        mean_statistic=float(stat.mean()),
    )


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_errors(
    D: DivergenceSpec, r: float, P: Distribution, Q: Distribution, n: int, samples: int, seed: int
) -> SimulationReport:
    """Monte Carlo type-I/II errors of ``accept iff D(T_n || P) < r``."""
    if samples < 1000:
        raise DomainError("need at least 10^3 samples")
    sp = evaluate(D, sample_counts(P, n, samples, seed) / n, P)
    sq = evaluate(D, sample_counts(Q, n, samples, seed, stream=1) / n, P)
    k_alpha = int(np.count_nonzero(sp >= r))
    k_beta = int(np.count_nonzero(sq < r))
    return SimulationReport(
        n=n,
        samples=samples,
        seed=seed,
        statistic=D.name,
        alpha_hat=k_alpha / samples,
        alpha_ci=wilson_interval(k_alpha, samples),
        beta_hat=k_beta / samples,
        beta_ci=wilson_interval(k_beta, samples),
        threshold=float(r),
    )
