"""Divergence families, their local quadratic behaviour, and invariance checks.

A divergence here is any smooth ``D(T || R)`` that is nonnegative, vanishes
only at ``T == R`` and has a positive definite Hessian there.  The matrix
``A`` associated with ``D`` at ``P`` is half the Hessian of ``T -> D(T || P)``
at ``T == P``, taken in the (k-1)-coordinate chart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

from .errors import (
    BoundaryEvaluation,
    DimensionMismatch,
    DomainError,
    NotPositiveDefinite,
    StepTooLarge,
)
from .simplex import Distribution, as_probs, fisher_matrix, kl_divergence

FAMILIES = (
    "kl",
    "chi2",
    "alpha",
    "renyi",
    "f",
    "mahalanobis_paper",
    "mahalanobis_custom",
    "bregman_quadratic",
)

DEFAULT_STEP = 1e-4


@dataclass(frozen=True)
class DivergenceSpec:
    """A named divergence family plus whatever parameters it needs.

    Build these through the module-level constructors (:func:`kl`,
    :func:`renyi`, ...) rather than directly.
    """

    family: str
    param: Optional[float] = None
    weights: Optional[tuple] = None
    f: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    f2_at_1: Optional[float] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown divergence family {self.family!r}")
        if self.family == "renyi":
            if self.param is None or not self.param > 0 or self.param == 1:
                raise DomainError(f"Renyi order must be > 0 and != 1, got {self.param}")
        if self.family == "alpha":
            if self.param is None or abs(self.param) == 1:
                raise DomainError(f"alpha-divergence needs alpha != +-1, got {self.param}")
        if self.family == "f":
            if self.f is None or self.f2_at_1 is None or not self.f2_at_1 > 0:
                raise DomainError("f-divergence needs a generator and f''(1) > 0")
        if self.family in ("mahalanobis_custom", "bregman_quadratic"):
            if self.weights is None:
                raise DomainError(f"{self.family} needs a weight matrix")
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise DimensionMismatch(f"weight matrix must be square, got {w.shape}")
            _require_pd(w, "weight matrix")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.param is not None:
            return f"{self.family}({self.param:g})"
        return self.family

    def weight_matrix(self, R: Distribution) -> np.ndarray:
        if self.family == "mahalanobis_paper":
            return mahalanobis_weight_default(R)
        w = np.asarray(self.weights, dtype=float)
        if w.shape[0] != R.k - 1:
            raise DimensionMismatch(f"weight matrix is {w.shape}, need {(R.k - 1,) * 2}")
        return w

    def to_dict(self) -> dict:
        if self.family == "f":
            raise DomainError("a custom f-divergence generator cannot be serialized")
        d: dict = {"family": self.family}
        if self.param is not None:
            d["param"] = self.param
        if self.weights is not None:
            d["weights"] = [list(row) for row in self.weights]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "DivergenceSpec":
        family = d.get("family")
        param = d.get("param")
        weights = d.get("weights")
        if family == "kl":
            return kl()
        if family == "chi2":
            return chi2()
        if family == "renyi":
            return renyi(_need(param, family))
        if family == "alpha":
            return alpha_divergence(_need(param, family))
        if family == "mahalanobis_paper":
            return mahalanobis_paper()
        if family == "mahalanobis_custom":
            return mahalanobis(_need(weights, family))
        if family == "bregman_quadratic":
            return bregman_quadratic(_need(weights, family))
        raise DomainError(f"unknown divergence family {family!r}")

    @classmethod
    def from_json(cls, text: str) -> "DivergenceSpec":
        return cls.from_dict(json.loads(text))


def _need(value, family):
    if value is None:
        raise DomainError(f"family {family!r} needs a parameter")
    return value


def kl() -> DivergenceSpec:
    return DivergenceSpec("kl")


def chi2() -> DivergenceSpec:
    return DivergenceSpec("chi2")


def renyi(order: float) -> DivergenceSpec:
    return DivergenceSpec("renyi", param=float(order))


def alpha_divergence(alpha: float) -> DivergenceSpec:
    return DivergenceSpec("alpha", param=float(alpha))


def f_divergence(f: Callable, f2_at_1: float, label: str = "f") -> DivergenceSpec:
    """Generic f-divergence; ``f`` must be vectorized, convex, with ``f(1) = 0``."""
    return DivergenceSpec("f", f=f, f2_at_1=float(f2_at_1), label=label)


def mahalanobis_paper() -> DivergenceSpec:
    return DivergenceSpec("mahalanobis_paper")


def mahalanobis(weights) -> DivergenceSpec:
    w = np.asarray(weights, dtype=float)
    return DivergenceSpec("mahalanobis_custom", weights=tuple(map(tuple, w)))


def bregman_quadratic(weights) -> DivergenceSpec:
    w = np.asarray(weights, dtype=float)
    return DivergenceSpec("bregman_quadratic", weights=tuple(map(tuple, w)))


def alpha_generator(alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    beta = (1.0 - alpha) / 2.0
    scale = 4.0 / (1.0 - alpha**2)

    def f(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return scale * (u - np.power(u, beta))

    return f


def mahalanobis_weight_default(P: Distribution) -> np.ndarray:
    """Weight matrix used for the non-invariant Mahalanobis example."""
    p = P.probs
    w = np.full((p.size - 1, p.size - 1), 0.5 / p[-1] ** 2)
    w[np.diag_indices_from(w)] += 0.5 / p[:-1] ** 2
    return w


def _require_pd(m: np.ndarray, what: str = "matrix") -> None:
    if not np.allclose(m, m.T, rtol=0, atol=1e-10 * max(1.0, np.abs(m).max())):
        raise NotPositiveDefinite(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None


def _eval_rows(D: DivergenceSpec, t: np.ndarray, r: np.ndarray, R: Distribution | None = None):
    """Evaluate ``D(t || r)`` where ``t`` is (k,) or (N, k); no validation of ``t``."""
    fam = D.family
    if fam == "kl":
        return np.sum(xlogy(t, t) - xlogy(t, r), axis=-1)
    if fam == "chi2":
        return np.sum((t - r) ** 2 / r, axis=-1)
    if fam == "renyi":
        a = D.param
        s = np.sum(np.power(t, a) * np.power(r, 1.0 - a), axis=-1)
        return np.log(s) / (a - 1.0)
    if fam in ("alpha", "f"):
        f = alpha_generator(D.param) if fam == "alpha" else D.f
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = r * f(t / r)
        if not np.all(np.isfinite(vals)):
            raise BoundaryEvaluation(f"{D.name} is infinite at a boundary type")
        return np.sum(vals, axis=-1)
    if R is None:
        R = Distribution(r)
    w = D.weight_matrix(R)
    x, y = t[..., :-1], r[:-1]
    if fam == "bregman_quadratic":
        phi = lambda v: np.einsum("...i,ij,...j->...", v, w, v)
        grad = (w + w.T) @ y
        return phi(x) - phi(y) - (x - y) @ grad
    d = x - y
    return np.einsum("...i,ij,...j->...", d, w, d)


def evaluate(D: DivergenceSpec, T, R: Distribution):
    """``D(T || R)``.

    ``T`` may be a :class:`Distribution`, a :class:`TypeDistribution` or an
    array of frequency rows (vectorized over the leading axis).
    """
    t = as_probs(T)
    if t.shape[-1] != R.k:
        raise DimensionMismatch(f"alphabet sizes differ: {t.shape[-1]} vs {R.k}")
    val = np.maximum(_eval_rows(D, t, R.probs, R), 0.0)
    return float(val) if np.ndim(val) == 0 else val


def hessian_matrix(D: DivergenceSpec, P: Distribution) -> np.ndarray:
    """Matrix associated with ``D`` at ``P`` (half the Hessian in the chart)."""
    fam = D.family
    if fam in ("kl", "alpha"):
        a = 0.5 * fisher_matrix(P)
    elif fam == "chi2":
        a = fisher_matrix(P)
    elif fam == "f":
        a = 0.5 * D.f2_at_1 * fisher_matrix(P)
    elif fam == "renyi":
        a = 0.5 * D.param * fisher_matrix(P)
    elif fam in ("mahalanobis_paper", "mahalanobis_custom", "bregman_quadratic"):
        w = D.weight_matrix(P)
        a = 0.5 * (w + w.T)
    else:
        a = numeric_hessian(D, P)
    _require_pd(a, f"matrix associated with {D.name}")
    return a


def numeric_hessian(D: DivergenceSpec, P: Distribution, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central second differences of ``T -> D(T || P)``, halved and symmetrized."""
    p = P.probs
    m = p.size - 1
    if not 0 < step < p.min() / 4:
        raise StepTooLarge(f"step {step} must lie in (0, min P / 4 = {p.min() / 4})")
    basis = np.zeros((m, p.size))
    for i in range(m):
        basis[i, i] = 1.0
        basis[i, -1] = -1.0
    basis *= step

    # assemble every probe once so the divergence is evaluated in one call
    probes = [p]
    for i in range(m):
        probes += [p + basis[i], p - basis[i]]
    for i in range(m):
        for j in range(i + 1, m):
            probes += [
                p + basis[i] + basis[j],
                p + basis[i] - basis[j],
                p - basis[i] + basis[j],
                p - basis[i] - basis[j],
            ]
    probes = np.array(probes)
    if np.any(probes <= 0):
        raise StepTooLarge("a finite-difference probe left the simplex interior")
    vals = _eval_rows(D, probes, p, P)

    h = np.empty((m, m))
    f0 = vals[0]
    for i in range(m):
        h[i, i] = (vals[1 + 2 * i] - 2 * f0 + vals[2 + 2 * i]) / step**2
    pos = 1 + 2 * m
    for i in range(m):
        for j in range(i + 1, m):
            fpp, fpm, fmp, fmm = vals[pos : pos + 4]
            pos += 4
            h[i, j] = h[j, i] = (fpp - fpm - fmp + fmm) / (4 * step**2)
    h = 0.5 * h
    return 0.5 * (h + h.T)


@dataclass(frozen=True)
class InvarianceReport:
    invariant: bool
    eta: Optional[float]
    max_relative_deviation: float


def classify_invariance(
    D: DivergenceSpec,
    P: Distribution,
    tol: float = 1e-6,
    matrix: np.ndarray | None = None,
) -> InvarianceReport:
    """Fit ``A ~ eta * Sigma`` by least squares and test the residual.

    The deviation is ``max|A - eta Sigma| / max|A|``.  ``matrix`` overrides the
    analytic matrix, e.g. with a finite-difference estimate.
    """
    a = hessian_matrix(D, P) if matrix is None else np.asarray(matrix, dtype=float)
    s = fisher_matrix(P)
    eta = float(np.sum(a * s) / np.sum(s * s))
    dev = float(np.abs(a - eta * s).max() / np.abs(a).max())
    ok = eta > 0 and dev <= tol
    return InvarianceReport(invariant=ok, eta=eta if ok else None, max_relative_deviation=dev)


def taylor_kl_expansion(T: Distribution, P: Distribution, Q: Distribution) -> tuple[float, float]:
    """Second-order expansion of ``T -> D_KL(T || Q)`` around ``P``.

    Returns ``(approximation, residual)`` with ``residual = D_KL(T||Q) - approximation``.
    """
    t, p, q = T.probs, P.probs, Q.probs
    approx = kl_divergence(P, Q) + float((t - p) @ np.log(p / q)) + 0.5 * float(np.sum((t - p) ** 2 / p))
    return approx, kl_divergence(T, Q) - approx
