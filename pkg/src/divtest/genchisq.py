"""Generalized chi-square law: positively weighted sums of independent chi-squares.

Tail probabilities come from one of three routes:

* equal weights: a scaled chi-square, via the regularized upper incomplete gamma;
* ``"ruben"``: Ruben's mixture of central chi-squares, which for positive
  weights has nonnegative mixing coefficients and an exact truncation bound;
* ``"imhof"``: numerical inversion of the characteristic function.

``"auto"`` uses the first route when it applies and Ruben's series otherwise,
falling back to Imhof when the series would need too many terms.  Ruben and
Imhof share no code, so each is an oracle for the other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConvergenceFailure, DimensionMismatch, DomainError, NonPositiveWeight, QuadratureFailure

EQUAL_WEIGHT_RTOL = 1e-12
RUBEN_MASS_TOL = 1e-14
RUBEN_MAX_TERMS = 20000
IMHOF_ERROR_LIMIT = 1e-7
INVERSE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GenChiSq:
    weights: np.ndarray
    dofs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.weights, dtype=float))
        k = np.atleast_1d(np.array(self.dofs))
        if w.ndim != 1 or w.shape != k.shape or w.size == 0:
            raise DimensionMismatch(f"weights {w.shape} and dofs {k.shape} must be equal-length vectors")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise NonPositiveWeight(f"weights must be > 0, got {w.tolist()}")
        if np.any(k < 1) or not np.all(np.equal(np.mod(k, 1), 0)):
            raise DomainError(f"degrees of freedom must be positive integers, got {k.tolist()}")
        w.setflags(write=False)
        k = k.astype(np.int64)
        k.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dofs", k)

    @property
    def total_dof(self) -> int:
        return int(self.dofs.sum())

    @property
    def mean(self) -> float:
        return float(self.weights @ self.dofs)

    @property
    def equal_weights(self) -> bool:
        w = self.weights
        return (w.max() - w.min()) <= EQUAL_WEIGHT_RTOL * w.max()

    def __eq__(self, other):
        if not isinstance(other, GenChiSq):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.dofs, other.dofs)

    def __repr__(self):
        return f"GenChiSq(weights={self.weights.tolist()}, dofs={self.dofs.tolist()})"

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "dofs": self.dofs.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GenChiSq":
        d = json.loads(text)
        return cls(d["weights"], d["dofs"])

    @cached_property
    def _ruben(self):
        return _ruben_coefficients(self.weights, self.dofs)

    def tail(self, c, method: str = "auto"):
        return tail(self, c, method)

    def inverse_tail(self, eps: float) -> float:
        return inverse_tail(self, eps)


def from_eigenvalues(lam) -> GenChiSq:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise NonPositiveWeight(f"eigenvalues must be > 0, got {lam.tolist()}")
    return GenChiSq(lam, np.ones(lam.size, dtype=np.int64))


def chi2_dist(dof: int, scale: float = 1.0) -> GenChiSq:
    """``scale`` times a chi-square with ``dof`` degrees of freedom."""
    return GenChiSq([scale], [dof])


def _ruben_coefficients(w: np.ndarray, k: np.ndarray):
    """Mixing weights ``a_j`` such that ``xi / beta ~ sum_j a_j chi2_{K + 2j}``.

    Returns ``(beta, a)`` or ``None`` when the series would exceed
    ``RUBEN_MAX_TERMS`` terms.
    """
    beta = float(w.min())
    gam = 1.0 - beta / w
    gmax = float(gam.max())
    if gmax > 0:
        # geometric decay rate of the coefficients; polynomial factor absorbed by the slack
        est = math.log(RUBEN_MASS_TOL) / math.log(gmax) * 1.5 + 50
        if est > RUBEN_MAX_TERMS:
            return None
    a = [math.exp(0.5 * float(k @ np.log(beta / w)))]
    total = a[0]
    g = [0.0]
    j = 0
    while 1.0 - total > RUBEN_MASS_TOL and j < RUBEN_MAX_TERMS:
        j += 1
        g.append(0.5 * float(k @ gam**j))
        garr = np.asarray(g[1 : j + 1][::-1])
        aj = float(garr @ np.asarray(a)) / j
        a.append(aj)
        total += aj
    if 1.0 - total > 1e-12:
        return None
    return beta, np.asarray(a)


def _tail_equal(g: GenChiSq, c: np.ndarray) -> np.ndarray:
    return special.gammaincc(0.5 * g.total_dof, c / (2.0 * g.weights[0]))


def _tail_ruben(g: GenChiSq, c: np.ndarray) -> np.ndarray:
    beta, a = g._ruben
    halfdof = 0.5 * (g.total_dof + 2 * np.arange(a.size))
    q = special.gammaincc(halfdof[:, None], c[None, :] / (2.0 * beta))
    return a @ q


def _imhof_one(w: np.ndarray, k: np.ndarray, x: float) -> tuple[float, float]:
    """Tail at a single ``x > 0`` and the quadrature error estimate."""
    half_k = 0.5 * k
    quarter_k = 0.25 * k
    omega = 0.5 * x

    def phase(u):
        return float(half_k @ np.arctan(w * u))

    def damp(u):
        return float(np.exp(quarter_k @ np.log1p((w * u) ** 2)))

    def full(u):
        if u == 0.0:
            return float(half_k @ w) - omega
        return math.sin(phase(u) - omega * u) / (u * damp(u))

    # past u0 the phase is nearly flat, so the oscillation is carried by sin/cos(omega u)
    u0 = 2.0 * math.pi / omega
    head, err_head = integrate.quad(full, 0.0, u0, limit=500, epsabs=1e-12, epsrel=1e-12)
    sin_part, err_s = integrate.quad(
        lambda u: math.sin(phase(u)) / (u * damp(u)), u0, np.inf, weight="cos", wvar=omega, limlst=200
    )
    cos_part, err_c = integrate.quad(
        lambda u: math.cos(phase(u)) / (u * damp(u)), u0, np.inf, weight="sin", wvar=omega, limlst=200
    )
    val = 0.5 + (head + sin_part - cos_part) / math.pi
    return val, (err_head + err_s + err_c) / math.pi


def _tail_imhof(g: GenChiSq, c: np.ndarray) -> np.ndarray:
    out = np.empty_like(c)
    for i, x in enumerate(c):
        if x <= 0:
            out[i] = 1.0
            continue
        val, err = _imhof_one(g.weights, g.dofs.astype(float), float(x))
        if err > IMHOF_ERROR_LIMIT:
            raise QuadratureFailure(f"Imhof inversion error estimate {err:.2e} at c={x}")
        out[i] = val
    return np.clip(out, 0.0, 1.0)


def tail(g: GenChiSq, c, method: str = "auto"):
    """``Pr(xi >= c)``; vectorized over ``c``."""
    scalar = np.ndim(c) == 0
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if np.any(c < 0) or np.any(np.isnan(c)):
        raise DomainError("tail threshold must be >= 0")
    if method == "auto":
        if g.equal_weights:
            method = "equal"
        elif g._ruben is not None:
            method = "ruben"
        else:
            method = "imhof"
    if method == "equal":
        if not g.equal_weights:
            raise DomainError("equal-weight route needs equal weights")
        out = _tail_equal(g, c)
    elif method == "ruben":
        if g._ruben is None:
            raise ConvergenceFailure("Ruben series needs too many terms for these weights")
        out = _tail_ruben(g, c)
    elif method == "imhof":
        out = _tail_imhof(g, c)
    else:
        raise DomainError(f"unknown tail method {method!r}")
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def inverse_tail(g: GenChiSq, eps: float) -> float:
    """The unique ``c >= 0`` with ``tail(g, c) == eps``."""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return _inverse_tail_cached(tuple(g.weights.tolist()), tuple(g.dofs.tolist()), float(eps))


@lru_cache(maxsize=4096)
def _inverse_tail_cached(weights: tuple, dofs: tuple, eps: float) -> float:
    # grid sweeps over Q reuse the same limit law many times
    g = GenChiSq(weights, dofs)
    if g.equal_weights:
        return float(2.0 * g.weights[0] * special.gammainccinv(0.5 * g.total_dof, eps))
    kk = g.total_dof
    hi = float(g.weights.max() * (kk + 40.0 * math.sqrt(2.0 * kk)))
    for _ in range(200):
        if tail(g, hi) < eps:
            break
        hi *= 2.0
    else:
        raise ConvergenceFailure(f"could not bracket eps={eps}: tail({hi}) still >= eps")
    f = lambda c: tail(g, c) - eps
    try:
        c = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except RuntimeError as exc:
        raise ConvergenceFailure(f"bisection failed inside [0, {hi}]: {exc}") from None
    if abs(f(c)) > INVERSE_TOL:
        raise ConvergenceFailure(f"|tail - eps| = {abs(f(c)):.2e} at c={c} in bracket [0, {hi}]")
    return float(c)


def sample(g: GenChiSq, rng_seed: int, count: int, chunk: int = 1_000_000) -> np.ndarray:
    """Seeded draws of ``sum_i w_i * chi2_{k_i}`` built from squared standard normals."""
    if count < 1:
        raise DomainError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    w = np.repeat(g.weights, g.dofs)
    out = np.empty(count)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        z = rng.standard_normal((stop - start, w.size))
        out[start:stop] = (z * z) @ w
    return out


def standard_normal_inverse_tail(eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return float(stats.norm.isf(eps))
