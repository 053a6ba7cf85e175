"""First- and second-order type-II error exponents of NP, Hoeffding and divergence tests.

Under a fixed type-I error ``eps`` every test considered here satisfies::

    -ln beta_n = n * D_KL(P||Q) + sqrt(n) * beta2 + o(sqrt(n))

and the functions below compute ``beta2`` with the quantities it is built from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import genchisq
from .divergences import DivergenceSpec, hessian_matrix
from .errors import DegenerateHypotheses, DomainError, NotPositiveDefinite
from .simplex import Distribution, fisher_inverse, fisher_matrix, kl_divergence, kl_variance, tilt_vector

MIN_TILT_NORM = 1e-12
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SecondOrderReport:
    test: str
    beta_first: float
    beta_second: float
    eps: float
    divergence: Optional[str] = None
    hessian: Optional[np.ndarray] = field(default=None, repr=False)
    eigenvalues: Optional[np.ndarray] = None
    tilt: Optional[np.ndarray] = None
    quad_form: Optional[float] = None
    kl_variance: float = 0.0
    quantile: Optional[float] = None

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {
            "test": self.test,
            "divergence": self.divergence,
            "eps": self.eps,
            "beta_first": self.beta_first,
            "beta_second": self.beta_second,
            "hessian": arr(self.hessian),
            "eigenvalues": arr(self.eigenvalues),
            "tilt": arr(self.tilt),
            "quad_form": self.quad_form,
            "kl_variance": self.kl_variance,
            "quantile": self.quantile,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SecondOrderReport":
        arr = lambda a: None if a is None else np.asarray(a, dtype=float)
        return cls(
            test=d["test"],
            divergence=d.get("divergence"),
            eps=d["eps"],
            beta_first=d["beta_first"],
            beta_second=d["beta_second"],
            hessian=arr(d.get("hessian")),
            eigenvalues=arr(d.get("eigenvalues")),
            tilt=arr(d.get("tilt")),
            quad_form=d.get("quad_form"),
            kl_variance=d.get("kl_variance", 0.0),
            quantile=d.get("quantile"),
        )


def _check_inputs(P: Distribution, Q: Distribution, eps: float, min_tilt: float = MIN_TILT_NORM) -> np.ndarray:
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    c = tilt_vector(P, Q)
    if np.linalg.norm(c) < min_tilt:
        raise DegenerateHypotheses(f"P and Q are indistinguishable (|c| = {np.linalg.norm(c):.3g})")
    return c


def _sym_sqrt_inv(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    return (vecs / np.sqrt(vals)) @ vecs.T


def local_eigenvalues(A: np.ndarray, P: Distribution) -> np.ndarray:
    """Eigenvalues of ``Sigma^{-1/2} A Sigma^{-1/2}``, ascending."""
    s = _sym_sqrt_inv(fisher_matrix(P))
    b = s @ A @ s
    scale = max(1.0, float(np.abs(b).max()))
    if np.abs(b - b.T).max() > SYMMETRY_TOL * scale:
        raise NotPositiveDefinite("similarity transform of A is not symmetric")
    lam = np.linalg.eigvalsh(0.5 * (b + b.T))
    if np.any(lam <= 0):
        raise NotPositiveDefinite(f"non-positive local eigenvalue {lam.min():.3g}")
    return lam


def quad_form_inverse(A: np.ndarray, c: np.ndarray) -> float:
    """``c^T A^{-1} c`` through a Cholesky solve."""
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    y = np.linalg.solve(chol, c)
    return float(y @ y)


def second_order_np(P: Distribution, Q: Distribution, eps: float) -> SecondOrderReport:
    c = _check_inputs(P, Q, eps)
    v = kl_variance(P, Q)
    z = genchisq.standard_normal_inverse_tail(eps)
    return SecondOrderReport(
        test="np",
        beta_first=kl_divergence(P, Q),
        beta_second=-np.sqrt(v) * z,
        eps=eps,
        tilt=c,
        kl_variance=v,
        quantile=z,
    )


def second_order_hoeffding(P: Distribution, Q: Distribution, eps: float) -> SecondOrderReport:
    """Hoeffding test via the invariant shortcut: no Hessian, no eigen-solve."""
    c = _check_inputs(P, Q, eps)
    v = kl_variance(P, Q)
    m = P.k - 1
    q = genchisq.inverse_tail(genchisq.chi2_dist(m), eps)
    return SecondOrderReport(
        test="hoeffding",
        divergence="kl",
        beta_first=kl_divergence(P, Q),
        beta_second=-np.sqrt(v * q),
        eps=eps,
        hessian=0.5 * fisher_matrix(P),
        eigenvalues=np.full(m, 0.5),
        tilt=c,
        quad_form=2.0 * float(c @ fisher_inverse(P) @ c),
        kl_variance=v,
        quantile=q,
    )


def second_order_from_matrix(
    A: np.ndarray, P: Distribution, Q: Distribution, eps: float, label: str = "custom"
) -> SecondOrderReport:
    """Divergence-test second-order term for an explicit local matrix ``A``."""
    c = _check_inputs(P, Q, eps)
    lam = local_eigenvalues(A, P)
    quad = quad_form_inverse(A, c)
    q = genchisq.inverse_tail(genchisq.from_eigenvalues(lam), eps)
    return SecondOrderReport(
        test="divergence",
        divergence=label,
        beta_first=kl_divergence(P, Q),
        beta_second=-np.sqrt(quad) * np.sqrt(q),
        eps=eps,
        hessian=A,
        eigenvalues=lam,
        tilt=c,
        quad_form=quad,
        kl_variance=kl_variance(P, Q),
        quantile=q,
    )


def second_order_divergence(D: DivergenceSpec, P: Distribution, Q: Distribution, eps: float) -> SecondOrderReport:
    _check_inputs(P, Q, eps)
    return second_order_from_matrix(hessian_matrix(D, P), P, Q, eps, label=D.name)


def ratio_rho(D: DivergenceSpec, P: Distribution, Q: Distribution, eps: float) -> float:
    """Divergence-test over Hoeffding-test second-order magnitude.

    ``rho > 1``: Hoeffding is better; ``rho < 1``: the divergence test is better.
    """
    num = second_order_divergence(D, P, Q, eps).beta_second
    den = second_order_hoeffding(P, Q, eps).beta_second
    return float(num / den)


def report_for(test: str, P: Distribution, Q: Distribution, eps: float, D: DivergenceSpec | None = None):
    if test == "np":
        return second_order_np(P, Q, eps)
    if test == "hoeffding":
        return second_order_hoeffding(P, Q, eps)
    if test == "divergence":
        if D is None:
            raise DomainError("divergence test needs a DivergenceSpec")
        return second_order_divergence(D, P, Q, eps)
    raise DomainError(f"unknown test kind {test!r}")


def approx_exponent(
    test: str, P: Distribution, Q: Distribution, eps: float, n: int, D: DivergenceSpec | None = None
) -> float:
    """Normal approximation ``D_KL(P||Q) + beta2 / sqrt(n)`` of ``-(1/n) ln beta_n``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rep = report_for(test, P, Q, eps, D)
    return rep.beta_first + rep.beta_second / np.sqrt(n)
