"""Second-order asymptotics and exact finite-sample errors of divergence-based hypothesis tests."""

from .asymptotics import (
    SecondOrderReport,
    approx_exponent,
    local_eigenvalues,
    ratio_rho,
    second_order_divergence,
    second_order_from_matrix,
    second_order_hoeffding,
    second_order_np,
)
from .divergences import (
    DivergenceSpec,
    InvarianceReport,
    alpha_divergence,
    bregman_quadratic,
    chi2,
    classify_invariance,
    evaluate,
    f_divergence,
    hessian_matrix,
    kl,
    mahalanobis,
    mahalanobis_paper,
    mahalanobis_weight_default,
    numeric_hessian,
    renyi,
    taylor_kl_expansion,
)
from .errors import *  # noqa: F401,F403
from .exact import (
    Calibration,
    KKTSolution,
    TradeoffCurve,
    calibrate_threshold,
    divergence_tradeoff_curve,
    enumerate_types,
    kkt_minimizer,
    nearest_feasible_type,
    np_tradeoff_curve,
    type_log_prob,
)
from .genchisq import GenChiSq, from_eigenvalues, inverse_tail, standard_normal_inverse_tail, tail
from .montecarlo import SimulationReport, estimate_errors, sample_type, statistic_convergence
from .simplex import (
    Distribution,
    TypeDistribution,
    fisher_inverse,
    fisher_matrix,
    kl_divergence,
    kl_variance,
    make_distribution,
    tilt_vector,
)

__version__ = "0.1.0"
