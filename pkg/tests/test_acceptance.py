"""Acceptance gate: twelve end-to-end criteria, each with its tolerance and time budget.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run as a script.
"""

import math
import time

import numpy as np
from scipy import optimize

from divtest import asymptotics as asy
from divtest import cli
from divtest import divergences as dv
from divtest import exact as ex
from divtest import genchisq as gc
from divtest import montecarlo as mc
from divtest.simplex import fisher_inverse, kl_variance, make_distribution, random_distribution, tilt_vector

RESULTS: list[str] = []

P_FIG = make_distribution((0.15, 0.6, 0.25))
EPS_GRID = (0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 0.9)


def _record(num, title, ok, elapsed, budget, detail):
    ok = bool(ok) and elapsed < budget
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] AC{num:02d} {title}: {detail} ({elapsed:.2f}s / {budget:g}s)")
    assert ok, RESULTS[-1]


def _interior(rng, k, floor=0.1):
    return random_distribution(rng, k, floor=floor)


def test_ac01_closed_form_quantile():
    gc._inverse_tail_cached.cache_clear()
    g = gc.chi2_dist(2)
    t0 = time.perf_counter()
    a = gc.inverse_tail(g, 0.02)
    b = gc.inverse_tail(g, 0.5)
    elapsed = time.perf_counter() - t0
    ok = abs(a - 7.824046) < 1e-6 and abs(a + 2 * math.log(0.02)) < 1e-6 and abs(b - 2 * math.log(2)) < 1e-6
    _record(1, "closed-form quantile", ok, elapsed, 1e-3, f"Q^-1(0.02)={a:.7f}, Q^-1(0.5)={b:.7f}")


def test_ac02_invariant_identities():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_id, worst_eta = 0.0, 0.0
    specs = [dv.kl(), dv.renyi(0.5), dv.renyi(2.0), dv.chi2()]
    for _ in range(100):
        k = int(rng.integers(2, 7))
        P, Q = _interior(rng, k, 0.05), _interior(rng, k, 0.05)
        c = tilt_vector(P, Q)
        v = kl_variance(P, Q)
        worst_id = max(worst_id, abs(c @ fisher_inverse(P) @ c - v) / v)
        eps = float(rng.uniform(0.005, 0.995))
        h = asy.second_order_hoeffding(P, Q, eps).beta_second
        for spec in specs:
            d = asy.second_order_divergence(spec, P, Q, eps).beta_second
            worst_eta = max(worst_eta, abs(d - h) / abs(h))
    elapsed = time.perf_counter() - t0
    ok = worst_id < 1e-10 and worst_eta < 1e-9
    _record(2, "invariant identity suite", ok, elapsed, 5, f"max rel dev identity={worst_id:.1e}, eta-cancel={worst_eta:.1e}")


def test_ac03_hessian_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 7))
        P = _interior(rng, k, 0.2)
        M = rng.normal(size=(k - 1, k - 1))
        W = M @ M.T + (k - 1) * np.eye(k - 1)
        specs = [
            dv.kl(),
            dv.chi2(),
            dv.renyi(0.5),
            dv.renyi(2.0),
            dv.alpha_divergence(0.5),
            dv.alpha_divergence(-2.0),
            dv.f_divergence(lambda u: u * np.log(u), 1.0),
            dv.mahalanobis_paper(),
            dv.mahalanobis(W),
            dv.bregman_quadratic(W),
        ]
        for spec in specs:
            A = dv.hessian_matrix(spec, P)
            H = dv.numeric_hessian(spec, P, 1e-4)
            worst = max(worst, np.abs(A - H).max() / np.abs(A).max())
    elapsed = time.perf_counter() - t0
    _record(3, "Hessian finite-difference oracle", worst < 1e-4, elapsed, 10, f"max relative deviation {worst:.2e}")


def test_ac04_strict_inequality_against_np():
    rng = np.random.default_rng(4)
    specs = [dv.kl(), dv.renyi(2.0), dv.mahalanobis_paper()]
    t0 = time.perf_counter()
    margins = []
    for i in range(1000):
        k = int(rng.integers(2, 7))
        P, Q = _interior(rng, k), _interior(rng, k)
        eps = float(rng.uniform(0.001, 0.999))
        d = asy.second_order_divergence(specs[i % 3], P, Q, eps)
        lhs = math.sqrt(d.quad_form) * math.sqrt(d.quantile)
        rhs = math.sqrt(kl_variance(P, Q)) * gc.standard_normal_inverse_tail(eps)
        margins.append(lhs - rhs)
    elapsed = time.perf_counter() - t0
    margins = np.array(margins)
    violations = int((margins <= 0).sum())
    _record(4, "strictness versus Neyman-Pearson", violations == 0, elapsed, 30, f"{violations} violations, min margin {margins.min():.3e}")


def test_ac05_dof_monotonicity():
    t0 = time.perf_counter()
    violations = sum(
        gc.inverse_tail(gc.chi2_dist(k), e) <= gc.inverse_tail(gc.chi2_dist(k - 1), e) for k in range(2, 11) for e in EPS_GRID
    )
    elapsed = time.perf_counter() - t0
    _record(5, "quantile monotone in degrees of freedom", violations == 0, elapsed, 1, f"{violations} violations over 63 pairs")


def _brute_force_min(A, c, radius, points=1_000_000):
    L = np.linalg.cholesky(A)
    theta = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
    x = math.sqrt(radius) * np.linalg.solve(L.T, np.stack([np.cos(theta), np.sin(theta)]))
    return float((c @ x).min())


def test_ac06_kkt_certificate():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst_ell, worst_grid, worst_stat = 0.0, 0.0, 0.0
    for _ in range(100):
        M = rng.normal(size=(2, 2))
        A = M @ M.T + 0.3 * np.eye(2)
        c = rng.normal(size=2)
        P = _interior(rng, 3, 0.2)
        b, psi, tau = ex.ellipsoid_constants(A, c, P)
        radius = (rng.uniform(0.05, 0.95) * psi / tau) ** 2 * float(c @ b)
        s = ex.kkt_minimizer(A, c, radius, P)
        x = s.x_star[:2]
        closed = -math.sqrt(radius) * math.sqrt(float(c @ np.linalg.solve(A, c)))
        worst_ell = max(worst_ell, abs(s.ell_value - closed))
        worst_grid = max(worst_grid, abs(s.ell_value - _brute_force_min(A, c, radius)))
        worst_stat = max(worst_stat, float(np.linalg.norm(c + 2 * s.multiplier * A @ x)))
    elapsed = time.perf_counter() - t0
    ok = worst_ell < 1e-10 and worst_grid < 1e-4 and worst_stat < 1e-9
    _record(6, "KKT certificate", ok, elapsed, 20, f"closed form {worst_ell:.1e}, grid {worst_grid:.1e}, stationarity {worst_stat:.1e}")


def test_ac07_limit_law_convergence():
    t0 = time.perf_counter()
    parts, ok = [], True
    for spec in (dv.kl(), dv.mahalanobis_paper()):
        ks = [mc.statistic_convergence(spec, P_FIG, n, 100_000, seed=42).ks_distance for n in (100, 1000, 10_000)]
        ok &= ks[2] < 0.01 and ks[0] > ks[1] > ks[2]
        parts.append(f"{spec.name} KS " + "/".join(f"{v:.4f}" for v in ks))
    elapsed = time.perf_counter() - t0
    _record(7, "limit law convergence", ok, elapsed, 60, "; ".join(parts))


def _ordering_violations(curves, lo=1e-3, hi=1e-1):
    """Count breakpoints in [lo, hi] where the listed curves are not ordered by best beta."""
    alphas = np.unique(np.concatenate([c.alpha for c in curves]))
    alphas = alphas[(alphas >= lo) & (alphas <= hi)]
    bad = 0
    for a in alphas:
        betas = [c.best_beta(a) for c in curves]
        bad += any(x > y * (1 + 1e-12) for x, y in zip(betas, betas[1:]))
    return bad, alphas.size


def test_ac08_tradeoff_orderings():
    t0 = time.perf_counter()
    assert ex.type_count(500, 3) == 125751
    n = 500
    out = []
    ok = True
    for q, order in (((0.45, 0.15, 0.4), ("np", "hoeffding", "sm")), ((0.6, 0.3, 0.1), ("np", "sm", "hoeffding"))):
        Q = make_distribution(q)
        curves = {
            "np": ex.np_tradeoff_curve(P_FIG, Q, n),
            "hoeffding": ex.divergence_tradeoff_curve(dv.kl(), P_FIG, Q, n),
            "sm": ex.divergence_tradeoff_curve(dv.mahalanobis_paper(), P_FIG, Q, n),
        }
        bad, total = _ordering_violations([curves[name] for name in order])
        ok &= bad == 0 and total > 0
        out.append(f"Q={q}: {' <= '.join(order)} violated at {bad}/{total} breakpoints")
    elapsed = time.perf_counter() - t0
    _record(8, "exact trade-off orderings at n=500", ok, elapsed, 30, "; ".join(out))


def _rho_cells(p, eps, resolution=100):
    cfg = cli.RunConfig("ratio-grid", p=list(p), eps=[eps], resolution=resolution)
    _, rows = cli.ratio_grid_rows(cfg)
    axis = np.linspace(cli.GRID_MARGIN, 1 - cli.GRID_MARGIN, resolution)
    index = {(float(r[0]), float(r[1])): r[3] for r in rows}
    return axis, index


def _contour_cells(axis, index):
    """Grid cells whose rho - 1 sign differs from a right or upper neighbour."""
    cells = set()
    for i, a in enumerate(axis):
        for j, b in enumerate(axis):
            here = index.get((a, b))
            if here is None:
                continue
            for di, dj in ((1, 0), (0, 1)):
                if i + di < axis.size and j + dj < axis.size:
                    there = index.get((axis[i + di], axis[j + dj]))
                    if there is not None and (here > 1) != (there > 1):
                        cells.add((i, j))
    return cells


def test_ac09_ratio_regions():
    t0 = time.perf_counter()
    configs = [((0.15, 0.6, 0.25), 0.02), ((0.32, 0.35, 0.33), 0.02), ((0.1, 0.3, 0.6), 0.02), ((0.1, 0.3, 0.6), 0.5)]
    ok, parts, contours = True, [], {}
    for p, eps in configs:
        axis, index = _rho_cells(p, eps)
        rho = np.array(list(index.values()))
        both = (rho > 1).any() and (rho < 1).any()
        ok &= both
        parts.append(f"P={p} eps={eps}: {int((rho > 1).sum())} above / {int((rho < 1).sum())} below")
        if p == (0.1, 0.3, 0.6):
            contours[eps] = _contour_cells(axis, index)
    differ = contours[0.02] != contours[0.5]
    ok &= differ
    parts.append(f"contour cells differ between eps=0.02 and 0.5: {differ}")
    elapsed = time.perf_counter() - t0
    _record(9, "ratio-grid region structure", ok, elapsed, 60, "; ".join(parts))


def test_ac10_second_order_crossing():
    P = make_distribution((0.1, 0.3, 0.4, 0.2))
    Q = make_distribution((0.36, 0.16, 0.22, 0.26))
    t0 = time.perf_counter()

    def gap(e):
        kl_term = asy.second_order_divergence(dv.kl(), P, Q, e).beta_second
        sm_term = asy.second_order_divergence(dv.mahalanobis_paper(), P, Q, e).beta_second
        return abs(kl_term) - abs(sm_term)

    grid = np.concatenate([np.geomspace(0.001, 0.01, 10), np.linspace(0.02, 0.999, 50)])
    vals = np.array([gap(e) for e in grid])
    flips = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    star = None
    if flips.size:
        i = int(flips[0])
        star = optimize.bisect(gap, grid[i], grid[i + 1], xtol=1e-4)
    elapsed = time.perf_counter() - t0
    ok = star is not None and 0.001 < star < 0.999
    _record(10, "second-order crossing in eps", ok, elapsed, 5, f"eps* = {star:.4f}" if star else "no sign change")


def test_ac11_calibrated_threshold_limit():
    t0 = time.perf_counter()
    limit = gc.inverse_tail(mc.limit_law(dv.kl(), P_FIG), 0.02)
    gaps = [abs(n * ex.calibrate_threshold(dv.kl(), P_FIG, n, 0.02).threshold - limit) for n in (100, 400, 1600)]
    rises = sum(b >= a for a, b in zip(gaps, gaps[1:]))
    elapsed = time.perf_counter() - t0
    ok = gaps[2] < gaps[0] and rises <= 1
    _record(11, "calibrated threshold limit", ok, elapsed, 60, f"limit {limit:.4f}, gaps " + "/".join(f"{g:.4f}" for g in gaps))


def test_ac12_exact_versus_monte_carlo():
    t0 = time.perf_counter()
    rec = cli.reconcile_exact_mc(seed=42, samples=100_000, n=100, count=10)
    hits = sum(r["inside"] for r in rec)
    elapsed = time.perf_counter() - t0
    _record(12, "exact versus Monte Carlo", hits >= 6, elapsed, 60, f"{hits}/10 configurations inside 95% Wilson intervals")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_ac"):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(RESULTS))
