"""``divtest`` command line: figure data and verification runs as CSV/JSON files."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import asymptotics as asy
from . import exact, genchisq, montecarlo
from .divergences import DivergenceSpec
from .errors import DegenerateHypotheses, DivtestError, SizeLimit
from .simplex import Distribution, make_distribution, random_distribution

SCHEMA = "1"
GRID_MARGIN = 1e-3
DEFAULT_P = (0.15, 0.6, 0.25)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


class ConfigError(DivtestError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    p: Optional[list] = None
    q: Optional[list] = None
    divergences: list = field(default_factory=list)
    eps: list = field(default_factory=lambda: [0.02])
    n: list = field(default_factory=list)
    resolution: int = 100
    out: Optional[str] = None
    seed: int = 42
    format: str = "csv"
    mode: Optional[str] = None
    slice: Optional[str] = None
    samples: int = 100_000
    workers: int = 1
    inject_lambda_scale: float = 1.0

    def validate(self) -> "RunConfig":
        if self.resolution < 2:
            raise ConfigError("resolution must be >= 2")
        if not self.eps:
            raise ConfigError("eps grid is empty")
        if any(not 0 < e < 1 for e in self.eps):
            raise ConfigError("every eps must lie in (0, 1)")
        if any(n < 1 for n in self.n):
            raise ConfigError("every n must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        for name in ("p", "q"):
            if getattr(self, name) is not None:
                make_distribution(getattr(self, name))
        return self

    @property
    def P(self) -> Distribution:
        return make_distribution(self.p if self.p is not None else DEFAULT_P)

    @property
    def Q(self) -> Distribution:
        if self.q is None:
            raise ConfigError("--q is required")
        return make_distribution(self.q)

    def divergence_specs(self, default: str | None = "mahalanobis_paper") -> list[DivergenceSpec]:
        specs = [parse_divergence(d) for d in self.divergences]
        if not specs and default:
            specs = [parse_divergence(default)]
        return specs


def parse_vector(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(v) for v in text.split(",") if v.strip()]


def parse_divergence(item) -> DivergenceSpec:
    """Accepts a JSON descriptor (dict or string) or the shorthand ``family[:param]``."""
    if isinstance(item, DivergenceSpec):
        return item
    if isinstance(item, dict):
        return DivergenceSpec.from_dict(item)
    text = str(item).strip()
    if text.startswith("{"):
        return DivergenceSpec.from_json(text)
    family, _, param = text.partition(":")
    d = {"family": family}
    if param:
        d["param"] = float(param)
    return DivergenceSpec.from_dict(d)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with any of the flag values; flags override it")
    common.add_argument("--p", help="null distribution, e.g. 0.15,0.6,0.25")
    common.add_argument("--q", help="alternative distribution")
    common.add_argument("--eps", help="type-I error bound, or a comma-separated grid")
    common.add_argument("--n", help="sample size, or a comma-separated grid")
    common.add_argument("--divergence", action="append", help="kl, chi2, renyi:A, alpha:A, mahalanobis_paper or a JSON descriptor")
    common.add_argument("--resolution", type=int)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="divtest", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("analyze", parents=[common], help="second-order reports for one (P, Q, eps)")
    grid = sub.add_parser("ratio-grid", parents=[common], help="rho over a grid of alternatives")
    grid.add_argument("--slice", help="fix one coordinate, e.g. 2=0.5, and sweep coordinate 1")
    sub.add_parser("tradeoff", parents=[common], help="exact ln alpha / ln beta curves")
    conv = sub.add_parser("convergence", parents=[common], help="approximations versus n or eps")
    conv.add_argument("--mode", choices=["n", "eps"])
    ver = sub.add_parser("verify", parents=[common], help="Monte Carlo checks of the limit theorems")
    ver.add_argument("--samples", type=int)
    ver.add_argument("--inject-lambda-scale", type=float, help=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(json.load(fh))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if "divergence" in values:
        d = values.pop("divergence")
        values["divergences"] = d if isinstance(d, list) else [d]
    flags = {
        "p": args.p,
        "q": args.q,
        "eps": args.eps,
        "n": args.n,
        "divergences": args.divergence,
        "resolution": args.resolution,
        "out": args.out,
        "seed": args.seed,
        "format": args.format,
        "workers": args.workers,
        "mode": getattr(args, "mode", None),
        "slice": getattr(args, "slice", None),
        "samples": getattr(args, "samples", None),
        "inject_lambda_scale": getattr(args, "inject_lambda_scale", None),
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    unknown = set(values) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        for key in ("p", "q"):
            if values.get(key) is not None:
                values[key] = parse_vector(values[key])
        if "eps" in values:
            values["eps"] = parse_vector(values["eps"])
        if "n" in values:
            values["n"] = [int(v) for v in parse_vector(values["n"])]
    except ValueError as exc:
        raise ConfigError(f"malformed numeric value: {exc}") from None
    return RunConfig(subcommand=args.subcommand, **values).validate()


def _write(cfg: RunConfig, text: str) -> None:
    if cfg.out and cfg.out != "-":
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _table(header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        return _dump_json({"schema": SCHEMA, "rows": [dict(zip(header, r)) for r in rows]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in r])
    return buf.getvalue()


def cmd_analyze(cfg: RunConfig) -> int:
    P, Q = cfg.P, cfg.Q
    eps = cfg.eps[0]
    reports = [asy.second_order_np(P, Q, eps), asy.second_order_hoeffding(P, Q, eps)]
    reports += [asy.second_order_divergence(D, P, Q, eps) for D in cfg.divergence_specs()]
    if cfg.format == "csv":
        header = ["test", "divergence", "eps", "beta_first", "beta_second", "quad_form", "kl_variance", "quantile"]
        rows = [[r.test, r.divergence or "", r.eps, r.beta_first, r.beta_second, r.quad_form or np.nan, r.kl_variance, r.quantile] for r in reports]
        _write(cfg, _table(header, rows, "csv"))
    else:
        doc = {"schema": SCHEMA, "p": P.probs.tolist(), "q": Q.probs.tolist(), "eps": eps, "reports": [r.to_dict() for r in reports]}
        _write(cfg, _dump_json(doc))
    return EXIT_OK


def _grid_points(cfg: RunConfig, k: int) -> list[np.ndarray]:
    """Interior alternatives for the ratio grid, as (k-1)-coordinate vectors."""
    res = cfg.resolution
    if cfg.slice:
        try:
            idx_text, val_text = cfg.slice.split("=")
            idx, val = int(idx_text) - 1, float(val_text)
        except ValueError:
            raise ConfigError(f"slice must look like '2=0.5', got {cfg.slice!r}") from None
        if not 0 <= idx < k - 1:
            raise ConfigError(f"slice index must lie in 1..{k - 1}")
        base = np.array(cfg.q if cfg.q is not None else np.full(k, 1.0 / k), dtype=float)[: k - 1]
        base[idx] = val
        free = 1 if idx == 0 else 0
        others = base.sum() - base[free]
        pts = []
        for v in np.linspace(GRID_MARGIN, 1.0 - GRID_MARGIN - others, res):
            x = base.copy()
            x[free] = v
            pts.append(x)
        return pts
    if k != 3:
        raise ConfigError("2-D ratio grids need k = 3; use --slice for other k")
    axis = np.linspace(GRID_MARGIN, 1.0 - GRID_MARGIN, res)
    return [np.array([a, b]) for a in axis for b in axis if a + b <= 1.0 - GRID_MARGIN + 1e-15]


def ratio_grid_rows(cfg: RunConfig) -> tuple[list[str], list[list]]:
    P = cfg.P
    k = P.k
    eps = cfg.eps[0]
    D = cfg.divergence_specs()[0]
    header = [f"Q{i + 1}" for i in range(k - 1)] + ["eps", "rho", "beta2_np", "beta2_hoeffding", "beta2_div"]
    rows = []
    for x in _grid_points(cfg, k):
        if np.any(x <= 0) or x.sum() >= 1:
            continue
        Q = Distribution.from_coords(x)
        try:
            b_np = asy.second_order_np(P, Q, eps).beta_second
            b_h = asy.second_order_hoeffding(P, Q, eps).beta_second
            b_d = asy.second_order_divergence(D, P, Q, eps).beta_second
        except DegenerateHypotheses:
            continue
        rows.append(list(x) + [eps, b_d / b_h, b_np, b_h, b_d])
    return header, rows


def cmd_ratio_grid(cfg: RunConfig) -> int:
    header, rows = ratio_grid_rows(cfg)
    _write(cfg, _table(header, rows, cfg.format))
    return EXIT_OK


def tradeoff_curves(cfg: RunConfig) -> list[exact.TradeoffCurve]:
    P, Q = cfg.P, cfg.Q
    if len(cfg.n) != 1:
        raise ConfigError("tradeoff needs exactly one --n")
    n = cfg.n[0]
    curves = [exact.np_tradeoff_curve(P, Q, n, workers=cfg.workers)]
    curves.append(replace(exact.divergence_tradeoff_curve(parse_divergence("kl"), P, Q, n, workers=cfg.workers), test="hoeffding"))
    for D in cfg.divergence_specs():
        curves.append(exact.divergence_tradeoff_curve(D, P, Q, n, workers=cfg.workers))
    return curves


def cmd_tradeoff(cfg: RunConfig) -> int:
    header = ["test", "threshold", "alpha", "beta", "ln_alpha", "ln_beta"]
    rows = []
    for c in tradeoff_curves(cfg):
        for t, a, b, la, lb in zip(c.thresholds, c.alpha, c.beta, c.ln_alpha, c.ln_beta):
            rows.append([c.test, t, a, b, la, lb])
    _write(cfg, _table(header, rows, cfg.format))
    return EXIT_OK


def convergence_rows(cfg: RunConfig) -> tuple[list[str], list[list]]:
    P, Q = cfg.P, cfg.Q
    D = cfg.divergence_specs()[0]
    mode = cfg.mode or ("eps" if len(cfg.eps) > 1 else "n")
    if mode == "n":
        eps = cfg.eps[0]
        ns = cfg.n or list(range(50, 2001, 50))
        first = asy.second_order_np(P, Q, eps).beta_first
        header = ["n", "approx_np", "approx_hoeffding", "approx_div", "beta_first"]
        rows = [
            [
                n,
                asy.approx_exponent("np", P, Q, eps, n),
                asy.approx_exponent("hoeffding", P, Q, eps, n),
                asy.approx_exponent("divergence", P, Q, eps, n, D),
                first,
            ]
            for n in ns
        ]
        return header, rows
    if len(cfg.eps) > 1:
        eps_grid = cfg.eps
    else:
        # log-spaced below 0.01 so small-eps crossings are resolved
        small = np.geomspace(1e-3, 1e-2, 21)[:-1]
        eps_grid = np.round(np.concatenate([small, np.linspace(0.01, 0.99, 99), [0.999]]), 8).tolist()
    header = ["eps", "|beta2_np|", "|beta2_hoeffding|", "|beta2_div|"]
    rows = [
        [
            e,
            abs(asy.second_order_np(P, Q, e).beta_second),
            abs(asy.second_order_hoeffding(P, Q, e).beta_second),
            abs(asy.second_order_divergence(D, P, Q, e).beta_second),
        ]
        for e in eps_grid
    ]
    return header, rows


def cmd_convergence(cfg: RunConfig) -> int:
    header, rows = convergence_rows(cfg)
    _write(cfg, _table(header, rows, cfg.format))
    return EXIT_OK


LEMMA1_N = 10_000
KS_BUDGET = 0.01
MEAN_GAP_BUDGET = 0.05
RECONCILE_N = 100
RECONCILE_CONFIGS = 10
RECONCILE_MIN_PASS = 6


def _lemma1_check(name: str, D: DivergenceSpec, P: Distribution, cfg: RunConfig) -> dict:
    ref = montecarlo.limit_law(D, P)
    if cfg.inject_lambda_scale != 1.0:
        ref = genchisq.GenChiSq(ref.weights * cfg.inject_lambda_scale, ref.dofs)
    rep = montecarlo.statistic_convergence(D, P, LEMMA1_N, cfg.samples, cfg.seed, reference=ref)
    mean_gap = abs(rep.mean_statistic - ref.mean) / ref.mean
    passed = rep.ks_distance < KS_BUDGET and mean_gap < MEAN_GAP_BUDGET
    return {
        "name": name,
        "passed": bool(passed),
        "ks_distance": rep.ks_distance,
        "ks_budget": KS_BUDGET,
        "mean_relative_gap": mean_gap,
        "mean_budget": MEAN_GAP_BUDGET,
        "budget_note": "engineering budget: MC error ~ 1/sqrt(samples) plus finite-n allowance",
        "report": rep.to_dict(),
    }


def reconcile_configs(seed: int, count: int = RECONCILE_CONFIGS):
    """Seeded random (D, P, Q, eps) tuples for the exact-versus-MC check."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    families = ["kl", "mahalanobis_paper", "renyi:2", "chi2", "alpha:0.5"]
    out = []
    for _ in range(count):
        D = parse_divergence(families[rng.integers(len(families))])
        P = random_distribution(rng, 3, floor=0.15)
        Q = random_distribution(rng, 3, floor=0.15)
        eps = float(rng.choice([0.02, 0.05, 0.1, 0.2]))
        out.append((D, P, Q, eps))
    return out


def reconcile_exact_mc(seed: int, samples: int, n: int = RECONCILE_N, count: int = RECONCILE_CONFIGS) -> list[dict]:
    results = []
    for i, (D, P, Q, eps) in enumerate(reconcile_configs(seed, count)):
        cal = exact.calibrate_threshold(D, P, n, eps)
        curve = exact.divergence_tradeoff_curve(D, P, Q, n)
        j = int(np.searchsorted(curve.thresholds, cal.threshold, side="right"))
        # any r in (s_j, s_{j+1}] gives the same exact errors; the midpoint keeps MC clear of tie groups
        r = 0.5 * (cal.threshold + float(curve.thresholds[j]))
        a_exact, b_exact = float(curve.alpha[j]), float(curve.beta[j])
        rep = montecarlo.estimate_errors(D, r, P, Q, n, samples, seed + i)
        inside = rep.alpha_ci[0] <= a_exact <= rep.alpha_ci[1] and rep.beta_ci[0] <= b_exact <= rep.beta_ci[1]
        results.append(
            {
                "divergence": D.name,
                "p": P.probs.tolist(),
                "q": Q.probs.tolist(),
                "threshold": r,
                "alpha_exact": a_exact,
                "beta_exact": b_exact,
                "alpha_hat": rep.alpha_hat,
                "alpha_ci": list(rep.alpha_ci),
                "beta_hat": rep.beta_hat,
                "beta_ci": list(rep.beta_ci),
                "inside": bool(inside),
            }
        )
    return results


def cmd_verify(cfg: RunConfig) -> int:
    P = cfg.P
    checks = [
        _lemma1_check("lemma1_kl_wilks", parse_divergence("kl"), P, cfg),
        _lemma1_check("lemma1_mahalanobis", parse_divergence("mahalanobis_paper"), P, cfg),
    ]
    rec = reconcile_exact_mc(cfg.seed, cfg.samples)
    hits = sum(r["inside"] for r in rec)
    checks.append(
        {
            "name": "exact_vs_mc",
            "passed": hits >= RECONCILE_MIN_PASS,
            "inside": hits,
            "required": RECONCILE_MIN_PASS,
            "configs": rec,
        }
    )
    passed = all(c["passed"] for c in checks)
    _write(cfg, _dump_json({"schema": SCHEMA, "seed": cfg.seed, "samples": cfg.samples, "passed": passed, "checks": checks}))
    return EXIT_OK if passed else EXIT_VERIFY


COMMANDS = {
    "analyze": cmd_analyze,
    "ratio-grid": cmd_ratio_grid,
    "tradeoff": cmd_tradeoff,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.subcommand](cfg)
    except SizeLimit as exc:
        print(f"divtest: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DivtestError as exc:
        print(f"divtest: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
