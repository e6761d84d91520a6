"""Batch experiment harness.

One experiment per invocation: a command picks a verification suite, a
seeded configuration generates the test fields, and a machine-readable
report is written with one (tag, value, tolerance, pass) entry per
assertion. Exit status is 0 when every entry passes, 1 when any fails
(the report is still written), 2 on configuration errors.

Fields and measures referenced by path use the JSON formats of the field
and transport layers; reports are JSON by default with a flat CSV
projection available.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import entropy as ent
from . import fields as flds
from . import jacobi as jac
from . import sphere as sph
from . import transport as tp
from .grids import GridSpec, build_grid
from .numdiff import fd_hessian_frames

COMMANDS = (
    "geometry-check",
    "entropy-verify",
    "talagrand",
    "lichnerowicz",
    "w1-green",
    "jacobi-check",
)


@dataclass
class ExperimentConfig:
    command: str
    n_colat: int = 64
    n_lon: int = 128
    dim: int = 2
    seed: int = 0
    samples: int = 10000
    cases: int = 10
    lmax: int = 6
    lmax_potential: int = 3
    epsilon_list: list = dataclass_field(default_factory=lambda: [0.05])
    tau_list: list = dataclass_field(default_factory=lambda: [0.1, 0.05, 0.025])
    tolerances: dict = dataclass_field(default_factory=dict)
    lp_points: int = 0
    input_field: str | None = None
    input_measure: str | None = None
    output: str | None = None
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        if any(t <= 0 for t in self.tolerances.values()):
            raise ValueError("tolerances must be positive")

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def grid(self):
        return build_grid(GridSpec(n_colat=self.n_colat, n_lon=self.n_lon, dim=self.dim))


def _check(tag, value, tolerance, passed=None):
    if passed is None:
        passed = bool(value <= tolerance)
    return {"tag": tag, "value": float(value), "tolerance": float(tolerance), "pass": bool(passed)}


# ---------------------------------------------------------------------------
# suites


def _suite_geometry(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    checks = []
    pts = sph.random_points(rng, cfg.samples, cfg.dim)
    norms = rng.uniform(0.0, np.pi - 0.1, cfg.samples)
    taus = sph.random_tangents(rng, pts, norms)
    mapped = sph.exp_map_batch(pts, taus)
    back = sph.log_map_batch(pts, mapped)
    checks.append(
        _check("exp-log-roundtrip", np.max(np.linalg.norm(back - taus, axis=-1)), cfg.tol("roundtrip", 1e-10))
    )
    others = sph.random_points(rng, cfg.samples, cfg.dim)
    lhs = np.cos(sph.distance_batch(mapped, others))
    rho = np.linalg.norm(taus, axis=-1)
    from .trig import sinc

    rhs = np.cos(rho) * np.cos(sph.distance_batch(pts, others)) + sinc(rho) * np.sum(taus * others, axis=-1)
    checks.append(_check("spherical-cosine-rule", np.max(np.abs(lhs - rhs)), cfg.tol("cosine", 1e-10)))

    m = min(cfg.samples, 200)
    x = sph.random_points(rng, m, cfg.dim)
    d_target = rng.uniform(0.1, np.pi - 0.1, m)
    y = sph.exp_map_batch(x, sph.random_tangents(rng, x, d_target))
    frames = sph.frames_from_gradients(x, sph.log_map_batch(x, y))
    analytic = sph.hessian_half_dist_sq_batch(x, y, frames)

    def half_sq(q):
        reps = q.shape[0] // m
        yy = np.repeat(y, reps, axis=0) if reps > 1 else y
        d = sph.distance_batch(q, yy[: q.shape[0]])
        return 0.5 * d * d

    numeric = _fd_hessian_paired(half_sq, x, y, frames)
    checks.append(_check("half-dist-sq-hessian-fd", np.max(np.abs(analytic - numeric)), cfg.tol("hessian", 1e-5)))

    jac_err = 0.0
    for k in range(min(m, 100)):
        block = jac.hessian_from_jacobi(jac.CurvatureSpec(dim=cfg.dim), float(d_target[k]))
        jac_err = max(jac_err, float(np.max(np.abs(block - analytic[k]))))
    checks.append(_check("hessian-vs-deviation-solver", jac_err, cfg.tol("hessian_jacobi", 1e-10)))

    rot = sph.random_rotation(rng, cfg.dim + 1)
    d0 = sph.distance_batch(pts, others)
    d1 = sph.distance_batch(pts @ rot.T, others @ rot.T)
    equiv = np.max(np.abs(d0 - d1))
    equiv = max(equiv, float(np.max(np.abs(sph.exp_map_batch(pts @ rot.T, taus @ rot.T) - mapped @ rot.T))))
    checks.append(_check("rotation-equivariance", equiv, cfg.tol("equivariance", 1e-12)))
    checks.append(_check("runtime-seconds", time.perf_counter() - t0, cfg.tol("runtime", 10.0)))
    return checks, {}


def _fd_hessian_paired(func, x, y, frames):
    """FD Hessians of d(., y_k)^2/2 with the matching target per row."""
    out = np.empty((x.shape[0], frames.shape[1], frames.shape[1]))
    for k in range(x.shape[0]):
        yk = y[k]

        def fk(q):
            d = sph.distance_batch(q, yk)
            return 0.5 * d * d

        out[k] = fd_hessian_frames(fk, x[k : k + 1], frames[k : k + 1], step=1e-3)[0]
    return out


def _certified_field(grid, lmax, rng, eps_start, cert_grid=None):
    """Scaled random potential, halving the scale until certification."""
    eps = eps_start
    for _ in range(12):
        candidate = flds.random_field(grid, lmax, np.random.default_rng(rng.integers(2**32)), grad_sup=eps)
        ok, margin = flds.check_c_concavity(candidate, cert_grid=cert_grid)
        if ok:
            return candidate, eps, margin
        eps = eps / 2.0
    raise RuntimeError("no certified potential found after 12 halvings")


def _suite_entropy(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    cert = build_grid(GridSpec(n_colat=48, n_lon=96, dim=cfg.dim)) if cfg.dim == 2 else grid
    tol_rel = cfg.tol("entropy", 1e-3)
    checks = []
    rows = []
    if cfg.input_field:
        psi = flds.load_field(cfg.input_field, grid=grid)
        cases = [("file", psi, None)]
    else:
        psi, eps, _ = _certified_field(grid, cfg.lmax, rng, cfg.epsilon_list[0], cert)
        upot = flds.random_field(
            grid, cfg.lmax_potential, np.random.default_rng(rng.integers(2**32)), value_sup=0.3
        )
        cases = [("uniform", psi, None), ("gibbs", psi, upot)]
    for label, psi_case, upot in cases:
        t0 = time.perf_counter()
        rep = ent.entropy_formula_rhs(psi_case, upot, direct_method="grid")
        rel = abs(rep.direct_entropy - rep.rhs_total) / max(abs(rep.direct_entropy), 1e-300)
        checks.append(_check(f"entropy-equality-{label}", rel, tol_rel))
        checks.append(
            _check(f"assembly-regrouping-{label}", abs(rep.alt_total - rep.rhs_total), cfg.tol("regroup", 1e-10))
        )
        checks.append(_check(f"mass-defect-{label}", abs(rep.extras["mass_defect"]), cfg.tol("mass", 1e-6)))
        checks.append(_check(f"runtime-{label}", time.perf_counter() - t0, cfg.tol("runtime", 120.0)))
        rows.append(ent.report_to_dict(rep, tolerance=tol_rel) | {"case": label})
    return checks, {"reports": rows}


def _suite_talagrand(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    cert = build_grid(GridSpec(n_colat=48, n_lon=96, dim=2)) if cfg.dim == 2 else grid
    checks = []
    rows = []
    slack_tol = cfg.tol("slack", 1e-6)
    lp_tol = cfg.tol("lp_agreement", 0.02)
    for k in range(cfg.cases):
        psi, eps, _ = _certified_field(grid, cfg.lmax, rng, cfg.epsilon_list[0], cert)
        upot = flds.random_field(
            grid, cfg.lmax_potential, np.random.default_rng(rng.integers(2**32)), value_sup=0.3
        )
        out = ent.talagrand_check(psi, upot, tol=slack_tol, cert_grid=cert, lp_points=cfg.lp_points)
        checks.append(_check(f"slack-case-{k}", -out["slack"], slack_tol))
        if cfg.lp_points:
            checks.append(_check(f"lp-vs-quadrature-case-{k}", out["lp_vs_quadrature"], lp_tol))
        rows.append(
            {
                "epsilon": eps,
                "kappa": out["kappa"],
                "entropy": out["entropy"],
                "rhs_total": out["rhs_total"],
                "w2sq": out["w2_squared"],
                "slack": out["slack"],
            }
        )
    return checks, {"cases": rows}


def _suite_lichnerowicz(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    psi = flds.random_field(grid, cfg.lmax, rng, grad_sup=1.0)
    upot = flds.random_field(grid, cfg.lmax_potential, rng, value_sup=0.3)
    target = jac.lichnerowicz_integral(psi, upot)
    taus = sorted(cfg.tau_list, reverse=True)
    gaps = []
    rows = []
    for tau in taus:
        scaled = jac._scale_field(psi, tau)
        value = ent.pushforward_entropy(scaled, upot) / tau**2
        gaps.append(abs(value - target) / target)
        tia, lje, det2 = jac.small_tau_expansion_terms(psi, tau, upot)
        for term, val in (("trace_i_minus_a", tia), ("minus_log_jexp", lje), ("minus_log_det2", det2)):
            rows.append({"tau": tau, "term": term, "integrated_value": val, "tau_sq_ratio": val / tau**2})
        rows.append({"tau": tau, "term": "entropy_over_tau_sq", "integrated_value": value * tau**2, "tau_sq_ratio": value})
    checks = [_check("small-step-gap", gaps[-1], cfg.tol("gap", 0.05))]
    order = np.polyfit(np.log(taus), np.log(np.maximum(gaps, 1e-300)), 1)[0]
    checks.append(_check("gap-order", order, 1.0, passed=bool(order >= 1.0)))
    tia, lje, _ = jac.small_tau_expansion_terms(psi, taus[-1], upot)
    w, _ = ent.mu_log_weights(grid, upot)
    g = psi.tangent_gradient(grid.points)
    import math

    lead = 0.5 * (grid.dim - 1) * math.fsum(w * np.sum(g * g, axis=-1))
    sum_rule = abs((tia + lje) / taus[-1] ** 2 - lead) / lead
    checks.append(_check("sum-rule-half", sum_rule, cfg.tol("sum_rule", 0.01)))
    return checks, {"sweep": rows, "integral": target}


def _suite_w1_green(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    checks = []
    rows = []
    for k in range(cfg.cases):
        n_atoms = int(rng.integers(2, 8))
        mu = tp.DiscreteMeasure(sph.random_points(rng, n_atoms), _simplex(rng, n_atoms))
        n_atoms = int(rng.integers(2, 8))
        nu = tp.DiscreteMeasure(sph.random_points(rng, n_atoms), _simplex(rng, n_atoms))
        lhs, rhs = tp.green_w1_bound(mu, nu, grid)
        checks.append(_check(f"w1-bound-pair-{k}", lhs - rhs, cfg.tol("bound", 1e-9)))
        phi = flds.random_field(grid, 4, rng, grad_sup=1.0)
        resid = tp.duality_residual(phi, mu, nu, grid)
        checks.append(_check(f"duality-residual-pair-{k}", resid, cfg.tol("duality", 1e-3)))
        rows.append({"pair": k, "lhs": lhs, "rhs": rhs, "duality_residual": resid})
    return checks, {"pairs": rows}


def _simplex(rng, n):
    w = rng.random(n) + 0.05
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return w


def _suite_jacobi(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    checks = []
    worst = 0.0
    worst_hess = 0.0
    for n in (2, 3, 5):
        spec = jac.CurvatureSpec(dim=n)
        for rho in np.linspace(0.2, 2.9, 7):
            w = rng.standard_normal(n)
            cf = jac.jacobi_solve(spec, w, float(rho))
            rk = jac.rk4_jacobi(spec, w, float(rho), steps=5000)
            worst = max(worst, float(np.max(np.abs(cf.y - rk.y))), float(np.max(np.abs(cf.v - rk.v))))
            x = sph.random_points(rng, 1, n)[0]
            point = sph.SpherePoint(x)
            direction = sph.random_tangents(rng, x[None, :], np.array([rho]))[0]
            y = sph.exp_map_batch(x, direction)
            frames = sph.frames_from_gradients(x[None, :], direction[None, :])
            closed = sph.hessian_half_dist_sq_batch(x[None, :], y[None, :], frames)[0]
            worst_hess = max(worst_hess, float(np.max(np.abs(closed - jac.hessian_from_jacobi(spec, float(rho))))))
    checks.append(_check("deviation-closed-vs-rk4", worst, cfg.tol("rk4", 1e-8)))
    checks.append(_check("deviation-hessian-agreement", worst_hess, cfg.tol("hessian", 1e-10)))
    return checks, {}


_SUITES = {
    "geometry-check": _suite_geometry,
    "entropy-verify": _suite_entropy,
    "talagrand": _suite_talagrand,
    "lichnerowicz": _suite_lichnerowicz,
    "w1-green": _suite_w1_green,
    "jacobi-check": _suite_jacobi,
}


# ---------------------------------------------------------------------------
# reporting and entry point


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment; write the report; return the exit code."""
    try:
        suite = _SUITES[cfg.command]
    except KeyError:
        print(f"unknown command {cfg.command!r}", file=sys.stderr)
        return 2
    checks, extra = suite(cfg)
    report = {
        "command": cfg.command,
        "config": {
            "n_colat": cfg.n_colat,
            "n_lon": cfg.n_lon,
            "dim": cfg.dim,
            "seed": cfg.seed,
            "lmax": cfg.lmax,
            "epsilon_list": list(cfg.epsilon_list),
            "tau_list": list(cfg.tau_list),
        },
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }
    report.update(extra)
    _write_report(report, cfg)
    for c in checks:
        status = "pass" if c["pass"] else "FAIL"
        print(f"[{status}] {c['tag']}: value={c['value']:.6e} tolerance={c['tolerance']:.2e}")
    return 0 if report["pass"] else 1


def _write_report(report: dict, cfg: ExperimentConfig):
    if cfg.output is None:
        return
    if cfg.format == "json":
        with open(cfg.output, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        with open(cfg.output, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tag", "value", "tolerance", "pass"])
            for c in report["checks"]:
                writer.writerow([c["tag"], repr(c["value"]), repr(c["tolerance"]), c["pass"]])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphere-transport",
        description="Verification experiments for optimal transport on spheres.",
        epilog=(
            "CSV reports have fixed columns (tag, value, tolerance, pass); "
            "JSON is the canonical format and carries the full per-suite data."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with configuration fields; flags override")
        p.add_argument("--grid-colat", type=int, dest="n_colat")
        p.add_argument("--grid-lon", type=int, dest="n_lon")
        p.add_argument("--dim", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--cases", type=int)
        p.add_argument("--lmax", type=int)
        p.add_argument("--eps", type=float, nargs="+", dest="epsilon_list")
        p.add_argument("--tau", type=float, nargs="+", dest="tau_list")
        p.add_argument("--tol-entropy", type=float, dest="tol_entropy")
        p.add_argument("--lp-points", type=int, dest="lp_points")
        p.add_argument("--input-field", dest="input_field")
        p.add_argument("--input-measure", dest="input_measure")
        p.add_argument("--output")
        p.add_argument("--format", choices=("json", "csv"))
    return parser


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            data.update(json.load(fh))
    for key in (
        "n_colat",
        "n_lon",
        "dim",
        "seed",
        "samples",
        "cases",
        "lmax",
        "epsilon_list",
        "tau_list",
        "lp_points",
        "input_field",
        "input_measure",
        "output",
        "format",
    ):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "tol_entropy", None) is not None:
        data.setdefault("tolerances", {})["entropy"] = args.tol_entropy
    data["command"] = args.command
    return ExperimentConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
