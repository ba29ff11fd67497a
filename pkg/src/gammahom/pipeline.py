"""End-to-end orchestration: cell solves, macro fields, fine sweeps and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gammahom.cell_problems import CorrectorSet, compute_correctors
from gammahom.coefficients import SMOOTH_PRESETS, CellGrid, make_coefficient
from gammahom.config import ExperimentConfig
from gammahom.fem import Lattice
from gammahom.fine_scale import (FineGrid, FineOperator, energy_F, expansion_residual_flux,
                                 h1_norm, h_minus1_norm, l2_error, solve_fine)
from gammahom.gamma_expansion import (MACRO_RESOLUTION, ExpansionReport, F0_hom, F1_hom,
                                      NRecord, fit_rates, loglog_slope, recovery_sequence,
                                      richardson)
from gammahom.lp_homogenization import make_integrand, verify_equality
from gammahom.macro_fields import make_profile, solve_u1_tilde, source_from_g
from gammahom.riemann_lebesgue import make_test_function, make_weight, rl_report
from gammahom.two_scale import TwoScaleExpansion

log = logging.getLogger(__name__)

STAGES = ("correctors", "homogenize", "expand", "rl", "lp")
CSV_COLUMNS = ("n", "F_n_min", "F1_n", "h1_resid", "l2_err")
DETAIL_COLUMNS = CSV_COLUMNS + ("F1_n_recovery", "h1_norm", "h1_resid_order1",
                                "discretization_estimate")
A_HOM_ORACLE_TOL = 1e-3
STRUCTURAL_ZERO_TOL = 1e-10
GROUP_ZERO_TOL = 1e-6
MASS_TOL = 1e-10
EULER_LAGRANGE_TOL = 1e-8
SANDWICH_ULPS = 256


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")


def _fmt(x):
    return "%.17g" % x


def _versions():
    import matplotlib
    import pyamg
    import scipy

    from importlib.metadata import PackageNotFoundError, version
    try:
        own = version("gammahom")
    except PackageNotFoundError:
        own = "unknown"
    return {"gammahom": own, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyamg": pyamg.__version__,
            "matplotlib": matplotlib.__version__}


@dataclass
class RunManifest:
    """Config hash, versions, per-stage wall clock and the index of written files."""

    config_hash: str
    output: str
    stages: list
    versions: dict = field(default_factory=_versions)
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    cache_hits: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.checks.values())

    def add_file(self, key, path):
        self.files[key] = str(Path(path).relative_to(self.output))

    def missing_files(self):
        return [k for k, v in self.files.items() if not (Path(self.output) / v).is_file()]

    def to_json(self):
        return {"config_hash": self.config_hash, "stages": self.stages,
                "versions": self.versions, "timings": self.timings, "files": self.files,
                "checks": self.checks, "cache_hits": self.cache_hits}


# -- analytic references ------------------------------------------------------------


def a_hom_oracle(preset, params, dim):
    """Closed-form homogenized matrix where one exists (harmonic/arithmetic means)."""
    p = dict(params)
    if preset == "identity":
        return np.eye(dim)
    if preset == "cos1d":
        mean, amp = p.get("mean", 2.0), p.get("amplitude", 1.0)
        harm = np.sqrt(mean**2 - amp**2)
        return np.diag([harm] + [mean] * (dim - 1))
    if preset == "laminate":
        mean, amp = p.get("mean", 2.0), p.get("amplitude", 1.0)
        return np.diag([np.sqrt(mean**2 - amp**2), p.get("transverse", 1.0)])
    if preset == "checkerboard" and dim == 1:
        a1, a2 = p.get("a1", 1.0), p.get("a2", 10.0)
        return np.array([[2.0 * a1 * a2 / (a1 + a2)]])
    return None


# -- corrector cache ----------------------------------------------------------------


def corrector_key(cfg: ExperimentConfig, M):
    blob = json.dumps({"dim": cfg.dim, "coefficient": cfg.coefficient,
                       "params": cfg.coefficient_params, "M": M, "tol": cfg.solver_tol},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def correctors_for(cfg: ExperimentConfig, M, cache_dir, *, jobs=1):
    """Return ``(A, CorrectorSet, cache_hit)`` for cell resolution ``M``."""
    A = make_coefficient(cfg.coefficient, CellGrid(cfg.dim, M), **cfg.coefficient_params)
    path = Path(cache_dir) / f"correctors-{corrector_key(cfg, M)}"
    if path.with_suffix(".npz").is_file() and path.with_suffix(".json").is_file():
        return A, CorrectorSet.load(path), True
    cs = compute_correctors(A, tol=cfg.solver_tol, jobs=jobs)
    path.parent.mkdir(parents=True, exist_ok=True)
    cs.save(path)
    # reload so that fresh and cached runs see identical arrays
    return A, CorrectorSet.load(path), False


# -- stages -------------------------------------------------------------------------


class Context:
    """Shared state between stages of one run."""

    def __init__(self, cfg: ExperimentConfig, out: Path, jobs: int):
        self.cfg = cfg
        self.out = out
        self.jobs = max(1, int(jobs))
        self.cache_dir = Path(cfg.cache) if cfg.cache else out / "cache"
        self.g = make_profile(cfg.profile, cfg.dim)
        self._levels = {}
        self.hits = []

    def level(self, M):
        """Coefficient, correctors, source and ``F0`` for cell resolution ``M``."""
        if M not in self._levels:
            A, cs, hit = correctors_for(self.cfg, M, self.cache_dir, jobs=self.jobs)
            if hit:
                self.hits.append(M)
            f = source_from_g(self.g, cs.A_hom)
            F0 = F0_hom(self.g, cs.A_hom, f, linear_term_factor=self.cfg.linear_term_factor)
            self._levels[M] = {"A": A, "cs": cs, "f": f, "F0": F0}
        return self._levels[M]


def stage_correctors(ctx: Context, man: RunManifest):
    cfg = ctx.cfg
    lv = ctx.level(cfg.M)
    A, cs = lv["A"], lv["cs"]
    inv = cs.check_invariants(A.alpha, A.beta, smooth=cfg.coefficient in SMOOTH_PRESETS,
                              tol=cfg.invariant_tol)
    inv.pop("note", None)
    oracle = a_hom_oracle(cfg.coefficient, cfg.coefficient_params, cfg.dim)
    info = {"M": cfg.M, "A_hom": cs.A_hom.tolist(), "c": cs.c.tolist(),
            "invariants": inv, "psi_mean": cs.psi_mean.tolist(),
            "max_residual": max(cs.diagnostics["residuals"]),
            "fingerprint": cs.fingerprint()}
    for k, v in inv.items():
        man.checks[f"correctors.{k}"] = bool(v)
    if oracle is not None:
        err = float(np.abs(cs.A_hom - oracle).max())
        info["A_hom_oracle"] = oracle.tolist()
        info["A_hom_error"] = err
        man.checks["correctors.A_hom_oracle"] = err <= A_HOM_ORACLE_TOL
    man.summary["correctors"] = info
    path = ctx.out / "correctors.json"
    path.write_text(json.dumps(_clean(info), indent=2, sort_keys=True))
    man.add_file("correctors", path)


def stage_homogenize(ctx: Context, man: RunManifest):
    cfg = ctx.cfg
    lv = ctx.level(cfg.M)
    cs, A = lv["cs"], lv["A"]
    lat = Lattice(cfg.dim, MACRO_RESOLUTION if cfg.dim == 1 else 256, periodic=False)
    ut = solve_u1_tilde(cs.A_hom, cs.c, ctx.g, lat, tol=cfg.solver_tol)
    res = F1_hom(ctx.g, cs, lv["f"], linear_term_factor=cfg.linear_term_factor, u1_tilde=ut)
    info = {"F0_min": lv["F0"], "F1_hom": res.value, "groups": res.groups,
            "cancelled": res.cancelled, "with_cancelled_terms": res.with_cancelled_terms,
            "profile": cfg.profile, "g_boundary_max": ctx.g.boundary_max()}
    man.summary["homogenize"] = info
    for grp in ("moments", "mean_psi"):
        man.checks[f"homogenize.group_{grp}_zero"] = abs(res.groups[grp]) <= GROUP_ZERO_TOL
    if A.is_constant:
        man.checks["homogenize.F1_hom_zero"] = abs(res.value) <= STRUCTURAL_ZERO_TOL
    path = ctx.out / "homogenize.json"
    path.write_text(json.dumps(_clean(info), indent=2, sort_keys=True))
    man.add_file("homogenize", path)
    ut_path = ctx.out / "fields" / "u1_tilde.txt"
    ut_path.parent.mkdir(exist_ok=True)
    ut.dump(ut_path)
    man.add_file("u1_tilde", ut_path)


def _level_values(ctx: Context, n, m):
    """Fine-scale quantities for one ``n`` at per-cell resolution ``m``."""
    cfg = ctx.cfg
    lv = ctx.level(m)
    A, cs, f = lv["A"], lv["cs"], lv["f"]
    grid = FineGrid(cfg.dim, n, m)
    op = FineOperator(A, grid)
    u = solve_fine(A, n, f, grid, linear_term_factor=cfg.linear_term_factor,
                   tol=cfg.solver_tol, operator=op)
    lam = cfg.linear_term_factor
    rec = recovery_sequence(ctx.g, cs, n, grid.lattice)
    return {"u": u, "F": energy_F(u, A, n, f, m=m, linear_term_factor=lam),
            "F_rec": energy_F(rec, A, n, f, m=m, linear_term_factor=lam),
            "F0": lv["F0"], "grid": grid, "A": A, "cs": cs}


def _record(ctx: Context, n):
    cfg = ctx.cfg
    levels = [cfg.m, 2 * cfg.m] if cfg.richardson else [cfg.m]
    vals = [_level_values(ctx, n, m) for m in levels]
    base = vals[0]
    grid, A, cs, u = base["grid"], base["A"], base["cs"], base["u"]
    lat = grid.lattice
    ut = solve_u1_tilde(cs.A_hom, cs.c, ctx.g, lat, tol=cfg.solver_tol)
    e2 = TwoScaleExpansion(ctx.g, cs, n, ut, variant=cfg.variant).on_lattice(lat)
    e1 = TwoScaleExpansion(ctx.g, cs, n, ut, variant=cfg.variant, order=1).on_lattice(lat)
    r2 = h_minus1_norm(lat, flux=expansion_residual_flux(e2, A, n, cs.A_hom, ctx.g, m=cfg.m),
                       tol=cfg.solver_tol)
    r1 = h_minus1_norm(lat, flux=expansion_residual_flux(e1, A, n, cs.A_hom, ctx.g, m=cfg.m),
                       tol=cfg.solver_tol)

    F1 = [n * (v["F"] - v["F0"]) for v in vals]
    F1r = [n * (v["F_rec"] - v["F0"]) for v in vals]
    if len(vals) == 2:
        F = float(richardson(vals[0]["F"], vals[1]["F"]))
        F1n, F1rec = float(richardson(*F1)), float(richardson(*F1r))
        est = abs(F1[0] - F1[1]) * 4.0 / 3.0
    else:
        F, F1n, F1rec, est = base["F"], F1[0], F1r[0], float("nan")
    rec = NRecord(n=n, F_n_min=F, F1_n=F1n, h1_resid=r2, l2_err=l2_error(u, ctx.g),
                  F1_n_recovery=F1rec, h1_norm=h1_norm(u), h1_resid_order1=r1,
                  discretization_estimate=est,
                  levels={"m": levels, "F1_n": F1, "F1_n_recovery": F1r})
    return rec, u


def stage_expand(ctx: Context, man: RunManifest):
    cfg = ctx.cfg
    ns = cfg.n_list
    ref = ctx.level(cfg.M)
    F1ref = F1_hom(ctx.g, ref["cs"], ref["f"], linear_term_factor=cfg.linear_term_factor)
    levels = [cfg.m, 2 * cfg.m] if cfg.richardson else [cfg.m]
    for m in levels:
        ctx.level(m)  # build cell levels before threads start
    F0s = [ctx.level(m)["F0"] for m in levels]
    F0_min = float(richardson(*F0s)) if len(F0s) == 2 else F0s[0]
    info = {"n_list": list(ns), "levels": levels, "F0_min": F0_min, "F1_hom": F1ref.value,
            "variant": cfg.variant}
    man.summary["expand"] = info
    if not ns:
        return
    if ctx.jobs > 1:
        with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
            out = list(pool.map(lambda n: _record(ctx, n), ns))
    else:
        out = [_record(ctx, n) for n in ns]
    records = [r for r, _ in out]
    fdir = ctx.out / "fields"
    fdir.mkdir(exist_ok=True)
    for r, u in out:
        p = fdir / f"u_min_n{r.n:03d}.txt"
        u.dump(p)
        man.add_file(f"u_min_n{r.n}", p)

    report = ExpansionReport(records, F0_min, F1ref)
    _write_csv(ctx.out / "expansion.csv", CSV_COLUMNS,
               [[getattr(r, c) for c in CSV_COLUMNS] for r in report.records])
    man.add_file("expansion_csv", ctx.out / "expansion.csv")
    _write_csv(ctx.out / "expansion_detail.csv", DETAIL_COLUMNS,
               [[getattr(r, c) for c in DETAIL_COLUMNS] for r in report.records])
    man.add_file("expansion_detail_csv", ctx.out / "expansion_detail.csv")
    info["records"] = [{k: getattr(r, k) for k in DETAIL_COLUMNS} for r in report.records]
    man.summary["_expansion_report"] = report

    chk = man.checks
    F1r = np.array([r.F1_n for r in report.records])
    F1u = np.array([r.F1_n_recovery for r in report.records])
    # energies are O(|F0|) and the gaps carry a factor n, so allow their rounding
    slack = SANDWICH_ULPS * np.finfo(float).eps * abs(F0_min) * np.array(ns, dtype=float)
    chk["expand.sandwich"] = bool(np.all(F1r <= F1u + slack))
    A = ctx.level(cfg.M)["A"]
    if A.is_constant:
        est = np.array([r.discretization_estimate for r in report.records])
        if np.all(np.isfinite(est)):
            chk["expand.F1_n_structural_zero"] = bool(np.all(np.abs(F1r) <= 10.0 * est))
    g_h1 = _macro_h1_norm(ctx.g)
    h1 = max(r.h1_norm for r in report.records)
    info["h1_norm_max"], info["g_h1_norm"] = h1, g_h1
    chk["expand.h1_bounded"] = h1 <= cfg.h1_bound_factor * g_h1
    if len(ns) < 3:
        return
    fit_rates(report, tail=cfg.fit_tail, min_n=cfg.fit_min_n)
    info["rates"], info["limits"] = report.rates, report.limits
    scale = max(abs(F1ref.value), abs(F0_min))
    info["limit_scale"] = scale
    for key in ("F1_n", "F1_n_recovery"):
        if key in report.limits:
            chk[f"expand.{key}_limit"] = bool(
                abs(report.limits[key] - F1ref.value) <= cfg.limit_rel_tol * scale)
    if A.is_constant:
        # no oscillation: residuals sit at rounding level and rates are undefined
        return
    lo, hi = cfg.residual_slope_range
    s = report.rates.get("h1_resid", float("nan"))
    chk["expand.residual_rate"] = bool(lo <= s <= hi)
    lo, hi = cfg.l2_slope
    s = report.rates.get("l2_err", float("nan"))
    chk["expand.l2_rate"] = bool(lo <= s <= hi)


def _macro_h1_norm(g):
    lat = Lattice(g.dim, MACRO_RESOLUTION if g.dim == 1 else 256, periodic=False)
    xq = lat.quad_points()
    return float(np.sqrt(lat.integrate(g(xq) ** 2 + (g.grad(xq) ** 2).sum(-1))))


def stage_rl(ctx: Context, man: RunManifest):
    rl = ctx.cfg.rl
    out = []
    for i, case in enumerate(rl.cases):
        g = make_weight(case.weight, **case.weight_params)
        phi = make_test_function(case.test_function, rl.dim)
        rep = rl_report(g, phi, case.ns)
        target = rep.limit if case.limit is None else case.limit
        err = np.abs(np.array(rep.D) - target)
        tag = f"rl.{i + 1}_{case.weight}_{case.test_function}"
        entry = {"name": rep.name, "limit": rep.limit, "target": target,
                 "max_error": float(err.max())}
        if case.limit is not None:
            man.checks[f"{tag}.limit_formula"] = abs(rep.limit - case.limit) <= 1e-10
        if case.tolerance is not None:
            man.checks[f"{tag}.within_tolerance"] = bool(err.max() <= case.tolerance)
        if case.slope_range is not None:
            try:
                slope = loglog_slope(rep.ns, err)
            except ValueError:
                slope = float("nan")
            entry["slope"] = slope
            man.checks[f"{tag}.slope"] = bool(case.slope_range[0] <= slope <= case.slope_range[1])
        path = ctx.out / f"rl_{i + 1}_{case.weight}_{case.test_function}.csv"
        _write_csv(path, ("n", "D_n", "error"), [[n, d, e] for n, d, e in zip(rep.ns, rep.D, err)])
        man.add_file(f"rl_{i + 1}", path)
        entry["ns"], entry["D"] = rep.ns, rep.D
        out.append(entry)
    man.summary["rl"] = out


def stage_lp(ctx: Context, man: RunManifest):
    lp = ctx.cfg.lp
    out = []
    for case in lp.cases:
        V = make_integrand(case.integrand, **case.params)
        rep = verify_equality(V, lp.mass, lp.ns, tolerance=case.tolerance)
        tag = f"lp.{case.integrand}"
        man.checks[f"{tag}.gaps"] = rep.passed
        man.checks[f"{tag}.mass"] = all(r["mass_error"] <= MASS_TOL for r in rep.rows)
        man.checks[f"{tag}.euler_lagrange"] = all(
            r["euler_lagrange_spread"] <= EULER_LAGRANGE_TOL for r in rep.rows)
        cols = ("n", "min_G_n", "min_G_hom", "gap", "c_n", "mass_error",
                "euler_lagrange_spread")
        path = ctx.out / f"lp_{case.integrand}.csv"
        _write_csv(path, cols, [[r["n"], r["min_G_n"], rep.hom, r["gap"], r["c_n"],
                                 r["mass_error"], r["euler_lagrange_spread"]]
                                for r in rep.rows])
        man.add_file(f"lp_{case.integrand}", path)
        out.append({"integrand": case.integrand, "min_G_hom": rep.hom,
                    "tolerance": rep.tolerance, "max_gap": max(rep.gaps), "rows": rep.rows})
    man.summary["lp"] = out


_STAGE_FUNCS = {"correctors": stage_correctors, "homogenize": stage_homogenize,
                "expand": stage_expand, "rl": stage_rl, "lp": stage_lp}


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in row])


def render_figures(ctx: Context, man: RunManifest):
    """PNG figures for every stage that ran."""
    from gammahom import plotting

    fdir = ctx.out / "figures"
    fdir.mkdir(exist_ok=True)
    if "correctors" in man.stages:
        man.add_file("fig_correctors", plotting.plot_correctors(
            ctx.level(ctx.cfg.M)["cs"], fdir / "correctors.png"))
    report = man.summary.get("_expansion_report")
    if report is not None:
        man.add_file("fig_expansion", plotting.plot_expansion(report, fdir / "expansion.png"))
    if man.summary.get("rl"):
        man.add_file("fig_rl", plotting.plot_rl(man.summary["rl"], fdir / "rl.png"))
    if man.summary.get("lp"):
        man.add_file("fig_lp", plotting.plot_lp(man.summary["lp"], fdir / "lp.png"))


def run_pipeline(cfg: ExperimentConfig, *, stages=STAGES, out=None, jobs=1,
                 figures=False) -> RunManifest:
    """Run ``stages`` in order and return the manifest (reports are already on disk)."""
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ValueError(f"unknown stages {unknown}; valid: {', '.join(STAGES)}")
    if "rl" in stages and not cfg.rl.enabled:
        stages = [s for s in stages if s != "rl"]
    if "lp" in stages and not cfg.lp.enabled:
        stages = [s for s in stages if s != "lp"]
    out = Path(out or cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise StageError("setup", exc) from exc
    ctx = Context(cfg, out, jobs)
    man = RunManifest(cfg.hash(), str(out), list(stages))
    for name in STAGES:
        if name not in stages:
            continue
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            _STAGE_FUNCS[name](ctx, man)
        except Exception as exc:
            raise StageError(name, exc) from exc
        man.timings[name] = time.perf_counter() - t0
    if figures:
        t0 = time.perf_counter()
        try:
            render_figures(ctx, man)
        except Exception as exc:
            raise StageError("figures", exc) from exc
        man.timings["figures"] = time.perf_counter() - t0
    man.cache_hits = sorted(set(ctx.hits))
    emit_reports(man)
    return man


def emit_reports(man: RunManifest):
    """Write ``summary.json`` (values and checks) and ``manifest.json`` (provenance)."""
    out = Path(man.output)
    summary = {k: v for k, v in man.summary.items() if not k.startswith("_")}
    doc = {"config_hash": man.config_hash, "stages": man.stages,
           "checks": dict(sorted(man.checks.items())), "passed": man.passed,
           "results": summary}
    path = out / "summary.json"
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True))
    man.add_file("summary", path)
    man_path = out / "manifest.json"
    man.files["manifest"] = man_path.name
    man_path.write_text(json.dumps(man.to_json(), indent=2, sort_keys=True))
    missing = man.missing_files()
    if missing:
        raise StageError("emit", FileNotFoundError(f"missing outputs: {missing}"))
    return man


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj
