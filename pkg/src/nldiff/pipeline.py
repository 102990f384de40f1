"""Stage orchestration: each stage writes its artifacts and its acceptance rows.

Rows go to ``rows_<stage>.csv``; :func:`stage_report` merges them with the
rows computed from the simulation artifacts into ``report.csv``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernel as _kernel
from .asymptotics import (check_elliptic_barrier, check_parabolic_barrier, compact_deviation,
                          conservation_drift, global_error, inner_error, mass_decay_fit,
                          outer_error, strictly_decreasing)
from .config import RunConfig
from .errors import DependencyError, NLDiffError, RangeError
from .evolution import (MetricsSeries, SimState, box_harmonic_weight, check_tcontraction,
                        exact_oracle, make_initial, run, step_rk4)
from .fundsol import check_omega_estimates, omega_residual, omega_series, omega_spectral
from .kernel import diffusivity, discretize, make_kernel
from .lattice import build_grid, build_mask, parse_holes, radial_profile, weighted_mass
from .snapshot import read_snapshot, write_snapshot
from .stationary import StationaryProfile, bounded_component_mode, capacity_estimate, solve_phi

log = logging.getLogger("nldiff")

REPORT_COLUMNS = ("criterion", "measured", "predicted", "tolerance", "pass")
STAGES = ("oracle", "stationary", "simulate", "omega", "cavity", "barriers")


class ReportRow(NamedTuple):
    criterion: str
    measured: float
    predicted: float
    tolerance: float
    passed: bool


def _num(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10e}"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow((r.criterion, _num(r.measured), _num(r.predicted), _num(r.tolerance),
                    "pass" if r.passed else "fail"))
    return buf.getvalue()


def rows_from_csv(text: str) -> list:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        def f(key):
            return float(rec[key]) if rec[key] else math.nan
        out.append(ReportRow(rec["criterion"], f("measured"), f("predicted"), f("tolerance"),
                             rec["pass"] == "pass"))
    return out


def _criterion_key(row: ReportRow):
    head, _, tail = row.criterion.partition(".")
    return (int(head), tail)


@dataclass
class Context:
    cfg: RunConfig
    out: Path

    def __post_init__(self):
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)
        threads = self.cfg["threads"]
        _kernel.set_threads(None if threads == "auto" else threads)

    def kernel(self):
        return make_kernel(self.cfg["kernel.family"], self.cfg["kernel.radius"],
                           self.cfg["grid.dimension"])

    def reference(self):
        """Kernel, grid, discrete kernel and mask of the reference geometry."""
        spec = self.kernel()
        grid = build_grid(self.cfg["grid.dimension"], self.cfg["grid.points"], self.cfg["grid.extent"])
        dk = discretize(spec, grid)
        mask = build_mask(parse_holes(self.cfg.hole_specs()), grid, spec.support_radius)
        return spec, grid, dk, mask

    def path(self, name: str) -> Path:
        return self.out / name

    def write_rows(self, stage: str, rows) -> list:
        self.path(f"rows_{stage}.csv").write_text(rows_to_csv(rows))
        for r in rows:
            log.info("%-28s measured %-18s %s", r.criterion, _num(r.measured),
                     "pass" if r.passed else "FAIL")
        return list(rows)

    def need(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.is_file():
            raise DependencyError(f"{name} not found in {self.out}; run `nldiff {stage}` first",
                                  command=stage)
        return p


def _kv_text(pairs) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, str) else f"{k} = {v:.17g}\n" for k, v in pairs)


def _kv_read(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition(" = ")
        out[k] = v.strip("'") if v.startswith("'") else float(v)
    return out


# -- stationary ---------------------------------------------------------------------------

def stage_stationary(ctx: Context) -> list:
    cfg = ctx.cfg
    spec, grid, dk, mask = ctx.reference()
    prof = solve_phi(dk, mask, tol=cfg["stationary.tol"], radii=cfg["stationary.radii"] or None,
                     method=cfg["stationary.solver"], closure=cfg["stationary.closure"],
                     max_iter=cfg["stationary.max_iter"])
    write_snapshot(ctx.path("phi.nldf"), prof.phi, grid.spacing, grid.extent, None, "phi")
    N = grid.dimension
    where = mask.exterior & ~mask.bounded_nodes()
    rp = radial_profile(prof.psi, grid, 2.0 * grid.spacing, where=where)
    lines = ["r,psi_mean,psi_scaled"]
    for r, m in zip(rp.r_mean, rp.mean):
        lines.append(f"{r:.10e},{m:.10e},{m * r ** (N - 2):.10e}")
    ctx.path("radial_psi.csv").write_text("\n".join(lines) + "\n")
    summary = [("residual", prof.residual), ("cstar_fit", prof.cstar_fit),
               ("cstar_flux", prof.cstar_flux), ("decay_slope_psi", prof.decay_slope_psi),
               ("closure_constant", prof.closure_constant),
               ("capacity", capacity_estimate(prof, dk, mask)),
               ("alpha", dk.alpha), ("alpha_lattice", dk.discrete_alpha)]
    for cid in mask.bounded_component_ids:
        summary.append((f"lambda1[{cid}]", bounded_component_mode(dk, mask, cid).lambda1))
    ctx.path("stationary.txt").write_text(_kv_text(summary))

    rel = abs(prof.cstar_fit - prof.cstar_flux) / abs(prof.cstar_flux)
    rows = [
        ReportRow("7.residual", prof.residual, 0.0, cfg["stationary.tol"],
                  prof.residual <= cfg["stationary.tol"]),
        ReportRow("7.stage_monotone", float(prof.stage_monotone), 1.0, 0.0, prof.stage_monotone),
        ReportRow("7.psi_slope", prof.decay_slope_psi, 2.0 - N, 0.05,
                  abs(prof.decay_slope_psi - (2 - N)) <= 0.05),
        ReportRow("7.cstar_agreement", rel, 0.0, 0.05, rel <= 0.05),
    ]
    return ctx.write_rows("stationary", rows)


def load_profile(ctx: Context, grid) -> tuple:
    """(phi, summary dict) from the stationary artifacts."""
    header, phi = read_snapshot(ctx.need("phi.nldf", "stationary"))
    if header.sizes != grid.shape or abs(header.spacing - grid.spacing) > 1e-12 * grid.spacing:
        raise DependencyError("phi.nldf was computed on a different grid; rerun `nldiff stationary`",
                              command="stationary")
    return phi, _kv_read(ctx.need("stationary.txt", "stationary"))


# -- simulate -----------------------------------------------------------------------------

def initial_data(cfg: RunConfig, grid, mask) -> np.ndarray:
    return make_initial(cfg["initial.kind"], grid, mask, center=cfg["initial.center"],
                        width=cfg["initial.width"], mass=cfg["initial.mass"],
                        radius=cfg["initial.radius"], inner=cfg["initial.inner"],
                        outer=cfg["initial.outer"])


def snapshot_name(t: float) -> str:
    return f"u_t{t:09.3f}.nldf"


def stage_simulate(ctx: Context) -> list:
    cfg = ctx.cfg
    spec, grid, dk, mask = ctx.reference()
    phi, _ = load_profile(ctx, grid)
    u0 = initial_data(cfg, grid, mask)
    res = run(u0, dk, mask, cfg["evolution.tmax"], cfg["evolution.dt"],
              integrator=cfg["evolution.integrator"], weight=phi,
              snapshot_times=cfg["evolution.snapshot_times"], ratio=cfg["evolution.record_ratio"])
    ctx.path("metrics.csv").write_text(res.metrics.to_csv())
    for t, u in sorted(res.snapshots.items()):
        write_snapshot(ctx.path(snapshot_name(t)), u, grid.spacing, grid.extent, t, "u")
    return ctx.write_rows("simulate", [])


# -- omega --------------------------------------------------------------------------------

def stage_omega(ctx: Context) -> list:
    cfg = ctx.cfg
    spec = ctx.kernel()
    N = cfg["grid.dimension"]
    grid = build_grid(N, cfg["omega.points"], cfg["omega.extent"])
    dk = discretize(spec, grid)
    lines = ["t,method,integral,min,max,sup_difference"]
    worst_diff = worst_int = worst_min = 0.0
    for t in cfg["omega.times"]:
        a = omega_spectral(dk, grid, t)
        b = omega_series(dk, grid, t, tolerance=cfg["omega.series_tol"])
        diff = float(np.max(np.abs(a.values - b.values)))
        worst_diff = max(worst_diff, diff)
        for s in (a, b):
            worst_int = max(worst_int, abs(s.integral - (1.0 - math.exp(-t))))
            worst_min = max(worst_min, -float(s.values.min()) / float(s.values.max()))
            lines.append(f"{t:.6f},{s.method},{s.integral:.15e},{s.values.min():.10e},"
                         f"{s.values.max():.10e},{diff:.10e}")
    rows = [ReportRow("4.spectral_vs_series", worst_diff, 0.0, 1e-8, worst_diff <= 1e-8),
            ReportRow("4.integral", worst_int, 0.0, 1e-10, worst_int <= 1e-10),
            ReportRow("4.nonnegative", worst_min, 0.0, 1e-10, worst_min <= 1e-10)]

    ggrid = build_grid(N, cfg["omega.gauss_points"], cfg["omega.gauss_extent"])
    gdk = discretize(spec, ggrid)
    est = check_omega_estimates(gdk, ggrid, cfg["omega.gauss_times"], alpha=diffusivity(spec))
    lines.append("")
    lines.append("t,integral,abs_integral,min,sup,gauss_error,decay_constant,gradient_error")
    for e in est:
        lines.append(",".join(f"{v:.10e}" for v in e))
    ctx.path("omega.csv").write_text("\n".join(lines) + "\n")
    errs = [e.gauss_error for e in est]
    bound = 0.1 * (4.0 * math.pi * diffusivity(spec)) ** (-N / 2)
    rows.append(ReportRow("5.gauss_decreasing", _max_ratio(errs), math.nan, 1.0,
                          strictly_decreasing(errs)))
    rows.append(ReportRow("5.gauss_final", errs[-1], 0.0, bound, errs[-1] <= bound))

    t, dt = cfg["omega.residual_t"], cfg["omega.dt_fd"]
    r1 = omega_residual(dk, grid, t, dt)
    r2 = omega_residual(dk, grid, t, dt / 4.0)
    ratio = r1 / r2
    rows.append(ReportRow("6.residual", r1, 0.0, 1e-5, r1 <= 1e-5))
    rows.append(ReportRow("6.richardson_ratio", ratio, 16.0, 4.0, abs(ratio - 16.0) <= 4.0))
    return ctx.write_rows("omega", rows)


def _max_ratio(values) -> float:
    v = list(values)
    return max((b / a for a, b in zip(v, v[1:])), default=math.nan)


# -- oracle-scale checks ------------------------------------------------------------------

def _rk4_error(u0, dk, mask, ue, t, dt) -> float:
    s = SimState(u0.copy())
    for _ in range(int(round(t / dt))):
        s = step_rk4(s, dk, mask, dt)
    return float(np.max(np.abs(s.u - ue)) / np.max(np.abs(ue)))


def stage_oracle(ctx: Context) -> list:
    cfg = ctx.cfg
    spec = ctx.kernel()
    N = cfg["grid.dimension"]
    rng = np.random.default_rng(cfg["seed"])
    grid = build_grid(N, cfg["oracle.points"], cfg["oracle.extent"], min_points=3)
    dk = discretize(spec, grid)
    mask = build_mask(parse_holes([{"shape": "ball", "center": (0.0,) * N,
                                    "size": cfg["oracle.hole_radius"]}]), grid, spec.support_radius)
    u0 = np.where(mask.hole, 0.0, rng.random(grid.shape))
    T = cfg["oracle.t"]
    ue = exact_oracle(u0, dk, mask, T)
    steps = (0.2, 0.1, 0.05)
    errs = [_rk4_error(u0, dk, mask, ue, T, dt) for dt in steps]
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    fine = _rk4_error(u0, dk, mask, ue, T, 0.01)
    rows = [ReportRow("1.oracle_error", fine, 0.0, 1e-8, fine <= 1e-8),
            ReportRow("1.order", order, 4.0, 0.4, abs(order - 4.0) <= 0.4)]

    w = box_harmonic_weight(dk, mask)
    w0 = weighted_mass(u0, w, grid)
    drift = 0.0
    for t in np.linspace(0.0, 2.0 * T, 9)[1:]:
        u, leaked = exact_oracle(u0, dk, mask, float(t), return_leak=True)
        drift = max(drift, abs(weighted_mass(u, w, grid) + leaked - w0) / w0)
    rows.append(ReportRow("2.oracle_drift", drift, 0.0, 1e-11, drift <= 1e-11))

    cgrid = build_grid(N, cfg["contraction.points"], cfg["contraction.extent"])
    cdk = discretize(spec, cgrid)
    cmask = build_mask(parse_holes([{"shape": "ball", "center": (0.0,) * N,
                                     "size": cfg["oracle.hole_radius"]}]), cgrid, spec.support_radius)
    tol = 1e-12 * cgrid.size
    worst = -math.inf
    for _ in range(cfg["contraction.pairs"]):
        a, b = rng.random(cgrid.shape), rng.random(cgrid.shape)
        series = check_tcontraction(a, b, cdk, cmask, cfg["contraction.steps"], cfg["evolution.dt"])
        worst = max(worst, float(np.max(np.diff(series))))
    rows.append(ReportRow("3.contraction_increase", worst, 0.0, tol, worst <= tol))
    return ctx.write_rows("oracle", rows)


# -- bounded component --------------------------------------------------------------------

def stage_cavity(ctx: Context) -> list:
    cfg = ctx.cfg
    spec = ctx.kernel()
    N = cfg["grid.dimension"]
    outer = cfg["cavity.outer"]
    grid = build_grid(N, cfg["cavity.points"], cfg["cavity.extent"])
    dk = discretize(spec, grid)
    mask = build_mask(parse_holes([{"shape": "shell", "center": (0.0,) * N,
                                    "size": (cfg["cavity.inner"], outer)}]), grid, spec.support_radius)
    if not mask.bounded_component_ids:
        raise RangeError("shell hole leaves no bounded component; widen the shell")
    cid = mask.bounded_component_ids[0]
    cav = mask.component(cid)
    lam = bounded_component_mode(dk, mask, cid).lambda1
    prof = solve_phi(dk, mask, tol=cfg["stationary.tol"], method=cfg["stationary.solver"])
    phi_cav = float(np.max(np.abs(prof.phi[cav])))
    t0, t1 = cfg["cavity.t_start"], cfg["cavity.t_end"]
    sups = {}

    def rec(s):
        sups[s.step_count] = float(np.max(s.u[cav]))

    dt = cfg["evolution.dt"]
    run(cav.astype(float), dk, mask, t1, dt, snapshot_times=(t0, t1), on_record=rec)
    slope = (math.log(sups[int(round(t1 / dt))]) - math.log(sups[int(round(t0 / dt))])) / (t1 - t0)
    rel = abs(slope + lam) / lam
    rows = [ReportRow("14.cavity_slope", slope, -lam, 0.02 * lam, rel <= 0.02),
            ReportRow("14.phi_cavity", phi_cav, 0.0, 0.0, phi_cav == 0.0)]
    return ctx.write_rows("cavity", rows)


# -- barriers -----------------------------------------------------------------------------

def _profile_stub(phi, grid, summary, radii) -> StationaryProfile:
    return StationaryProfile(phi=phi, psi=1.0 - phi, grid=grid, residual=summary["residual"],
                             ball_radii_used=radii, cstar_fit=summary["cstar_fit"],
                             cstar_flux=summary["cstar_flux"], flux_mu=math.nan,
                             decay_slope_psi=summary["decay_slope_psi"], fit_range=(0.0, 0.0),
                             stage_monotone=True, closure_constant=summary["closure_constant"],
                             history=[])


def stage_barriers(ctx: Context) -> list:
    from .stationary import default_radii
    cfg = ctx.cfg
    spec, grid, dk, mask = ctx.reference()
    phi, summary = load_profile(ctx, grid)
    rows = []
    lines = ["gamma,b,worst_margin,worst_margin_10b"]
    for g in cfg["asymptotics.elliptic_gammas"]:
        res = check_elliptic_barrier(dk, g, sample_radii=cfg["asymptotics.elliptic_radii"])
        ok = res.b is not None and res.margin >= 0
        big = math.nan
        if ok:
            big = check_elliptic_barrier(dk, g, sample_radii=cfg["asymptotics.elliptic_radii"],
                                         b_range=(10.0 * res.b, 10.0 * res.b)).margin
        lines.append(f"{g:.6f},{_num(res.b)},{_num(res.margin)},{_num(big)}")
        rows.append(ReportRow(f"12.elliptic_gamma_{g:g}", res.margin if ok else math.nan,
                              res.b if ok else math.nan, 0.0, ok))
    radii = cfg["stationary.radii"] or default_radii(mask, spec.support_radius)
    prof = _profile_stub(phi, grid, summary, tuple(radii))
    kplus = tuple(cfg["asymptotics.kplus"])
    par = check_parabolic_barrier(prof, dk, mask, kappa=cfg["asymptotics.kappa"],
                                  gamma=cfg["asymptotics.gamma"], kplus=kplus)
    ctx.path("margins.csv").write_text(par.margins_csv() + "\n" + "\n".join(lines) + "\n")
    d1, dK = par.delta_star[kplus[0]], par.delta_star[kplus[-1]]
    rows.append(ReportRow("13.delta_star_positive", d1, math.nan, 0.0, d1 > 0))
    rows.append(ReportRow("13.delta_star_kplus", dK, d1, 0.0, d1 > 0 and dK >= d1))
    return ctx.write_rows("barriers", rows)


# -- report -------------------------------------------------------------------------------

def load_snapshots(ctx: Context, grid) -> dict:
    snaps = {}
    for t in ctx.cfg["evolution.snapshot_times"]:
        header, u = read_snapshot(ctx.need(snapshot_name(t), "simulate"))
        if header.sizes != grid.shape:
            raise DependencyError(f"{snapshot_name(t)} has the wrong shape; rerun `nldiff simulate`",
                                  command="simulate")
        snaps[float(t)] = u
    return snaps


def asymptotic_rows(ctx: Context) -> list:
    cfg = ctx.cfg
    spec, grid, dk, mask = ctx.reference()
    phi, summary = load_profile(ctx, grid)
    series = MetricsSeries.from_csv(ctx.need("metrics.csv", "simulate").read_text())
    snaps = load_snapshots(ctx, grid)
    u0 = initial_data(cfg, grid, mask)
    mstar = weighted_mass(u0, phi, grid)
    alpha = diffusivity(spec)
    N = grid.dimension
    rows = []

    drift = conservation_drift(series, 50.0)
    rows.append(ReportRow("2.run_drift", drift, 0.0, 1e-6, drift <= 1e-6))

    fit = mass_decay_fit(series, mstar, summary["cstar_fit"], alpha, N, noise=drift)
    want = -(N - 2) / 2
    rows.append(ReportRow("8.mass_slope", fit.slope, want, 0.1, abs(fit.slope - want) <= 0.1))
    ratio = fit.k_measured / fit.k_predicted
    rows.append(ReportRow("8.mass_prefactor", fit.k_measured, fit.k_predicted,
                          0.25 * fit.k_predicted, abs(ratio - 1.0) <= 0.25))

    delta = cfg["asymptotics.delta"]
    times = [t for t in cfg["asymptotics.times"]]
    outer = [outer_error(snaps[t], grid, t, mstar, alpha, delta, mask) for t in times]
    inner = [inner_error(snaps[t], grid, t, mstar, phi, alpha, delta, mask) for t in times]
    rows.append(ReportRow("9.outer_decreasing", _max_ratio(outer), math.nan, 1.0,
                          strictly_decreasing(outer)))
    rows.append(ReportRow("10.inner_decreasing", _max_ratio(inner), math.nan, 1.0,
                          strictly_decreasing(inner)))
    t_end = max(snaps)
    dev = compact_deviation(snaps[t_end], grid, t_end, mstar, phi, alpha,
                            cfg["asymptotics.compact_radius"])
    rows.append(ReportRow("10.compact_constant", dev, 0.0, 0.1, dev <= 0.1))
    glob = [global_error(snaps[t], grid, t, mstar, phi, alpha, mask) for t in sorted(snaps)]
    rows.append(ReportRow("11.global_decreasing", _max_ratio(glob), math.nan, 1.0,
                          strictly_decreasing(glob)))

    lines = ["t,delta,outer_error,inner_error,global_error"]
    for t in sorted(snaps):
        g = global_error(snaps[t], grid, t, mstar, phi, alpha, mask)
        for d in cfg["asymptotics.delta_sweep"]:
            vals = []
            for f, args in ((outer_error, (alpha, d, mask)), (inner_error, (phi, alpha, d, mask))):
                try:
                    vals.append(f(snaps[t], grid, t, mstar, *args))
                except RangeError:
                    vals.append(math.nan)
            lines.append(f"{t:.6f},{d:.6f},{_num(vals[0])},{_num(vals[1])},{_num(g)}")
    ctx.path("asymptotics.csv").write_text("\n".join(lines) + "\n")
    return ctx.write_rows("report", rows)


def stage_report(ctx: Context) -> list:
    """Merge stage rows with the asymptotic rows into report.csv."""
    rows = asymptotic_rows(ctx)
    for stage in STAGES:
        p = ctx.path(f"rows_{stage}.csv")
        if p.is_file():
            rows.extend(rows_from_csv(p.read_text()))
        else:
            log.warning("no rows from stage %s; run `nldiff %s` or `nldiff verify`", stage,
                        "verify" if stage in ("oracle", "cavity", "barriers") else stage)
    rows.sort(key=_criterion_key)
    ctx.path("report.csv").write_text(rows_to_csv(rows))
    return rows


def stage_verify(ctx: Context) -> list:
    for stage in (stage_oracle, stage_stationary, stage_simulate, stage_omega, stage_cavity,
                  stage_barriers):
        log.info("stage %s", stage.__name__.removeprefix("stage_"))
        stage(ctx)
    return stage_report(ctx)


def stage_selftest(ctx: Context) -> list:
    """Oracle-scale checks that need no reference artifacts."""
    from .config import parse_text
    rows = stage_oracle(ctx)
    N = ctx.cfg["grid.dimension"]
    spec = ctx.kernel()
    grid = build_grid(N, 33, 6.0)
    dk = discretize(spec, grid)
    diff = max(float(np.max(np.abs(omega_spectral(dk, grid, t).values
                                   - omega_series(dk, grid, t).values))) for t in (0.5, 1.0))
    rows.append(ReportRow("4.spectral_vs_series_33", diff, 0.0, 1e-8, diff <= 1e-8))
    field = np.random.default_rng(ctx.cfg["seed"]).random((17,) * N)
    write_snapshot(ctx.path("selftest.nldf"), field, 0.25, 2.0, 1.5, "selftest")
    back = read_snapshot(ctx.path("selftest.nldf"))[1]
    same = bool(np.array_equal(field.view(np.uint64), back.view(np.uint64)))
    rows.append(ReportRow("15.snapshot_roundtrip", float(same), 1.0, 0.0, same))
    fix = parse_text(ctx.cfg.render()) == ctx.cfg
    rows.append(ReportRow("15.config_fixpoint", float(fix), 1.0, 0.0, fix))
    big = build_grid(N, 45, 8.25)
    mask = build_mask(parse_holes([]), big, spec.support_radius)
    u0 = make_initial("gaussian", big, mask, center=(0.0,) * N, width=0.5)
    res = run(u0, discretize(spec, big), mask, 1.0, 0.25)
    m = res.metrics.column("mass")
    leak = float(np.max(np.abs(m - m[0])))
    rows.append(ReportRow("2.no_hole_mass", leak, 0.0, 1e-12, leak <= 1e-12))
    ctx.path("selftest.csv").write_text(rows_to_csv(rows))
    return rows


COMMANDS = {
    "stationary": stage_stationary,
    "simulate": stage_simulate,
    "omega": stage_omega,
    "verify": stage_verify,
    "report": stage_report,
    "selftest": stage_selftest,
}


def dispatch(command: str, cfg: RunConfig) -> list:
    if command not in COMMANDS:
        raise NLDiffError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    ctx = Context(cfg, cfg["output_dir"])
    ctx.path("resolved.cfg").write_text(cfg.render())
    return COMMANDS[command](ctx)
