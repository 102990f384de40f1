"""The L-harmonic profile phi, its complement psi = 1 - phi, and derived constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import (ConfigurationError, ConvergenceError, DataError, GeometryError,
                     RangeError)
from .kernel import DiscreteKernel, convolve, convolve_local, sphere_area
from .lattice import DomainMask, Grid, radial_profile


@dataclass(frozen=True, eq=False)
class StationaryProfile:
    phi: np.ndarray
    psi: np.ndarray
    grid: Grid
    residual: float
    ball_radii_used: tuple
    cstar_fit: float
    cstar_flux: float
    flux_mu: float
    decay_slope_psi: float
    fit_range: tuple
    stage_monotone: bool
    closure_constant: float = 0.0
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True, eq=False)
class ComponentMode:
    component_id: int
    lambda1: float
    mode: np.ndarray
    iterations: int = 0


def default_radii(mask: DomainMask, support_radius: float) -> tuple:
    """Doubling ball radii from twice the hole reach to the largest admissible ball."""
    n_max = mask.grid.extent - support_radius
    start = max(4.0 * support_radius, 2.0 * _hole_reach(mask))
    radii = []
    n = start
    while n < n_max:
        radii.append(n)
        n *= 2.0
    radii.append(n_max)
    return tuple(radii)


def _hole_reach(mask: DomainMask) -> float:
    if not mask.hole.any():
        return 0.0
    return float(mask.grid.radius()[mask.hole].max())


def default_fit_range(mask: DomainMask, radii) -> tuple:
    reach = max(_hole_reach(mask), mask.interaction_radius)
    return (2.0 * reach, 0.5 * max(radii))


def _solve_jacobi(dk, phi, unknown, tol, max_iter, history):
    """phi <- K phi on unknowns; iterates are checked to be pointwise nonincreasing."""
    dkd = dk.with_backend("direct")
    for it in range(max_iter):
        new = np.where(unknown, convolve(dkd, phi), phi)
        if np.any(new > phi + 1e-14):
            raise ConvergenceError("monotone iteration lost monotonicity", history)
        change = float(np.max(phi - new)) if unknown.any() else 0.0
        phi = new
        if it % 100 == 0:
            history.append(change)
        if change < tol:
            return phi, it + 1
    raise ConvergenceError(f"Jacobi iteration did not reach {tol:g} in {max_iter} sweeps", history)


def _solve_cg(dk, x, unknown, tol, max_iter, history):
    """Conjugate gradients for (I - K) x = 0 on the unknowns with x fixed elsewhere."""
    fixed = np.where(unknown, 0.0, x)
    b = convolve(dk, fixed)[unknown]
    n = int(unknown.sum())
    buf = np.zeros(unknown.shape)

    def matvec(v):
        buf[unknown] = v
        return v - convolve(dk, buf)[unknown]

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    x0 = x[unknown].copy()
    iters = 0
    for _ in range(8):
        count = [0]
        sol, info = cg(op, b, x0=x0, rtol=0.0, atol=0.05 * tol, maxiter=max_iter,
                       callback=lambda _: count.__setitem__(0, count[0] + 1))
        iters += count[0]
        out = x.copy()
        out[unknown] = sol
        res = _residual(dk, out, unknown)
        history.append(res)
        if res <= 0.5 * tol:
            return out, iters
        x0 = sol
    raise ConvergenceError(f"CG residual {res:.3e} above {tol:g}", history)


def _residual(dk, phi, where) -> float:
    if not where.any():
        return 0.0
    return float(np.max(np.abs(convolve(dk, phi) - phi)[where]))


def _dirichlet(dk, mask, unknown, outside, x0, tol, method, max_iter, history):
    x = np.where(unknown, x0, outside)
    if method == "jacobi":
        return _solve_jacobi(dk, x, unknown, tol, max_iter, history)
    if method == "cg":
        return _solve_cg(dk, x, unknown, tol, max_iter, history)
    raise ConfigurationError(f"unknown stationary solver {method!r}")


def solve_phi(dk: DiscreteKernel, mask: DomainMask, tol: float = 1e-10, radii=None,
              method: str = "cg", closure: bool = True, max_iter: int = 200_000,
              fit_range=None) -> StationaryProfile:
    """Expanding-ball scheme for J*phi = phi in the exterior, phi = 0 on holes.

    Each stage solves on B(0, n) with phi = 1 outside, warm-started from the
    previous stage. With ``closure`` the truncation at the last ball is
    corrected by adding c * eta, where eta is L-harmonic, 0 on the holes and
    |x|^(2-N) outside the ball, and c is fixed so that psi * |x|^(N-2)
    fits a single constant on the fit range.
    """
    grid = mask.grid
    if mask.component_id is None:
        raise GeometryError("mask has no component labels; call components() first")
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    radii = tuple(float(n) for n in (radii or default_radii(mask, dk.support_radius)))
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigurationError(f"ball radii must increase, got {radii}")
    if radii[-1] > grid.extent - dk.support_radius + 1e-12:
        raise ConfigurationError(
            f"largest ball {radii[-1]:g} exceeds extent - support radius = "
            f"{grid.extent - dk.support_radius:g}")
    r = grid.radius()
    zero = mask.hole | mask.bounded_nodes()
    phi = np.where(zero, 0.0, 1.0)
    history: list = []
    monotone = True
    for n in radii:
        unknown = ~zero & (r < n)
        prev = phi
        phi, _ = _dirichlet(dk, mask, unknown, np.where(zero, 0.0, 1.0), prev, tol, method,
                            max_iter, history)
        np.clip(phi, 0.0, 1.0, out=phi)
        monotone &= bool(np.all(phi <= prev))
    unknown = ~zero & (r < radii[-1])
    psi = 1.0 - phi
    fit_range = tuple(fit_range or default_fit_range(mask, radii))
    c = 0.0
    fits = _fit_range_usable(psi, mask, fit_range)
    if closure and mask.hole.any() and fits:
        tail = np.where(zero | (r == 0), 0.0, np.power(np.maximum(r, grid.spacing), 2.0 - grid.dimension))
        eta, _ = _dirichlet(dk, mask, unknown, tail, np.zeros(grid.shape), tol, method,
                            max_iter, history)
        f0 = _fit_constant(psi, mask, fit_range)
        f1 = _fit_constant(eta, mask, fit_range)
        c = f0 / (1.0 - f1)
        psi = psi + c * eta
        np.clip(psi, 0.0, 1.0, out=psi)
        phi = 1.0 - psi
    residual = _residual(dk, phi, unknown)
    if residual > tol:
        raise ConvergenceError(f"final residual {residual:.3e} above {tol:g}", history)
    partial = StationaryProfile(phi=phi, psi=psi, grid=grid, residual=residual,
                                ball_radii_used=radii, cstar_fit=0.0, cstar_flux=0.0, flux_mu=0.0,
                                decay_slope_psi=math.nan, fit_range=fit_range,
                                stage_monotone=monotone, closure_constant=c, history=history)
    if not mask.hole.any():
        return partial
    if not fits:
        # box too small for a far-field fit; the constants stay undefined
        return replace(partial, cstar_fit=math.nan, cstar_flux=math.nan, flux_mu=math.nan)
    cfit, mu, cflux = estimate_cstar(partial, fit_range, mask)
    slope = psi_decay_slope(partial, fit_range, mask)
    return StationaryProfile(phi=phi, psi=psi, grid=grid, residual=residual,
                             ball_radii_used=radii, cstar_fit=cfit, cstar_flux=cflux, flux_mu=mu,
                             decay_slope_psi=slope, fit_range=fit_range,
                             stage_monotone=monotone, closure_constant=c, history=history)


def _fit_range_usable(psi, mask, fit_range) -> bool:
    try:
        _bins(psi, mask.grid, fit_range, _exterior_where(mask, mask.grid, psi))
    except RangeError:
        return False
    return True


def _exterior_where(mask: DomainMask | None, grid: Grid, psi: np.ndarray) -> np.ndarray:
    if mask is None:
        return psi < 1.0
    return mask.exterior & ~mask.bounded_nodes()


def _bins(f, grid, fit_range, where, bin_width=None):
    bw = bin_width or 2.0 * grid.spacing
    prof = radial_profile(f, grid, bw, where=where)
    lo, hi = fit_range
    keep = (prof.r_mid - 0.5 * bw >= lo) & (prof.r_mid + 0.5 * bw <= hi)
    sel = type(prof)(*(a[keep] for a in prof))
    if len(sel.r_mid) < 4:
        raise RangeError(f"fit range [{lo:g}, {hi:g}] holds {len(sel.r_mid)} bins; need >= 4")
    return sel


def _fit_constant(f, mask, fit_range) -> float:
    grid = mask.grid
    b = _bins(f, grid, fit_range, _exterior_where(mask, grid, f))
    return float(np.mean(b.mean * b.r_mean ** (grid.dimension - 2)))


def estimate_cstar(profile: StationaryProfile, fit_range=None, mask: DomainMask | None = None):
    """Return (cstar_fit, flux_mu, cstar_flux)."""
    grid = profile.grid
    N = grid.dimension
    fit_range = fit_range or profile.fit_range
    where = _exterior_where(mask, grid, profile.psi)
    b = _bins(profile.psi, grid, fit_range, where)
    cfit = float(np.mean(b.mean * b.r_mean ** (N - 2)))
    r1, r2 = b.r_mean[:-1], b.r_mean[1:]
    dpsi = (b.mean[1:] - b.mean[:-1]) / (r2 - r1)
    rm = np.sqrt(r1 * r2)
    area = sphere_area(N)
    mu_r = area * rm ** (N - 1) * dpsi
    slope, mu = np.polyfit(1.0 / rm, mu_r, 1)
    cflux = float(mu / ((2 - N) * area))
    return cfit, float(mu), cflux


def psi_decay_slope(profile: StationaryProfile, fit_range=None, mask: DomainMask | None = None,
                    bin_width: float | None = None) -> float:
    """Log-log slope of the radial mean of psi; NaN flags a profile with no decay."""
    grid = profile.grid
    fit_range = fit_range or profile.fit_range
    b = _bins(profile.psi, grid, fit_range, _exterior_where(mask, grid, profile.psi), bin_width)
    if not np.all(b.mean > 0):
        return math.nan
    return float(np.polyfit(np.log(b.r_mean), np.log(b.mean), 1)[0])


def discrete_laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Standard 2N+1 point Laplacian; zero on the outermost layer."""
    out = np.zeros_like(f)
    core = tuple(slice(1, -1) for _ in range(f.ndim))
    acc = -2.0 * f.ndim * f[core]
    for k in range(f.ndim):
        for s in (slice(0, -2), slice(2, None)):
            idx = list(core)
            idx[k] = s
            acc = acc + f[tuple(idx)]
    out[core] = acc / (h * h)
    return out


def laplacian_decay_check(profile: StationaryProfile, fit_range=None,
                          mask: DomainMask | None = None, field: np.ndarray | None = None) -> float:
    """Log-log slope of the radial max of |Delta_h psi| over the fit range."""
    grid = profile.grid
    fit_range = fit_range or profile.fit_range
    f = profile.psi if field is None else field
    lap = np.abs(discrete_laplacian(f, grid.spacing))
    where = np.ones(grid.shape, dtype=bool)
    if mask is not None:
        # every stencil node must be exterior
        ext = mask.exterior
        where = ext.copy()
        for k in range(grid.dimension):
            where &= np.roll(ext, 1, axis=k) & np.roll(ext, -1, axis=k)
    b = _bins(lap, grid, fit_range, where)
    if not np.all(b.max > 0):
        return math.nan
    return float(np.polyfit(np.log(b.r_mean), np.log(b.max), 1)[0])


def nonlocal_energy(f: np.ndarray, dk: DiscreteKernel, mask: DomainMask | None = None,
                    region: np.ndarray | None = None) -> float:
    """E(f) = 1/2 h^N sum_{i,j in S} w_{i-j} (f_i - f_j)^2.

    S defaults to the non-hole nodes of ``mask`` (all nodes without a mask).
    Evaluated as h^N sum_{i in S} f_i (s_i f_i - (K f_S)_i) with s = K 1_S.
    """
    f = np.asarray(f, dtype=float)
    if region is None:
        region = mask.omega if mask is not None else np.ones(f.shape, dtype=bool)
    ind = region.astype(float)
    fs = f * ind
    s = convolve(dk, ind)
    e = fs * (s * fs - convolve(dk, fs))
    val = dk.spacing ** dk.dimension * math.fsum(e.ravel().tolist())
    return max(val, 0.0)


def capacity_estimate(profile: StationaryProfile, dk: DiscreteKernel, mask: DomainMask) -> float:
    """Whole-lattice energy of psi extended by 1 on the holes.

    For an L-harmonic psi the pair sum collapses (discrete Green identity) to
    h^N sum_H psi (psi - K psi), which needs psi only near the holes and so is
    insensitive to the truncation of the box.
    """
    if not mask.hole.any():
        return 0.0
    psi = np.where(mask.hole, 1.0, profile.psi)
    e = np.where(mask.hole, psi * (psi - convolve(dk, psi)), 0.0)
    return dk.spacing ** dk.dimension * math.fsum(e.ravel().tolist())


def lost_mass(u0: np.ndarray, profile: StationaryProfile) -> float:
    """h^N sum (1 - phi) u0: the mass absorbed by the holes as t -> infinity."""
    u0 = profile.grid.check(u0, "u0")
    if np.any(u0 < 0):
        raise DataError("initial data must be nonnegative")
    return profile.grid.cell_volume * math.fsum((profile.psi * u0).ravel().tolist())


def bounded_component_mode(dk: DiscreteKernel, mask: DomainMask, component_id: int,
                           tol: float = 1e-12, max_iter: int = 100_000) -> ComponentMode:
    """Perron mode of K restricted to a bounded component, by power iteration."""
    if component_id not in mask.bounded_component_ids:
        raise GeometryError(f"component {component_id} is not bounded")
    comp = mask.component(component_id)
    idx = np.nonzero(comp)
    lo = [max(int(i.min()) - dk.pad, 0) for i in idx]
    hi = [int(i.max()) + dk.pad + 1 for i in idx]
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    sub = comp[box]
    f = sub.astype(float)
    f /= np.linalg.norm(f)
    rho_old = 0.0
    for it in range(1, max_iter + 1):
        g = np.where(sub, convolve_local(dk, f), 0.0)
        rho = float(np.vdot(f, g))
        gn = np.linalg.norm(g)
        g /= gn
        change = float(np.max(np.abs(g - f)))
        f = g
        if change < math.sqrt(tol) and abs(rho - rho_old) <= tol * rho:
            break
        rho_old = rho
    else:
        raise ConvergenceError(f"power iteration stagnated after {max_iter} iterations")
    mode = np.zeros(mask.grid.shape)
    mode[box] = np.abs(f) / np.max(np.abs(f))
    return ComponentMode(component_id, 1.0 - rho, mode, it)
