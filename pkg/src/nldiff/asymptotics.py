"""Large-time checks: conservation, mass decay, inner/outer limits and barrier inequalities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, RangeError, SignalError
from .evolution import MetricsSeries
from .fundsol import gamma_alpha, omega_window
from .kernel import DiscreteKernel, convolve_local, sphere_area
from .lattice import DomainMask, Grid
from .stationary import StationaryProfile


def conservation_drift(series: MetricsSeries, t_max: float | None = None) -> float:
    """max |W(t) - W(0)| / W(0) over rows with t <= t_max (all rows by default)."""
    if len(series) < 2:
        raise DataError("conservation drift needs at least two rows")
    t = series.column("t")
    w = series.column("weighted_mass")
    if w[0] == 0:
        raise DataError("initial weighted mass is zero; drift is undefined")
    keep = np.ones(len(t), dtype=bool) if t_max is None else t <= t_max + 1e-12
    return float(np.max(np.abs(w[keep] - w[0])) / abs(w[0]))


def gaussian_moment(alpha: float, dimension: int) -> float:
    """int U_alpha(xi) |xi|^{2-N} d xi with U_alpha the unit-time heat profile.

    Closed form |S^{N-1}| (4 pi alpha)^{-N/2} 2 alpha; equals (pi alpha)^{-1/2} for N = 3.
    """
    return sphere_area(dimension) * (4.0 * math.pi * alpha) ** (-dimension / 2) * 2.0 * alpha


class MassDecayFit(NamedTuple):
    slope: float
    k_measured: float
    k_predicted: float
    window: tuple


def mass_decay_fit(series: MetricsSeries, mstar: float, cstar: float, alpha: float,
                   dimension: int = 3, noise: float = 0.0, decades: float = 1.0) -> MassDecayFit:
    """Fit M(t) - M* ~ K t^{-(N-2)/2} over the last ``decades`` of recorded times.

    The slope is a free log-log fit; K_measured is the prefactor with the
    exponent held at -(N-2)/2. K_predicted = C* M* int U_alpha |xi|^{2-N}.
    """
    t = series.column("t")
    m = series.column("mass")
    t_end = t[-1]
    sel = (t >= t_end * 10.0 ** (-decades) * (1 - 1e-12)) & (t > 0)
    if sel.sum() < 3:
        raise RangeError("fewer than three recorded times in the fit window")
    d = m[sel] - mstar
    floor = 10.0 * noise * abs(mstar)
    if np.any(d <= floor):
        raise SignalError(f"M(t) - M* falls to {d.min():.3e}, below the noise floor {floor:.3e}; "
                          "run longer or use more mass away from the holes")
    lt, ld = np.log(t[sel]), np.log(d)
    slope = float(np.polyfit(lt, ld, 1)[0])
    k_meas = float(np.exp(np.mean(ld + 0.5 * (dimension - 2) * lt)))
    k_pred = cstar * mstar * gaussian_moment(alpha, dimension)
    return MassDecayFit(slope, k_meas, k_pred, (float(t[sel][0]), float(t_end)))


def _non_pad(grid: Grid, mask: DomainMask | None) -> np.ndarray:
    return np.ones(grid.shape, dtype=bool) if mask is None else ~mask.pad


def outer_error(u: np.ndarray, grid: Grid, t: float, mstar: float, alpha: float, delta: float,
                mask: DomainMask | None = None, phi: np.ndarray | None = None) -> float:
    """sup over |x|^2 >= delta t (outside the pad) of t^{N/2} |u - M* Gamma_alpha|.

    Passing ``phi`` uses the ansatz M* phi Gamma_alpha instead, which makes the
    inner/outer pair an exact partition of the global error.
    """
    region = (grid.radius_squared() >= delta * t) & _non_pad(grid, mask)
    if not region.any():
        raise RangeError(f"outer region |x|^2 >= {delta * t:g} lies outside the box")
    ansatz = mstar * gamma_alpha(grid, t, alpha)
    if phi is not None:
        ansatz = ansatz * phi
    return t ** (grid.dimension / 2) * float(np.max(np.abs(u - ansatz)[region]))


def inner_error(u: np.ndarray, grid: Grid, t: float, mstar: float, phi: np.ndarray, alpha: float,
                delta: float, mask: DomainMask | None = None) -> float:
    """sup over non-hole nodes with |x|^2 < delta t of t^{N/2} |u - M* phi Gamma_alpha|."""
    region = (grid.radius_squared() < delta * t) & _non_pad(grid, mask)
    if mask is not None:
        region &= ~mask.hole
    if not region.any():
        raise RangeError(f"inner region |x|^2 < {delta * t:g} holds no exterior node")
    ansatz = mstar * phi * gamma_alpha(grid, t, alpha)
    return t ** (grid.dimension / 2) * float(np.max(np.abs(u - ansatz)[region]))


def global_error(u: np.ndarray, grid: Grid, t: float, mstar: float, phi: np.ndarray, alpha: float,
                 mask: DomainMask | None = None) -> float:
    """sup over all non-pad nodes of t^{N/2} |u - M* phi Gamma_alpha|."""
    region = _non_pad(grid, mask)
    ansatz = mstar * phi * gamma_alpha(grid, t, alpha)
    return t ** (grid.dimension / 2) * float(np.max(np.abs(u - ansatz)[region]))


def compact_deviation(u: np.ndarray, grid: Grid, t: float, mstar: float, phi: np.ndarray,
                      alpha: float, radius: float = 5.0) -> float:
    """sup over |x| <= radius of |t^{N/2} u - c phi| / c with c = M* (4 pi alpha)^{-N/2}."""
    N = grid.dimension
    c = mstar * (4.0 * math.pi * alpha) ** (-N / 2)
    region = grid.radius_squared() <= radius * radius
    return float(np.max(np.abs(t ** (N / 2) * u - c * phi)[region])) / c


# -- elliptic barrier z = (|x|^2 + b)^-gamma ---------------------------------------------

def sample_directions(dimension: int) -> np.ndarray:
    """Axis, face-diagonal and body-diagonal lattice directions, one per +- pair."""
    idx = np.indices((3,) * dimension).reshape(dimension, -1).T - 1
    out = []
    for v in idx:
        nz = v[v != 0]
        if len(nz) and nz[0] > 0:
            out.append(v)
    return np.array(out)


def sample_nodes(spacing: float, dimension: int, r_lo: float, r_hi: float) -> np.ndarray:
    """Lattice nodes along the sample directions with r_lo <= |x| <= r_hi (as offsets)."""
    pts = []
    for d in sample_directions(dimension):
        step = spacing * float(np.linalg.norm(d))
        for k in range(int(math.ceil(r_lo / step - 1e-9)), int(math.floor(r_hi / step + 1e-9)) + 1):
            pts.append(k * d)
    return np.array(pts, dtype=np.int64)


def z_barrier(r2, b: float, gamma: float):
    return (np.asarray(r2, dtype=float) + b) ** (-gamma)


def lz_barrier(dk: DiscreteKernel, nodes: np.ndarray, b: float, gamma: float) -> np.ndarray:
    """Discrete L z at lattice ``nodes`` (integer offsets), z evaluated exactly.

    Summed as sum_o w_o (z(x+o) - z(x)) with each difference formed through
    expm1/log1p so that cancellation does not swamp the small result.
    """
    h = dk.spacing
    x = nodes.astype(float) * h
    r2 = (x ** 2).sum(axis=1)
    base = r2 + b
    out = np.zeros(len(nodes))
    for o, w in zip(dk.offsets, dk.weights):
        oh = o.astype(float) * h
        dr2 = 2.0 * x @ oh + oh @ oh
        out += w * np.expm1(-gamma * np.log1p(dr2 / base))
    return out * base ** (-gamma)


def elliptic_margin(dk: DiscreteKernel, nodes: np.ndarray, b: float, gamma: float,
                    alpha: float | None = None) -> np.ndarray:
    """(RHS - Lz) / (2 alpha gamma (|x|^2 + b)^{-(gamma+1)}); nonnegative means the bound holds."""
    alpha = dk.alpha if alpha is None else alpha
    N = dk.dimension
    r2 = ((nodes.astype(float) * dk.spacing) ** 2).sum(axis=1)
    scale = 2.0 * alpha * gamma * (r2 + b) ** (-(gamma + 1))
    rhs = -scale * (N - 2 - 2 * gamma)
    return (rhs - lz_barrier(dk, nodes, b, gamma)) / scale


class EllipticResult(NamedTuple):
    b: float | None
    margin: float
    radii: np.ndarray
    margins: np.ndarray


def check_elliptic_barrier(dk: DiscreteKernel, gamma: float, sample_radii=(3.0, 20.0),
                           b_range=(1.0, 1e6), alpha: float | None = None,
                           rel_tol: float = 1e-3) -> EllipticResult:
    """Smallest b in ``b_range`` (geometric bisection) with a nonnegative margin at all samples."""
    N = dk.dimension
    if not 0 < gamma <= (N - 2) / 2:
        raise RangeError(f"gamma must lie in (0, {(N - 2) / 2}], got {gamma}")
    nodes = sample_nodes(dk.spacing, N, *sample_radii)
    radii = np.sqrt(((nodes * dk.spacing) ** 2).sum(axis=1))

    def worst(b):
        return float(elliptic_margin(dk, nodes, b, gamma, alpha).min())

    lo, hi = b_range
    if worst(hi) < 0:
        return EllipticResult(None, worst(hi), radii, elliptic_margin(dk, nodes, hi, gamma, alpha))
    if worst(lo) >= 0:
        hi = lo
    else:
        while hi / lo > 1.0 + rel_tol:
            mid = math.sqrt(lo * hi)
            if worst(mid) >= 0:
                hi = mid
            else:
                lo = mid
    margins = elliptic_margin(dk, nodes, hi, gamma, alpha)
    return EllipticResult(hi, float(margins.min()), radii, margins)


# -- parabolic barriers v+- = phi omega +- K t^{-(N+kappa)/2} z ----------------------------

@dataclass
class ParabolicResult:
    """delta* per K for v+ (``delta_star``), for v- and for both barriers at every K."""

    delta_star: dict
    delta_star_minus: dict = field(default_factory=dict)
    delta_star_joint: float = 0.0
    rows: list = field(default_factory=list)
    deltas: tuple = ()
    times: tuple = ()
    b: float = 0.0
    R: float = 0.0

    def margins_csv(self) -> str:
        lines = ["t,delta,kplus,min_margin_vplus,max_margin_vminus,nodes"]
        for t, d, K, mp, mm, n in self.rows:
            lines.append(f"{t:.6f},{d:.6e},{K:g},{mp:.10e},{mm:.10e},{n:d}")
        return "\n".join(lines) + "\n"


def default_barrier_times(profile: StationaryProfile, alpha: float) -> tuple:
    """Times around T with sqrt(4 alpha T) equal to the resolved radius of phi."""
    radius = profile.ball_radii_used[-1]
    T = radius * radius / (4.0 * alpha)
    return (0.5 * T, T, 2.0 * T)


def _largest_passing(deltas, worst: dict, ok) -> float:
    best = 0.0
    for d in deltas:
        if d not in worst:
            continue
        if not ok(worst[d]):
            break
        best = d
    return best


def check_parabolic_barrier(profile: StationaryProfile, dk: DiscreteKernel, mask: DomainMask,
                            kappa: float = 0.5, gamma: float = 0.2, b: float | None = None,
                            kplus=(1.0, 10.0), R: float | None = None, times=None, deltas=None,
                            tol: float = 1e-9, fd_rel: float = 1e-3) -> ParabolicResult:
    """Sampled check of D_t v+ - L v+ >= 0 and D_t v- - L v- <= 0 on R^2 <= |x|^2 <= delta t.

    Margins are scaled by t^{-(N+kappa)/2} (|x|^2 + b)^{-(gamma+1)}. For each K
    the reported delta* is the largest candidate such that it and every smaller
    candidate with a nonempty region pass at all times. omega comes from the
    band-limited window evaluation, its time derivative from centred
    differences with step fd_rel * t.
    """
    grid = mask.grid
    N, h = grid.dimension, grid.spacing
    if not 0 < kappa < min(1.0, N - 2):
        raise RangeError(f"kappa must lie in (0, {min(1.0, N - 2)}), got {kappa}")
    if not 0 < gamma < (N - 2 - kappa) / 2:
        raise RangeError(f"gamma must lie in (0, {(N - 2 - kappa) / 2}), got {gamma}")
    if any(k < 1 for k in kplus):
        raise RangeError("K+ values must be >= 1")
    alpha = dk.alpha
    if b is None:
        b = check_elliptic_barrier(dk, gamma).b
        if b is None:
            raise RangeError("no elliptic barrier parameter b found")
    if R is None:
        R = float(np.sqrt(grid.radius_squared()[mask.hole].max())) if mask.hole.any() else h
    rmax = profile.ball_radii_used[-1]
    times = tuple(float(t) for t in (times or default_barrier_times(profile, alpha)))
    if deltas is None:
        dmax = rmax * rmax / max(times)
        deltas = tuple(dmax * 2.0 ** (-k) for k in range(12, -1, -1))
    deltas = tuple(sorted(float(d) for d in deltas))

    m = int(math.floor(rmax / h)) + dk.pad
    c = grid.center_index
    if c - m < 0:
        raise RangeError("barrier window exceeds the grid")
    win = tuple(slice(c - m, c + m + 1) for _ in range(N))
    phi = profile.phi[win]
    x = h * np.arange(-m, m + 1)
    r2 = sum(np.meshgrid(*([x * x] * N), indexing="ij"))
    nodes = np.stack(np.meshgrid(*([np.arange(-m, m + 1)] * N), indexing="ij"), axis=-1)
    sel = mask.exterior[win] & (r2 >= R * R) & (r2 <= rmax * rmax)
    r2s = r2[sel]
    lz = lz_barrier(dk, nodes[sel], b, gamma)
    zz = z_barrier(r2s, b, gamma)

    rows = []
    worst_p = {K: {} for K in kplus}
    worst_m = {K: {} for K in kplus}
    for t in times:
        dt = fd_rel * t
        w = omega_window(dk, t, m)
        dw = (omega_window(dk, t + dt, m) - omega_window(dk, t - dt, m)) / (2.0 * dt)
        pw = phi * w
        cross = (phi * dw - (convolve_local(dk, pw) - pw))[sel]
        tp = t ** (-(N + kappa) / 2)
        scale = tp * (r2s + b) ** (-(gamma + 1))
        bracket = tp * (-(N + kappa) / (2.0 * t) * zz - lz)
        for d in deltas:
            region = r2s <= d * t
            if not region.any():
                continue
            for K in kplus:
                mp = float(((cross + K * bracket) / scale)[region].min())
                mm = float(((cross - K * bracket) / scale)[region].max())
                worst_p[K][d] = min(worst_p[K].get(d, math.inf), mp)
                worst_m[K][d] = max(worst_m[K].get(d, -math.inf), mm)
                rows.append((t, d, K, mp, mm, int(region.sum())))
    plus = {K: _largest_passing(deltas, worst_p[K], lambda v: v >= -tol) for K in kplus}
    minus = {K: _largest_passing(deltas, worst_m[K], lambda v: v <= tol) for K in kplus}
    joint = min(min(plus.values()), min(minus.values()))
    return ParabolicResult(plus, minus, joint, rows, deltas, times, float(b), float(R))


@dataclass
class AsymptoticsReport:
    """Measured/predicted pairs; predictions use only alpha, C* and M*."""

    conservation_drift: float = math.nan
    mstar: float = math.nan
    mass_slope: float = math.nan
    mass_prefactor_K: tuple = (math.nan, math.nan)
    outer_errors: list = field(default_factory=list)
    inner_errors: list = field(default_factory=list)
    global_errors: list = field(default_factory=list)
    compact_constant: tuple = (math.nan, math.nan)
    barrier_results: dict = field(default_factory=dict)


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:]))
