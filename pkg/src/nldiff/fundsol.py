"""Regular part omega of the fundamental solution F = e^-t delta + omega, and Gamma_alpha."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft
from scipy.stats import poisson

from .errors import ConfigurationError, ResolutionError
from .kernel import DiscreteKernel, convolve
from . import kernel as _kernel
from .lattice import Grid, integrate


@dataclass(frozen=True, eq=False)
class OmegaSlice:
    """omega(., t) as a density on the grid (the delta atom is never sampled)."""

    values: np.ndarray
    grid: Grid
    t: float
    method: str
    series_terms: int | None = None

    @property
    def integral(self) -> float:
        return integrate(self.values, self.grid)


def _check_grid(dk: DiscreteKernel, grid: Grid) -> None:
    if tuple(dk.grid_shape) != grid.shape or abs(dk.spacing - grid.spacing) > 1e-12 * grid.spacing:
        raise ConfigurationError("kernel was discretized for a different grid")


def _periodic_shape(grid: Grid) -> tuple:
    return tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in grid.shape)


def omega_spectral(dk: DiscreteKernel, grid: Grid, t: float) -> OmegaSlice:
    """Inverse transform of e^-t (e^{J^ t} - 1) on a period of at least 2n-1 nodes."""
    if not t > 0:
        raise ConfigurationError(f"omega needs t > 0, got {t}")
    _check_grid(dk, grid)
    shape = _periodic_shape(grid)
    spec = math.exp(-t) * np.expm1(t * dk.spectrum_on(shape))
    vals = sfft.irfftn(spec, s=shape, workers=_kernel._THREADS)
    c = grid.center_index
    # node offset k sits at index k mod P; roll the origin to the grid centre
    vals = np.roll(vals, c, axis=tuple(range(grid.dimension)))
    vals = vals[tuple(slice(0, n) for n in grid.shape)] / grid.cell_volume
    return OmegaSlice(np.ascontiguousarray(vals), grid, float(t), "spectral")


def series_terms_needed(t: float, tolerance: float) -> int:
    """Smallest n* with Poisson tail e^-t sum_{n > n*} t^n / n! below ``tolerance``."""
    n = 1
    while poisson.sf(n, t) >= tolerance:
        n += 1
    return n


def omega_series(dk: DiscreteKernel, grid: Grid, t: float, tolerance: float = 1e-13,
                 terms: int | None = None) -> OmegaSlice:
    """e^-t sum_{n>=1} t^n J^{*n} / n!, powers by repeated box convolution.

    The truncation bounds the pointwise error by tolerance * sup J.
    """
    if not t > 0:
        raise ConfigurationError(f"omega needs t > 0, got {t}")
    _check_grid(dk, grid)
    nstar = terms or series_terms_needed(t, tolerance)
    power = dk.as_field(grid)
    total = np.zeros(grid.shape)
    coef = math.exp(-t)
    mass_expected = 0.0
    for n in range(1, nstar + 1):
        coef *= t / n
        total += coef * power
        mass_expected += coef
        if n < nstar:
            power = convolve(dk, power)
    lost = mass_expected - integrate(total, grid)
    if lost > max(tolerance, 1e-12):
        raise ResolutionError(
            f"omega series at t = {t:g} loses mass {lost:.3e} through the box edge; enlarge the box")
    return OmegaSlice(total, grid, float(t), "series", nstar)


def gamma_alpha(grid: Grid, t: float, alpha: float) -> np.ndarray:
    """(4 pi alpha t)^{-N/2} exp(-|x|^2 / (4 alpha t))."""
    if not (t > 0 and alpha > 0):
        raise ConfigurationError(f"need t > 0 and alpha > 0, got t={t}, alpha={alpha}")
    N = grid.dimension
    return (4.0 * math.pi * alpha * t) ** (-N / 2) * np.exp(-grid.radius_squared() / (4.0 * alpha * t))


def interior_nodes(grid: Grid, width: float) -> np.ndarray:
    """Nodes at distance >= ``width`` from every box face."""
    keep = np.ones(grid.shape, dtype=bool)
    for x in grid.coordinates():
        keep &= grid.extent - np.abs(x) >= width - 1e-12
    return keep


def omega_residual(dk: DiscreteKernel, grid: Grid, t: float, dt_fd: float,
                   forcing: bool = True) -> float:
    """sup over interior nodes of |D_t omega - (J*omega - omega) - e^-t J|."""
    if not t > dt_fd > 0:
        raise ConfigurationError(f"need t > dt_fd > 0, got t={t}, dt_fd={dt_fd}")
    plus = omega_spectral(dk, grid, t + dt_fd).values
    minus = omega_spectral(dk, grid, t - dt_fd).values
    w = omega_spectral(dk, grid, t).values
    res = (plus - minus) / (2.0 * dt_fd) - (convolve(dk, w) - w)
    if forcing:
        res -= math.exp(-t) * dk.as_field(grid)
    keep = interior_nodes(grid, dk.support_radius)
    return float(np.max(np.abs(res[keep])))


def centered_difference(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """(f(x + h e_k) - f(x - h e_k)) / 2h, zero on the two boundary layers."""
    out = np.zeros_like(f)
    n = f.shape[axis]
    sl = [slice(None)] * f.ndim
    lo, hi, mid = list(sl), list(sl), list(sl)
    lo[axis], hi[axis], mid[axis] = slice(0, n - 2), slice(2, n), slice(1, n - 1)
    out[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)
    return out


class OmegaEstimateRow(NamedTuple):
    t: float
    integral: float
    abs_integral: float
    min: float
    sup: float
    gauss_error: float
    decay_constant: float
    gradient_error: float


def check_omega_estimates(dk: DiscreteKernel, grid: Grid, times, alpha: float | None = None,
                          r_min: float = 2.0) -> list:
    """Rows per t:

    gauss_error    t^{N/2} sup |omega - Gamma_alpha|
    decay_constant sup_{|x| >= r_min} omega |x|^{N+2} / t
    gradient_error t^{(N+1)/2} sup |D_h omega - D_h Gamma_alpha| over the N axes
    """
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigurationError("times must increase")
    alpha = dk.alpha if alpha is None else alpha
    N = grid.dimension
    h = grid.spacing
    far = grid.radius() >= r_min
    r = grid.radius()
    rows = []
    for t in times:
        w = omega_spectral(dk, grid, t).values
        g = gamma_alpha(grid, t, alpha)
        grad = 0.0
        for k in range(N):
            grad = max(grad, float(np.max(np.abs(centered_difference(w - g, h, k)))))
        rows.append(OmegaEstimateRow(
            t=t,
            integral=integrate(w, grid),
            abs_integral=integrate(np.abs(w), grid),
            min=float(w.min()),
            sup=float(w.max()),
            gauss_error=t ** (N / 2) * float(np.max(np.abs(w - g))),
            decay_constant=float(np.max((w * r ** (N + 2))[far])) / t,
            gradient_error=t ** ((N + 1) / 2) * grad,
        ))
    return rows


def omega_convolve(a: OmegaSlice, b: OmegaSlice) -> np.ndarray:
    """Density convolution h^N sum_y a(x - y) b(y) on the grid, zero extension."""
    grid = a.grid
    shape = tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in grid.shape)
    fa = sfft.rfftn(a.values, s=shape)
    fb = sfft.rfftn(b.values, s=shape)
    full = sfft.irfftn(fa * fb, s=shape) * grid.cell_volume
    c = grid.center_index
    return np.ascontiguousarray(full[tuple(slice(c, c + n) for n in grid.shape)])


def kernel_symbol(dk: DiscreteKernel, xi_axes) -> np.ndarray:
    """J^(xi) = sum_o w_o cos(xi . o h) on the tensor grid of per-axis frequencies."""
    grids = np.meshgrid(*xi_axes, indexing="ij")
    out = np.zeros(grids[0].shape)
    for o, w in zip(dk.offsets, dk.weights):
        phase = sum(g * (k * dk.spacing) for g, k in zip(grids, o))
        out += w * np.cos(phase)
    return out


def omega_window(dk: DiscreteKernel, t: float, half_width: int, decay: float = 40.0,
                 alias_decades: float = 14.0) -> np.ndarray:
    """omega(., t) on the lattice nodes |x_k| <= half_width h, for large t.

    For large t the symbol e^{(J^-1)t} is concentrated near xi = 0, so the
    inverse transform reduces to a separable cosine sum over the frequency
    cube where (1 - J^) t <= ``decay``. The frequency step is chosen so the
    periodic images sit where the heat profile is below 10^-alias_decades.
    The delta-like e^-t term is dropped, so this is meant for t >= 30.
    """
    if not t >= 30:
        raise ConfigurationError(f"omega_window is for large times (t >= 30), got {t}")
    h, N = dk.spacing, dk.dimension
    a = dk.discrete_alpha
    reach = half_width * h * math.sqrt(N)
    period = reach + math.sqrt(4.0 * a * t * alias_decades * math.log(10.0)) + 2.0 * reach
    dxi = 2.0 * math.pi / period
    ximax = math.sqrt(decay / (a * t))
    while True:
        m = int(math.ceil(ximax / dxi))
        if m * dxi >= math.pi / h:
            raise ResolutionError(f"omega band at t = {t:g} reaches the lattice Nyquist frequency")
        xi = dxi * np.arange(-m, m + 1)
        F = np.exp(t * (kernel_symbol(dk, [xi] * N) - 1.0))
        face = max(float(np.max(np.abs(np.take(F, [0, -1], axis=k)))) for k in range(N))
        if face <= 1e-16 * float(F.max()):
            break
        ximax *= 1.25
    x = h * np.arange(-half_width, half_width + 1)
    C = np.cos(np.outer(xi, x))
    out = F
    for _ in range(N):
        # contract the leading frequency axis, append the matching spatial axis
        out = np.tensordot(out, C, axes=([0], [0]))
    return out * (dxi / (2.0 * math.pi)) ** N
