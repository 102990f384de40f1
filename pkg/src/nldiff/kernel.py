"""Radial compactly supported kernels, their lattice discretization and fast convolution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from .errors import (ConfigurationError, NumericalError, OracleScaleError,
                     ResolutionError, ShapeError, UnsupportedDimensionError)
from .lattice import DomainMask, Grid

_THREADS = 1


def set_threads(n: int | None) -> None:
    """Worker count for the spectral transforms (deterministic for a fixed count)."""
    global _THREADS
    _THREADS = max(1, int(n or 1))


def _smooth_bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _polynomial_compact(s):
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, np.clip(1.0 - s * s, 0.0, None) ** 4, 0.0)


PROFILES: dict = {
    "smooth_bump": _smooth_bump,
    "polynomial_compact": _polynomial_compact,
}


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (dimension / 2) / gamma_fn(dimension / 2)


def _radial_integral(g: Callable, radius: float, power: int, tol: float = 1e-10) -> float:
    """Adaptive Gauss-Kronrod integral of s^power g(s/radius) over [0, radius]."""
    val, err = quad(lambda s: s ** power * float(g(np.array(s / radius))),
                    0.0, radius, epsabs=0.0, epsrel=1e-13, limit=200)
    if not err <= tol * abs(val):
        raise NumericalError(f"radial quadrature did not converge: estimated error {err:.3e} "
                             f"for value {val:.6e}")
    return val


@dataclass(frozen=True)
class KernelSpec:
    """Continuous kernel J(z) = normalization * shape(|z| / support_radius)."""

    family: str
    support_radius: float
    dimension: int
    normalization: float
    shape: Callable = field(repr=False, compare=False, default=None)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.normalization * self.shape(r / self.support_radius)

    def rescaled(self, factor: float) -> "KernelSpec":
        """J_c(z) = c^-N J(z / c)."""
        return KernelSpec(self.family, self.support_radius * factor, self.dimension,
                          self.normalization / factor ** self.dimension, self.shape)


def make_kernel(family: str = "smooth_bump", support_radius: float = 1.0,
                dimension: int = 3) -> KernelSpec:
    if family not in PROFILES:
        raise ConfigurationError(f"unknown kernel family {family!r}; known: {sorted(PROFILES)}")
    if dimension < 3:
        raise UnsupportedDimensionError(f"dimension {dimension} unsupported; N >= 3 required")
    if not support_radius > 0:
        raise ConfigurationError(f"support_radius must be positive, got {support_radius}")
    return kernel_from_profile(PROFILES[family], support_radius, dimension, family)


def kernel_from_profile(shape: Callable, support_radius: float, dimension: int,
                        family: str = "custom") -> KernelSpec:
    """Normalize an arbitrary radial shape on [0, 1) to unit mass."""
    m0 = sphere_area(dimension) * _radial_integral(shape, support_radius, dimension - 1)
    return KernelSpec(family, float(support_radius), int(dimension), 1.0 / m0, shape)


def diffusivity(spec: KernelSpec) -> float:
    """alpha = (1/2N) * int |z|^2 J(z) dz."""
    m2 = _radial_integral(spec.shape, spec.support_radius, spec.dimension + 1)
    return sphere_area(spec.dimension) * spec.normalization * m2 / (2 * spec.dimension)


def _exact_unit_sum(weights: np.ndarray, center: int) -> np.ndarray:
    """Scale to unit sum, then absorb the rounding residue into the center weight."""
    w = weights / math.fsum(weights.tolist())
    others = math.fsum(np.delete(w, center).tolist())
    w[center] = 1.0 - others
    return w


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Lattice weights of J with exact unit sum and their padded spectrum."""

    offsets: np.ndarray
    weights: np.ndarray
    spacing: float
    dimension: int
    alpha: float
    support_radius: float
    grid_shape: tuple
    pad: int
    fft_shape: tuple
    backend: str = "fft"
    _spectra: dict = field(default_factory=dict, repr=False)

    @property
    def spectrum(self) -> np.ndarray:
        return self.spectrum_on(self.fft_shape)

    @property
    def density(self) -> np.ndarray:
        """Weights divided by the cell volume (samples of J up to renormalization)."""
        return self.weights / self.spacing ** self.dimension

    @property
    def discrete_alpha(self) -> float:
        r2 = ((self.offsets * self.spacing) ** 2).sum(axis=1)
        return math.fsum((self.weights * r2).tolist()) / (2 * self.dimension)

    def spectrum_on(self, shape: tuple) -> np.ndarray:
        """Real symbol J^(xi) on an rfftn grid of the given (periodic) shape."""
        shape = tuple(shape)
        if shape not in self._spectra:
            if any(2 * self.pad + 1 > s for s in shape):
                raise ResolutionError(f"FFT shape {shape} cannot hold kernel of half-width {self.pad}")
            arr = np.zeros(shape)
            idx = tuple((self.offsets % np.asarray(shape)).T)
            arr[idx] = self.weights
            full = sfft.rfftn(arr, workers=_THREADS)
            imag = float(np.max(np.abs(full.imag)))
            if imag > 1e-12:
                raise NumericalError(f"kernel spectrum has imaginary residue {imag:.3e}")
            spec = full.real
            spec[(0,) * len(shape)] = 1.0
            self._spectra[shape] = spec
        return self._spectra[shape]

    def as_field(self, grid: Grid) -> np.ndarray:
        """Kernel density placed on the grid, centered at the origin."""
        out = np.zeros(grid.shape)
        c = grid.center_index
        if self.pad > c:
            raise ResolutionError("kernel support does not fit in the grid")
        out[tuple((self.offsets + c).T)] = self.density
        return out

    def convolve(self, f: np.ndarray, backend: str | None = None) -> np.ndarray:
        return convolve(self, f, backend)

    def with_backend(self, backend: str) -> "DiscreteKernel":
        if backend not in ("fft", "direct"):
            raise ConfigurationError(f"unknown convolution backend {backend!r}")
        return DiscreteKernel(self.offsets, self.weights, self.spacing, self.dimension,
                              self.alpha, self.support_radius, self.grid_shape, self.pad,
                              self.fft_shape, backend, self._spectra)


def _offsets_within(radius_nodes: float, dimension: int, width: int) -> np.ndarray:
    idx = np.indices((2 * width + 1,) * dimension).reshape(dimension, -1).T - width
    keep = (idx ** 2).sum(axis=1) < radius_nodes ** 2
    return idx[keep]


def _fft_shape(grid_shape: tuple, pad: int) -> tuple:
    return tuple(sfft.next_fast_len(n + pad, real=True) for n in grid_shape)


def discretize(spec: KernelSpec, grid: Grid, backend: str = "fft") -> DiscreteKernel:
    h = grid.spacing
    if grid.dimension != spec.dimension:
        raise ShapeError(f"kernel dimension {spec.dimension} != grid dimension {grid.dimension}")
    if not h < spec.support_radius / 2:
        raise ResolutionError(
            f"spacing {h:g} under-resolves support radius {spec.support_radius:g}; need h < r/2")
    rn = spec.support_radius / h
    width = int(math.ceil(rn))
    offsets = _offsets_within(rn, grid.dimension, width)
    raw = spec(np.sqrt(((offsets * h) ** 2).sum(axis=1))) * h ** grid.dimension
    keep = raw > 0
    offsets, raw = offsets[keep], raw[keep]
    if len(np.unique(offsets[:, 0])) < 3:
        raise ResolutionError("fewer than 3 nonzero offsets per axis")
    pad = int(np.abs(offsets).max())
    center = int(np.nonzero((offsets == 0).all(axis=1))[0][0])
    weights = _exact_unit_sum(raw, center)
    dk = DiscreteKernel(offsets=offsets, weights=weights, spacing=h, dimension=grid.dimension,
                        alpha=diffusivity(spec), support_radius=spec.support_radius,
                        grid_shape=grid.shape, pad=pad, fft_shape=_fft_shape(grid.shape, pad))
    return dk.with_backend(backend)


def convolve(dk: DiscreteKernel, f: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Discrete J*f on the box with zero extension outside it."""
    f = np.asarray(f, dtype=float)
    if f.shape != tuple(dk.grid_shape):
        raise ShapeError(f"field shape {f.shape} does not match kernel grid {dk.grid_shape}")
    backend = backend or dk.backend
    if backend == "direct":
        return convolve_local(dk, f)
    out = sfft.irfftn(sfft.rfftn(f, s=dk.fft_shape, workers=_THREADS) * dk.spectrum,
                      s=dk.fft_shape, workers=_THREADS)
    out = np.ascontiguousarray(out[tuple(slice(0, n) for n in f.shape)])
    if f.min() >= 0.0:
        # nonnegative weights: clip spectral roundoff below zero
        np.maximum(out, 0.0, out=out)
    return out


def convolve_local(dk: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    """Fixed-order slice-add convolution on an array of any shape (zero extension).

    Exactly monotone in ``f``: rounding of each product and sum is monotone.
    """
    p = dk.pad
    padded = np.pad(f, p)
    out = np.zeros_like(f)
    for o, w in zip(dk.offsets, dk.weights):
        sl = tuple(slice(p + int(k), p + int(k) + n) for k, n in zip(o, f.shape))
        out += w * padded[sl]
    return out


def convolution_power(dk: DiscreteKernel, n: int) -> DiscreteKernel:
    """n-fold self-convolution, renormalized to exact unit mass."""
    if n < 1:
        raise ConfigurationError(f"convolution power must be >= 1, got {n}")
    if n == 1:
        return dk
    half = n * dk.pad
    box_half = (dk.grid_shape[0] - 1) // 2
    if half > box_half:
        raise ResolutionError(
            f"J^*{n} has half-width {half} nodes, box only {box_half}; enlarge the box")
    shape = tuple(sfft.next_fast_len(2 * half + 1, real=True) for _ in dk.grid_shape)
    spec = dk.spectrum_on(shape)
    arr = sfft.irfftn(spec ** n, s=shape, workers=_THREADS)
    rn = n * dk.support_radius / dk.spacing
    offsets = _offsets_within(rn, dk.dimension, half)
    w = arr[tuple((offsets % np.asarray(shape)).T)]
    w = np.clip(w, 0.0, None)
    keep = w > 0
    keep[np.nonzero((offsets == 0).all(axis=1))[0]] = True
    offsets, w = offsets[keep], w[keep]
    center = int(np.nonzero((offsets == 0).all(axis=1))[0][0])
    pad = int(np.abs(offsets).max())
    return DiscreteKernel(offsets=offsets, weights=_exact_unit_sum(w, center), spacing=dk.spacing,
                          dimension=dk.dimension, alpha=n * dk.alpha,
                          support_radius=n * dk.support_radius, grid_shape=dk.grid_shape, pad=pad,
                          fft_shape=_fft_shape(dk.grid_shape, pad), backend=dk.backend)


def dense_kernel_matrix(dk: DiscreteKernel, shape: tuple, cap: int = 4096) -> np.ndarray:
    """K_ij = w(x_i - x_j) on the box nodes (zero extension)."""
    size = int(np.prod(shape))
    if size > cap:
        raise OracleScaleError(f"{size} nodes exceed the dense-oracle cap of {cap}")
    idx = np.indices(shape).reshape(len(shape), -1).T
    flat = np.arange(size)
    K = np.zeros((size, size))
    for o, w in zip(dk.offsets, dk.weights):
        j = idx + o
        ok = np.all((j >= 0) & (j < np.asarray(shape)), axis=1)
        K[flat[ok], np.ravel_multi_index(j[ok].T, shape)] = w
    return K


def assemble_dense(dk: DiscreteKernel, mask: DomainMask, cap: int = 4096) -> np.ndarray:
    """Dense generator A = D(K - I), rows zeroed on hole nodes."""
    K = dense_kernel_matrix(dk, mask.grid.shape, cap)
    A = K - np.eye(K.shape[0])
    A[mask.hole.ravel()] = 0.0
    return A
