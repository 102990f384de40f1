"""Time integration of u_t = J*u - u on the exterior domain, with u = 0 on holes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import expm, solve

from .errors import ConfigurationError, DataError, SimulationAborted
from .kernel import DiscreteKernel, convolve, dense_kernel_matrix
from .lattice import DomainMask, Grid, integrate, weighted_mass

RK4_DT_MAX = 2.7
METRIC_COLUMNS = ("t", "mass", "weighted_mass", "sup_u", "min_u", "pad_mass")


@dataclass(frozen=True, eq=False)
class SimState:
    u: np.ndarray
    time: float = 0.0
    step_count: int = 0


class MetricsSeries:
    """Rows of (t, mass, weighted_mass, sup_u, min_u, pad_mass) with increasing t."""

    def __init__(self, columns=METRIC_COLUMNS):
        self.columns = tuple(columns)
        self.rows: list = []

    def append(self, row) -> None:
        row = tuple(float(x) for x in row)
        if self.rows and not row[0] > self.rows[-1][0]:
            raise DataError(f"metrics time {row[0]} does not increase past {self.rows[-1][0]}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(f"{x:.17g}" for x in r))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "MetricsSeries":
        lines = [ln for ln in text.strip().splitlines() if ln]
        out = cls(lines[0].split(","))
        for ln in lines[1:]:
            out.append([float(x) for x in ln.split(",")])
        return out


class RunResult(NamedTuple):
    state: SimState
    metrics: MetricsSeries
    snapshots: dict


def apply_generator(dk: DiscreteKernel, mask: DomainMask, u: np.ndarray) -> np.ndarray:
    """A u = (K u - u) on non-hole nodes, 0 on holes."""
    out = convolve(dk, u)
    out -= u
    out[mask.hole] = 0.0
    return out


def step_rk4(state: SimState, dk: DiscreteKernel, mask: DomainMask, dt: float) -> SimState:
    if not 0 < dt <= RK4_DT_MAX:
        raise ConfigurationError(f"RK4 dt must lie in (0, {RK4_DT_MAX}], got {dt}")
    u = state.u
    k1 = apply_generator(dk, mask, u)
    k2 = apply_generator(dk, mask, u + 0.5 * dt * k1)
    k3 = apply_generator(dk, mask, u + 0.5 * dt * k2)
    k4 = apply_generator(dk, mask, u + dt * k3)
    new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    new[mask.hole] = 0.0
    return SimState(new, state.time + dt, state.step_count + 1)


def step_exponential_euler(state: SimState, dk: DiscreteKernel, mask: DomainMask,
                           dt: float) -> SimState:
    """u <- e^-dt u + (1 - e^-dt) K u, then zero on holes."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    a = math.exp(-dt)
    new = a * state.u + (1.0 - a) * convolve(dk, state.u)
    new[mask.hole] = 0.0
    return SimState(new, state.time + dt, state.step_count + 1)


INTEGRATORS: dict = {"rk4": step_rk4, "expeuler": step_exponential_euler}


def dense_generator(dk: DiscreteKernel, mask: DomainMask, cap: int = 4096) -> np.ndarray:
    K = dense_kernel_matrix(dk, mask.grid.shape, cap)
    A = K - np.eye(K.shape[0])
    A[mask.hole.ravel()] = 0.0
    return A


def exact_oracle(u0: np.ndarray, dk: DiscreteKernel, mask: DomainMask, t: float,
                 cap: int = 4096, return_leak: bool = False):
    """e^{tA} u0 by dense matrix exponential.

    With ``return_leak`` the system is augmented by one sink state that
    collects the mass jumping out of the box, and (u, leaked) is returned.
    """
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}")
    grid = mask.grid
    u0 = grid.check(u0, "u0")
    A = dense_generator(dk, mask, cap)
    if not return_leak:
        return (expm(t * A) @ u0.ravel()).reshape(grid.shape)
    n = A.shape[0]
    K = A + np.eye(n)
    K[mask.hole.ravel()] = 0.0
    out_rate = np.where(mask.hole.ravel(), 0.0, 1.0 - dense_kernel_matrix(dk, grid.shape, cap).sum(axis=0))
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = A
    B[n, :n] = out_rate
    v = np.append(u0.ravel(), 0.0)
    w = expm(t * B) @ v
    return w[:n].reshape(grid.shape), float(w[n]) * grid.cell_volume


def box_harmonic_weight(dk: DiscreteKernel, mask: DomainMask, cap: int = 4096) -> np.ndarray:
    """phi with J*phi = phi on non-hole nodes, 0 on holes and 1 outside the box.

    With this weight, weighted mass plus leaked mass is exactly conserved by
    the semi-discrete box dynamics.
    """
    grid = mask.grid
    K = dense_kernel_matrix(dk, grid.shape, cap)
    omega = ~mask.hole.ravel()
    deficit = 1.0 - K.sum(axis=1)
    Ko = K[np.ix_(omega, omega)]
    phi = np.zeros(grid.size)
    phi[omega] = solve(np.eye(Ko.shape[0]) - Ko, deficit[omega], assume_a="pos")
    return phi.reshape(grid.shape)


class PicardResult(NamedTuple):
    times: np.ndarray
    trajectory: np.ndarray
    differences: list
    ratios: list


def picard_iterate(u0: np.ndarray, dk: DiscreteKernel, mask: DomainMask, t0: float,
                   iterations: int, substeps: int = 200) -> PicardResult:
    """Iterate T u(t) = u0 + int_0^t (J*u - u) ds on [0, t0], trapezoid rule in s.

    ``differences`` holds max over t of the discrete L1 norm of successive iterates.
    """
    if not 0 < t0 < 0.5:
        raise ConfigurationError(f"horizon t0 must lie in (0, 1/2), got {t0}")
    grid = mask.grid
    u0 = np.where(mask.hole, 0.0, grid.check(u0, "u0"))
    times = np.linspace(0.0, t0, substeps + 1)
    ds = t0 / substeps
    traj = np.broadcast_to(u0, (substeps + 1,) + u0.shape).copy()
    diffs, ratios = [], []
    for _ in range(iterations):
        rate = np.stack([apply_generator(dk, mask, v) for v in traj])
        cum = np.zeros_like(traj)
        cum[1:] = np.cumsum(0.5 * ds * (rate[1:] + rate[:-1]), axis=0)
        new = u0 + cum
        new[:, mask.hole] = 0.0
        d = max(integrate(np.abs(a - b), grid) for a, b in zip(new, traj))
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        traj = new
    return PicardResult(times, traj, diffs, ratios)


def record_schedule(tmax: float, dt: float, ratio: float = 2 ** 0.25, t_min: float | None = None) -> list:
    """Geometric record times t = tmax * ratio^-k, rounded to step multiples, plus t = 0."""
    if not ratio > 1:
        raise ConfigurationError(f"record ratio must exceed 1, got {ratio}")
    steps = set()
    t_min = dt if t_min is None else t_min
    k = 0
    while True:
        t = tmax * ratio ** (-k)
        if t < t_min:
            break
        steps.add(int(round(t / dt)))
        k += 1
    steps.discard(0)
    return [0] + sorted(steps)


def make_initial(kind: str, grid: Grid, mask: DomainMask | None = None, center=None,
                 width: float = 1.0, mass: float | None = 1.0, radius: float = 1.0,
                 inner: float = 1.0, outer: float = 2.0, height: float = 1.0) -> np.ndarray:
    """Nonnegative bounded initial data, zero on holes.

    gaussian: exp(-|x-c|^2 / (2 width^2)); ball_indicator: |x-c| < radius;
    shell: inner <= |x-c| < outer. ``mass`` rescales after zeroing on holes
    (None keeps the peak ``height``).
    """
    c = np.zeros(grid.dimension) if center is None else np.asarray(center, dtype=float)
    if len(c) != grid.dimension:
        raise ConfigurationError(f"center {tuple(c)} has wrong dimension")
    d2 = sum((x - ci) ** 2 for x, ci in zip(grid.coordinates(), c))
    if kind == "gaussian":
        u = height * np.exp(-d2 / (2.0 * width * width))
    elif kind == "ball_indicator":
        u = np.where(d2 < radius * radius, height, 0.0)
    elif kind == "shell":
        u = np.where((d2 >= inner * inner) & (d2 < outer * outer), height, 0.0)
    else:
        raise ConfigurationError(f"unknown initial kind {kind!r}")
    u = np.broadcast_to(u, grid.shape).astype(float)
    if mask is not None:
        u[mask.hole] = 0.0
    if mass is not None:
        total = integrate(u, grid)
        if total <= 0:
            raise DataError("initial data vanishes outside the holes")
        u *= mass / total
    return u


def _validate_initial(u0: np.ndarray, mask: DomainMask) -> np.ndarray:
    u0 = mask.grid.check(u0, "u0")
    if not np.all(np.isfinite(u0)):
        raise DataError("initial data must be finite")
    if np.any(u0 < 0):
        raise DataError("initial data must be nonnegative")
    if np.any(u0[mask.hole] != 0):
        raise DataError("initial data must vanish on holes")
    return u0


def run(u0: np.ndarray, dk: DiscreteKernel, mask: DomainMask, tmax: float, dt: float = 0.25,
        integrator: str = "rk4", weight: np.ndarray | None = None, snapshot_times=(),
        ratio: float = 2 ** 0.25, on_record: Callable | None = None) -> RunResult:
    """Advance to ``tmax`` recording metrics on a geometric schedule.

    ``on_record(state)`` is called at every recorded time. Non-finite values
    abort with :class:`SimulationAborted` carrying the last good state.
    """
    if integrator not in INTEGRATORS:
        raise ConfigurationError(f"unknown integrator {integrator!r}; choose from {sorted(INTEGRATORS)}")
    step = INTEGRATORS[integrator]
    grid = mask.grid
    u0 = _validate_initial(u0, mask)
    w = np.ones(grid.shape) if weight is None else grid.check(weight, "weight")
    nsteps = int(round(tmax / dt))
    if nsteps < 1 or abs(nsteps * dt - tmax) > 1e-9 * max(tmax, 1.0):
        raise ConfigurationError(f"tmax {tmax} is not a positive multiple of dt {dt}")
    record = set(record_schedule(tmax, dt, ratio))
    snap_steps = {int(round(t / dt)): float(t) for t in snapshot_times}
    record |= set(snap_steps)
    pad = mask.pad
    metrics = MetricsSeries()
    snapshots = {}
    state = SimState(u0.copy(), 0.0, 0)

    def rec(s: SimState):
        u = s.u
        metrics.append((s.step_count * dt, integrate(u, grid), weighted_mass(u, w, grid),
                        float(u.max()), float(u.min()), integrate(np.where(pad, u, 0.0), grid)))
        if s.step_count in snap_steps:
            snapshots[snap_steps[s.step_count]] = u.copy()
        if on_record is not None:
            on_record(s)

    rec(state)
    for _ in range(nsteps):
        new = step(state, dk, mask, dt)
        if not np.all(np.isfinite(new.u)):
            raise SimulationAborted(f"non-finite values at t = {new.time:g}", last_good=state)
        state = replace(new, time=new.step_count * dt)
        if state.step_count in record:
            rec(state)
    return RunResult(state, metrics, snapshots)


def _positive_part_integral(a, b, grid):
    return integrate(np.maximum(a - b, 0.0), grid)


def check_tcontraction(u0_a: np.ndarray, u0_b: np.ndarray, dk: DiscreteKernel, mask: DomainMask,
                       steps: int, dt: float = 0.25, integrator: str = "rk4") -> np.ndarray:
    """Series of int (u_a - u_b)_+ after each step (entry 0 is the initial value)."""
    step = INTEGRATORS[integrator]
    grid = mask.grid
    a = SimState(np.where(mask.hole, 0.0, u0_a))
    b = SimState(np.where(mask.hole, 0.0, u0_b))
    out = [_positive_part_integral(a.u, b.u, grid)]
    for _ in range(steps):
        a, b = step(a, dk, mask, dt), step(b, dk, mask, dt)
        out.append(_positive_part_integral(a.u, b.u, grid))
    return np.array(out)


def check_comparison(sub0: np.ndarray, super0: np.ndarray, dk: DiscreteKernel, mask: DomainMask,
                     steps: int, dt: float = 0.25, integrator: str = "rk4",
                     super_mask: DomainMask | None = None, tol: float | None = None) -> np.ndarray:
    """Boolean series: sub <= super (+ tol) at every node after each step.

    ``super_mask`` lets the supersolution evolve with fewer holes.
    """
    if np.any(sub0 > super0):
        raise DataError("comparison requires sub0 <= super0")
    step = INTEGRATORS[integrator]
    if tol is None:
        tol = 0.0 if integrator == "expeuler" else 1e-12 * max(float(np.max(np.abs(super0))), 1.0)
    smask = super_mask or mask
    a = SimState(np.where(mask.hole, 0.0, sub0))
    b = SimState(np.where(smask.hole, 0.0, super0))
    out = [bool(np.all(a.u <= b.u + tol))]
    for _ in range(steps):
        a, b = step(a, dk, mask, dt), step(b, dk, smask, dt)
        out.append(bool(np.all(a.u <= b.u + tol)))
    return np.array(out)
