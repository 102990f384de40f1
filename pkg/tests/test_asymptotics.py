import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nldiff.asymptotics import (check_elliptic_barrier, check_parabolic_barrier,
                                compact_deviation, conservation_drift, elliptic_margin,
                                gaussian_moment, global_error, inner_error, mass_decay_fit,
                                outer_error, sample_nodes, strictly_decreasing)
from nldiff.errors import DataError, RangeError, SignalError
from nldiff.evolution import MetricsSeries
from nldiff.fundsol import gamma_alpha
from nldiff.kernel import sphere_area
from nldiff.stationary import solve_phi

ALPHA = 0.05584782699543366


@pytest.mark.parametrize("N", [3, 4, 5])
def test_gaussian_moment_quadrature(N):
    a = mpmath.mpf(ALPHA)
    f = lambda r: r * (4 * mpmath.pi * a) ** (-mpmath.mpf(N) / 2) * mpmath.exp(-r * r / (4 * a))
    with mpmath.workdps(30):
        ref = float(sphere_area(N) * mpmath.quad(f, [0, mpmath.inf]))
    assert gaussian_moment(ALPHA, N) == pytest.approx(ref, rel=1e-12)


def test_gaussian_moment_three_dimensions():
    assert gaussian_moment(ALPHA, 3) == pytest.approx((math.pi * ALPHA) ** -0.5, rel=1e-14)


@pytest.fixture(scope="module")
def profile(ball_setup):
    _, dk, mask = ball_setup
    return solve_phi(dk, mask, tol=1e-11, fit_range=(1.5, 4.5))


def test_exact_ansatz_has_zero_error(ball_setup, profile):
    grid, _, mask = ball_setup
    t, ms = 20.0, 0.7
    g = gamma_alpha(grid, t, ALPHA)
    u = ms * profile.phi * g
    assert inner_error(u, grid, t, ms, profile.phi, ALPHA, 0.5, mask) == 0.0
    assert global_error(u, grid, t, ms, profile.phi, ALPHA, mask) == 0.0
    assert outer_error(u, grid, t, ms, ALPHA, 0.5, mask, phi=profile.phi) <= 1e-15
    assert outer_error(ms * g, grid, t, ms, ALPHA, 0.5, mask) == 0.0
    assert compact_deviation(ms * profile.phi / t ** 1.5 * (4 * math.pi * ALPHA) ** -1.5,
                             grid, t, ms, profile.phi, ALPHA) == pytest.approx(0.0, abs=1e-14)


@given(st.integers(0, 10_000), st.floats(0.2, 1.0))
def test_global_is_max_of_inner_and_outer(ball_setup, profile, seed, delta):
    grid, _, mask = ball_setup
    t = 10.0
    u = np.where(mask.hole, 0.0, np.random.default_rng(seed).random(grid.shape) * 1e-3)
    args = (u, grid, t, 0.6)
    glob = global_error(*args, profile.phi, ALPHA, mask)
    inn = inner_error(*args, profile.phi, ALPHA, delta, mask)
    out = outer_error(*args, ALPHA, delta, mask, phi=profile.phi)
    assert glob == max(inn, out)


@given(st.permutations([0, 1, 2]), st.integers(0, 100))
def test_relabel_invariance(ball_setup, profile, perm, seed):
    grid, _, mask = ball_setup
    t = 10.0
    u = np.where(mask.hole, 0.0, np.random.default_rng(seed).random(grid.shape))
    phi = profile.phi
    a = global_error(u, grid, t, 0.5, phi, ALPHA)
    b = global_error(np.transpose(u, perm), grid, t, 0.5, np.transpose(phi, perm), ALPHA)
    assert a == pytest.approx(b, rel=1e-14)
    a = outer_error(u, grid, t, 0.5, ALPHA, 0.3)
    b = outer_error(np.transpose(u, perm), grid, t, 0.5, ALPHA, 0.3)
    assert a == pytest.approx(b, rel=1e-14)


def test_region_errors(ball_setup, profile):
    grid, _, mask = ball_setup
    u = np.zeros(grid.shape)
    with pytest.raises(RangeError):
        outer_error(u, grid, 1.0, 1.0, ALPHA, 1e4, mask)
    with pytest.raises(RangeError):
        inner_error(u, grid, 1.0, 1.0, profile.phi, ALPHA, 0.01, mask)


def synthetic(mstar, K, times, scale=1.0):
    s = MetricsSeries()
    for t in times:
        m = scale * (mstar + K * t ** -0.5) if t > 0 else scale * (mstar + K)
        s.append((t, m, m, 1.0, 0.0, 0.0))
    return s


def test_mass_fit_recovers_power_law():
    times = [0.0] + list(np.geomspace(1.0, 100.0, 20))
    fit = mass_decay_fit(synthetic(0.5, 2.0, times), 0.5, 1.3, ALPHA)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.k_measured == pytest.approx(2.0, rel=1e-12)
    assert fit.k_predicted == pytest.approx(1.3 * 0.5 * (math.pi * ALPHA) ** -0.5, rel=1e-14)


@given(st.floats(0.2, 2.0))
def test_mass_fit_invariances(decades):
    times = [0.0] + list(np.geomspace(0.5, 200.0, 40))
    a = mass_decay_fit(synthetic(0.5, 2.0, times), 0.5, 1.3, ALPHA, decades=decades)
    b = mass_decay_fit(synthetic(0.5, 2.0, times, scale=3.0), 1.5, 1.3, ALPHA, decades=decades)
    assert b.slope == pytest.approx(a.slope, abs=1e-10)
    c = mass_decay_fit(synthetic(0.5, 2.0, times), 0.5, 1.3, ALPHA, decades=1.0)
    assert a.k_predicted == c.k_predicted


def test_mass_fit_errors():
    times = [0.0] + list(np.geomspace(1.0, 100.0, 20))
    with pytest.raises(SignalError):
        mass_decay_fit(synthetic(0.5, 1e-9, times), 0.5, 1.0, ALPHA, noise=1e-6)
    with pytest.raises(RangeError):
        mass_decay_fit(synthetic(0.5, 1.0, [0.0, 1.0, 100.0]), 0.5, 1.0, ALPHA)


def test_conservation_drift():
    s = MetricsSeries()
    for t, w in [(0, 2.0), (1, 2.0 + 1e-9), (2, 2.0 - 4e-9), (3, 2.0 + 1.0)]:
        s.append((t, w, w, 0, 0, 0))
    assert conservation_drift(s, t_max=2.0) == pytest.approx(2e-9, rel=1e-6)
    assert conservation_drift(s) == pytest.approx(0.5)
    with pytest.raises(DataError):
        conservation_drift(MetricsSeries())


@pytest.mark.parametrize("gamma", [0.2, 0.5])
def test_elliptic_barrier(small, gamma):
    _, dk, _ = small
    res = check_elliptic_barrier(dk, gamma)
    assert res.b is not None and res.margin >= 0
    nodes = sample_nodes(dk.spacing, 3, 3.0, 20.0)
    for b in (res.b * 2, res.b * 10):
        assert elliptic_margin(dk, nodes, b, gamma).min() >= 0


def test_barrier_range_errors(small, ball_setup, profile):
    _, dk, _ = small
    for g in (0.0, 0.6):
        with pytest.raises(RangeError):
            check_elliptic_barrier(dk, g)
    _, bdk, mask = ball_setup
    with pytest.raises(RangeError):
        check_parabolic_barrier(profile, bdk, mask, kappa=1.0)
    with pytest.raises(RangeError):
        check_parabolic_barrier(profile, bdk, mask, kappa=0.5, gamma=0.3)
    with pytest.raises(RangeError):
        check_parabolic_barrier(profile, bdk, mask, kplus=(0.5,))


def test_parabolic_barrier_structure(ball_setup, profile):
    _, dk, mask = ball_setup
    res = check_parabolic_barrier(profile, dk, mask)
    assert set(res.delta_star) == {1.0, 10.0}
    for d in res.delta_star.values():
        assert d == 0.0 or d in res.deltas
    assert res.delta_star_joint <= min(res.delta_star.values())
    lines = res.margins_csv().splitlines()
    assert lines[0].startswith("t,delta,kplus") and len(lines) == len(res.rows) + 1


def test_strictly_decreasing():
    assert strictly_decreasing([3, 2, 1])
    assert not strictly_decreasing([3, 3, 1])
    assert strictly_decreasing([5])
