from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nldiff.errors import ConfigurationError, GeometryError, NumericalError, ShapeError
from nldiff.lattice import (EXTERIOR, HOLE, OUTER_PAD, Field, build_grid, build_mask, components,
                            integrate, parse_holes, radial_profile, rasterize, weighted_mass)


def test_build_grid_examples():
    g = build_grid(3, 65, 16)
    assert g.spacing == 0.5
    g = build_grid(3, 129, 32)
    assert g.size == 129 ** 3 and g.spacing == 0.5
    assert g.memory_estimate == 8 * 129 ** 3
    assert g.axis()[g.center_index] == 0.0
    with pytest.raises(ConfigurationError, match="points must be odd"):
        build_grid(3, 64, 16)
    with pytest.raises(ConfigurationError):
        build_grid(3, 15, 16)


def test_field_rejects_nonfinite():
    g = build_grid(3, 17, 4)
    Field(np.zeros(g.shape), g, time=1.0)
    bad = np.zeros(g.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericalError):
        Field(bad, g)
    with pytest.raises(ShapeError):
        Field(np.zeros((3, 3)), g)


def test_rasterize_examples():
    g = build_grid(3, 33, 8)  # h = 0.5
    empty = rasterize(parse_holes([]), g, 1.0)
    assert not empty.hole.any()
    m = rasterize(parse_holes([{"shape": "ball", "center": (0, 0, 0), "size": 2.0}]), g, 1.0)
    c = g.center_index
    assert m.hole[c, c, c]
    assert m.classes[c + 6, c, c] == EXTERIOR
    a = rasterize(parse_holes([{"shape": "ball", "center": (-3, 0, 0), "size": 1.5}]), g, 1.0)
    b = rasterize(parse_holes([{"shape": "ball", "center": (3, 0, 0), "size": 1.5}]), g, 1.0)
    both = rasterize(parse_holes([{"shape": "ball", "center": (-3, 0, 0), "size": 1.5},
                                  {"shape": "ball", "center": (3, 0, 0), "size": 1.5}]), g, 1.0)
    assert both.hole.sum() == a.hole.sum() + b.hole.sum()
    with pytest.raises(GeometryError):
        rasterize(parse_holes([{"shape": "ball", "center": (0, 0, 0), "size": 6.5}]), g, 1.0)


def test_pad_is_one_support_radius():
    g = build_grid(3, 33, 8)
    m = rasterize(parse_holes([]), g, 1.0)
    face = np.min([g.extent - np.abs(np.broadcast_to(x, g.shape)) for x in g.coordinates()], axis=0)
    assert np.array_equal(m.pad, face < 1.0)


@given(st.floats(0.6, 3.0), st.floats(-1.5, 1.5), st.sampled_from(["ball", "box"]))
def test_partition_and_idempotence(radius, shift, shape):
    g = build_grid(3, 33, 8)
    size = radius if shape == "ball" else (radius, radius / 2, radius)
    holes = parse_holes([{"shape": shape, "center": (shift, 0, -shift), "size": size}])
    m1, m2 = rasterize(holes, g, 1.0), rasterize(holes, g, 1.0)
    assert np.array_equal(m1.classes, m2.classes)
    total = m1.hole.astype(int) + m1.exterior.astype(int) + m1.pad.astype(int)
    assert np.all(total == 1)
    assert set(np.unique(m1.classes)) <= {HOLE, EXTERIOR, OUTER_PAD}


def bfs_partition(free, reach, start_order):
    """Plain breadth-first labeling; returns the partition as a set of frozensets."""
    w = reach.shape[0] // 2
    offs = [tuple(int(k) - w for k in o) for o in np.ndindex(reach.shape) if reach[o]]
    seen = np.zeros(free.shape, dtype=bool)
    parts = set()
    for start in start_order:
        if not free[start] or seen[start]:
            continue
        comp, q = [], deque([start])
        seen[start] = True
        while q:
            p = q.popleft()
            comp.append(p)
            for o in offs:
                n = tuple(int(a + b) for a, b in zip(p, o))
                if all(0 <= k < s for k, s in zip(n, free.shape)) and free[n] and not seen[n]:
                    seen[n] = True
                    q.append(n)
        parts.add(frozenset(comp))
    return parts


def label_partition(mask):
    parts = {}
    for idx in zip(*np.nonzero(mask.classes != HOLE)):
        parts.setdefault(int(mask.component_id[idx]), []).append(tuple(int(i) for i in idx))
    return {frozenset(v) for v in parts.values()}


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_components_match_bfs_oracle(seed):
    g = build_grid(2, 41, 10.0, min_points=3)  # h = 0.5, link radius 1 -> offsets |o| < 2
    holes = parse_holes([{"shape": "shell", "center": (0, 0), "size": (2.0, 3.2)},
                         {"shape": "box", "center": (5, -4), "size": (1.0, 0.6)}])
    m = components(rasterize(holes, g, 1.0))
    reach = (np.indices((5, 5)) - 2)
    reach = (reach ** 2).sum(axis=0) < 4.0
    nodes = list(np.ndindex(g.shape))
    np.random.default_rng(seed).shuffle(nodes)
    assert bfs_partition(m.classes != HOLE, reach, nodes) == label_partition(m)
    assert len(m.bounded_component_ids) == 1
    assert m.unbounded_component_id is not None


def test_components_examples(shell_setup):
    g = build_grid(3, 33, 8)
    m = build_mask(parse_holes([]), g, 1.0)
    assert m.unbounded_component_id == 0 and m.bounded_component_ids == ()
    m = build_mask(parse_holes([{"shape": "ball", "center": (0, 0, 0), "size": 2.0}]), g, 1.0)
    assert m.bounded_component_ids == ()
    grid, _, mask = shell_setup
    assert len(mask.bounded_component_ids) == 1
    cav = mask.component(mask.bounded_component_ids[0])
    assert cav[(grid.center_index,) * 3]
    assert grid.radius()[cav].max() < 3.0


def test_integrate_examples():
    g = build_grid(3, 65, 16)
    assert integrate(np.ones(g.shape), g) == pytest.approx(g.spacing ** 3 * 65 ** 3, rel=1e-15)
    assert integrate(np.zeros(g.shape), g) == 0.0
    d = np.zeros(g.shape)
    d[(g.center_index,) * 3] = 1.0 / g.cell_volume
    assert integrate(d, g) == pytest.approx(1.0, rel=1e-15)


@given(st.integers(0, 10_000))
def test_integrate_additive_and_weighted_symmetric(seed):
    g = build_grid(3, 17, 3)
    rng = np.random.default_rng(seed)
    f, w = rng.standard_normal(g.shape), rng.random(g.shape)
    s = integrate(f, g) + integrate(w, g)
    assert integrate(f + w, g) == pytest.approx(s, rel=1e-13, abs=1e-13)
    assert weighted_mass(f, w, g) == weighted_mass(w, f, g)
    assert weighted_mass(f, np.ones(g.shape), g) == integrate(f, g)
    assert weighted_mass(np.zeros(g.shape), w, g) == 0.0


def test_weighted_mass_exact_oracle():
    g = build_grid(3, 17, 3)
    rng = np.random.default_rng(7)
    u, w = rng.standard_normal(g.shape), rng.random(g.shape)
    exact = sum((Fraction(a) * Fraction(b) for a, b in zip(u.ravel().tolist(), w.ravel().tolist())),
                Fraction(0)) * Fraction(g.cell_volume)
    assert weighted_mass(u, w, g) == pytest.approx(float(exact), rel=1e-14)
    with pytest.raises(ShapeError):
        weighted_mass(u, np.ones((3, 3, 3)), g)


def test_radial_profile_examples():
    g = build_grid(3, 33, 6)
    r = g.radius()
    bw = 2 * g.spacing
    p = radial_profile(r, g, bw)
    assert np.all(np.abs(p.mean - p.r_mid) <= bw / 2 + 1e-12)
    p = radial_profile(np.full(g.shape, 3.5), g, bw)
    assert np.allclose(p.mean, 3.5, rtol=0, atol=1e-14)
    f = 1.0 / (r + 1.0)
    p = radial_profile(f, g, bw)
    idx = np.floor(r / bw).astype(int)
    for k, rm, mean, mx, cnt in zip(range(len(p.r_mid)), p.r_mid, p.mean, p.max, p.count):
        sel = idx == int(round(rm / bw - 0.5))
        assert cnt == sel.sum()
        assert mean == pytest.approx(f[sel].mean(), rel=1e-13)
        assert mx == f[sel].max()
    with pytest.raises(ConfigurationError):
        radial_profile(f, g, g.spacing / 2)
