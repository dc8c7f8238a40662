import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvespace.dyadic import (
    TWO_PI,
    DyadicArc,
    WhitneyTop,
    arcs_at_level,
    box,
    chain,
    geodesic,
    hyperbolic_distance,
    mr_cover,
    mr_family,
    top_of,
)
from curvespace.errors import DegenerateInput, DepthExceeded


def test_children_examples():
    assert DyadicArc(0, 0).children() == (DyadicArc(1, 0), DyadicArc(1, 1))
    assert DyadicArc(3, 5).children() == (DyadicArc(4, 10), DyadicArc(4, 11))
    a = DyadicArc(7, 33, "third")
    for c in a.children():
        assert c.shift == "third"
        assert math.isclose(c.length, a.length / 2)
        assert c.parent() == a
    with pytest.raises(DepthExceeded):
        DyadicArc(48, 0).children()


@pytest.mark.parametrize("shift", ["none", "third"])
@pytest.mark.parametrize("level", [0, 1, 5, 11])
def test_partition(level, shift):
    arcs = list(arcs_at_level(level, shift))
    assert len(arcs) == 2**level
    assert abs(math.fsum(a.length for a in arcs) - TWO_PI) < 1e-12
    theta = np.random.default_rng(level).uniform(0, TWO_PI, 200)
    hits = sum(np.asarray(a.contains_angle(theta), dtype=int) for a in arcs)
    assert np.all(hits == 1)


def test_box_membership_examples():
    a = DyadicArc(3, 5)
    u = np.exp(1j * a.mid)
    assert box(a, "interior").contains((1 - a.length / 2) * u)
    assert not box(a, "interior").contains(0)
    assert box(a, "exterior").contains((1 + a.length / 2) * u)
    assert not box(a, "exterior").contains((1 - a.length / 2) * u)


def test_box_nesting():
    rng = np.random.default_rng(0)
    z = np.sqrt(rng.random(1000)) * np.exp(2j * np.pi * rng.random(1000))
    for child in (DyadicArc(4, 3), DyadicArc(6, 41, "third")):
        inner = box(child).contains(z)
        outer = box(child.parent()).contains(z)
        assert np.all(outer[inner])


def test_mr_family_counts():
    assert len(mr_family(0)) == 2
    for n in (1, 4, 7):
        assert len(mr_family(n)) == 2 * (2 ** (n + 1) - 1)


def test_mr_covering_property():
    rng = np.random.default_rng(11)
    maxlevel = 10
    for _ in range(1000):
        k = int(rng.integers(1, maxlevel - 1))
        ell = TWO_PI / 2**k
        theta = rng.uniform(0, TWO_PI)
        arc = mr_cover(theta, ell, maxlevel)
        assert arc is not None
        assert arc.length <= 8 * ell * (1 + 1e-12)
        if arc.level == 0:
            continue  # the whole circle contains every arc
        # both endpoints at least ell/4 inside the cover
        off = (theta - arc.start) % TWO_PI
        assert off >= ell / 4 - 1e-12
        assert off + ell <= arc.length - ell / 4 + 1e-12


def test_geodesic_examples():
    assert geodesic(0.5, -0.5).is_segment
    g = geodesic(0.5, 0.5j)
    assert abs(abs(g.center) ** 2 - g.radius**2 - 1) < 1e-12
    for w in (0.5, 0.5j):
        assert abs(abs(w - g.center) - g.radius) < 1e-12
    with pytest.raises(DegenerateInput):
        geodesic(0.5, 0.5)


@settings(max_examples=60, deadline=None)
@given(
    r1=st.floats(0.05, 0.98), t1=st.floats(0, 6.28), r2=st.floats(0.05, 0.98), t2=st.floats(0, 6.28)
)
def test_geodesic_orthogonality(r1, t1, r2, t2):
    z1, z2 = r1 * np.exp(1j * t1), r2 * np.exp(1j * t2)
    if abs(z1 - z2) < 1e-6:
        return
    g = geodesic(z1, z2)
    if not g.is_segment:
        assert abs(abs(g.center) ** 2 - g.radius**2 - 1) < 1e-10 * max(1, g.radius**2)


def test_hyperbolic_distance_radial():
    assert math.isclose(hyperbolic_distance(0, 0.5), 2 * math.atanh(0.5), rel_tol=1e-14)


def test_chain_examples():
    arc = DyadicArc(2, 1)
    top = WhitneyTop(arc)
    assert len(chain(top, top.center).tops) == 1
    z = (1 - arc.length / 2**6) * np.exp(1j * arc.mid)
    c = chain(top, z)
    assert 5 <= len(c.tops) <= 7
    assert c.tops[-1].contains(z)


@pytest.mark.parametrize("seed", range(4))
def test_chain_structure(seed):
    rng = np.random.default_rng(seed)
    arc = DyadicArc(5, int(rng.integers(32)))
    top = WhitneyTop(arc)
    doubled = arc.doubled()
    for _ in range(10):
        d = arc.length * 2.0 ** -rng.uniform(0, 8)
        theta = doubled.start + doubled.length * rng.random()
        z = (1 - d) * np.exp(1j * theta)
        c = chain(top, z)
        levels = [t.level for t in c.tops]
        assert all(abs(a - b) <= 1 for a, b in zip(levels, levels[1:]))
        dist = [hyperbolic_distance(top.center, t.center) for t in c.tops]
        # non-decreasing up to about one top's hyperbolic diameter
        assert all(b >= a - 3 for a, b in zip(dist, dist[1:]))
        assert c.tops[-1].contains(z) or c.tops[-1] == top_of(z)


def test_tops_are_comparable_to_arc():
    for level in (3, 6, 10):
        for i in (0, 2 ** (level - 1)):
            t = WhitneyTop(DyadicArc(level, i))
            pts = t.grid(8)
            diam = np.max(np.abs(pts[:, None] - pts[None, :]))
            assert t.arc.length / 2 <= diam * 1.2 and diam <= 3 * t.arc.length
