import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from curvespace.dyadic import DyadicArc, WhitneyTop
from curvespace.errors import ParamOutOfRange
from curvespace.maps import registry_get
from curvespace.quadrature import (
    Annulus,
    PolarRect,
    Weight,
    WeightedIntegrand,
    box_integral,
    build_ladder_report,
    integrate_region,
    ladder,
    ladder_verdict,
    lsq_slope,
    profile_verdict,
    unit_core,
    zero_core,
)
from curvespace.spaces import gprime_sq

DIRICHLET = 4 * math.pi * math.log(4 / 3)


def _pole_core(z):
    return 1 / np.abs(1 - z) ** 2


def test_zero_and_unit_cores():
    assert integrate_region(WeightedIntegrand(zero_core), Annulus(0, 0.5)) == (0.0, 0.0)
    v, err = integrate_region(WeightedIntegrand(unit_core), Annulus(0, 0.5))
    assert abs(v - math.pi / 4) < 1e-12 and err >= 0


def test_moebius_dirichlet_ladder():
    rep = ladder(WeightedIntegrand(gprime_sq(registry_get("moebius", {"a": 0.5}))), levels=14)
    assert rep.verdict == "converged"
    assert abs(rep.limit - DIRICHLET) < 1e-4
    vals = rep.values
    assert max(b / a for a, b in zip(vals[-4:], vals[-3:])) < 0.6
    assert list(rep.levels) == sorted(set(rep.levels))
    assert all(e.err >= 0 for e in rep.entries)


def test_identity_ladder_is_zero():
    rep = ladder(WeightedIntegrand(gprime_sq(registry_get("identity"))), levels=6)
    assert rep.verdict == "converged"
    assert all(v == 0 for v in rep.values)


def test_log_singular_ladder_diverges():
    rep = ladder(WeightedIntegrand(gprime_sq(registry_get("log_singular", {"beta": 0}))), levels=10)
    assert rep.verdict == "diverging"
    # shells approach a constant, so cumulative growth is linear
    assert abs(rep.values[-1] - rep.values[-2]) < 0.01 * rep.values[-1]
    assert rep.slope == pytest.approx(2.1720423, rel=1e-5)


def test_box_matches_scipy_oracle():
    arc = DyadicArc(4, 3)
    w = Weight("one_minus_sq_p", 0.5)
    v, _ = box_integral(WeightedIntegrand(_pole_core, w), arc, tol=1e-10)

    def f(r, t):
        z = r * np.exp(1j * t)
        return _pole_core(z) * (1 - r * r) ** 0.5 * r

    want, _ = integrate.dblquad(f, arc.start, arc.end, 1 - arc.length, 1, epsabs=1e-13, epsrel=1e-11)
    assert abs(v - want) < 1e-8 * want


def test_box_additivity():
    arc = DyadicArc(4, 3)
    igr = WeightedIntegrand(_pole_core, Weight("one_minus_sq_p", 0.5))
    tol = 1e-8
    whole, _ = box_integral(igr, arc, tol=tol)
    r0, r1 = 1 - arc.length, 1 - arc.length / 2
    parts = [box_integral(igr, c, tol=tol)[0] for c in arc.children()]
    parts += [
        integrate_region(igr, PolarRect(r0, r1, arc.start, arc.mid), tol)[0],
        integrate_region(igr, PolarRect(r0, r1, arc.mid, arc.end), tol)[0],
    ]
    assert abs(whole - math.fsum(parts)) <= 2 * tol * whole


def test_monotone_under_region_growth():
    igr = WeightedIntegrand(_pole_core, Weight("log_p", 1.0))
    arc = DyadicArc(5, 1)
    small = integrate_region(igr, WhitneyTop(arc))[0]
    big = box_integral(igr, arc)[0]
    assert big >= small


def test_reproducible_bits():
    igr = WeightedIntegrand(gprime_sq(registry_get("lacunary")), Weight("one_minus_sq_p", 0.5))
    a = box_integral(igr, DyadicArc(6, 17))
    b = box_integral(igr, DyadicArc(6, 17))
    assert a == b


def test_region_errors():
    with pytest.raises(ParamOutOfRange):
        integrate_region(WeightedIntegrand(unit_core), Annulus(0, 0.5), tol=0)
    with pytest.raises(ParamOutOfRange):
        integrate_region(WeightedIntegrand(unit_core), PolarRect(0.9, 1.1, 0, 1))
    with pytest.raises(ParamOutOfRange):
        Weight("bogus")


@settings(max_examples=50, deadline=None)
@given(
    kind=st.sampled_from(["one", "log_p", "one_minus_sq_p"]),
    p=st.floats(0, 3),
    d=st.floats(1e-12, 1),
)
def test_interior_weights_nonnegative(kind, p, d):
    assert Weight(kind, p)(np.array([1 - d]), np.array([d]))[0] >= 0


def test_verdict_rules():
    assert ladder_verdict([1, 0.5, 0.25, 0.125, 0.06])[0] == "converged"
    assert ladder_verdict([1, 1, 1, 1, 1])[0] == "diverging"
    assert profile_verdict([1, 0.1, 0.01, 0.001, 1e-4]) == "vanishing"
    assert profile_verdict([1, 1, 1, 1, 1]) == "not-vanishing"
    assert profile_verdict([1, 0.5, 0.6, 0.4, 0.3]) == "inconclusive"


def test_slope_and_empty_report():
    assert lsq_slope([0, 1, 2, 3], [0, 1, 2, 3]) == pytest.approx(1.0)
    rep = build_ladder_report("zero", [(k, 0.0, 0.0) for k in range(5)])
    assert rep.verdict == "converged" and rep.final == 0
