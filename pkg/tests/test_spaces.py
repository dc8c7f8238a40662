import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvespace.dyadic import DyadicArc, WhitneyTop
from curvespace.errors import DepthExceeded, ParamOutOfRange
from curvespace.maps import registry_get, registry_samples
from curvespace.spaces import (
    SpaceParams,
    dini_profile,
    dini_verdict,
    dlogp_energy,
    eta_point,
    eta_profile,
    eta_top,
    qp_box_ratio,
    qp_vanishing_profile,
    sub_mean_value_ratio,
    whitney_energy_sum,
    whitney_integral,
)

MOEBIUS = registry_get("moebius", {"a": 0.5})
LOG0 = registry_get("log_singular", {"beta": 0})
LOG21 = registry_get("log_singular", {"beta": 2.1})
IDENTITY = registry_get("identity")


def test_space_params_ranges():
    SpaceParams("qp0", 1.0)
    SpaceParams("dlogp", 7.0)
    for space, p in (("qp0", 0.0), ("qp0", 1.5), ("dlogp", -1.0), ("bmo", 0.5)):
        with pytest.raises(ParamOutOfRange):
            SpaceParams(space, p)


def test_eta_examples():
    assert eta_point(IDENTITY, 0.3) == 0
    assert eta_point(MOEBIUS, 0) == pytest.approx(1.0, abs=1e-15)
    for t in (1e-3, 1e-6, 1e-9):
        assert eta_point(LOG0, 1 - t) == pytest.approx(1.0, rel=1e-6)
    z = 0.3 - 0.6j
    assert eta_point(MOEBIUS, z) == pytest.approx(2 * 0.5 * (1 - abs(z)) / abs(1 - 0.5 * z), rel=1e-14)


def test_eta_top_is_grid_sup():
    top = WhitneyTop(DyadicArc(3, 0))
    v = eta_top(MOEBIUS, top)
    pts = top.grid(64)
    assert v == pytest.approx(0.87980169, rel=1e-6)
    assert v >= 0.95 * np.max(eta_point(MOEBIUS, pts))


def test_dlogp_energy_examples():
    assert dlogp_energy(IDENTITY, 2.0, levels=5).final == 0
    rep = dlogp_energy(MOEBIUS, 0, levels=12)
    assert rep.verdict == "converged"
    assert rep.limit == pytest.approx(4 * math.pi * math.log(4 / 3), rel=1e-5)
    assert dlogp_energy(LOG0, 0, levels=10).verdict == "diverging"


def test_dlogp_energy_weight_monotone():
    vals = [dlogp_energy(MOEBIUS, p, levels=10).final for p in (0, 0.5, 1, 2)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_qp_box_ratio_examples():
    assert qp_box_ratio(IDENTITY, 0.5, DyadicArc(4, 1)).value == 0
    far = [qp_box_ratio(MOEBIUS, 0.5, DyadicArc(k, 2 ** (k - 1))).value for k in (6, 8, 10, 12)]
    assert all(b < a / 8 for a, b in zip(far, far[1:]))
    near = {k: qp_box_ratio(LOG0, 0.5, DyadicArc(k, 0)).value for k in (10, 14)}
    assert near[14] > 0.1
    assert abs(near[14] - near[10]) < 0.15 * near[14]


def test_qp_profiles():
    assert qp_vanishing_profile(IDENTITY, 0.5, levels=5).verdict == "vanishing"
    rep = qp_vanishing_profile(MOEBIUS, 0.5, levels=10)
    assert rep.verdict == "vanishing"
    assert rep.final == pytest.approx(1.40296e-4, rel=1e-3)
    rep = qp_vanishing_profile(LOG0, 0.5, levels=8)
    assert rep.verdict == "not-vanishing"


def test_dini_profiles():
    radii = [1 - 2.0**-k for k in range(4, 15)]
    assert all(v == 0 for _, v in dini_profile(IDENTITY, 3, radii))
    mo = [v for _, v in dini_profile(MOEBIUS, 3, radii)]
    assert all(b < a for a, b in zip(mo, mo[1:]))
    prof = dini_profile(LOG21, 3, radii)
    # the sup dominates the closed-form value on the ray to 1 and meets it near the boundary
    r = np.array(radii)
    closed = (np.log(1 / (1 - r)) ** 1.5) / np.log(np.e / (1 - r)) ** 2.1
    vals = np.array([v for _, v in prof])
    assert np.all(vals >= closed * (1 - 1e-12))
    assert np.allclose(vals[5:], closed[5:], rtol=1e-9)
    assert dini_verdict(prof) == "bounded"


def test_whitney_sums_vanish_for_identity():
    root = DyadicArc(3, 1)
    assert whitney_energy_sum(IDENTITY, 0.5, root, "qp_window", depth=8) == 0
    assert whitney_energy_sum(IDENTITY, 0.0, root, "dlogp_global", depth=8) == 0


@pytest.mark.parametrize("m", registry_samples()[1:], ids=[m.name for m in registry_samples()[1:]])
@pytest.mark.parametrize("mode,p,root", [("qp_window", 0.5, DyadicArc(3, 4)), ("dlogp_global", 0.0, DyadicArc(2, 1))])
def test_whitney_sum_comparable_to_integral(m, mode, p, root):
    depth = 12 if m.kind != "series" else 9
    s = whitney_energy_sum(m, p, root, mode, depth=depth)
    i = whitney_integral(m, p, root, mode, depth=depth)
    assert i > 0 and 1 / 8 <= s / i <= 8


def test_whitney_qp_window_shrinks_for_moebius():
    vals = [
        whitney_energy_sum(MOEBIUS, 0.5, DyadicArc(k, 2 ** (k - 1)), "qp_window", depth=6) for k in (3, 5, 7)
    ]
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize("m", registry_samples(), ids=[m.name for m in registry_samples()])
def test_sub_mean_value(m):
    rng = np.random.default_rng(0)
    r = np.sqrt(rng.uniform(0, 0.99**2, 40))
    z = r * np.exp(2j * np.pi * rng.random(40))
    assert max(sub_mean_value_ratio(m, w) for w in z) <= 16


def test_eta_profile():
    rep = eta_profile(MOEBIUS, levels=8)
    assert rep.values[0] == pytest.approx(1.0)
    assert all(b < a for a, b in zip(rep.values[1:], rep.values[2:]))
    with pytest.raises(DepthExceeded):
        eta_profile(MOEBIUS, levels=20)


@settings(max_examples=15, deadline=None)
@given(
    rho=st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False),
    level=st.integers(3, 8),
)
def test_scale_covariance(rho, level):
    arc = DyadicArc(level, 1)
    scaled = MOEBIUS.scaled(rho)
    assert qp_box_ratio(scaled, 0.5, arc).value == qp_box_ratio(MOEBIUS, 0.5, arc).value
    top = WhitneyTop(arc)
    assert eta_top(scaled, top) == eta_top(MOEBIUS, top)
