import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvespace.errors import KTooLarge, ParamOutOfRange
from curvespace.extension import (
    ExtensionField,
    bp_extend,
    dilatation,
    dynkin_ratio,
    eta_identity_residual,
    exterior_condition_T1,
    exterior_condition_T2,
    max_identity_residual,
    max_wirtinger_gap,
    omega,
    ring_masses,
    total_mass,
    wirtinger_quotient,
)
from curvespace.maps import registry_get, registry_samples
from curvespace.spaces import dlogp_energy

MOEBIUS = ExtensionField(registry_get("moebius", {"a": 0.5}))
IDENTITY = ExtensionField(registry_get("identity"))
LOG0 = ExtensionField(registry_get("log_singular", {"beta": 0}))
FIELDS = [ExtensionField(m) for m in registry_samples()]
IDS = [f.map.name for f in FIELDS]


class _ConstantField(ExtensionField):
    """|mu| = c on the whole support annulus."""

    def __init__(self, c):
        super().__init__(registry_get("identity"))
        object.__setattr__(self, "_c", c)

    def mu_sq(self, z):
        r = np.abs(z)
        return np.where((r > 1) & (r <= self.outer_radius), self._c**2, 0.0)


def test_bp_extend_examples():
    assert bp_extend(IDENTITY, 2) == 2
    m = MOEBIUS.map
    w = 1 / 1.1
    assert bp_extend(MOEBIUS, 1.1) == pytest.approx(m.f(w) + m.fprime(w) * (1.1 - w), rel=1e-15)


def test_bp_extend_is_continuous_across_circle():
    m = MOEBIUS.map
    u = np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))
    for h in (1e-5, 1e-7, 1e-9):
        gap = np.abs(bp_extend(MOEBIUS, (1 + h) * u) - m.f((1 - h) * u))
        assert np.max(gap) <= 10 * h


def test_dilatation_closed_form():
    want = -(1 / 1.44) * (1.2 - 1 / 1.2) * (2 * 0.5 / (1 - 0.5 / 1.2))
    assert dilatation(MOEBIUS, 1.2) == pytest.approx(want, rel=1e-14)
    z = np.array([1.1, 1.3j, -1.4 + 0.2j])
    assert np.all(dilatation(IDENTITY, z) == 0)


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_identity_residual(fld):
    assert max_identity_residual(fld, n=2000) <= 1e-10


def test_identity_residual_on_log_singular_ray():
    z = 1 + 2.0 ** -np.arange(2, 30)
    assert np.max(eta_identity_residual(LOG0, z)) <= 1e-10
    assert np.abs(dilatation(LOG0, z[-1])) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("fld", FIELDS, ids=IDS)
def test_wirtinger_oracle(fld):
    assert max_wirtinger_gap(fld, n=200) <= 1e-6


def test_wirtinger_quotient_point():
    assert abs(wirtinger_quotient(MOEBIUS, 1.2) - dilatation(MOEBIUS, 1.2)) < 1e-7


LITTLE_BLOCH = [f for f in FIELDS if f.map.bounded and f.map.kind != "series"]


@pytest.mark.parametrize("fld", LITTLE_BLOCH, ids=[f.map.name for f in LITTLE_BLOCH])
def test_mu_decays_toward_circle(fld):
    u = np.exp(1j * np.linspace(0, 2 * np.pi, 256, endpoint=False))
    sups = [np.max(np.abs(fld.mu((1 + h) * u))) for h in 10.0 ** -np.arange(3, 13)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(sups, sups[1:]))
    # log_singular(2.1) decays only like (log 1/h)^-2.1
    assert sups[-1] < 1e-2
    if fld.map.kind != "log_singular":
        assert sups[-1] < 1e-9


def test_series_mu_near_guard():
    fld = next(f for f in FIELDS if f.map.kind == "series")
    u = np.exp(1j * np.linspace(0, 2 * np.pi, 64, endpoint=False))
    near = np.max(np.abs(fld.mu((1 + 1e-9) / fld.map.radius_guard * u)))
    assert near < 10 * (1 - fld.map.radius_guard)


def test_k_estimates():
    ks = {f.map.name: f.k_estimate for f in FIELDS}
    assert ks["identity"] == 0
    for name in ("moebius(a=0.5)", "power_perturbation(eps=0.4,n=3)"):
        assert ks[name] < 1
    assert ks["log_singular(beta=0.0)"] == pytest.approx(1.9501, rel=1e-3)
    hyp = MOEBIUS.hypotheses(0.5)
    assert hyp["k_below_one"] and not hyp["k_below_half"]


def test_exterior_T1():
    assert exterior_condition_T1(IDENTITY, 0, levels=5).final == 0
    rep = exterior_condition_T1(MOEBIUS, 0, levels=12)
    assert rep.verdict == "converged"
    assert rep.limit == pytest.approx(1.55874786, rel=1e-5)
    interior = dlogp_energy(MOEBIUS.map, 0, levels=12).limit
    assert interior / 4 <= rep.limit <= 4 * interior
    assert exterior_condition_T1(LOG0, 0, levels=10).verdict == "diverging"


CONVERGENT = [f for f in FIELDS if f.map.kind in ("moebius", "power_perturbation")]


@pytest.mark.parametrize("fld", CONVERGENT, ids=[f.map.name for f in CONVERGENT])
def test_reflection_comparability(fld):
    a = exterior_condition_T1(fld, 0, levels=10).entries[-1].cumulative
    b = dlogp_energy(fld.map, 0, levels=10).entries[-1].cumulative
    assert b / 8 <= a <= 8 * b


def test_exterior_T2():
    assert exterior_condition_T2(IDENTITY, 0.5, levels=6).verdict == "vanishing"
    assert exterior_condition_T2(MOEBIUS, 0.5, levels=12).verdict == "vanishing"
    rep = exterior_condition_T2(LOG0, 0.5, levels=10)
    assert rep.verdict == "not-vanishing"
    assert rep.final > 0.1


def test_omega_examples():
    assert omega(IDENTITY, 1.2, 0.1) == 0
    assert omega(_ConstantField(0.3), 1.25, 0.1) == pytest.approx(0.3, rel=1e-6)
    # Monte-Carlo oracle with 10^6 points of B(1.05, 0.02)
    rng = np.random.default_rng(0)
    n = 10**6
    pts = 1.05 + 0.02 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    mc = math.sqrt(np.mean(MOEBIUS.mu_sq(pts)))
    val = omega(MOEBIUS, 1.05, 0.02)
    assert 0 < val <= np.max(np.abs(MOEBIUS.mu(pts)))
    assert abs(val - mc) < 0.01 * mc


def test_mass_is_monotone_in_t():
    z = 0.9
    t = np.linspace(0.05, 3, 25)
    mass = [omega(MOEBIUS, z, s) ** 2 * math.pi * s * s for s in t]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(mass, mass[1:]))
    assert mass[-1] == pytest.approx(total_mass(MOEBIUS), rel=1e-6)


def test_ring_masses_integrate_to_disc_mass():
    s, w = np.polynomial.legendre.leggauss(40)
    t = 0.3
    rho = t * (s + 1) / 2
    ring = ring_masses(MOEBIUS, -0.9, rho)
    disc = omega(MOEBIUS, -0.9, t) ** 2 * math.pi * t * t
    assert np.dot(ring, w) * t / 2 == pytest.approx(disc, rel=1e-5)


def test_dynkin_ratio():
    assert dynkin_ratio(IDENTITY, 0.5) == 0
    vals = [dynkin_ratio(MOEBIUS, -(1 - 2.0**-j)) for j in (3, 6, 9, 12)]
    assert vals == pytest.approx([0.65033, 0.120572, 0.0312209, 0.00920218], rel=1e-4)
    with pytest.raises(KTooLarge):
        dynkin_ratio(LOG0, 0.5)
    with pytest.raises(ParamOutOfRange):
        dynkin_ratio(MOEBIUS, 1.5)


def test_dynkin_sweep_bounded():
    rng = np.random.default_rng(2)
    d = 2.0 ** -rng.uniform(4, 10, 100)
    z = (1 - d) * np.exp(2j * np.pi * rng.random(100))
    vals = np.array([dynkin_ratio(MOEBIUS, w) for w in z])
    assert np.all(np.isfinite(vals)) and np.max(vals) < 5


@settings(max_examples=30, deadline=None)
@given(r=st.floats(1.0001, 1.999), t=st.floats(0, 2 * np.pi))
def test_mu_bounded_by_eta_identity(r, t):
    z = r * np.exp(1j * t)
    assert eta_identity_residual(MOEBIUS, z) <= 1e-12
