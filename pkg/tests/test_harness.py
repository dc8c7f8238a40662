import json
import math

import pytest

from curvespace.config import THRESHOLDS
from curvespace.dyadic import DyadicArc
from curvespace.errors import EtaGateFailed, TooFewLevels
from curvespace.harness import (
    ALPHAS,
    SUITES,
    CheckRecord,
    SuiteReport,
    chain_estimate_check,
    convergence_slope,
    run_suite,
    shrinking_ratio_ladder,
)
from curvespace.maps import registry_get
from curvespace.quadrature import build_ladder_report
from curvespace.spaces import SpaceParams, dlogp_energy

IDENTITY = registry_get("identity")
MOEBIUS = registry_get("moebius", {"a": 0.5})
POWER = registry_get("power_perturbation", {"eps": 0.4, "n": 3})
LOG0 = registry_get("log_singular", {"beta": 0})
ARC8 = DyadicArc(8, 128)


def test_convergence_slope():
    zero = build_ladder_report("zero", [(k, 0.0, 0.0) for k in range(6)])
    assert convergence_slope(zero) == 0
    linear = build_ladder_report("linear", [(k, 1.0, 0.0) for k in range(6)])
    assert convergence_slope(linear) == pytest.approx(1.0)
    assert convergence_slope(dlogp_energy(MOEBIUS, 0, levels=14)) < 0.05
    with pytest.raises(TooFewLevels):
        convergence_slope(build_ladder_report("short", [(k, 1.0, 0.0) for k in range(3)]))


def test_theorem1_identity_and_moebius():
    rep = run_suite("theorem1", IDENTITY, SpaceParams("dlogp", 0), depth=8)
    assert rep.passed
    energy = next(c for c in rep.checks if c.name == "theorem1.interior_energy")
    assert all(v == 0 for v in energy.measured["shells"])
    rep = run_suite("theorem1", MOEBIUS, SpaceParams("dlogp", 0), depth=12)
    assert rep.verdicts == {
        "theorem1.interior_energy": "pass",
        "theorem1.exterior_condition": "pass",
        "theorem1.reflection_comparability": "pass",
    }
    energy = next(c for c in rep.checks if c.name == "theorem1.interior_energy")
    assert energy.measured["limit"] == pytest.approx(4 * math.pi * math.log(4 / 3), rel=1e-4)
    assert any("converse" in s for s in rep.not_checked)


def test_theorem2_separation():
    member = run_suite("theorem2", MOEBIUS, SpaceParams("qp0", 0.5), depth=12)
    other = run_suite("theorem2", LOG0, SpaceParams("qp0", 0.5), depth=12)
    assert member.passed and other.passed
    m = {c.name: c.measured["verdict"] for c in member.checks}
    o = {c.name: c.measured["verdict"] for c in other.checks}
    for name in m:
        assert m[name] == "vanishing" and o[name] == "not-vanishing"


def test_member_failing_forward_check_is_a_fail():
    # nothing counts as vanishing and any plateau counts as stabilised
    th = dict(THRESHOLDS, vanishing=1e-30, stabilized=100.0)
    rep = run_suite("theorem2", MOEBIUS, SpaceParams("qp0", 0.5), depth=10, thresholds=th)
    assert "fail" in rep.verdicts.values()
    assert all(c.thresholds["vanishing"] == 1e-30 for c in rep.checks)


def test_errors_become_inconclusive():
    rep = run_suite("theorem3", LOG0, SpaceParams("qp0", 0.5), depth=8)
    assert set(rep.verdicts.values()) == {"inconclusive"}
    assert all(c.measured["error"] == "NonFinite" for c in rep.checks)


def test_chain_estimate_identity():
    assert chain_estimate_check(IDENTITY, ARC8) == (0.0, 1.0)


@pytest.mark.parametrize("m", [MOEBIUS, POWER], ids=["moebius", "power"])
def test_chain_estimate_members(m):
    ratio, spread = chain_estimate_check(m, ARC8, samples=100, alpha=0.75)
    assert math.isfinite(ratio) and 0 < ratio < 1
    assert spread < 2
    ladder = shrinking_ratio_ladder(m, ARC8)
    assert all(b < a for a, b in zip(ladder, ladder[1:]))
    assert ladder[-1] < 1e-3 * ladder[0]


def test_chain_estimate_alpha_sweep():
    ratios = [chain_estimate_check(MOEBIUS, ARC8, alpha=a)[0] for a in ALPHAS]
    assert all(math.isfinite(r) for r in ratios)


def test_eta_gate():
    with pytest.raises(EtaGateFailed):
        chain_estimate_check(LOG0, DyadicArc(3, 0))


def test_reports_are_deterministic_and_round_trip():
    a = run_suite("prop1", MOEBIUS, SpaceParams("dlogp", 0), depth=8, seed=3)
    b = run_suite("prop1", MOEBIUS, SpaceParams("dlogp", 0), depth=8, seed=3)
    ja, jb = json.dumps(a.to_dict(), sort_keys=True), json.dumps(b.to_dict(), sort_keys=True)
    assert ja == jb
    back = SuiteReport.from_dict(json.loads(ja))
    assert back.verdicts == a.verdicts
    rec = a.checks[0]
    assert CheckRecord.from_dict(rec.to_dict()) == rec


def test_every_check_cites_measurements():
    rep = run_suite("all", MOEBIUS, SpaceParams("qp0", 0.5), depth=10)
    names = {c.name.split(".")[0] for c in rep.checks}
    assert names == set(SUITES) - {"all"}
    for c in rep.checks:
        assert c.verdict in ("pass", "fail", "inconclusive")
        assert c.measured
        if c.verdict != "inconclusive" or "error" not in c.measured:
            assert c.thresholds
    assert rep.environment["depth"] == 10 and rep.environment["seed"] == 0
