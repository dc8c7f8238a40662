"""Verification suites: each check runs the owning module and compares with declared membership.

Verdict rules (all thresholds come from :data:`curvespace.config.THRESHOLDS`):

* a declared member whose statistic contradicts the forward implication fails;
* a declared non-member whose statistic separates from the members passes;
* anything the truncated numerics cannot decide is ``inconclusive``.

Errors raised by a check are caught and recorded; they never abort the suite.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from . import __version__
from .config import DEFAULT_TOL, THRESHOLDS, parallel_map
from .curves import corollary1_statistic, theorem3_statistic, window_profile
from .dyadic import TWO_PI, DyadicArc, WhitneyTop, chain
from .errors import CurveSpaceError, EtaGateFailed, ParamOutOfRange, TooFewLevels
from .extension import ExtensionField, dynkin_ratio, exterior_condition_T1, exterior_condition_T2
from .quadrature import ladder_verdict, lsq_slope
from .spaces import SpaceParams, dini_profile, dini_verdict, dlogp_energy, eta_top, eta_tops, qp_vanishing_profile

SUITES = ("theorem1", "theorem2", "theorem3", "corollary1", "dini_remark", "dynkin", "prop1")
ALPHAS = (0.6, 0.75, 0.9)
CHAIN_DEPTHS = (4, 8)
ETA_GATE = 0.5
DINI_DEFAULT_P = 3.0
PROP1_LEVEL = 8
DINI_TAIL = 5
DINI_NOISE = 1e-9
# the shrinking-z ladder must fall by this factor over its steps
PROP1_DECAY = 1e-3


@dataclass
class CheckRecord:
    name: str
    inputs: dict
    measured: dict
    verdict: str
    thresholds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["inputs"], d["measured"], d["verdict"], d.get("thresholds", {}), d.get("notes", []))


@dataclass
class SuiteReport:
    suite: str
    map: str
    space: str
    p: float
    environment: dict
    checks: list
    not_checked: list = field(default_factory=list)

    @property
    def verdicts(self):
        return {c.name: c.verdict for c in self.checks}

    @property
    def passed(self) -> bool:
        return all(c.verdict != "fail" for c in self.checks)

    def to_dict(self):
        return {
            "suite": self.suite,
            "map": self.map,
            "space": self.space,
            "p": self.p,
            "environment": dict(self.environment),
            "checks": [c.to_dict() for c in self.checks],
            "not_checked": list(self.not_checked),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["suite"], d["map"], d["space"], d["p"], d["environment"],
                   [CheckRecord.from_dict(c) for c in d["checks"]], d.get("not_checked", []))


def _clean(x):
    """JSON-friendly floats (inf/nan as strings, numpy scalars unwrapped)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _member_verdict(member, good, bad):
    """good/bad: the statistic agrees with membership / with non-membership."""
    if member is None:
        return "inconclusive"
    if member:
        return "pass" if good else ("fail" if bad else "inconclusive")
    return "pass" if bad else ("fail" if good else "inconclusive")


def convergence_slope(report) -> float:
    """Least-squares slope of the cumulative ladder against level over the last half."""
    entries = report.entries
    if len(entries) < 4:
        raise TooFewLevels("need at least 4 ladder entries")
    tail = entries[len(entries) // 2 :]
    return lsq_slope([e.level for e in tail], [e.cumulative for e in tail])


def _monotone_down(values, noise):
    return all(b <= a * (1 + noise) for a, b in zip(values[:-1], values[1:]))


# -- Proposition 1 ------------------------------------------------------------


def _image_diam(m, top: WhitneyTop, n=9):
    r0, r1 = top.radii
    u = np.linspace(0.0, 1.0, n)
    z = ((r0 + (r1 - r0) * u)[:, None] * np.exp(1j * (top.arc.start + top.arc.length * u))[None, :]).ravel()
    w = m.f(z)
    return float(np.abs(w[:, None] - w[None, :]).max())


def _sample_double_box(arc: DyadicArc, n, depth, seed):
    L = arc.length
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    d_hi = min(2 * L, 1.0) * (1 - 1e-9)
    d_lo = L * 2.0**-depth
    d = d_lo * (d_hi / d_lo) ** u[:, 0]
    theta = arc.start - L / 2 + 2 * L * u[:, 1] * (1 - 1e-12)
    return (1 - d) * np.exp(1j * theta)


class _EtaCache:
    def __init__(self, m):
        self.m = m
        self.cache = {}

    def fill(self, tops):
        by_level = {}
        for t in tops:
            if t.arc.key not in self.cache:
                by_level.setdefault(t.level, set()).add(t.arc.index)
        for level, idx in sorted(by_level.items()):
            idx = np.array(sorted(idx))
            for i, v in zip(idx, eta_tops(self.m, level, idx)):
                self.cache[(level, int(i), "none")] = float(v)

    def __getitem__(self, top):
        return self.cache[top.arc.key]


def _chain_ratios(m, top, z_points, alpha, etas, fI, fpI, dfW):
    chains = [chain(top, complex(z)) for z in z_points]
    etas.fill([t for c in chains for t in c.tops])
    zI = top.center
    dI = top.diam
    lhs = np.abs(m.f(np.asarray(z_points)) - fI - fpI * (np.asarray(z_points) - zI))
    out = []
    for c, l in zip(chains, lhs):
        s = math.fsum(etas[t] * (t.diam / dI) ** alpha for t in c.tops)
        rhs = dfW * s
        if l == 0:
            out.append(0.0)
        elif rhs == 0:
            out.append(math.inf)
        else:
            out.append(float(l / rhs))
    return out


def chain_estimate_check(m, arc: DyadicArc, samples: int = 100, alpha: float = 0.75, seed: int = 0,
                         depths=CHAIN_DEPTHS, detail: bool = False):
    """max over z in 2Q_I of LHS/RHS, and its spread across two sampling depths.

    LHS = |f(z) - f(z_I) - f'(z_I)(z - z_I)|
    RHS = diam f(W_I) * sum_{W in C(z)} eta(W) (diam W / diam W_I)^alpha
    Sampling depth D keeps 1 - |z| >= |I| 2^-D.  The spread is the ratio of
    the larger to the smaller of the two maxima (1 when both vanish).
    """
    if samples < 50:
        raise ParamOutOfRange("chain estimate needs at least 50 samples")
    if not 0 < alpha < 1:
        raise ParamOutOfRange("alpha must lie in (0, 1)")
    top = WhitneyTop(arc)
    eta_I = eta_top(m, top)
    if eta_I >= ETA_GATE:
        raise EtaGateFailed(f"eta(W_I) = {eta_I:.3g} is not below {ETA_GATE}")
    zI = top.center
    fI = complex(m.f(zI))
    fpI = complex(m.fprime(zI))
    dfW = _image_diam(m, top)
    etas = _EtaCache(m)
    maxima = []
    for k, depth in enumerate(depths):
        pts = _sample_double_box(arc, samples, depth, seed + k)
        maxima.append(max(_chain_ratios(m, top, pts, alpha, etas, fI, fpI, dfW)))
    hi, lo = max(maxima), min(maxima)
    if hi == 0:
        spread = 1.0
    elif lo == 0 or not math.isfinite(hi):
        spread = math.inf
    else:
        spread = hi / lo
    if detail:
        return {"max_ratio": hi, "spread": spread, "per_depth": dict(zip(depths, maxima)), "eta_top": eta_I,
                "image_diam": dfW}
    return hi, spread


def shrinking_ratio_ladder(m, arc: DyadicArc, alpha: float = 0.75, steps: int = 8):
    """LHS/RHS along z_k = z_I + h_k (toward the boundary), h_k = (1-|z_I|)/4 * 2^-k."""
    top = WhitneyTop(arc)
    zI = top.center
    fI = complex(m.f(zI))
    fpI = complex(m.fprime(zI))
    dfW = _image_diam(m, top)
    etas = _EtaCache(m)
    h0 = (1 - abs(zI)) / 4
    u = zI / abs(zI)
    pts = [zI + h0 * 2.0**-k * u for k in range(steps)]
    return _chain_ratios(m, top, pts, alpha, etas, fI, fpI, dfW)


# -- checks -------------------------------------------------------------------


def _ladder_measure(rep):
    return {
        "verdict": rep.verdict,
        "limit": rep.limit,
        "final_cumulative": rep.entries[-1].cumulative if rep.entries else 0.0,
        "shells": [e.value for e in rep.entries],
    }


def _check_theorem1(m, params, depth, tol, seed, th):
    out = []
    p = params.p
    member = m.membership("dlogp", p)
    try:
        rep = dlogp_energy(m, p, depth, tol, thresholds=th)
        meas = _ladder_measure(rep)
        try:
            meas["convergence_slope"] = convergence_slope(rep)
        except TooFewLevels:
            pass
        v = _member_verdict(member, rep.verdict == "converged", rep.verdict == "diverging")
        out.append(CheckRecord("theorem1.interior_energy", {"p": p, "depth": depth, "member": member}, meas, v,
                               {k: th[k] for k in ("tail_ratio", "divergence_ratio")}))
    except CurveSpaceError as exc:
        out.append(_error_record("theorem1.interior_energy", {"p": p, "depth": depth}, exc))
        rep = None
    fld = ExtensionField(m)
    try:
        ext = exterior_condition_T1(fld, p, depth, tol, thresholds=th)
        meas = _ladder_measure(ext)
        meas["k_estimate"] = fld.k_estimate
        v = _member_verdict(member, ext.verdict == "converged", ext.verdict == "diverging")
        notes = ["the converse direction needs some extension, not this one: not checked"]
        out.append(CheckRecord("theorem1.exterior_condition", {"p": p, "depth": depth, "R": fld.outer_radius,
                                                                "member": member}, meas, v,
                               {k: th[k] for k in ("tail_ratio", "divergence_ratio")}, notes))
        if rep is not None and rep.verdict == "converged" and ext.verdict == "converged":
            a = rep.limit if rep.limit is not None else rep.entries[-1].cumulative
            b = ext.limit if ext.limit is not None else ext.entries[-1].cumulative
            if a == 0 and b == 0:
                factor, ok = 1.0, True
            elif a == 0 or b == 0:
                factor, ok = math.inf, False
            else:
                factor = max(a / b, b / a)
                ok = factor <= th["comparability_factor"]
            out.append(CheckRecord("theorem1.reflection_comparability", {"p": p}, {"factor": factor,
                                   "interior": a, "exterior": b}, "pass" if ok else "fail",
                                   {"comparability_factor": th["comparability_factor"]}))
    except CurveSpaceError as exc:
        out.append(_error_record("theorem1.exterior_condition", {"p": p, "depth": depth}, exc))
    return out


def _profile_measure(rep):
    return {"verdict": rep.verdict, "final": rep.entries[-1].value if rep.entries else 0.0,
            "profile": {e.level: e.value for e in rep.entries}}


def _check_theorem2(m, params, depth, tol, seed, th):
    out = []
    p = params.p
    member = m.membership("qp0", p)
    ptol = max(tol, 1e-6)
    names = ("theorem2.interior_profile", "theorem2.exterior_profile")
    for name in names:
        try:
            if name.endswith("interior_profile"):
                rep = qp_vanishing_profile(m, p, depth, tol=ptol, thresholds=th)
            else:
                rep = exterior_condition_T2(ExtensionField(m), p, depth, tol=ptol, thresholds=th)
            meas = _profile_measure(rep)
            v = _member_verdict(member, rep.verdict == "vanishing", rep.verdict == "not-vanishing")
            out.append(CheckRecord(name, {"p": p, "depth": depth, "member": member}, meas, v,
                                   {k: th[k] for k in ("vanishing", "stabilized")}))
        except CurveSpaceError as exc:
            out.append(_error_record(name, {"p": p, "depth": depth}, exc))
    return out


def _window_check(m, params, depth, quantity, family, name, th):
    p = params.p
    levels = 4
    rel = min(6, max(1, depth - 6))
    member = m.membership("qp0", p)
    prof = window_profile(m, p, quantity, family, start_level=2, levels=levels, rel_depth=rel)
    vals = [v for _, v in prof]
    down = _monotone_down(vals, th["monotone_noise"]) and vals[-1] < vals[0]
    flat = vals[-1] >= vals[0] / (1 + th["monotone_noise"])
    v = _member_verdict(member, down, flat)
    return CheckRecord(name, {"p": p, "mode": "qp_window", "family": family, "relative_depth": rel,
                              "member": member}, {"window_sup": {j: x for j, x in prof}}, v,
                       {"monotone_noise": th["monotone_noise"]})


def _global_check(m, params, depth, stat, family, name, th):
    p = params.p
    member = m.membership("dlogp", p)
    rep = stat(m, p, DyadicArc(0, 0), depth, "dlogp_global", family=family, detail=True)
    inc = rep.increments()
    ratios = [b / a for a, b in zip(inc[:-1], inc[1:]) if a > 0]
    tail = ratios[-3:]
    good = all(x < th["increment_ratio"] for x in tail) if tail else all(x == 0 for x in inc)
    verdict, _ = ladder_verdict(inc, th)
    bad = verdict == "diverging"
    v = _member_verdict(member, good, bad)
    return CheckRecord(name, {"p": p, "mode": "dlogp_global", "family": family, "depth": depth, "member": member},
                       {"partial_sum": rep.value, "increments": inc, "increment_ratios": ratios}, v,
                       {"increment_ratio": th["increment_ratio"]})


def _check_sums(m, params, depth, quantity, th):
    stat = theorem3_statistic if quantity == "beta" else corollary1_statistic
    family = "dyadic" if quantity == "beta" else "mr"
    prefix = "theorem3" if quantity == "beta" else "corollary1"
    out = []
    if params.space == "qp0":
        name = f"{prefix}.qp_window"
        try:
            out.append(_window_check(m, params, depth, quantity, family, name, th))
        except CurveSpaceError as exc:
            out.append(_error_record(name, {"p": params.p}, exc))
    else:
        name = f"{prefix}.dlogp_global"
        try:
            out.append(_global_check(m, params, depth, stat, family, name, th))
        except CurveSpaceError as exc:
            out.append(_error_record(name, {"p": params.p}, exc))
    return out


def _check_dini(m, params, depth, tol, seed, th):
    p = params.p if params.space == "dlogp" and params.p > 2 else DINI_DEFAULT_P
    member = m.membership("dlogp", p)
    kmax = min(max(depth, 6), 14)
    radii = [1 - 2.0**-k for k in range(4, kmax + 1)]
    try:
        prof = dini_profile(m, p, radii)
    except CurveSpaceError as exc:
        return [_error_record("dini_remark.profile", {"p": p}, exc)]
    verdict = dini_verdict(prof, DINI_TAIL, DINI_NOISE)
    v = _member_verdict(member, verdict == "bounded", verdict == "unbounded")
    if member is False and verdict == "bounded":
        # boundedness is only a consequence of membership, so a bounded non-member decides nothing
        v = "inconclusive"
    return [CheckRecord("dini_remark.profile", {"p": p, "radii_k": [4, kmax], "member": member},
                        {"verdict": verdict, "profile": [[r, x] for r, x in prof]}, v,
                        {"tail_points": DINI_TAIL, "monotone_noise": DINI_NOISE})]


def _check_dynkin(m, params, depth, tol, seed, th):
    fld = ExtensionField(m, k_seed=seed)
    k = fld.k_estimate
    # worst direction: where |f''/f'| peaks on a circle close to the boundary
    theta = np.arange(4096) * (TWO_PI / 4096)
    vals = np.abs(m.log_deriv(0.99 * np.exp(1j * theta)))
    phi = float(theta[int(np.argmax(vals))])
    js = list(range(3, min(depth, 12) + 1, 3))
    inputs = {"k": k, "direction": phi, "radii_j": js, "R": fld.outer_radius}
    if k >= 1:
        return [CheckRecord("dynkin.ratio", inputs, {"k_estimate": k}, "inconclusive", {"k_below": 1.0},
                            ["sampled sup |mu| is not below 1: the bound does not apply"])]
    try:
        ratios = parallel_map(lambda j: dynkin_ratio(fld, (1 - 2.0**-j) * complex(math.cos(phi), math.sin(phi)), k), js)
    except CurveSpaceError as exc:
        return [_error_record("dynkin.ratio", inputs, exc)]
    finite = all(math.isfinite(r) for r in ratios)
    ok = finite and (max(ratios) == 0 or ratios[-1] <= th["stability_factor"] * max(ratios[0], 1e-300))
    return [CheckRecord("dynkin.ratio", inputs, {"k_estimate": k, "ratios": ratios}, "pass" if ok else "fail",
                        {"stability_factor": th["stability_factor"]})]


def _check_prop1(m, params, depth, tol, seed, th, samples=100):
    arc = DyadicArc(PROP1_LEVEL, 1 << (PROP1_LEVEL - 1))
    out = []
    for alpha in ALPHAS:
        name = f"prop1.chain_estimate.alpha={alpha:g}"
        inputs = {"arc": list(arc.key), "samples": samples, "alpha": alpha, "depths": list(CHAIN_DEPTHS)}
        try:
            d = chain_estimate_check(m, arc, samples, alpha, seed, detail=True)
        except EtaGateFailed as exc:
            out.append(CheckRecord(name, inputs, {}, "inconclusive", {}, [str(exc)]))
            continue
        except CurveSpaceError as exc:
            out.append(_error_record(name, inputs, exc))
            continue
        ok = math.isfinite(d["max_ratio"]) and d["spread"] < th["stability_factor"]
        out.append(CheckRecord(name, inputs, d, "pass" if ok else "fail",
                               {"stability_factor": th["stability_factor"]}))
    try:
        lad = shrinking_ratio_ladder(m, arc)
        ok = all(math.isfinite(x) for x in lad) and (lad[0] == 0 or (lad[-1] < PROP1_DECAY * lad[0]))
        out.append(CheckRecord("prop1.shrinking_ladder", {"arc": list(arc.key), "steps": len(lad)},
                               {"ratios": lad}, "pass" if ok else "fail", {"decay_factor": PROP1_DECAY}))
    except CurveSpaceError as exc:
        out.append(_error_record("prop1.shrinking_ladder", {"arc": list(arc.key)}, exc))
    return out


def _error_record(name, inputs, exc):
    return CheckRecord(name, inputs, {"error": type(exc).__name__, "message": str(exc)}, "inconclusive")


_RUNNERS = {
    "theorem1": _check_theorem1,
    "theorem2": _check_theorem2,
    "theorem3": lambda m, prm, depth, tol, seed, th: _check_sums(m, prm, depth, "beta", th),
    "corollary1": lambda m, prm, depth, tol, seed, th: _check_sums(m, prm, depth, "delta", th),
    "dini_remark": _check_dini,
    "dynkin": _check_dynkin,
    "prop1": _check_prop1,
}

NOT_CHECKED = [
    "theorem1 converse: needs some quasiconformal extension with the exterior condition (existential hypothesis)",
    "theorem2 converse: existential hypothesis",
    "theorem3 converse: not verifiable from finitely many arcs",
]


def run_suite(suite: str, m, params: SpaceParams | None = None, depth: int = 12, tol: float = DEFAULT_TOL,
              seed: int = 0, thresholds=None) -> SuiteReport:
    """Run one suite (or ``all``) and collect per-check records in a fixed order."""
    if suite != "all" and suite not in SUITES:
        raise ParamOutOfRange(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    params = params or SpaceParams("dlogp", 0.0)
    th = {**THRESHOLDS, **(thresholds or {})}
    names = SUITES if suite == "all" else (suite,)
    theorem2_params = params
    if params.space != "qp0":
        theorem2_params = SpaceParams("qp0", 0.5)

    def run(name):
        prm = theorem2_params if name == "theorem2" else params
        try:
            return _RUNNERS[name](m, prm, depth, tol, seed, th)
        except CurveSpaceError as exc:
            return [_error_record(name, {"p": prm.p}, exc)]

    groups = parallel_map(run, names)
    checks = []
    for g in groups:
        for c in g:
            c.inputs = _clean(c.inputs)
            c.measured = _clean(c.measured)
            checks.append(c)
    env = {"depth": depth, "tol": tol, "seed": seed, "version": __version__, "thresholds": dict(th)}
    not_checked = [s for s in NOT_CHECKED if suite == "all" or s.startswith(suite)]
    return SuiteReport(suite, m.name, params.space, params.p, env, checks, not_checked)
