"""Membership diagnostics for log f' in D_log_p, Q_p,0 and the little Bloch scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .config import DEFAULT_TOL, THRESHOLDS
from .dyadic import MIN_TOP_LEVEL, TWO_PI, DyadicArc, WhitneyTop, arc_length
from .errors import DepthExceeded, ParamOutOfRange
from .quadrature import (
    LadderReport,
    Weight,
    WeightedIntegrand,
    box_integral,
    build_profile_report,
    carleson_profile,
    ladder,
)

MAX_WHITNEY_DEPTH = 16
ETA_STABLE = 0.05
ETA_MAX_GRID = 64


@dataclass(frozen=True)
class SpaceParams:
    space: str
    p: float

    def __post_init__(self):
        if self.space == "dlogp":
            if not self.p >= 0:
                raise ParamOutOfRange("dlogp needs p >= 0")
        elif self.space == "qp0":
            if not 0 < self.p <= 1:
                raise ParamOutOfRange("qp0 needs 0 < p <= 1")
        else:
            raise ParamOutOfRange(f"unknown space {self.space!r}")


@dataclass(frozen=True)
class BoxRatio:
    arc: DyadicArc
    value: float
    err: float = 0.0


def gprime_sq(m):
    """|f''/f'|^2 as a vectorised core."""

    def core(z):
        return np.abs(m.log_deriv(z)) ** 2

    return core


def _check_qp(p):
    if not 0 < p <= 1:
        raise ParamOutOfRange("Q_p needs 0 < p <= 1")


def dlogp_energy(m, p: float, levels: int = 14, tol: float = DEFAULT_TOL, thresholds=THRESHOLDS) -> LadderReport:
    """Interior ladder of the integral of |f''/f'|^2 (log 1/(1-|z|))^p."""
    if p < 0:
        raise ParamOutOfRange("dlogp needs p >= 0")
    integrand = WeightedIntegrand(gprime_sq(m), Weight("log_p", p), label="dlogp")
    return ladder(integrand, "interior_annuli", levels, tol, label=f"dlogp_energy p={p:g}", thresholds=thresholds)


def qp_integrand(m, p):
    return WeightedIntegrand(gprime_sq(m), Weight("one_minus_sq_p", p), label="qp")


def qp_box_ratio(m, p: float, arc: DyadicArc, tol: float = DEFAULT_TOL) -> BoxRatio:
    """(1/|I|^p) times the integral of |f''/f'|^2 (1-|z|^2)^p over Q_I."""
    _check_qp(p)
    value, err = box_integral(qp_integrand(m, p), arc, "interior", tol)
    norm = arc.length**p
    return BoxRatio(arc, value / norm, err / norm)


def qp_vanishing_profile(m, p: float, levels: int = 14, start_level: int = 3, tol: float = 1e-6,
                         thresholds=THRESHOLDS) -> LadderReport:
    """Per-level max of the box ratio over all 2^n arcs."""
    _check_qp(p)
    return carleson_profile(
        qp_integrand(m, p), p, levels, "interior", start_level, tol,
        label=f"qp_vanishing_profile p={p:g}", thresholds=thresholds,
    )


def eta_point(m, z):
    """eta(z) = (1-|z|) |f''/f'|."""
    z = np.asarray(z, dtype=complex)
    out = (1 - np.abs(z)) * np.abs(m.log_deriv(z))
    return float(out) if out.ndim == 0 else out


def _top_grid_points(level, indices, n):
    """n x n polar samples (cell centres plus the outer edge) of many tops at one level."""
    L = arc_length(level)
    r0, r1 = max(0.0, 1 - L), 1 - L / 2
    u = np.linspace(0.0, 1.0, n)
    r = r0 + (r1 - r0) * u
    t = (np.asarray(indices)[:, None] + u[None, :]) * L
    return r[None, :, None] * np.exp(1j * t)[:, None, :]


def eta_tops(m, level, indices, grid=4):
    """eta(W) for many tops at one level, refined per top until 5% stable."""
    indices = np.asarray(indices)
    n = grid
    prev = np.max(eta_point(m, _top_grid_points(level, indices, n)).reshape(len(indices), -1), axis=1)
    active = np.arange(len(indices))
    out = prev.copy()
    while len(active) and n < ETA_MAX_GRID:
        n *= 2
        cur = np.max(eta_point(m, _top_grid_points(level, indices[active], n)).reshape(len(active), -1), axis=1)
        out[active] = np.maximum(out[active], cur)
        old = prev[active]
        unstable = np.abs(cur - old) > ETA_STABLE * np.maximum(cur, 1e-300)
        prev[active] = cur
        active = active[unstable]
    return out


def eta_top(m, top: WhitneyTop, grid: int = 4) -> float:
    """Grid-max estimate of sup over W of eta."""
    if grid < 4:
        raise ParamOutOfRange("grid must be >= 4")
    return float(eta_tops(m, top.level, [top.arc.index], grid)[0])


def dini_profile(m, p: float, radii):
    """(r, sup_{|z|=r} |f''/f'| (1-r) (log 1/(1-r))^(p/2)) for each radius."""
    if not p > 2:
        raise ParamOutOfRange("the Dini bound needs p > 2")
    out = []
    for r in radii:
        r = float(r)
        if not 0.9 < r < 1:
            raise ParamOutOfRange("radii must lie in (0.9, 1)")
        d = 1 - r
        n = int(max(1024, math.ceil(8 / d)))
        theta = np.arange(n) * (TWO_PI / n)
        vals = np.abs(m.log_deriv(r * np.exp(1j * theta)))
        i = int(np.argmax(vals))
        h = TWO_PI / n
        res = minimize_scalar(
            lambda t: -abs(m.log_deriv(r * complex(math.cos(t), math.sin(t)))),
            bounds=(theta[i] - h, theta[i] + h),
            method="bounded",
            options={"xatol": 1e-12 * max(d, 1e-3)},
        )
        sup = max(float(vals[i]), -float(res.fun))
        out.append((r, sup * d * math.log(1 / d) ** (p / 2)))
    return out


def dini_verdict(profile, tail: int = 5, noise: float = 1e-9):
    """bounded when finite and non-increasing over the last ``tail`` points."""
    vals = [v for _, v in profile]
    if not vals or not all(math.isfinite(v) for v in vals):
        return "unbounded"
    last = vals[-tail:]
    if all(b <= a * (1 + noise) + 1e-300 for a, b in zip(last[:-1], last[1:])):
        return "bounded"
    return "inconclusive"


def _log_plus(x, p):
    return max(math.log(1 / x), 0.0) ** p


def whitney_energy_sum(m, p: float, root: DyadicArc, mode: str = "qp_window", depth: int = 12,
                       grid: int = 4, breakdown: bool = False):
    """Discrete Whitney-top statistics.

    qp_window:    (1/|I|^p) sum over W in Q_I of eta(W)^2 diam(W)^p
    dlogp_global: sum over W in Q_I of eta(W)^2 (log+ 1/diam W)^p
    Tops are taken from level max(root.level, 2) down to root.level + depth.
    """
    if mode not in ("qp_window", "dlogp_global"):
        raise ParamOutOfRange(f"unknown mode {mode!r}")
    if depth < 0 or depth > MAX_WHITNEY_DEPTH or root.level + depth > 30:
        raise DepthExceeded(f"whitney depth must be in [0, {MAX_WHITNEY_DEPTH}]")
    if root.shift != "none":
        raise ParamOutOfRange("Whitney sums use the plain dyadic mesh")
    if mode == "qp_window":
        _check_qp(p)
    elif p < 0:
        raise ParamOutOfRange("dlogp needs p >= 0")
    per_level = []
    for k in range(depth + 1):
        n = root.level + k
        if n < MIN_TOP_LEVEL:
            continue
        idx = np.arange(root.index << k, (root.index + 1) << k)
        eta = eta_tops(m, n, idx, grid)
        diam = WhitneyTop(DyadicArc(n, 0)).diam
        w = diam**p if mode == "qp_window" else _log_plus(diam, p)
        per_level.append((n, math.fsum((eta**2).tolist()) * w))
    total = math.fsum(v for _, v in per_level)
    if mode == "qp_window":
        total /= root.length**p
        per_level = [(n, v / root.length**p) for n, v in per_level]
    if breakdown:
        return total, per_level
    return total


def whitney_integral(m, p: float, root: DyadicArc, mode: str = "qp_window", depth: int | None = None,
                     tol: float = 1e-6) -> float:
    """The integral statistic that the Whitney sum discretises.

    With ``depth`` the box is cut at the inner edge of the deepest tops used
    by :func:`whitney_energy_sum`, so both sides see the same region.
    """
    d_min = None if depth is None else arc_length(root.level + depth) / 2
    if mode == "qp_window":
        _check_qp(p)
        value, _ = box_integral(qp_integrand(m, p), root, "interior", tol, d_min=d_min)
        return value / root.length**p
    value, _ = box_integral(WeightedIntegrand(gprime_sq(m), Weight("log_p", p)), root, "interior", tol, d_min=d_min)
    return value


def sub_mean_value_ratio(m, z, samples: int = 64):
    """eta(z)^2 over the disc mean of |f''/f'|^2 (1-|w|)^2 on B(z, (1-|z|)/2)."""
    z = complex(z)
    rho = (1 - abs(z)) / 2
    x, w = np.polynomial.legendre.leggauss(samples)
    s = 0.5 * (x + 1)
    ws = 0.5 * w
    t = np.arange(samples) * (TWO_PI / samples)
    pts = z + rho * s[:, None] * np.exp(1j * t)[None, :]
    vals = np.abs(m.log_deriv(pts)) ** 2 * (1 - np.abs(pts)) ** 2
    mean = float(np.sum(vals * (ws * s)[:, None]) * (TWO_PI / samples) * rho**2) / (math.pi * rho**2)
    eta2 = eta_point(m, z) ** 2
    if mean == 0:
        return 0.0
    return eta2 / mean


def eta_profile(m, levels: int = 12, start_level: int = MIN_TOP_LEVEL, thresholds=THRESHOLDS) -> LadderReport:
    """Per-level max over all Whitney tops of eta(W) (the little Bloch scale)."""
    if levels > 16:
        raise DepthExceeded("eta profiles stop at level 16")
    shells = []
    for n in range(start_level, levels + 1):
        eta = eta_tops(m, n, np.arange(1 << n))
        shells.append((n, float(eta.max()), 0.0))
    return build_profile_report("eta_profile", shells, thresholds)
