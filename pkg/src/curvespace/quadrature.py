"""Adaptive polar quadrature for integrands that are singular at |z| = 1.

Cells are rectangles in (u, theta) where u is either the radius itself or the
distance to the unit circle (inside or outside), so the boundary distance is
exact at every node.  Each cell is integrated with a tensor Gauss-Legendre rule
and compared against its two bisections (radial and angular); unresolved cells
are split in the direction with the larger discrepancy.  Every integrand used
here is nonnegative, which is what makes the cell-local relative acceptance
test control the global error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .config import DEFAULT_OUTER_RADIUS, DEFAULT_TOL, THRESHOLDS, parallel_map
from .errors import NoConvergence, NonFinite, ParamOutOfRange

TWO_PI = 2 * math.pi
GL_ORDER = 6
MAX_GENERATIONS = 60
MAX_ACTIVE_CELLS = 400_000
BAND_FLOOR = 1e-13
LADDER_ANGULAR_CELLS = 32

WEIGHT_KINDS = (
    "one",
    "log_p",
    "one_minus_sq_p",
    "exterior_dirichlet_log_p",
    "exterior_carleson_p",
)


@lru_cache(maxsize=16)
def _unit_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


@dataclass(frozen=True)
class Weight:
    """Radial weight, evaluated from the radius r and the exact distance d = |1 - r|."""

    kind: str = "one"
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ParamOutOfRange(f"unknown weight {self.kind!r}")
        if self.p < 0:
            raise ParamOutOfRange("weight exponent must be >= 0")

    def __call__(self, r, d):
        p = self.p
        if self.kind == "one":
            return np.ones_like(d)
        if self.kind == "log_p":
            # log+ so that shells with 1-|z| > 1 (r < 0 never occurs) stay nonnegative
            return np.maximum(-np.log(d), 0.0) ** p
        if self.kind == "one_minus_sq_p":
            return (d * (2 - d)) ** p
        if self.kind == "exterior_dirichlet_log_p":
            return np.log(r / d) ** p / (d * (2 + d)) ** 2
        return d ** (p - 2)


@dataclass(frozen=True)
class WeightedIntegrand:
    """core(z) * weight(|z|); ``core`` must be vectorised and nonnegative.

    With ``polar=True`` the core is called as core(z, r, d) so that it can use
    the exact boundary distance instead of recomputing it from z.
    """

    core: Callable
    weight: Weight = field(default_factory=Weight)
    label: str = ""
    polar: bool = False

    def __call__(self, z, r, d):
        c = self.core(z, r, d) if self.polar else self.core(z)
        return c * self.weight(r, d)


def zero_core(z):
    return np.zeros(np.shape(z))


def unit_core(z):
    return np.ones(np.shape(z))


@dataclass(frozen=True)
class Annulus:
    r1: float
    r2: float


@dataclass(frozen=True)
class PolarRect:
    r0: float
    r1: float
    t0: float
    t1: float


# -- cell engine --------------------------------------------------------------


def _coords(mode, u):
    if mode == "in":
        return 1 - u, u
    if mode == "out":
        return 1 + u, u
    return u, np.abs(1 - u)


CELL_CHUNK = 32768


def _cell_values(fn, mode, u0, u1, t0, t1, n=GL_ORDER):
    """Tensor Gauss-Legendre integral of fn * r over every cell (vectorised, chunked)."""
    if len(u0) > CELL_CHUNK:
        return np.concatenate([
            _cell_values(fn, mode, u0[i : i + CELL_CHUNK], u1[i : i + CELL_CHUNK], t0[i : i + CELL_CHUNK],
                         t1[i : i + CELL_CHUNK], n)
            for i in range(0, len(u0), CELL_CHUNK)
        ])
    x, w = _unit_rule(n)
    du = (u1 - u0)[:, None]
    dt = (t1 - t0)[:, None]
    u = u0[:, None] + du * x[None, :]
    t = t0[:, None] + dt * x[None, :]
    r, d = _coords(mode, u)
    z = r[:, :, None] * np.exp(1j * t)[:, None, :]
    rr = np.broadcast_to(r[:, :, None], z.shape)
    dd = np.broadcast_to(d[:, :, None], z.shape)
    vals = fn(z, rr, dd) * rr
    if not np.all(np.isfinite(vals)):
        raise NonFinite("integrand returned a non-finite value")
    inner = np.einsum("cij,i,j->c", vals, w, w)
    return inner * (u1 - u0) * (t1 - t0)


def _split_values(fn, mode, u0, u1, t0, t1):
    um = 0.5 * (u0 + u1)
    tm = 0.5 * (t0 + t1)
    k = len(u0)
    U0 = np.concatenate([u0, um, u0, u0])
    U1 = np.concatenate([um, u1, u1, u1])
    T0 = np.concatenate([t0, t0, t0, tm])
    T1 = np.concatenate([t1, t1, tm, t1])
    q = _cell_values(fn, mode, U0, U1, T0, T1)
    return q[:k], q[k : 2 * k], q[2 * k : 3 * k], q[3 * k :]


def adaptive_polar(fn, mode, u0, u1, t0, t1, tol, max_active=MAX_ACTIVE_CELLS):
    """Integrate fn over the union of the initial cells; returns (value, err)."""
    u0, u1, t0, t1 = (np.asarray(a, dtype=float).ravel().copy() for a in (u0, u1, t0, t1))
    if len(u0) == 0:
        return 0.0, 0.0
    r_mid = np.abs(_coords(mode, 0.5 * (u0 + u1))[0])
    region_area = float(np.sum((u1 - u0) * (t1 - t0) * np.maximum(r_mid, 1e-300)))
    q = _cell_values(fn, mode, u0, u1, t0, t1)
    acc_v, acc_e = [], []
    for _ in range(MAX_GENERATIONS):
        a, b, c, d = _split_values(fn, mode, u0, u1, t0, t1)
        s_r, s_t = a + b, c + d
        e_r, e_t = np.abs(s_r - q), np.abs(s_t - q)
        radial = e_r >= e_t
        best = np.where(radial, s_r, s_t)
        err = np.maximum(e_r, e_t)
        total = math.fsum(acc_v) + float(np.sum(best))
        r_mid = np.abs(_coords(mode, 0.5 * (u0 + u1))[0])
        frac = (u1 - u0) * (t1 - t0) * np.maximum(r_mid, 1e-300) / region_area
        tiny = (u1 - u0) <= 1e-15 * np.maximum(np.abs(u1), 1.0)
        ok = (err <= tol * np.maximum(best, frac * abs(total))) | tiny
        # global stop: the pessimistic error bound of the whole partition is small enough
        if math.fsum(acc_e) + float(np.sum(err)) <= tol * abs(total):
            ok[:] = True
        acc_v.extend(best[ok].tolist())
        acc_e.extend(err[ok].tolist())
        keep = ~ok
        if not np.any(keep):
            return math.fsum(acc_v), math.fsum(acc_e)
        rk = radial[keep]
        u0k, u1k, t0k, t1k = u0[keep], u1[keep], t0[keep], t1[keep]
        um, tm = 0.5 * (u0k + u1k), 0.5 * (t0k + t1k)
        # children: first halves then second halves, in the chosen direction
        u0 = np.concatenate([u0k, np.where(rk, um, u0k)])
        u1 = np.concatenate([np.where(rk, um, u1k), u1k])
        t0 = np.concatenate([t0k, np.where(rk, t0k, tm)])
        t1 = np.concatenate([np.where(rk, t1k, tm), t1k])
        q = np.concatenate([np.where(rk, a[keep], c[keep]), np.where(rk, b[keep], d[keep])])
        if len(u0) > max_active:
            value = math.fsum(acc_v) + float(np.sum(q))
            raise NoConvergence("cell budget exhausted", value, math.fsum(acc_e) + float(np.sum(err[keep])))
    value = math.fsum(acc_v) + float(np.sum(q))
    raise NoConvergence("refinement depth exhausted", value, math.fsum(acc_e))


def _grid(a, b, n):
    e = np.linspace(a, b, n + 1)
    return e[:-1], e[1:]


def _annulus_cells(r1, r2, n_theta=LADDER_ANGULAR_CELLS):
    if r1 < 0 or r2 <= r1:
        raise ParamOutOfRange("annulus needs 0 <= r1 < r2")
    if r1 < 1 < r2:
        raise ParamOutOfRange("annulus must not straddle the unit circle")
    if r2 <= 1:
        mode, ua, ub = "in", 1 - r2, 1 - r1
    else:
        mode, ua, ub = "out", r1 - 1, r2 - 1
    t0, t1 = _grid(0.0, TWO_PI, n_theta)
    return mode, np.full(n_theta, ua), np.full(n_theta, ub), t0, t1


def _band_edges(L, d_max=None, floor=BAND_FLOOR):
    """Dyadic bands d in [L 2^-j-1, L 2^-j], clipped to d <= d_max, down to floor."""
    hi = L if d_max is None else min(L, d_max)
    edges = []
    top = hi
    while top > floor:
        lo = max(top / 2, floor)
        edges.append((lo, top))
        top = lo
    return edges


def box_cells(arc, side, d_max=None, d_min=None):
    L = arc.length
    floor = BAND_FLOOR if d_min is None else max(d_min, BAND_FLOOR)
    if side == "interior":
        edges = _band_edges(L, min(L, 1.0), floor)
        mode = "in"
    else:
        edges = _band_edges(L, d_max, floor)
        mode = "out"
    if not edges:
        return mode, *(np.empty(0),) * 4
    lo = np.array([e[0] for e in edges])
    hi = np.array([e[1] for e in edges])
    nt = max(1, min(LADDER_ANGULAR_CELLS, int(math.ceil(L / (TWO_PI / LADDER_ANGULAR_CELLS)))))
    t0, t1 = _grid(arc.start, arc.start + min(L, TWO_PI), nt)
    U0 = np.repeat(lo, nt)
    U1 = np.repeat(hi, nt)
    T0 = np.tile(t0, len(lo))
    T1 = np.tile(t1, len(lo))
    return mode, U0, U1, T0, T1


def integrate_region(integrand, region, tol=DEFAULT_TOL, d_max=None, d_min=None):
    """Integrate over a CarlesonBox, WhitneyTop, Annulus or PolarRect.

    Boxes reach the unit circle; they are cut into dyadic bands in the boundary
    distance down to 1e-13 (the remainder is below rounding for every weight
    used here).  ``d_max`` clips exterior boxes to a support radius and
    ``d_min`` truncates boxes above the unit circle.
    """
    if tol <= 0:
        raise ParamOutOfRange("tol must be positive")
    from .dyadic import CarlesonBox, WhitneyTop

    if isinstance(region, Annulus):
        cells = _annulus_cells(region.r1, region.r2)
    elif isinstance(region, PolarRect):
        mode = "out" if region.r0 >= 1 else "in"
        if region.r0 < 1 < region.r1:
            raise ParamOutOfRange("region must not straddle the unit circle")
        if mode == "in":
            ua, ub = 1 - region.r1, 1 - region.r0
        else:
            ua, ub = region.r0 - 1, region.r1 - 1
        cells = (mode, np.array([ua]), np.array([ub]), np.array([region.t0]), np.array([region.t1]))
    elif isinstance(region, CarlesonBox):
        cells = box_cells(region.arc, region.side, d_max, d_min)
    elif isinstance(region, WhitneyTop):
        r0, r1 = region.radii
        cells = ("in", np.array([1 - r1]), np.array([1 - r0]), np.array([region.arc.start]), np.array([region.arc.end]))
    else:
        raise ParamOutOfRange(f"unsupported region {type(region).__name__}")
    mode, u0, u1, t0, t1 = cells
    return adaptive_polar(integrand, mode, u0, u1, t0, t1, tol)


def box_integral(integrand, arc, side="interior", tol=DEFAULT_TOL, d_max=None, d_min=None):
    from .dyadic import CarlesonBox

    return integrate_region(integrand, CarlesonBox(arc, side), tol, d_max=d_max, d_min=d_min)


# -- ladders ----------------------------------------------------------------


@dataclass(frozen=True)
class LadderEntry:
    level: int
    value: float
    err: float
    cumulative: float


@dataclass
class LadderReport:
    """Per-level values with a verdict.

    ``kind`` is ``ladder`` (shell integrals and cumulative sums) or ``profile``
    (per-level maxima; ``cumulative`` then repeats ``value``).
    """

    label: str
    kind: str
    entries: list
    verdict: str
    limit: float | None = None
    slope: float | None = None
    monotone: bool = False
    thresholds: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def levels(self):
        return [e.level for e in self.entries]

    @property
    def values(self):
        return [e.value for e in self.entries]

    @property
    def cumulative(self):
        return [e.cumulative for e in self.entries]

    @property
    def final(self):
        return self.entries[-1].value if self.entries else 0.0

    def to_dict(self):
        return {
            "label": self.label,
            "kind": self.kind,
            "verdict": self.verdict,
            "limit": self.limit,
            "slope": self.slope,
            "monotone": self.monotone,
            "thresholds": dict(self.thresholds),
            "entries": [
                {"level": e.level, "value": e.value, "err": e.err, "cumulative": e.cumulative}
                for e in self.entries
            ],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data):
        entries = [LadderEntry(**e) for e in data.get("entries", [])]
        return cls(
            label=data.get("label", ""),
            kind=data.get("kind", "ladder"),
            entries=entries,
            verdict=data.get("verdict", "inconclusive"),
            limit=data.get("limit"),
            slope=data.get("slope"),
            monotone=bool(data.get("monotone", False)),
            thresholds=dict(data.get("thresholds", {})),
            notes=list(data.get("notes", [])),
        )


def lsq_slope(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 2:
        return 0.0
    xc = x - x.mean()
    den = float(np.dot(xc, xc))
    return float(np.dot(xc, y - y.mean()) / den) if den > 0 else 0.0


def _tail_slope(entries):
    half = entries[len(entries) // 2 :]
    return lsq_slope([e.level for e in half], [e.cumulative for e in half])


def ladder_verdict(values, thresholds=THRESHOLDS):
    """converged / diverging / inconclusive from the last three shell ratios."""
    v = [float(x) for x in values]
    scale = max(v) if v else 0.0
    if scale <= 0:
        return "converged", []
    tail = v[-4:]
    if len(tail) < 4:
        return "inconclusive", []
    floor = 1e-15 * scale
    if all(x <= floor for x in tail[1:]):
        return "converged", [0.0, 0.0, 0.0]
    ratios = [b / a if a > floor else math.inf for a, b in zip(tail[:-1], tail[1:])]
    if all(r < thresholds["tail_ratio"] for r in ratios):
        return "converged", ratios
    if all(r >= thresholds["divergence_ratio"] for r in ratios):
        return "diverging", ratios
    return "inconclusive", ratios


def build_ladder_report(label, shells, thresholds=THRESHOLDS, rows=None, notes=None):
    """shells: list of (level, value, err)."""
    entries = []
    running = []
    for level, value, err in shells:
        running.append(value)
        entries.append(LadderEntry(int(level), float(value), float(err), math.fsum(running)))
    verdict, ratios = ladder_verdict([e.value for e in entries], thresholds)
    limit = None
    if verdict == "converged" and entries:
        rho = max(ratios) if ratios else 0.0
        rho = min(rho, thresholds["tail_ratio"])
        last = entries[-1]
        limit = last.cumulative + last.value * rho / (1 - rho)
    monotone = all(b.value <= a.value for a, b in zip(entries[:-1], entries[1:]))
    out_notes = list(notes or [])
    if ratios:
        out_notes.append("last shell ratios: " + ", ".join(f"{r:.6g}" for r in ratios))
    return LadderReport(
        label=label,
        kind="ladder",
        entries=entries,
        verdict=verdict,
        limit=limit,
        slope=_tail_slope(entries) if len(entries) >= 2 else 0.0,
        monotone=monotone,
        thresholds={k: thresholds[k] for k in ("tail_ratio", "divergence_ratio")},
        rows=list(rows or []),
        notes=out_notes,
    )


def shell_bounds(exhaustion, k, outer_radius=DEFAULT_OUTER_RADIUS):
    """Boundary-distance range of shell k."""
    if exhaustion == "interior_annuli":
        return 2.0 ** -(k + 1), 2.0**-k
    if exhaustion == "exterior_annuli":
        w = outer_radius - 1
        return w * 2.0 ** -(k + 1), w * 2.0**-k
    raise ParamOutOfRange(f"unknown exhaustion {exhaustion!r}")


def ladder(integrand, exhaustion="interior_annuli", levels=10, tol=DEFAULT_TOL,
           outer_radius=DEFAULT_OUTER_RADIUS, label="ladder", thresholds=THRESHOLDS):
    """Shell integrals over 1-2^-k <= |z| <= 1-2^-(k+1) (or mirrored outside)."""
    if levels < 3:
        raise ParamOutOfRange("ladder needs levels >= 3")
    mode = "in" if exhaustion == "interior_annuli" else "out"

    def shell(k):
        lo, hi = shell_bounds(exhaustion, k, outer_radius)
        t0, t1 = _grid(0.0, TWO_PI, LADDER_ANGULAR_CELLS)
        n = LADDER_ANGULAR_CELLS
        value, err = adaptive_polar(integrand, mode, np.full(n, lo), np.full(n, hi), t0, t1, tol)
        return k, value, err

    shells = parallel_map(shell, range(levels))
    rows = [{"level": k, "value": v, "err": e} for k, v, e in shells]
    return build_ladder_report(label, shells, thresholds, rows=rows)


# -- Carleson profiles --------------------------------------------------------


COARSE_BANDS = 24
COARSE_RADIAL = 4
COARSE_ANGULAR = 8
REFINE_CANDIDATES = 6
_ARC_CHUNK = 512


def _coarse_box_values(integrand, level, side, shift_offset=0.0, d_max=None):
    """Low-order estimate of every box integral at one level (vectorised over arcs)."""
    L = TWO_PI * 2.0**-level
    n_arcs = 2**level
    xr, wr = _unit_rule(COARSE_RADIAL)
    xt, wt = _unit_rule(COARSE_ANGULAR)
    edges = _band_edges(L, min(L, 1.0) if side == "interior" else d_max, floor=L * 2.0**-COARSE_BANDS)
    if not edges:
        return np.zeros(n_arcs)
    d_nodes, d_w = [], []
    for lo, hi in edges:
        d_nodes.append(lo + (hi - lo) * xr)
        d_w.append((hi - lo) * wr)
    d = np.concatenate(d_nodes)
    dw = np.concatenate(d_w)
    r = 1 - d if side == "interior" else 1 + d
    out = np.empty(n_arcs)
    for s in range(0, n_arcs, _ARC_CHUNK):
        idx = np.arange(s, min(s + _ARC_CHUNK, n_arcs))
        t = shift_offset + (idx[:, None] + xt[None, :]) * L
        z = r[None, :, None] * np.exp(1j * t)[:, None, :]
        rr = np.broadcast_to(r[None, :, None], z.shape)
        dd = np.broadcast_to(d[None, :, None], z.shape)
        vals = integrand(z, rr, dd) * rr
        if not np.all(np.isfinite(vals)):
            raise NonFinite("integrand returned a non-finite value")
        out[idx] = np.einsum("aij,i,j->a", vals, dw, wt) * L
    return out


def carleson_profile(integrand, p, levels, side="interior", start_level=3, tol=1e-6,
                     d_max=None, label="profile", thresholds=THRESHOLDS, keep_rows=True):
    """Max over the 2^n boxes of (1/|I|^p) * box integral, for n = start..levels.

    All boxes at a level are first estimated with a fixed low-order rule; the
    leading candidates are then integrated adaptively and the largest refined
    value is reported.
    """
    from .dyadic import DyadicArc

    if levels < start_level:
        raise ParamOutOfRange("profile needs levels >= start_level")
    shells, rows = [], []
    for n in range(start_level, levels + 1):
        L = TWO_PI * 2.0**-n
        norm = L**p
        coarse = _coarse_box_values(integrand, n, side, d_max=d_max) / norm
        order = np.lexsort((np.arange(len(coarse)), -coarse))
        cand = [int(i) for i in order[:REFINE_CANDIDATES]]

        def refine(i, n=n, norm=norm):
            v, e = box_integral(integrand, DyadicArc(n, i), side, tol, d_max=d_max)
            return v / norm, e / norm

        refined = parallel_map(refine, cand)
        best = max(range(len(cand)), key=lambda j: (refined[j][0], -cand[j]))
        value, err = refined[best]
        shells.append((n, value, err))
        if keep_rows:
            ref = dict(zip(cand, refined))
            for i, c in enumerate(coarse):
                rv = ref.get(i)
                rows.append({
                    "level": n,
                    "index": i,
                    "coarse": float(c),
                    "refined": "" if rv is None else float(rv[0]),
                })
    return build_profile_report(label, shells, thresholds, rows)


def profile_verdict(values, thresholds=THRESHOLDS):
    v = [float(x) for x in values]
    if not v or max(v) <= 0:
        return "vanishing"
    last4 = v[-4:]
    decreasing = len(last4) == 4 and all(b < a for a, b in zip(last4[:-1], last4[1:]))
    if v[-1] < thresholds["vanishing"] and decreasing:
        return "vanishing"
    if len(last4) == 4 and v[-1] >= thresholds["vanishing"]:
        change = (max(last4) - min(last4)) / max(last4)
        if change < thresholds["stabilized"]:
            return "not-vanishing"
    return "inconclusive"


def build_profile_report(label, shells, thresholds=THRESHOLDS, rows=None, notes=None):
    entries = [LadderEntry(int(k), float(v), float(e), float(v)) for k, v, e in shells]
    values = [e.value for e in entries]
    verdict = profile_verdict(values, thresholds)
    monotone = all(b.value < a.value for a, b in zip(entries[:-1], entries[1:])) or max(values, default=0) == 0
    limit = entries[-1].value if verdict == "not-vanishing" else (0.0 if verdict == "vanishing" else None)
    return LadderReport(
        label=label,
        kind="profile",
        entries=entries,
        verdict=verdict,
        limit=limit,
        slope=lsq_slope([e.level for e in entries], [math.log(max(x, 1e-300)) for x in values]) if entries else 0.0,
        monotone=monotone,
        thresholds={k: thresholds[k] for k in ("vanishing", "stabilized")},
        rows=list(rows or []),
        notes=list(notes or []),
    )
