"""Image-curve geometry: arc betas, arclength excess, dyadic sums and Jones betas.

A boundary source maps angles theta to points of the image curve.  Maps with
a closed form are evaluated on the circle directly; truncated series are
extrapolated radially from three radii inside their trusted radius.

Statistics over many dyadic arcs use a sample bank: the root arc is sampled
once on the finest grid (``SAMPLES_PER_ARC`` segments per finest arc) and every
coarser arc is a slice of that bank.  The 2pi/3-rotated family gets a bank of
its own.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .dyadic import SHIFT_OFFSET, TWO_PI, DyadicArc, arc_length
from .errors import DegenerateChord, DegenerateInput, DepthExceeded, ExtrapolationUnstable, ParamOutOfRange
from .quadrature import ladder_verdict, lsq_slope

SAMPLES_PER_ARC = 8
MAX_BANK_LEVEL = 22
EXTRAP_GATE = 1e-6
COLLINEAR_TOL = 1e-13


# -- boundary sources ---------------------------------------------------------


def boundary_values(m, theta):
    """f(e^{i theta}) and an error estimate.

    Series maps use Richardson extrapolation from r = 1 - h, 1 - 2h, 4h with
    h = 1 - radius_guard; the 3-term and 2-term extrapolants must agree to 1e-6.
    """
    theta = np.asarray(theta, dtype=float)
    e = np.exp(1j * theta)
    if m.closed_form:
        return m.f(e), np.zeros(theta.shape)
    h = 1 - m.radius_guard
    f1 = m.f((1 - h) * e)
    f2 = m.f((1 - 2 * h) * e)
    f4 = m.f((1 - 4 * h) * e)
    three = (8 * f1 - 6 * f2 + f4) / 3
    two = 2 * f1 - f2
    err = np.abs(three - two)
    scale = np.maximum(1.0, np.abs(three))
    if np.any(err > EXTRAP_GATE * scale):
        raise ExtrapolationUnstable(
            f"radial extrapolation disagrees by {float(np.max(err / scale)):.3g} (gate {EXTRAP_GATE:g})"
        )
    return three, err


class MapBoundary:
    def __init__(self, m):
        self.map = m
        self.name = m.name

    def __call__(self, theta):
        return boundary_values(self.map, theta)


class ParametricCurve:
    """A synthetic boundary theta -> w (theta in [0, 2pi])."""

    def __init__(self, fn, name="curve"):
        self.fn = fn
        self.name = name

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.asarray(self.fn(theta), dtype=complex), np.zeros(theta.shape)

    @classmethod
    def from_polyline(cls, vertices, closed=True, name="polyline"):
        """Parameterise a polyline by normalised arclength onto [0, 2pi]."""
        v = np.asarray(vertices, dtype=complex)
        if closed:
            v = np.append(v, v[0])
        seg = np.abs(np.diff(v))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        if s[-1] == 0:
            raise DegenerateInput("polyline has zero length")
        t = s / s[-1] * TWO_PI

        def fn(theta):
            th = np.clip(theta, 0.0, TWO_PI)
            return np.interp(th, t, v.real) + 1j * np.interp(th, t, v.imag)

        return cls(fn, name)


def as_source(obj):
    if isinstance(obj, (MapBoundary, ParametricCurve)):
        return obj
    if hasattr(obj, "log_deriv"):
        return MapBoundary(obj)
    if callable(obj):
        return ParametricCurve(obj)
    raise ParamOutOfRange("expected a map, a boundary source or a callable")


def segment_curve(a=0j, b=1 + 0j):
    """The straight segment from a to b, as a synthetic source."""
    return ParametricCurve(lambda th: a + (b - a) * th / TWO_PI, "segment")


def circle_arc_curve(angle, radius=1.0):
    """A circular arc of opening ``angle`` (parameter theta in [0, 2pi] sweeps it)."""
    return ParametricCurve(lambda th: radius * np.exp(1j * angle * th / TWO_PI), f"circle_arc({angle:g})")


def read_polyline_csv(path):
    """One ``x,y`` pair per line; the curve is closed implicitly."""
    pts = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append(complex(float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if pts:
                    raise DegenerateInput(f"bad polyline row {row!r}") from None
    if len(pts) < 3:
        raise DegenerateInput("a closed polyline needs at least 3 vertices")
    return np.array(pts)


# -- single arcs --------------------------------------------------------------


@dataclass
class CurveArc:
    source_arc: object
    samples: np.ndarray
    extrap_err: np.ndarray
    refinement: int = 0
    source: object = None

    @property
    def endpoints(self):
        return complex(self.samples[0]), complex(self.samples[-1])

    @property
    def chord(self) -> float:
        return abs(self.samples[-1] - self.samples[0])

    def refine(self) -> "CurveArc":
        if self.source is None:
            raise ParamOutOfRange("arc has no source to refine from")
        n = 2 * len(self.samples) - 1
        out = sample_arc(self.source, self.source_arc, n)
        out.refinement = self.refinement + 1
        return out


@dataclass(frozen=True)
class BetaValue:
    arc: object
    beta: float
    stable: bool


def _arc_bounds(arc):
    return float(arc.start), float(arc.start + arc.length)


def sample_arc(source, arc, n: int) -> CurveArc:
    """n equispaced samples of the image of ``arc`` (endpoints included)."""
    if n < 3:
        raise ParamOutOfRange("need at least 3 samples")
    src = as_source(source)
    a, b = _arc_bounds(arc)
    theta = a + (b - a) * np.arange(n) / (n - 1)
    w, err = src(theta)
    return CurveArc(arc, w, err, 0, src)


def curve_arc_from_points(points, source_arc=None) -> CurveArc:
    w = np.asarray(points, dtype=complex)
    if len(w) < 3:
        raise ParamOutOfRange("need at least 3 samples")
    return CurveArc(source_arc, w, np.zeros(len(w)))


def _chord_or_raise(w1, w2):
    c = abs(w2 - w1)
    if c <= 1e-12:
        raise DegenerateChord("arc endpoints coincide; subdivide the arc")
    return c


def _beta_of(w):
    w1, w2 = w[0], w[-1]
    c = _chord_or_raise(w1, w2)
    u = (w2 - w1) / c
    dist = np.abs(((w - w1) * np.conj(u)).imag)
    b = float(dist.max()) / c
    return 0.0 if b <= COLLINEAR_TOL else b


def beta_arc(arc: CurveArc) -> BetaValue:
    """max distance of the samples to the chord line, over the chord length."""
    w = arc.samples
    b = _beta_of(w)
    stable = True
    if len(w) >= 5 and len(w) % 2 == 1:
        coarse = _beta_of(w[::2])
        stable = abs(b - coarse) <= 0.01 * max(b, 1e-12)
    return BetaValue(getattr(arc.source_arc, "key", arc.source_arc), float(b), bool(stable))


def _polyline_length(w):
    return math.fsum(np.abs(np.diff(w)).tolist())


def arclength(arc: CurveArc) -> float:
    """Polyline length with one Richardson step against the every-other subsample."""
    w = arc.samples
    fine = _polyline_length(w)
    if len(w) >= 5 and len(w) % 2 == 1:
        coarse = _polyline_length(w[::2])
        return max(fine + (fine - coarse) / 3, fine)
    return fine


def delta(arc: CurveArc) -> float:
    """(arclength - chord)/chord."""
    c = _chord_or_raise(*arc.endpoints)
    return (arclength(arc) - c) / c


# -- sample banks and batched statistics -------------------------------------------


@dataclass
class _Bank:
    theta0: float
    spacing: float
    w: np.ndarray


def _bank(src, theta0, spacing, count):
    theta = theta0 + spacing * np.arange(count + 1)
    w, _ = src(theta)
    return _Bank(theta0, spacing, w)


def _family_slices(root: DyadicArc, depth: int, shift: str, m=SAMPLES_PER_ARC):
    """Bank layout and, per level, (level, first_start_index, stride, count, indices).

    Indices are measured in units of the finest spacing Lambda = |I_fine|/m.
    """
    fine = root.level + depth
    if fine > MAX_BANK_LEVEL:
        raise DepthExceeded(f"finest level {fine} exceeds {MAX_BANK_LEVEL}")
    lam = arc_length(fine) / m
    a, b = _arc_bounds(root)
    full = root.level == 0
    total = (1 << depth) * m
    if shift == "none" or full:
        theta0 = a + (SHIFT_OFFSET[shift] if full else 0.0)
        count = total
        levels = []
        for k in range(depth + 1):
            n = root.level + k
            if n == 0:
                continue
            stride = m << (depth - k)
            na = 1 << k
            levels.append((n, 0, stride, na, (root.index << k) + np.arange(na)))
        return theta0, lam, count, levels
    # rotated mesh inside a proper sub-arc: finest rotated nodes lie at 2pi/3 + j*Lambda
    off = SHIFT_OFFSET[shift]
    j0 = math.ceil((a - off) / lam - 1e-9)
    j1 = math.floor((b - off) / lam + 1e-9)
    theta0 = off + j0 * lam
    count = j1 - j0
    levels = []
    for k in range(depth + 1):
        n = root.level + k
        stride = m << (depth - k)
        # rotated level-n arcs start at rotated node indices that are multiples of stride
        first = (-j0) % stride
        na = max(0, (count - first) // stride)
        if na == 0:
            continue
        start_idx = (j0 + first) // stride
        idx = (start_idx + np.arange(na)) % (1 << n)
        levels.append((n, first, stride, na, idx))
    return theta0, lam, count, levels


def _slices(w, first, stride, na):
    """(na, stride+1) array of arc samples."""
    base = first + stride * np.arange(na)
    return w[base[:, None] + np.arange(stride + 1)[None, :]]


def _batch_beta(W):
    w1 = W[:, :1]
    w2 = W[:, -1:]
    c = np.abs(w2 - w1)[:, 0]
    u = (w2 - w1) / np.where(c > 0, c, 1)[:, None]
    dist = np.abs(((W - w1) * np.conj(u)).imag).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(c > 1e-12, dist / c, np.nan)
    b[b <= COLLINEAR_TOL] = 0.0
    return b, c


def _batch_length(W):
    fine = np.abs(np.diff(W, axis=1)).sum(axis=1)
    if (W.shape[1] - 1) % 2 == 0 and W.shape[1] >= 5:
        coarse = np.abs(np.diff(W[:, ::2], axis=1)).sum(axis=1)
        return np.maximum(fine + (fine - coarse) / 3, fine)
    return fine


DIAM_SAMPLES = 65


def _batch_diam(W):
    """Pairwise max over at most 65 equispaced samples per arc (endpoints included)."""
    n = W.shape[1]
    if n > DIAM_SAMPLES:
        W = W[:, np.unique(np.linspace(0, n - 1, DIAM_SAMPLES).round().astype(int))]
    out = np.empty(len(W))
    for lo in range(0, len(W), 2048):
        blk = W[lo : lo + 2048]
        d = np.abs(blk[:, :, None] - blk[:, None, :])
        out[lo : lo + 2048] = d.reshape(len(blk), -1).max(axis=1)
    return out


def _batch_detour(W):
    w1 = W[:, :1]
    w2 = W[:, -1:]
    c = np.abs(w2 - w1)[:, 0]
    s = (np.abs(W - w1) + np.abs(W - w2)).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(c > 1e-12, s / c - 1, np.nan)


@dataclass
class ArcTable:
    """Per-arc statistics (one row per arc, ordered by shift, level, index)."""

    shift: np.ndarray
    level: np.ndarray
    index: np.ndarray
    beta: np.ndarray
    chord: np.ndarray
    length: np.ndarray
    diam: np.ndarray
    detour: np.ndarray

    @property
    def delta(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.length - self.chord) / self.chord

    def select(self, mask):
        return ArcTable(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))

    def rows(self):
        out = []
        d = self.delta
        for i in range(len(self.level)):
            out.append({
                "level": int(self.level[i]),
                "index": int(self.index[i]),
                "shift": str(self.shift[i]),
                "beta": float(self.beta[i]),
                "delta": float(d[i]),
                "chord": float(self.chord[i]),
                "diam": float(self.diam[i]),
            })
        return out


def arc_table(source, root: DyadicArc, depth: int, family: str = "dyadic", with_diam: bool = True) -> ArcTable:
    """Statistics of every family arc inside ``root`` down to ``root.level + depth``.

    family: ``dyadic`` (plain mesh) or ``mr`` (plain plus 2pi/3-rotated).
    The full circle itself is never included (its chord vanishes).
    """
    if family not in ("dyadic", "mr"):
        raise ParamOutOfRange("family must be dyadic or mr")
    if depth < 0:
        raise ParamOutOfRange("depth must be >= 0")
    src = as_source(source)
    shifts = ("none",) if family == "dyadic" else ("none", "third")
    cols = {k: [] for k in ("shift", "level", "index", "beta", "chord", "length", "diam", "detour")}
    for shift in shifts:
        theta0, lam, count, levels = _family_slices(root, depth, shift)
        if count < 1 or not levels:
            continue
        bank = _bank(src, theta0, lam, count)
        for n, first, stride, na, idx in levels:
            W = _slices(bank.w, first, stride, na)
            b, c = _batch_beta(W)
            cols["shift"].append(np.full(na, shift))
            cols["level"].append(np.full(na, n))
            cols["index"].append(np.asarray(idx))
            cols["beta"].append(b)
            cols["chord"].append(c)
            cols["length"].append(_batch_length(W))
            cols["diam"].append(_batch_diam(W) if with_diam else np.full(na, np.nan))
            cols["detour"].append(_batch_detour(W))
    if not cols["level"]:
        empty = np.empty(0)
        return ArcTable(np.empty(0, dtype=str), empty.astype(int), empty.astype(int), empty, empty, empty, empty, empty)
    return ArcTable(*(np.concatenate(cols[k]) for k in cols))


def _root_length(source, root: DyadicArc, depth: int):
    src = as_source(source)
    count = (1 << depth) * SAMPLES_PER_ARC
    lam = arc_length(root.level + depth) / SAMPLES_PER_ARC
    bank = _bank(src, root.start, lam, count)
    w = bank.w
    ell = float(_batch_length(w[None, :])[0])
    return ell, abs(w[-1] - w[0])


def tst_sum(source, root: DyadicArc, depth: int):
    """(lhs, rhs) = (length - chord, sum over MR sub-arcs of beta^2 diam)."""
    if root.level == 0:
        raise ParamOutOfRange("the root must be a proper sub-arc (not the full circle)")
    ell, chord = _root_length(source, root, depth)
    lhs = max(ell - chord, 0.0)
    table = arc_table(source, root, depth, "mr")
    ok = np.isfinite(table.beta)
    rhs = math.fsum((table.beta[ok] ** 2 * table.diam[ok]).tolist())
    return lhs, rhs


def _log_plus(x, p):
    return np.maximum(np.log(1 / x), 0.0) ** p


def weighted_statistic(source, p: float, root: DyadicArc, depth: int, mode: str, quantity: str,
                       family: str):
    """Shared core of the beta^2 and Delta sums; returns (value, per-level dict, table)."""
    if mode == "qp_window":
        if not 0 < p <= 1:
            raise ParamOutOfRange("qp_window needs 0 < p <= 1")
    elif mode == "dlogp_global":
        if p < 0:
            raise ParamOutOfRange("dlogp_global needs p >= 0")
    else:
        raise ParamOutOfRange(f"unknown mode {mode!r}")
    table = arc_table(source, root, depth, family, with_diam=False)
    q = table.beta**2 if quantity == "beta" else table.delta
    lengths = TWO_PI * 2.0 ** -table.level.astype(float)
    w = lengths**p if mode == "qp_window" else _log_plus(lengths, p)
    terms = q * w
    ok = np.isfinite(terms)
    per_level = {}
    for lv in np.unique(table.level[ok]):
        sel = ok & (table.level == lv)
        per_level[int(lv)] = math.fsum(terms[sel].tolist())
    total = math.fsum(per_level.values())
    if mode == "qp_window":
        norm = root.length**p
        total /= norm
        per_level = {k: v / norm for k, v in per_level.items()}
    return total, per_level, table


@dataclass
class StatisticReport:
    name: str
    mode: str
    family: str
    p: float
    root: tuple
    depth: int
    value: float
    per_level: dict = field(default_factory=dict)

    def increments(self):
        return [self.per_level[k] for k in sorted(self.per_level)]


def theorem3_statistic(source, p: float, root: DyadicArc, depth: int, mode: str = "qp_window",
                       family: str = "dyadic", detail: bool = False):
    """Weighted beta^2 sum over the arcs I inside J:

    qp_window:    (1/|J|^p) sum beta(f(I))^2 |I|^p
    dlogp_global: sum beta(f(I))^2 (log+ 1/|I|)^p
    """
    total, per_level, _ = weighted_statistic(source, p, root, depth, mode, "beta", family)
    if detail:
        return StatisticReport("beta_sum", mode, family, p, root.key, depth, total, per_level)
    return total


def corollary1_statistic(source, p: float, root: DyadicArc, depth: int, mode: str = "qp_window",
                         family: str = "mr", detail: bool = False):
    """As :func:`theorem3_statistic` with Delta(I) in place of beta^2."""
    total, per_level, _ = weighted_statistic(source, p, root, depth, mode, "delta", family)
    if detail:
        return StatisticReport("delta_sum", mode, family, p, root.key, depth, total, per_level)
    return total


def quasi_arc_constant(source, root: DyadicArc, depth: int) -> float:
    """max over arcs of diam(f(I)) / |w1 - w2|."""
    t = arc_table(source, root, depth, "dyadic")
    ok = np.isfinite(t.beta)
    return float(np.max(t.diam[ok] / t.chord[ok])) if np.any(ok) else 1.0


# -- Jones beta on dyadic squares ------------------------------------------------


@dataclass(frozen=True)
class DyadicSquare:
    """[x0 + i s, x0 + (i+1) s] x [y0 + j s, y0 + (j+1) s] with s = side0 * 2^-level."""

    level: int
    i: int
    j: int
    origin: complex = 0j
    side0: float = 1.0

    @property
    def side(self):
        return self.side0 * 2.0**-self.level

    @property
    def lower_left(self):
        return self.origin + complex(self.i * self.side, self.j * self.side)

    @property
    def center(self):
        return self.lower_left + complex(self.side, self.side) / 2

    @property
    def diam(self):
        return self.side * math.sqrt(2)


def _clip_segments(a, b, lo, hi):
    """Liang-Barsky clipping of segments a->b to the box [lo, hi]; returns the clipped endpoints."""
    d = b - a
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    keep = np.ones(len(a), dtype=bool)
    for p_, q_ in (
        (-d.real, a.real - lo.real),
        (d.real, hi.real - a.real),
        (-d.imag, a.imag - lo.imag),
        (d.imag, hi.imag - a.imag),
    ):
        par = p_ == 0
        keep &= ~(par & (q_ < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(par, 0.0, q_ / np.where(par, 1.0, p_))
        neg = (p_ < 0) & ~par
        pos = (p_ > 0) & ~par
        t0 = np.where(neg, np.maximum(t0, r), t0)
        t1 = np.where(pos, np.minimum(t1, r), t1)
    keep &= t0 <= t1
    return a[keep] + t0[keep] * d[keep], a[keep] + t1[keep] * d[keep]


def min_width(points) -> float:
    """Width of the thinnest strip containing the points (rotating calipers on the hull).

    Widths below COLLINEAR_TOL times the point spread are rounding and return 0.
    """
    pts = np.unique(np.asarray(points, dtype=complex))
    if len(pts) < 3:
        return 0.0
    xy = np.column_stack([pts.real, pts.imag])
    spread = float(np.max(np.ptp(xy, axis=0)))
    try:
        hull = xy[ConvexHull(xy).vertices]
    except QhullError:
        # flat input: the spread across the principal direction
        c = xy - xy.mean(axis=0)
        _, s, vt = np.linalg.svd(c, full_matrices=False)
        proj = c @ vt[-1]
        w = float(proj.max() - proj.min())
        return 0.0 if w <= COLLINEAR_TOL * spread else w
    h = len(hull)
    best = math.inf
    j = 1
    for i in range(h):
        p0 = hull[i]
        p1 = hull[(i + 1) % h]
        e = p1 - p0
        elen = math.hypot(e[0], e[1])
        if elen == 0:
            continue

        def dist(k):
            q = hull[k % h] - p0
            return abs(e[0] * q[1] - e[1] * q[0]) / elen

        while dist(j + 1) >= dist(j):
            j += 1
            if j > i + 2 * h:
                break
        best = min(best, dist(j))
    return 0.0 if best <= COLLINEAR_TOL * spread else float(best)


def _polyline_segments(curve):
    v = np.asarray(curve, dtype=complex)
    return v, np.roll(v, -1)


def jones_beta_grid(curve, square: DyadicSquare) -> float:
    """beta_Gamma(Q) = (1/diam Q) inf_L sup_{z in 3Q cap Gamma} dist(z, L).

    The optimal line runs along the middle of the thinnest strip, so the sup is
    half the strip width.  Empty intersections give 0.
    """
    a, b = _polyline_segments(curve)
    if len(a) < 3:
        raise DegenerateInput("a closed polyline needs at least 3 vertices")
    return _jones_beta(a, b, square)


def _jones_beta(a, b, square):
    s = square.side
    lo = square.lower_left - complex(s, s)
    hi = lo + complex(3 * s, 3 * s)
    p0, p1 = _clip_segments(a, b, lo, hi)
    if len(p0) == 0:
        return 0.0
    pts = np.concatenate([p0, p1])
    return 0.5 * min_width(pts) / square.diam


def curve_grid(curve):
    """Origin and top-level side of the dyadic grid covering the curve's bounding box."""
    v = np.asarray(curve, dtype=complex)
    lo = complex(v.real.min(), v.imag.min())
    extent = max(v.real.max() - v.real.min(), v.imag.max() - v.imag.min())
    if extent == 0:
        raise DegenerateInput("curve has zero extent")
    k0 = math.floor(-math.log2(extent))
    return lo, 2.0**-k0


def remark2_sum(curve, p: float, maxdepth: int, breakdown: bool = False):
    """sum over grid squares meeting the curve of beta_Gamma(Q)^2 (log+ 1/diam Q)^p."""
    if p < 0:
        raise ParamOutOfRange("p must be >= 0")
    if maxdepth < 0 or maxdepth > 14:
        raise DepthExceeded("maxdepth must be in [0, 14]")
    a, b = _polyline_segments(curve)
    origin, side0 = curve_grid(curve)
    per_level = {}
    for k in range(maxdepth + 1):
        s = side0 * 2.0**-k
        # densify so every square the curve meets receives a sample
        seg_len = np.abs(b - a)
        reps = np.maximum(1, np.ceil(seg_len / (s / 4)).astype(int))
        t = np.concatenate([np.arange(r) / r for r in reps])
        which = np.repeat(np.arange(len(a)), reps)
        pts = a[which] + t * (b - a)[which]
        rel = (pts - origin) / s
        cells = np.unique(np.column_stack([np.floor(rel.real), np.floor(rel.imag)]).astype(np.int64), axis=0)
        # spatial hash of segments by the cells their bounding boxes touch (in units of s)
        sx0 = np.floor((np.minimum(a.real, b.real) - origin.real) / s).astype(np.int64)
        sx1 = np.floor((np.maximum(a.real, b.real) - origin.real) / s).astype(np.int64)
        sy0 = np.floor((np.minimum(a.imag, b.imag) - origin.imag) / s).astype(np.int64)
        sy1 = np.floor((np.maximum(a.imag, b.imag) - origin.imag) / s).astype(np.int64)
        buckets = {}
        for idx in range(len(a)):
            for cx in range(sx0[idx], sx1[idx] + 1):
                for cy in range(sy0[idx], sy1[idx] + 1):
                    buckets.setdefault((cx, cy), []).append(idx)
        w = max(math.log(1 / (s * math.sqrt(2))), 0.0) ** p
        terms = []
        for cx, cy in cells:
            near = set()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    near.update(buckets.get((cx + dx, cy + dy), ()))
            sel = np.fromiter(sorted(near), dtype=np.int64)
            sq = DyadicSquare(k, int(cx), int(cy), origin, side0)
            beta = _jones_beta(a[sel], b[sel], sq)
            terms.append(beta * beta * w)
        per_level[k] = math.fsum(terms)
    total = math.fsum(per_level.values())
    if breakdown:
        return total, per_level
    return total


# -- asymptotic conformality modulus ------------------------------------------------


def conformality_modulus(source, t_ladder, p: float, maxlevel: int = 12):
    """Sampled eps(t) over MR arcs with diam <= t and the ladder-truncated integral.

    The integral of eps(t)^2 t^(p-2) over [t_min, t_max] uses the value at the
    upper end of each ladder step (eps is non-decreasing, so this bounds the
    piece from above).  Returns (profile, integral, verdict).
    """
    t = np.asarray(t_ladder, dtype=float)
    if len(t) < 2 or np.any(np.diff(t) >= 0) or t[0] >= 1 or t[-1] <= 0:
        raise ParamOutOfRange("t_ladder must be strictly decreasing inside (0, 1)")
    table = arc_table(source, DyadicArc(0, 0), maxlevel, "mr")
    ok = np.isfinite(table.detour)
    det = np.maximum(table.detour[ok], 0.0)
    dia = table.diam[ok]
    order = np.argsort(dia, kind="stable")
    dia, det = dia[order], det[order]
    run = np.maximum.accumulate(det) if len(det) else det
    profile = []
    for ti in t:
        k = int(np.searchsorted(dia, ti, side="right"))
        eps2 = float(run[k - 1]) if k > 0 else 0.0
        profile.append((float(ti), math.sqrt(eps2)))
    pieces = []
    for (t_hi, e_hi), (t_lo, _) in zip(profile[:-1], profile[1:]):
        if p == 1:
            integ = math.log(t_hi / t_lo)
        else:
            integ = (t_hi ** (p - 1) - t_lo ** (p - 1)) / (p - 1)
        pieces.append(e_hi**2 * integ)
    verdict, _ = ladder_verdict(pieces)
    return profile, math.fsum(pieces), verdict


def detour_slope(profile):
    """Log-log slope of eps(t) (1/2-order behaviour gives ~1 for smooth curves)."""
    pts = [(math.log(t), math.log(e)) for t, e in profile if e > 0]
    if len(pts) < 2:
        return 0.0
    xs, ys = zip(*pts)
    return lsq_slope(xs, ys)


def window_profile(source, p: float, quantity: str = "beta", family: str = "dyadic", start_level: int = 2,
                   levels: int = 4, rel_depth: int = 6):
    """sup over windows J at level j of (1/|J|^p) sum_{I in J} q(I) |I|^p, for j = start .. start+levels.

    q is beta^2 or Delta; sub-arcs run from level j to j + rel_depth.  One
    full-circle table is built and every window is aggregated from it, so
    the values for successive levels are directly comparable.
    """
    if not 0 < p <= 1:
        raise ParamOutOfRange("window profiles need 0 < p <= 1")
    if start_level < 1:
        raise ParamOutOfRange("windows start at level 1 (the full circle has no chord)")
    top = start_level + levels + rel_depth
    table = arc_table(source, DyadicArc(0, 0), top, family, with_diam=False)
    q = table.beta**2 if quantity == "beta" else table.delta
    lengths = TWO_PI * 2.0 ** -table.level.astype(float)
    terms = q * lengths**p
    start = np.where(table.shift == "none", 0.0, SHIFT_OFFSET["third"]) + table.index * lengths
    start = np.mod(start, TWO_PI)
    out = []
    for j in range(start_level, start_level + levels + 1):
        Lj = arc_length(j)
        sel = (table.level >= j) & (table.level <= j + rel_depth) & np.isfinite(terms)
        win = np.floor(start[sel] / Lj + 1e-12).astype(np.int64)
        # rotated arcs straddling a window edge belong to no window
        end_ok = start[sel] + lengths[sel] <= (win + 1) * Lj * (1 + 1e-12)
        sums = np.bincount(win[end_ok] % (1 << j), weights=terms[sel][end_ok], minlength=1 << j)
        out.append((j, float(sums.max()) / Lj**p))
    return out
