"""Dyadic arcs, Carleson boxes, Whitney tops, hyperbolic geodesics and chains.

Angles are radians in [0, 2pi).  A dyadic arc of level n has arclength
2pi * 2**-n; the ``third`` family is the same mesh rotated by 2pi/3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import MAX_LEVEL, MAX_MR_LEVEL
from .errors import ChainOverflow, DegenerateInput, DepthExceeded, ParamOutOfRange

TWO_PI = 2 * math.pi
SHIFTS = ("none", "third")
SHIFT_OFFSET = {"none": 0.0, "third": TWO_PI / 3}
CHAIN_CAP = 10_000
# tops exist once the band |I|/2 < 1 - r <= |I| meets the disc
MIN_TOP_LEVEL = 2


def arc_length(level: int) -> float:
    return TWO_PI * 2.0**-level


def in_arc(theta, start, length):
    """Angle membership in the half-open arc [start, start+length)."""
    if length >= TWO_PI:
        return np.ones(np.shape(theta), dtype=bool)
    return np.mod(np.asarray(theta) - start, TWO_PI) < length


@dataclass(frozen=True)
class Arc:
    """A general boundary arc [start, start+length)."""

    start: float
    length: float

    @property
    def end(self) -> float:
        return self.start + self.length

    @property
    def mid(self) -> float:
        return self.start + self.length / 2

    def contains_angle(self, theta):
        return in_arc(theta, self.start, self.length)

    def endpoints(self):
        return np.exp(1j * self.start), np.exp(1j * self.end)


@dataclass(frozen=True, order=True)
class DyadicArc:
    level: int
    index: int
    shift: str = "none"

    def __post_init__(self):
        if self.level < 0 or self.level > MAX_LEVEL:
            raise DepthExceeded(f"level {self.level} outside [0, {MAX_LEVEL}]")
        if not 0 <= self.index < 2**self.level:
            raise ParamOutOfRange(f"index {self.index} outside [0, 2^{self.level})")
        if self.shift not in SHIFTS:
            raise ParamOutOfRange(f"shift must be one of {SHIFTS}")

    @property
    def length(self) -> float:
        return arc_length(self.level)

    @property
    def start(self) -> float:
        return self.index * self.length + SHIFT_OFFSET[self.shift]

    @property
    def end(self) -> float:
        return self.start + self.length

    @property
    def mid(self) -> float:
        return self.start + self.length / 2

    @property
    def key(self) -> tuple:
        return (self.level, self.index, self.shift)

    def as_arc(self) -> Arc:
        return Arc(self.start, self.length)

    def contains_angle(self, theta):
        return in_arc(theta, self.start, self.length)

    def endpoints(self):
        return np.exp(1j * self.start), np.exp(1j * self.end)

    def children(self, max_level: int = MAX_LEVEL):
        if self.level >= max_level:
            raise DepthExceeded(f"cannot refine level {self.level} beyond {max_level}")
        return (
            DyadicArc(self.level + 1, 2 * self.index, self.shift),
            DyadicArc(self.level + 1, 2 * self.index + 1, self.shift),
        )

    def parent(self):
        if self.level == 0:
            return None
        return DyadicArc(self.level - 1, self.index // 2, self.shift)

    def doubled(self) -> Arc:
        """2I: same midpoint, twice the arclength (capped at the full circle)."""
        length = min(2 * self.length, TWO_PI)
        return Arc(self.mid - length / 2, length)

    def descendants(self, depth: int):
        """Indices of the arcs of level ``self.level + depth`` below this one."""
        lo = self.index << depth
        return range(lo, lo + (1 << depth))


def children(arc: DyadicArc, max_level: int = MAX_LEVEL):
    return arc.children(max_level)


def arcs_at_level(level: int, shift: str = "none"):
    return [DyadicArc(level, i, shift) for i in range(2**level)]


# -- boxes and tops ---------------------------------------------------------


@dataclass(frozen=True)
class CarlesonBox:
    arc: object
    side: str = "interior"

    def __post_init__(self):
        if self.side not in ("interior", "exterior"):
            raise ParamOutOfRange("side must be interior or exterior")

    @property
    def radii(self):
        L = self.arc.length
        if self.side == "interior":
            return max(0.0, 1 - L), 1.0
        return 1.0, 1 + L

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        L = self.arc.length
        if self.side == "interior":
            radial = (r >= 1 - L) & (r < 1)
        else:
            radial = (r > 1) & (r <= 1 + L)
        return radial & in_arc(np.angle(z), self.arc.start, L)

    def area(self) -> float:
        r0, r1 = self.radii
        return 0.5 * min(self.arc.length, TWO_PI) * (r1 * r1 - r0 * r0)


def box(arc, side: str = "interior") -> CarlesonBox:
    return CarlesonBox(arc, side)


def double_box(arc: DyadicArc) -> CarlesonBox:
    """2Q_I: the interior box of the doubled arc."""
    return CarlesonBox(arc.doubled(), "interior")


@dataclass(frozen=True)
class WhitneyTop:
    """The outer half of Q_I: e^{it} in I, |I|/2 < 1-r <= |I|, clipped to r >= 0."""

    arc: DyadicArc

    def __post_init__(self):
        if self.arc.shift != "none":
            raise ParamOutOfRange("Whitney tops are built on the plain dyadic mesh")
        if self.arc.level < MIN_TOP_LEVEL:
            raise ParamOutOfRange(f"tops exist for level >= {MIN_TOP_LEVEL}")

    @property
    def level(self) -> int:
        return self.arc.level

    @property
    def radii(self):
        L = self.arc.length
        return max(0.0, 1 - L), 1 - L / 2

    @property
    def center(self) -> complex:
        # 1 - 3|I|/4 when the band is not clipped
        r0, r1 = self.radii
        return 0.5 * (r0 + r1) * complex(math.cos(self.arc.mid), math.sin(self.arc.mid))

    @cached_property
    def diam(self) -> float:
        r0, r1 = self.radii
        phi = self.arc.length
        return max(
            r1 - r0,
            2 * r1 * math.sin(phi / 2),
            math.sqrt(max(r0 * r0 + r1 * r1 - 2 * r0 * r1 * math.cos(phi), 0.0)),
        )

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        d = 1 - np.abs(z)
        L = self.arc.length
        return (d > L / 2) & (d <= L) & in_arc(np.angle(z), self.arc.start, L)

    def grid(self, n: int):
        """n x n cell-centred polar samples of the top."""
        r0, r1 = self.radii
        u = (np.arange(n) + 0.5) / n
        r = r0 + (r1 - r0) * u
        t = self.arc.start + self.arc.length * u
        return (r[:, None] * np.exp(1j * t)[None, :]).ravel()


def top_level_of(z):
    d = 1 - np.abs(np.asarray(z, dtype=complex))
    with np.errstate(divide="ignore"):
        m = np.floor(np.log2(TWO_PI / d)).astype(int)
    return np.maximum(m, MIN_TOP_LEVEL)


def top_of(z: complex) -> WhitneyTop:
    """The Whitney top containing z (z in the open disc)."""
    if not abs(z) < 1:
        raise ParamOutOfRange("top_of needs |z| < 1")
    m = int(top_level_of(z))
    L = arc_length(m)
    d = 1 - abs(z)
    # floating point guard at the band edges
    if d > L and m > MIN_TOP_LEVEL:
        m -= 1
    elif d <= L / 2:
        m += 1
    L = arc_length(m)
    idx = int(math.floor((math.atan2(z.imag, z.real) % TWO_PI) / L)) % (2**m)
    return WhitneyTop(DyadicArc(m, idx))


def tops_under(arc: DyadicArc, depth: int):
    """All tops W subset Q_I down to ``arc.level + depth`` as (level, index) pairs."""
    out = []
    for k in range(max(arc.level, MIN_TOP_LEVEL) - arc.level, depth + 1):
        for i in arc.descendants(k):
            out.append((arc.level + k, i))
    return out


# -- hyperbolic geometry --------------------------------------------------


def hyperbolic_distance(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    q = np.abs(z - w) / np.abs(1 - np.conj(w) * z)
    return 2 * np.arctanh(np.minimum(q, 1.0))


def _wrap(a):
    return (a + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Geodesic:
    """Hyperbolic geodesic segment from z1 to z2, parameterised by s in [0, 1]."""

    z1: complex
    z2: complex
    center: complex | None
    radius: float | None

    @property
    def is_segment(self) -> bool:
        return self.center is None

    @property
    def _phis(self):
        p1 = math.atan2((self.z1 - self.center).imag, (self.z1 - self.center).real)
        p2 = math.atan2((self.z2 - self.center).imag, (self.z2 - self.center).real)
        return p1, _wrap(p2 - p1)

    def point(self, s):
        s = np.asarray(s, dtype=float)
        if self.is_segment:
            return self.z1 + s * (self.z2 - self.z1)
        p1, dp = self._phis
        return self.center + self.radius * np.exp(1j * (p1 + s * dp))

    def _param_of_phi(self, phi):
        p1, dp = self._phis
        return _wrap(phi - p1) / dp

    def radius_crossings(self, rho: float):
        """Parameters s in (0, 1) where |gamma(s)| = rho."""
        out = []
        if self.is_segment:
            a, b = self.z1, self.z2 - self.z1
            A = abs(b) ** 2
            B = 2 * (a.real * b.real + a.imag * b.imag)
            C = abs(a) ** 2 - rho * rho
            disc = B * B - 4 * A * C
            if disc < 0:
                return out
            sq = math.sqrt(disc)
            cands = ((-B - sq) / (2 * A), (-B + sq) / (2 * A))
        else:
            c, R = self.center, self.radius
            cos_val = (rho * rho - abs(c) ** 2 - R * R) / (2 * R * abs(c))
            if abs(cos_val) > 1:
                return out
            base = math.atan2(c.imag, c.real)
            ang = math.acos(cos_val)
            cands = (self._param_of_phi(base + ang), self._param_of_phi(base - ang))
        return sorted(s for s in cands if 0 < s < 1)

    def angle_crossings(self, theta: float):
        """Parameters s in (0, 1) where arg gamma(s) = theta (mod 2pi)."""
        e = complex(math.cos(theta), math.sin(theta))
        if self.is_segment:
            return []
        c, R = self.center, self.radius
        b = (c * e.conjugate()).real
        disc = b * b - (abs(c) ** 2 - R * R)
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        out = []
        for t in (b - sq, b + sq):
            if t <= 0:
                continue
            w = t * e - c
            s = self._param_of_phi(math.atan2(w.imag, w.real))
            if 0 < s < 1 and abs(self.point(s) - t * e) < 1e-9:
                out.append(s)
        return sorted(out)

    def min_radius(self) -> float:
        if self.is_segment:
            a, b = self.z1, self.z2 - self.z1
            s = -((a.conjugate() * b).real) / abs(b) ** 2
            s = min(max(s, 0.0), 1.0)
            return abs(a + s * b)
        ss = [0.0, 1.0]
        base = math.atan2(self.center.imag, self.center.real) + math.pi
        s = self._param_of_phi(base)
        if 0 < s < 1:
            ss.append(s)
        return min(abs(complex(self.point(x))) for x in ss)


def geodesic(z1: complex, z2: complex) -> Geodesic:
    z1, z2 = complex(z1), complex(z2)
    if abs(z1 - z2) < 1e-14:
        raise DegenerateInput("geodesic endpoints coincide")
    if not (abs(z1) < 1 and abs(z2) < 1):
        raise ParamOutOfRange("geodesic endpoints must lie in the open disc")
    det = z1.real * z2.imag - z1.imag * z2.real
    if abs(det) <= 1e-14 * max(abs(z1), abs(z2), 1e-300) ** 2 or abs(det) < 1e-300:
        return Geodesic(z1, z2, None, None)
    # 2 Re(c conj(z_i)) = 1 + |z_i|^2
    b1 = 0.5 * (1 + abs(z1) ** 2)
    b2 = 0.5 * (1 + abs(z2) ** 2)
    cx = (b1 * z2.imag - b2 * z1.imag) / det
    cy = (z1.real * b2 - z2.real * b1) / det
    c = complex(cx, cy)
    radius = math.sqrt(abs(c) ** 2 - 1)
    return Geodesic(z1, z2, c, radius)


# -- chains ----------------------------------------------------------------


@dataclass(frozen=True)
class Chain:
    tops: tuple
    target: complex

    def __len__(self):
        return len(self.tops)

    @property
    def diams(self):
        return np.array([t.diam for t in self.tops])


def chain(top: WhitneyTop, z: complex) -> Chain:
    """Tops met by the geodesic from the centre of ``top`` to z, in order."""
    z = complex(z)
    if not double_box(top.arc).contains(z):
        raise ParamOutOfRange("chain target must lie in 2Q_I")
    z0 = top.center
    if abs(z - z0) < 1e-14:
        return Chain((top,), z)
    g = geodesic(z0, z)

    r_lo = g.min_radius()
    r_hi = max(abs(z0), abs(z))
    m_lo = int(top_level_of(r_lo))
    m_hi = int(top_level_of(r_hi))
    if m_hi - m_lo > CHAIN_CAP:
        raise ChainOverflow("geodesic crosses too many levels")

    cuts = {0.0, 1.0}
    for m in range(m_lo, m_hi + 1):
        for s in g.radius_crossings(1 - arc_length(m) / 2):
            cuts.add(s)
    radial = sorted(cuts)
    cuts = set(radial)
    if g.is_segment:
        if (z0.conjugate() * z).real < 0:
            # diameter through the origin: arg flips at 0
            s0 = abs(z0) / (abs(z0) + abs(z))
            cuts.add(s0)
    else:
        for a, b in zip(radial[:-1], radial[1:]):
            mid = complex(g.point(0.5 * (a + b)))
            m = int(top_level_of(mid))
            L = arc_length(m)
            ta = math.atan2(complex(g.point(a)).imag, complex(g.point(a)).real)
            tb = math.atan2(complex(g.point(b)).imag, complex(g.point(b)).real)
            span = _wrap(tb - ta)
            lo, hi = (ta, ta + span) if span >= 0 else (ta + span, ta)
            k0, k1 = math.ceil(lo / L), math.floor(hi / L)
            if k1 - k0 > CHAIN_CAP:
                raise ChainOverflow("geodesic crosses too many tops")
            for k in range(k0, k1 + 1):
                for s in g.angle_crossings(k * L):
                    if a < s < b:
                        cuts.add(s)
    pts = sorted(cuts)
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a < 1e-15:
            continue
        t = top_of(complex(g.point(0.5 * (a + b))))
        if not out or out[-1] != t:
            out.append(t)
            if len(out) > CHAIN_CAP:
                raise ChainOverflow(f"more than {CHAIN_CAP} tops on the chain")
    if out[0] != top:
        out.insert(0, top)
    # rounding near |z| = 1 can leave z in the neighbour of the last piece's top
    last = top_of(z)
    if out[-1] != last:
        out.append(last)
    return Chain(tuple(out), z)


# -- multi-resolution family ----------------------------------------------


def mr_family(maxlevel: int):
    """Plain and 2pi/3-rotated dyadic arcs of every level <= maxlevel."""
    if maxlevel < 0 or maxlevel > MAX_MR_LEVEL:
        raise DepthExceeded(f"mr_family maxlevel must be in [0, {MAX_MR_LEVEL}]")
    out = []
    for shift in SHIFTS:
        for n in range(maxlevel + 1):
            out.extend(arcs_at_level(n, shift))
    return out


def mr_cover(theta: float, length: float, maxlevel: int, margin_frac: float = 0.25):
    """Smallest family member containing [theta, theta+length] with the given margin.

    Returns the arc or None; searched level by level from the finest.
    """
    margin = margin_frac * length
    lo = theta - margin
    span = length + 2 * margin
    for n in range(maxlevel, -1, -1):
        L = arc_length(n)
        if L < span:
            continue
        for shift in SHIFTS:
            off = SHIFT_OFFSET[shift]
            idx = int(math.floor(((lo - off) % TWO_PI) / L))
            a = DyadicArc(n, idx % 2**n, shift)
            if n == 0 or ((lo - a.start) % TWO_PI) + span <= L:
                return a
    return None
