"""Reflection extension of a conformal map across the unit circle.

For |z| > 1 and w = 1/conj(z) the extension is

    F(z) = f(w) + f'(w) (z - w)

with dF/dz = f'(w) and dF/dzbar = f''(w) (z - w) (-1/zbar^2), so the Beltrami
coefficient is mu(z) = -(z - w) / zbar^2 * f''(w)/f'(w).  Its modulus equals
((|z|+1)/|z|^2) * eta(w) with eta(w) = (1-|w|)|f''/f'|(w).  The field is cut
off to zero outside the annulus 1 < |z| <= R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .config import DEFAULT_OUTER_RADIUS, DEFAULT_TOL, THRESHOLDS
from .errors import GuardExceeded, KTooLarge, ParamOutOfRange
from .quadrature import LadderReport, Weight, WeightedIntegrand, carleson_profile, ladder

TWO_PI = 2 * math.pi
K_SAMPLES = 100_000
K_STABLE = 0.02
K_DMIN = 1e-9


def _reflect(z):
    return 1 / np.conj(z)


def _two_square(x):
    """x*x as an unevaluated sum hi + lo (Dekker splitting)."""
    c = 134217729.0 * x
    h = c - (c - x)
    t = x - h
    sq = x * x
    return sq, ((h * h - sq) + 2 * h * t) + t * t


def sq_excess(z):
    """|z|^2 - 1 without cancellation near the unit circle."""
    z = np.asarray(z, dtype=complex)
    px, ex = _two_square(z.real)
    py, ey = _two_square(z.imag)
    total = px + py
    bv = total - px
    err = (px - (total - bv)) + (py - bv)
    return (total - 1) + (err + ex + ey)


@dataclass(frozen=True)
class ExtensionField:
    map: object
    outer_radius: float = DEFAULT_OUTER_RADIUS
    k_seed: int = 0

    def __post_init__(self):
        if not self.outer_radius > 1:
            raise ParamOutOfRange("outer radius must exceed 1")

    def _prep(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) <= 1):
            raise ParamOutOfRange("the extension is evaluated for |z| > 1")
        w = _reflect(z)
        if self.map.kind == "series" and np.any(np.abs(w) > self.map.radius_guard):
            raise GuardExceeded("1/conj(z) lies outside the trusted series radius")
        return z, w

    def extend(self, z):
        scalar = np.ndim(z) == 0
        z, w = self._prep(z)
        jet = self.map.jet(w)
        out = jet.f + jet.fp * (sq_excess(z) / np.conj(z))
        return out[()] if scalar else out

    def dilatation(self, z):
        """Closed-form mu(z) (no cutoff)."""
        scalar = np.ndim(z) == 0
        z, w = self._prep(z)
        # z - 1/conj(z) = (|z|^2 - 1)/conj(z)
        out = -sq_excess(z) / (np.conj(z) ** 2 * np.conj(z)) * self.map.log_deriv(w)
        return out[()] if scalar else out

    def mu(self, z):
        """mu with the cutoff: zero outside 1 < |z| <= R."""
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        inside = (r > 1) & (r <= self.outer_radius)
        out = np.zeros(z.shape, dtype=complex)
        if np.any(inside):
            out[inside] = self.dilatation(z[inside])
        return out

    def mu_sq(self, z):
        return np.abs(self.mu(z)) ** 2

    def mu_sq_polar(self, z, r, d):
        """|mu|^2 from the exact distance d = |z| - 1 (no cancellation in z - 1/conj(z)).

        |mu| = ((r+1)/r^2) (1-|w|) |f''/f'|(w) with 1 - |w| = d/r.
        """
        z = np.asarray(z, dtype=complex)
        r = np.asarray(r, dtype=float)
        d = np.asarray(d, dtype=float)
        inside = (r > 1) & (r <= self.outer_radius)
        out = np.zeros(z.shape)
        if np.any(inside):
            zi, ri, di = z[inside], r[inside], d[inside]
            w = _reflect(zi)
            if self.map.kind == "series" and np.any(np.abs(w) > self.map.radius_guard):
                raise GuardExceeded("1/conj(z) lies outside the trusted series radius")
            g = np.abs(self.map.log_deriv(w))
            out[inside] = ((ri + 1) / ri**2 * (di / ri) * g) ** 2
        return out

    def sample_points(self, n, seed=None):
        """Quasi-random annulus points: half area-uniform, half log-uniform in |z|-1."""
        seed = self.k_seed if seed is None else seed
        u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
        R = self.outer_radius
        dmin = K_DMIN
        if self.map.kind == "series":
            dmin = max(dmin, (1 / self.map.radius_guard - 1) * (1 + 1e-9))
        half = n // 2
        r_area = np.sqrt(1 + (R * R - 1) * u[:half, 0])
        r_area = np.maximum(r_area, 1 + dmin)
        r_log = 1 + dmin * ((R - 1) / dmin) ** u[half:, 0]
        r = np.concatenate([r_area, r_log])
        return r * np.exp(TWO_PI * 1j * u[:, 1])

    @cached_property
    def k_report(self):
        """Sampled sup of |mu| with a 2% stability check against half the sample."""
        z = self.sample_points(K_SAMPLES)
        a = np.abs(self.dilatation(z))
        k_full = float(a.max())
        # the first half of each stratum is itself a stratified design
        h = K_SAMPLES // 2
        sub = np.concatenate([a[: h // 2], a[h : h + h // 2]])
        k_half = float(sub.max())
        stable = k_full == 0 or (k_full - k_half) <= K_STABLE * k_full
        return {"k": k_full, "k_half": k_half, "samples": K_SAMPLES, "stable": bool(stable)}

    @property
    def k_estimate(self) -> float:
        return self.k_report["k"]

    def hypotheses(self, p: float = 0.0):
        k = self.k_estimate
        return {
            "k_estimate": k,
            "k_below_half": k < 0.5,
            "k_below_(1+p)/2": k < (1 + p) / 2,
            "k_below_one": k < 1,
        }


def bp_extend(fld: ExtensionField, z):
    return fld.extend(z)


def dilatation(fld: ExtensionField, z):
    return fld.dilatation(z)


def eta_identity_residual(fld: ExtensionField, z):
    """| |mu(z)| - ((|z|+1)/|z|^2) eta(1/zbar) |."""
    z = np.asarray(z, dtype=complex)
    lhs = np.abs(fld.dilatation(z))
    w = _reflect(z)
    r = np.abs(z)
    # 1 - |w| = (|z|^2 - 1)/(|z| (|z| + 1))
    rhs = (r + 1) / r**2 * (sq_excess(z) / (r * (r + 1))) * np.abs(fld.map.log_deriv(w))
    out = np.abs(lhs - rhs)
    return float(out) if out.ndim == 0 else out


def wirtinger_quotient(fld: ExtensionField, z, h: float = 1e-6):
    """Finite-difference dF/dzbar over dF/dz (an independent check of mu)."""
    z = np.asarray(z, dtype=complex)
    fx = (fld.extend(z + h) - fld.extend(z - h)) / (2 * h)
    fy = (fld.extend(z + 1j * h) - fld.extend(z - 1j * h)) / (2 * h)
    dz = 0.5 * (fx - 1j * fy)
    dzb = 0.5 * (fx + 1j * fy)
    return dzb / dz


def exterior_condition_T1(fld: ExtensionField, p: float, levels: int = 14, tol: float = DEFAULT_TOL,
                          thresholds=THRESHOLDS) -> LadderReport:
    """Ladder of the integral of |mu|^2/(|z|^2-1)^2 (log(|z|/(|z|-1)))^p over 1 < |z| <= R."""
    if p < 0:
        raise ParamOutOfRange("p must be >= 0")
    integrand = WeightedIntegrand(fld.mu_sq_polar, Weight("exterior_dirichlet_log_p", p), label="t1", polar=True)
    rep = ladder(integrand, "exterior_annuli", levels, tol, fld.outer_radius,
                 label=f"exterior_condition_T1 p={p:g}", thresholds=thresholds)
    rep.notes.append(f"outer radius R={fld.outer_radius:g}; mu is zero beyond R")
    return rep


def exterior_condition_T2(fld: ExtensionField, p: float, levels: int = 14, start_level: int = 3,
                          tol: float = 1e-6, thresholds=THRESHOLDS) -> LadderReport:
    """Per-level max over exterior boxes of (1/|I|^p) int |mu|^2/(|z|-1)^(2-p)."""
    if not 0 < p <= 1:
        raise ParamOutOfRange("Q_p needs 0 < p <= 1")
    integrand = WeightedIntegrand(fld.mu_sq_polar, Weight("exterior_carleson_p", p), label="t2", polar=True)
    rep = carleson_profile(integrand, p, levels, "exterior", start_level, tol,
                           d_max=fld.outer_radius - 1, label=f"exterior_condition_T2 p={p:g}",
                           thresholds=thresholds)
    rep.notes.append(f"outer radius R={fld.outer_radius:g}; boxes clipped to |z| <= R")
    return rep


# -- omega and the Dyn'kin bound ------------------------------------------------


def _cos_rule(n):
    """Gauss-Legendre nodes on [0, 1] pushed through s = (1 - cos(pi x))/2 (clusters at both ends)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    s = 0.5 * (1 - np.cos(math.pi * x))
    ds = 0.5 * math.pi * np.sin(math.pi * x)
    return s, w * ds


def _disc_mass(fld, z, t, n_rho, n_theta):
    """int over B(z,t) of |mu|^2, in polar coordinates about the origin."""
    z = complex(z)
    a = abs(z)
    R = fld.outer_radius
    lo = max(1.0, a - t)
    hi = min(R, a + t)
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(c for c in (t - a,) if lo < c < hi)})
    phi = math.atan2(z.imag, z.real)
    s, ws = _cos_rule(n_rho)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    total = []
    for r0, r1 in zip(cuts[:-1], cuts[1:]):
        rho = r0 + (r1 - r0) * s
        wr = (r1 - r0) * ws
        if a == 0:
            half = np.full_like(rho, math.pi)
        else:
            c = (rho**2 + a * a - t * t) / (2 * rho * a)
            half = np.arccos(np.clip(c, -1.0, 1.0))
        th = phi + half[:, None] * xt[None, :]
        pts = rho[:, None] * np.exp(1j * th)
        vals = fld.mu_sq(pts)
        # rho slightly inside the support edge must not pick up the cutoff
        inner = vals @ wt * half
        total.append(float(np.sum(inner * rho * wr)))
    return math.fsum(total)


OMEGA_DOUBLINGS = 4


def omega(fld: ExtensionField, z, t: float, rtol: float = 1e-6) -> float:
    """omega(z,t) = sqrt( (1/(pi t^2)) int_{B(z,t)} |mu|^2 ).

    The product grid starts at 24 x 48 and doubles until two successive
    values agree to ``rtol`` (at most 384 x 768).
    """
    if not t > 0:
        raise ParamOutOfRange("t must be positive")
    n_rho, n_theta = 24, 48
    prev = _disc_mass(fld, z, t, n_rho, n_theta)
    for _ in range(OMEGA_DOUBLINGS):
        n_rho, n_theta = 2 * n_rho, 2 * n_theta
        cur = _disc_mass(fld, z, t, n_rho, n_theta)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            prev = cur
            break
        prev = cur
    return math.sqrt(max(prev, 0.0) / (math.pi * t * t))


def total_mass(fld: ExtensionField) -> float:
    """int of |mu|^2 over the whole annulus 1 < |z| <= R."""
    return _disc_mass(fld, 0j, fld.outer_radius + 1.0, 96, 192)


RING_MIN_NODES = 32
RING_MAX_NODES = 8192
RING_RTOL = 1e-8


def _ring_values(fld, z, rho, n):
    """rho * int over the circle |zeta - z| = rho of |mu(zeta)|^2 dphi, n GL nodes per support arc.

    The circle meets the support 1 < |zeta| <= R in the two arcs phi_z +- psi,
    psi in [psi_lo, psi_hi], with cos(psi) between (1-a^2-rho^2)/(2 a rho) and
    (R^2-a^2-rho^2)/(2 a rho).
    """
    a = abs(z)
    R = fld.outer_radius
    phi_z = math.atan2(z.imag, z.real)
    if a < 1e-300:
        full = (rho > 1) & (rho <= R)
        lo = np.zeros_like(rho)
        hi = np.where(full, math.pi, 0.0)
    else:
        c1 = (1 - a * a - rho * rho) / (2 * a * rho)
        c2 = (R * R - a * a - rho * rho) / (2 * a * rho)
        lo = np.arccos(np.clip(c2, -1.0, 1.0))
        hi = np.arccos(np.clip(c1, -1.0, 1.0))
    width = np.maximum(hi - lo, 0.0)
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    psi = lo[:, None] + width[:, None] * x[None, :]
    plus = z + rho[:, None] * np.exp(1j * (phi_z + psi))
    minus = z + rho[:, None] * np.exp(1j * (phi_z - psi))
    vals = (fld.mu_sq(plus) + fld.mu_sq(minus)) @ w
    return rho * width * vals


def ring_masses(fld: ExtensionField, z, rho, rtol: float = RING_RTOL):
    """rho * (angular integral of |mu|^2 on |zeta - z| = rho) for many radii.

    Node counts double per row until two successive values agree to ``rtol``.
    """
    z = complex(z)
    rho = np.asarray(rho, dtype=float)
    n = RING_MIN_NODES
    prev = _ring_values(fld, z, rho, n)
    out = prev.copy()
    active = np.arange(len(rho))
    scale = float(np.max(np.abs(prev))) if len(prev) else 0.0
    while len(active) and n < RING_MAX_NODES:
        n *= 2
        cur = _ring_values(fld, z, rho[active], n)
        good = np.abs(cur - prev[active]) <= rtol * np.maximum(np.abs(cur), 1e-12 * scale)
        out[active] = cur
        prev[active] = cur
        active = active[~good]
    return out


def dynkin_ratio(fld: ExtensionField, z, k: float | None = None, panel_nodes: int = 12) -> float:
    """|f''/f'|(z) over (1-|z|)^-k int_{1-|z|}^inf omega(z,t) t^(k-2) dt.

    The disc mass M(t) = int_0^t (ring mass) drho is accumulated panel by panel
    over geometric panels between the breakpoints where B(z,t) meets the
    circles |w| = 1 and |w| = R; beyond t = R + |z| the disc contains the whole
    support, omega = sqrt(M/pi)/t and the tail is exact.
    """
    k = fld.k_estimate if k is None else k
    if k >= 1:
        raise KTooLarge(f"sampled sup |mu| = {k:.4g} is not below 1")
    z = complex(z)
    a = abs(z)
    if a >= 1:
        raise ParamOutOfRange("z must lie in the disc")
    lhs = abs(fld.map.log_deriv(z))
    if lhs == 0:
        return 0.0
    R = fld.outer_radius
    t0 = 1 - a
    T = R + a
    cuts = sorted({t0, T, *(c for c in (R - a, 1 + a) if t0 < c < T)})
    # geometric refinement from t0 upward: omega changes on the scale 1-|z|
    pts = {t0}
    for c0, c1 in zip(cuts[:-1], cuts[1:]):
        x = c0
        while x < c1:
            pts.add(x)
            x = max(2 * x, x + (c1 - c0) / 64) if x < c1 / 2 else c1
        pts.add(c1)
    edges = np.array(sorted(pts))
    e0, e1 = edges[:-1], edges[1:]
    s, ws = _cos_rule(panel_nodes)
    # outer nodes t_pj, plus the panel end (s = 1) to carry M forward
    s_ext = np.append(s, 1.0)
    t_nodes = e0[:, None] + (e1 - e0)[:, None] * s_ext[None, :]
    span = t_nodes - e0[:, None]
    rho = e0[:, None, None] + span[:, :, None] * s[None, None, :]
    ring = ring_masses(fld, z, rho.ravel()).reshape(rho.shape)
    partial = np.einsum("pjl,l->pj", ring, ws) * span
    # M at the start of each panel, then inside it
    m_start = np.concatenate([[0.0], np.cumsum(partial[:, -1])[:-1]])
    M = m_start[:, None] + partial
    tn = t_nodes[:, :-1]
    om = np.sqrt(np.maximum(M[:, :-1], 0.0) / (math.pi * tn * tn))
    body = np.einsum("pj,j->p", om * tn ** (k - 2), ws) * (e1 - e0)
    M_total = float(m_start[-1] + partial[-1, -1])
    tail = math.sqrt(max(M_total, 0.0) / math.pi) * T ** (k - 2) / (2 - k)
    rhs = (1 - a) ** (-k) * (math.fsum(body.tolist()) + tail)
    if rhs == 0:
        return math.inf
    return lhs / rhs


def annulus_points(fld: ExtensionField, n: int, seed: int = 0, r_max: float = 2.0, pad: float = 0.0):
    """Scrambled Halton points, area-uniform in r_min < |z| < r_max.

    r_min is 1, or 1/radius_guard for series maps so that 1/conj(z) stays
    trusted, plus ``pad``.
    """
    r_min = 1.0
    if fld.map.kind == "series":
        r_min = (1 / fld.map.radius_guard) * (1 + 1e-9)
    r_min += pad
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    r = np.sqrt(r_min**2 + (r_max**2 - r_min**2) * u[:, 0])
    r = np.maximum(r, np.nextafter(r_min, 2.0))
    return r * np.exp(TWO_PI * 1j * u[:, 1])


def max_identity_residual(fld: ExtensionField, n: int = 10_000, seed: int = 0, r_max: float = 2.0) -> float:
    return float(np.max(eta_identity_residual(fld, annulus_points(fld, n, seed, r_max))))


def max_wirtinger_gap(fld: ExtensionField, n: int = 1000, seed: int = 1, r_max: float = 2.0, h: float = 1e-6) -> float:
    """max |mu - finite-difference quotient| (points kept 2h away from the inner edge)."""
    z = annulus_points(fld, n, seed, r_max, pad=2 * h)
    return float(np.max(np.abs(fld.dilatation(z) - wirtinger_quotient(fld, z, h))))
