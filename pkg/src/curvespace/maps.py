"""Conformal maps of the unit disc with exact first and second derivatives.

Every map is an immutable :class:`AnalyticMap`; all evaluators accept scalars or
numpy arrays of complex points and are vectorised.  Closed-form families are
trusted on the closed disc, truncated series only up to ``radius_guard``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DerivativeVanished,
    GuardExceeded,
    NonFinite,
    ParamOutOfRange,
    UnknownFamily,
)

FAMILIES = ("identity", "moebius", "power_perturbation", "log_singular", "lacunary", "series")
SPACES = ("dlogp", "qp0", "bloch0")

_PANEL_NODES = 20


@dataclass(frozen=True)
class MapJet:
    f: Any
    fp: Any
    fpp: Any
    trunc_bound: Any = 0.0


@dataclass(frozen=True)
class Membership:
    """Declared membership of log f' in one space family, with the reason it is known."""

    space: str
    rule: str
    oracle: str


@dataclass(frozen=True)
class AnalyticMap:
    kind: str
    params: tuple = ()
    coeffs: tuple = ()
    radius_guard: float = 1.0
    scale: complex = 1.0
    membership_labels: tuple = ()
    bounded: bool = True
    normalization: str = ""

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.kind}({inner})"

    @property
    def closed_form(self) -> bool:
        return self.kind != "series"

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    def scaled(self, rho: complex) -> "AnalyticMap":
        """The map rho*f; every diagnostic built on f''/f' is invariant under this."""
        if rho == 0:
            raise ParamOutOfRange("scale must be nonzero")
        return AnalyticMap(
            kind=self.kind,
            params=self.params,
            coeffs=self.coeffs,
            radius_guard=self.radius_guard,
            scale=self.scale * rho,
            membership_labels=self.membership_labels,
            bounded=self.bounded,
            normalization=self.normalization,
        )

    # -- evaluation -------------------------------------------------------

    def _check(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        limit = self.radius_guard if self.kind == "series" else 1.0
        if np.any(r > limit * (1 + 1e-15)):
            raise GuardExceeded(
                f"{self.name}: |z|={float(np.max(r)):.17g} exceeds trusted radius {limit}"
            )
        return z

    def log_deriv(self, z):
        """f''/f' = (log f')'."""
        scalar = np.ndim(z) == 0
        z = self._check(z)
        kind = self.kind
        if kind == "identity":
            out = np.zeros_like(z)
        elif kind == "moebius":
            a = self.param("a")
            out = 2 * a / (1 - a * z)
        elif kind == "power_perturbation":
            eps, n = self.param("eps"), self.param("n")
            out = eps * (n - 1) * z ** (n - 2) / (1 + eps * z ** (n - 1))
        elif kind == "log_singular":
            beta = self.param("beta")
            with np.errstate(divide="ignore", invalid="ignore"):
                L = 1 - np.log(1 - z)
                out = 1 / ((1 - z) * L**beta)
        elif kind == "lacunary":
            out = _lacunary_gprime(self._lacunary_coeffs(), z)
        else:
            _, fp, fpp, _ = _horner(self.coeffs, z)
            if np.any(np.abs(fp) < 1e-300):
                raise DerivativeVanished(f"{self.name}: f'(z) vanished")
            out = fpp / fp
        _finite(out, self.name)
        return out[()] if scalar else out

    def fprime(self, z):
        scalar = np.ndim(z) == 0
        z = self._check(z)
        out = self.scale * self._fp_raw(z)
        _finite(out, self.name)
        return out[()] if scalar else out

    def _fp_raw(self, z):
        kind = self.kind
        if kind == "identity":
            return np.ones_like(z)
        if kind == "moebius":
            return 1 / (1 - self.param("a") * z) ** 2
        if kind == "power_perturbation":
            return 1 + self.param("eps") * z ** (self.param("n") - 1)
        if kind == "log_singular":
            return np.exp(self._log_singular_g(z))
        if kind == "lacunary":
            return np.exp(_lacunary_g(self._lacunary_coeffs(), z))
        return _horner(self.coeffs, z)[1]

    def f(self, z):
        scalar = np.ndim(z) == 0
        z = self._check(z)
        kind = self.kind
        if kind == "identity":
            out = z.copy()
        elif kind == "moebius":
            out = z / (1 - self.param("a") * z)
        elif kind == "power_perturbation":
            eps, n = self.param("eps"), self.param("n")
            out = z + (eps / n) * z**n
        elif kind == "log_singular" and self.param("beta") == 0:
            with np.errstate(divide="ignore"):
                out = -np.log(1 - z)
        elif kind == "log_singular":
            out = _radial_primitive(self._fp_raw, z, np.abs(1 - z))
        elif kind == "lacunary":
            levels = self.param("levels")
            floor = 2.0 ** -(levels + 2)
            out = _radial_primitive(self._fp_raw, z, np.maximum(1 - np.abs(z), floor))
        else:
            out = _horner(self.coeffs, z)[0]
        with np.errstate(invalid="ignore"):
            out = self.scale * out
        _finite(out, self.name)
        return out[()] if scalar else out

    def jet(self, z) -> MapJet:
        scalar = np.ndim(z) == 0
        z = self._check(z)
        if self.kind == "series":
            f, fp, fpp, bound = _horner(self.coeffs, z)
            f, fp, fpp = self.scale * f, self.scale * fp, self.scale * fpp
        else:
            f = self.f(z)
            fp = self.fprime(z)
            fpp = fp * self.log_deriv(z)
            bound = np.zeros(z.shape)
        for arr in (f, fp, fpp):
            _finite(arr, self.name)
        if scalar:
            return MapJet(complex(f), complex(fp), complex(fpp), float(bound))
        return MapJet(f, fp, fpp, bound)

    def membership(self, space: str, p: float):
        """True/False when declared, None for unlabeled maps."""
        if space not in SPACES:
            raise ParamOutOfRange(f"unknown space {space!r}")
        return _membership(self, space, p)

    # -- family internals -------------------------------------------------

    def _log_singular_g(self, z):
        beta = self.param("beta")
        with np.errstate(divide="ignore", invalid="ignore"):
            L = 1 - np.log(1 - z)
            if beta == 1:
                return np.log(L)
            return (L ** (1 - beta) - 1) / (1 - beta)

    def _lacunary_coeffs(self):
        return _lacunary_table(
            self.param("amp"), self.param("decay"), self.param("logdecay"), self.param("levels")
        )


def _finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name}: non-finite value")


def _horner(coeffs, z):
    """f, f', f'' and the tail bound |c_N||z|^N/(1-|z|) by simultaneous Horner."""
    c = np.asarray(coeffs, dtype=complex)
    p = np.full(z.shape, c[-1], dtype=complex)
    dp = np.zeros(z.shape, dtype=complex)
    ddp = np.zeros(z.shape, dtype=complex)
    for a in c[-2::-1]:
        ddp = ddp * z + dp
        dp = dp * z + p
        p = p * z + a
    r = np.abs(z)
    with np.errstate(divide="ignore"):
        bound = np.abs(c[-1]) * r ** (len(c) - 1) / (1 - r)
    return p, dp, 2 * ddp, bound


@lru_cache(maxsize=64)
def _lacunary_table(amp, decay, logdecay, levels):
    k = np.arange(levels)
    return amp * 2.0 ** (-decay * k) * (k + 1.0) ** (-logdecay)


def _lacunary_g(a, z):
    out = np.zeros(z.shape, dtype=complex)
    pw = z.copy()
    for ak in a:
        out += ak * pw
        pw = pw * pw
    return out


def _lacunary_gprime(a, z):
    # z^(2^k - 1) built as a running product of z^(2^j), j < k
    out = np.zeros(z.shape, dtype=complex)
    pw = z.copy()
    q = np.ones(z.shape, dtype=complex)
    for k, ak in enumerate(a):
        out += ak * 2.0**k * q
        q = q * pw
        pw = pw * pw
    return out


@lru_cache(maxsize=64)
def _graded_rule(panels: int):
    x, w = np.polynomial.legendre.leggauss(_PANEL_NODES)
    edges = [0.0] + [1.0 - 2.0**-j for j in range(1, panels)] + [1.0]
    ts, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(ts), np.concatenate(ws)


def _radial_primitive(fp, z, delta):
    """f(z) = z * int_0^1 f'(tz) dt, panels graded toward t=1 down to width ~delta."""
    delta = np.broadcast_to(np.asarray(delta, dtype=float), z.shape)
    panels = np.clip(
        np.ceil(np.log2(1.0 / np.maximum(delta, 2.0**-50))).astype(int) + 1, 2, 52
    )
    out = np.zeros(z.shape, dtype=complex)
    for m in np.unique(panels):
        sel = panels == m
        t, w = _graded_rule(int(m))
        zz = z[sel]
        vals = fp(zz[:, None] * t[None, :])
        out[sel] = zz * (vals @ w)
    return out


# -- membership -----------------------------------------------------------


def _membership(m: AnalyticMap, space: str, p: float):
    kind = m.kind
    if kind in ("identity", "moebius", "power_perturbation"):
        return True
    if kind == "series":
        return None
    if kind == "log_singular":
        beta = m.param("beta")
        if space == "dlogp":
            return 2 * beta - p > 1
        return beta > 0
    amp, s, t = m.param("amp"), m.param("decay"), m.param("logdecay")
    if amp == 0:
        return True
    if space == "dlogp":
        return s > 0.5 or (s == 0.5 and 2 * t - p > 1)
    if space == "qp0":
        if p >= 1:
            return s > 0 or 2 * t > 1
        edge = (1 - p) / 2
        return s > edge or (s == edge and 2 * t > 1)
    return s > 0 or t > 0


_LABELS = {
    "identity": (
        Membership("dlogp", "all p >= 0", "log f' = 0"),
        Membership("qp0", "all 0 < p <= 1", "log f' = 0"),
        Membership("bloch0", "yes", "log f' = 0"),
    ),
    "moebius": (
        Membership("dlogp", "all p >= 0", "log f' = -2 log(1-az) is analytic across the closed disc"),
        Membership("qp0", "all 0 < p <= 1", "analytic across the closed disc"),
        Membership("bloch0", "yes", "analytic across the closed disc"),
    ),
    "power_perturbation": (
        Membership("dlogp", "all p >= 0", "log f' is analytic across the closed disc"),
        Membership("qp0", "all 0 < p <= 1", "analytic across the closed disc"),
        Membership("bloch0", "yes", "analytic across the closed disc"),
    ),
    "log_singular": (
        Membership("dlogp", "2*beta - p > 1", "radial integral of 1/(r (log 1/r)^(2 beta - p)) at z=1"),
        Membership("qp0", "beta > 0", "box ratio at z=1 decays like (log 1/|I|)^(-2 beta)"),
        Membership("bloch0", "beta > 0", "eta on the ray to 1 equals (log e/(1-r))^(-beta)"),
    ),
    "lacunary": (
        Membership("dlogp", "sum 2^k a_k^2 k^p < inf", "Hadamard gap series coefficient test"),
        Membership("qp0", "sum 2^(k(1-p)) a_k^2 < inf", "Hadamard gap series coefficient test"),
        Membership("bloch0", "a_k -> 0", "Hadamard gap series coefficient test"),
    ),
}


# -- registry -------------------------------------------------------------


def _num(params, key, default, cast=float):
    raw = params.get(key, default)
    try:
        if cast is complex:
            val = complex(str(raw).replace(" ", "").replace("i", "j")) if isinstance(raw, str) else complex(raw)
        elif cast is int:
            val = int(float(raw))
            if float(raw) != val:
                raise ValueError
        else:
            val = float(raw)
    except (TypeError, ValueError):
        raise ParamOutOfRange(f"parameter {key}={raw!r} is not a valid {cast.__name__}") from None
    if not np.isfinite(abs(val)):
        raise ParamOutOfRange(f"parameter {key} must be finite")
    return val


def _plain(v):
    if isinstance(v, complex) and v.imag == 0:
        return float(v.real)
    return v


def registry_get(name: str, params: Mapping[str, Any] | None = None) -> AnalyticMap:
    """Build a configured map from a family name and parameters (strings accepted)."""
    params = dict(params or {})
    if name not in FAMILIES:
        raise UnknownFamily(f"unknown map family {name!r}; known: {', '.join(FAMILIES)}")
    allowed = {
        "identity": set(),
        "moebius": {"a"},
        "power_perturbation": {"eps", "n"},
        "log_singular": {"beta"},
        "lacunary": {"amp", "decay", "logdecay", "levels"},
        "series": {"coeffs", "file", "radius_guard"},
    }[name]
    extra = set(params) - allowed
    if extra:
        raise ParamOutOfRange(f"{name} does not take parameter(s) {sorted(extra)}")

    if name == "identity":
        return AnalyticMap("identity", membership_labels=_LABELS["identity"])
    if name == "moebius":
        a = _num(params, "a", 0.5, complex)
        if abs(a) >= 1:
            raise ParamOutOfRange("moebius requires |a| < 1")
        return AnalyticMap(
            "moebius", params=(("a", _plain(a)),), membership_labels=_LABELS["moebius"]
        )
    if name == "power_perturbation":
        eps = _num(params, "eps", 0.4)
        n = _num(params, "n", 3, int)
        if not 0 <= eps < 1:
            raise ParamOutOfRange("power_perturbation requires 0 <= eps < 1")
        if not 2 <= n <= 64:
            raise ParamOutOfRange("power_perturbation requires 2 <= n <= 64")
        return AnalyticMap(
            "power_perturbation",
            params=(("eps", eps), ("n", n)),
            membership_labels=_LABELS["power_perturbation"],
        )
    if name == "log_singular":
        beta = _num(params, "beta", 0.0)
        if not 0 <= beta <= 10:
            raise ParamOutOfRange("log_singular requires 0 <= beta <= 10")
        return AnalyticMap(
            "log_singular",
            params=(("beta", beta),),
            membership_labels=_LABELS["log_singular"],
            # beta = 0 gives f = -log(1-z): univalent but the image is unbounded
            bounded=beta > 0,
            normalization="log f'(0)=0, (log f')'(z) = 1/((1-z) (log(e/(1-z)))^beta)",
        )
    if name == "lacunary":
        amp = _num(params, "amp", 0.2)
        decay = _num(params, "decay", 0.0)
        logdecay = _num(params, "logdecay", 0.0)
        levels = _num(params, "levels", 12, int)
        if not 0 <= amp <= 0.25:
            raise ParamOutOfRange("lacunary requires 0 <= amp <= 0.25 (keeps the map univalent)")
        if not (0 <= decay <= 4 and 0 <= logdecay <= 4):
            raise ParamOutOfRange("lacunary requires decay and logdecay in [0, 4]")
        if not 1 <= levels <= 24:
            raise ParamOutOfRange("lacunary requires 1 <= levels <= 24")
        return AnalyticMap(
            "lacunary",
            params=(("amp", amp), ("decay", decay), ("logdecay", logdecay), ("levels", levels)),
            membership_labels=_LABELS["lacunary"],
            normalization="log f' = sum_k amp 2^(-k decay) (k+1)^(-logdecay) z^(2^k), truncated",
        )

    guard = _num(params, "radius_guard", 0.9999)
    if not 0 < guard < 1:
        raise ParamOutOfRange("series requires 0 < radius_guard < 1")
    if "file" in params:
        coeffs = load_coefficients(params["file"])
    elif "coeffs" in params:
        coeffs = _parse_coeffs(params["coeffs"])
    else:
        raise ParamOutOfRange("series requires coeffs or file")
    if len(coeffs) < 2 or coeffs[1] == 0:
        raise ParamOutOfRange("series requires f'(0) = c_1 != 0")
    if not all(np.isfinite(abs(c)) for c in coeffs):
        raise ParamOutOfRange("series coefficients must be finite")
    return AnalyticMap("series", coeffs=tuple(coeffs), radius_guard=guard)


def _parse_coeffs(raw):
    if isinstance(raw, str):
        raw = json.loads(raw)
    out = []
    for c in raw:
        if isinstance(c, (list, tuple)):
            out.append(complex(float(c[0]), float(c[1])))
        else:
            out.append(complex(c))
    return out


def load_coefficients(path) -> list[complex]:
    """Read a JSON array of [re, im] pairs."""
    return _parse_coeffs(json.loads(Path(path).read_text()))


# -- module-level operations ---------------------------------------------


def eval_jet(m: AnalyticMap, z) -> MapJet:
    return m.jet(z)


def log_deriv(m: AnalyticMap, z):
    return m.log_deriv(z)


def registry_samples() -> list[AnalyticMap]:
    """One representative per family, used by registry-wide checks."""
    return [
        registry_get("identity"),
        registry_get("moebius", {"a": 0.5}),
        registry_get("power_perturbation", {"eps": 0.4, "n": 3}),
        registry_get("log_singular", {"beta": 0}),
        registry_get("log_singular", {"beta": 2.1}),
        registry_get("lacunary", {"amp": 0.2, "decay": 0.0, "levels": 10}),
        registry_get("series", {"coeffs": [[0, 0], [1, 0], [0.1, 0.05], [0, -0.02]]}),
    ]


@dataclass(frozen=True)
class UnivalenceVerdict:
    passed: bool
    samples: int
    witness: tuple | None = None
    candidates_checked: int = 0


def univalence_probe(m: AnalyticMap, samples: int = 1000, seed: int = 0, neighbours: int = 6) -> UnivalenceVerdict:
    """Probabilistic injectivity check.

    Image-space nearest neighbours with distant preimages seed a Newton solve of
    f(w) = f(z_i); convergence to a point other than z_i is a collision witness.
    """
    if samples < 100:
        raise ParamOutOfRange("univalence_probe needs at least 100 samples")
    rng = np.random.default_rng(seed)
    rmax = min(m.radius_guard, 0.999)
    rad = rmax * np.sqrt(rng.random(samples))
    z = rad * np.exp(2j * np.pi * rng.random(samples))
    w = m.f(z)
    tree = cKDTree(np.column_stack([w.real, w.imag]))
    k = min(neighbours + 1, samples)
    _, idx = tree.query(np.column_stack([w.real, w.imag]), k=k)
    ii = np.repeat(np.arange(samples), k - 1)
    jj = idx[:, 1:].ravel()
    far = np.abs(z[ii] - z[jj]) > 1e-3
    ii, jj = ii[far], jj[far]

    # exact collisions first
    close = np.abs(w[ii] - w[jj]) < 1e-12
    if np.any(close):
        a = int(np.argmax(close))
        return UnivalenceVerdict(False, samples, (complex(z[ii[a]]), complex(z[jj[a]])), len(ii))

    target = w[ii]
    guess = z[jj].copy()
    alive = np.ones(len(ii), dtype=bool)
    for _ in range(40):
        if not np.any(alive):
            break
        g = guess[alive]
        step = (m.f(g) - target[alive]) / m.fprime(g)
        g = g - step
        bad = np.abs(g) > rmax
        g[bad] = 0
        guess[alive] = g
        sub = np.flatnonzero(alive)
        alive[sub[bad]] = False
    ok = alive & (np.abs(guess) <= rmax)
    if np.any(ok):
        resid = np.full(len(ii), np.inf)
        resid[ok] = np.abs(m.f(guess[ok]) - target[ok])
        hit = ok & (resid < 1e-12 * np.maximum(1, np.abs(target))) & (np.abs(guess - z[ii]) > 1e-6)
        if np.any(hit):
            a = int(np.argmax(hit))
            return UnivalenceVerdict(False, samples, (complex(z[ii[a]]), complex(guess[a])), len(ii))
    return UnivalenceVerdict(True, samples, None, len(ii))
