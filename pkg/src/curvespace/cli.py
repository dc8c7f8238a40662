"""Command-line front end.

Every command prints a tab-delimited summary (one line per check) and can
write a JSON report (``--out``), a CSV table (``--csv``) and an SVG chart
(``--svg``).  Exit codes: 0 all checks pass, 1 some check fails, 2 usage
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_OUTER_RADIUS, DEFAULT_TOL, MAX_CLI_DEPTH, THRESHOLDS
from .errors import CurveSpaceError, UnknownFamily, UsageError

COMMANDS = ("analyze", "verify", "extend", "beta", "tst", "sweep")
SPACES = ("dlogp", "qp0", "bloch0")
EXTEND_CHECKS = ("hypotheses", "identity", "wirtinger", "t1", "t2", "dynkin")
SWEEP_CHECKS = ("dynkin", "eta", "dini")

# fixed CSV layouts, one per command
CSV_COLUMNS = {
    "analyze": ["level", "value", "err", "cumulative"],
    "verify": ["check", "quantity", "value"],
    "extend": ["level", "value", "err", "cumulative", "series"],
    "beta": ["level", "index", "shift", "beta", "delta", "chord", "diam"],
    "beta_curve": ["level", "subtotal"],
    "tst": ["depth", "lhs", "rhs", "ratio"],
    "sweep": ["j", "r", "value"],
}


@dataclass
class RunConfig:
    command: str
    map: str | None = None
    params: dict = field(default_factory=dict)
    space: str = "dlogp"
    p: float = 0.0
    depth: int = 12
    tol: float = DEFAULT_TOL
    seed: int = 0
    out: str | None = None
    csv: str | None = None
    svg: str | None = None
    R: float = DEFAULT_OUTER_RADIUS
    suite: str = "all"
    checks: list = field(default_factory=list)
    curve: str | None = None
    root: tuple = (2, 0)
    thresholds: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["root"] = list(self.root)
        d["thresholds"] = {**THRESHOLDS, **self.thresholds}
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flag = None
        for tok in message.replace(",", " ").replace("'", " ").split():
            if tok.startswith("--"):
                flag = tok
                break
        raise UsageError(message, flag)


def _kv(text, flag):
    if "=" not in text:
        raise UsageError(f"{flag} expects key=value, got {text!r}", flag)
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser():
    ap = _Parser(prog="curvespace", description="Dyadic and quadrature diagnostics for conformal maps and their image curves")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--map", default=None, help="map family (identity, moebius, power_perturbation, log_singular, lacunary, series)")
        sp.add_argument("--param", action="append", default=[], metavar="K=V", help="map parameter, repeatable")
        sp.add_argument("--space", default="dlogp", help="dlogp, qp0 or bloch0")
        sp.add_argument("--p", type=float, default=None, help="space exponent")
        sp.add_argument("--depth", type=int, default=12, help="levels / depth (<= 20)")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="quadrature tolerance in [1e-12, 1e-2]")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="JSON report path")
        sp.add_argument("--csv", default=None, help="CSV table path")
        sp.add_argument("--svg", default=None, help="SVG chart path")
        sp.add_argument("--threshold", action="append", default=[], metavar="K=V", help="override a verdict threshold")
        if name == "verify":
            sp.add_argument("--suite", default="all")
        if name in ("extend", "sweep"):
            sp.add_argument("--R", type=float, default=DEFAULT_OUTER_RADIUS, help="outer radius of the extension support")
            sp.add_argument("--check", action="append", default=[])
        if name == "beta":
            sp.add_argument("--curve", default=None, help="closed polyline CSV (x,y per line)")
        if name in ("tst", "beta"):
            sp.add_argument("--root", default=None, help="root arc as level:index")
    return ap


def _writable(path, flag):
    if path is None:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise UsageError(f"{flag}: directory {parent} is not writable", flag)


def parse_args(argv) -> RunConfig:
    """Validated configuration; UsageError names the offending flag."""
    ap = build_parser()
    ns = ap.parse_args(list(argv))
    if ns.command is None:
        raise UsageError(f"a command is required: {', '.join(COMMANDS)}", "command")
    cfg = RunConfig(ns.command)
    if ns.space not in SPACES:
        raise UsageError(f"--space must be one of {', '.join(SPACES)}", "--space")
    cfg.space = ns.space
    if ns.p is not None:
        if not math.isfinite(ns.p):
            raise UsageError("--p must be finite", "--p")
        if ns.space == "dlogp" and ns.p < 0:
            raise UsageError("--p must be >= 0 for dlogp", "--p")
        if ns.space == "qp0" and not 0 < ns.p <= 1:
            raise UsageError("--p must lie in (0, 1] for qp0", "--p")
        if ns.p < 0:
            raise UsageError("--p must be >= 0", "--p")
        cfg.p = ns.p
    elif ns.space == "qp0":
        cfg.p = 0.5
    if not 1 <= ns.depth <= MAX_CLI_DEPTH:
        raise UsageError(f"--depth must lie in [1, {MAX_CLI_DEPTH}]", "--depth")
    cfg.depth = ns.depth
    if not 1e-12 <= ns.tol <= 1e-2:
        raise UsageError("--tol must lie in [1e-12, 1e-2]", "--tol")
    cfg.tol = ns.tol
    cfg.seed = ns.seed
    for flag in ("out", "csv", "svg"):
        _writable(getattr(ns, flag), f"--{flag}")
        setattr(cfg, flag, getattr(ns, flag))
    cfg.params = dict(_kv(t, "--param") for t in ns.param)
    for t in ns.threshold:
        k, v = _kv(t, "--threshold")
        if k not in THRESHOLDS:
            raise UsageError(f"unknown threshold {k!r}", "--threshold")
        try:
            cfg.thresholds[k] = float(v)
        except ValueError:
            raise UsageError(f"threshold {k} needs a number", "--threshold") from None
    if hasattr(ns, "suite"):
        from .harness import SUITES

        if ns.suite not in SUITES + ("all",):
            raise UsageError(f"--suite must be one of {', '.join(SUITES + ('all',))}", "--suite")
        cfg.suite = ns.suite
    if hasattr(ns, "R"):
        if not ns.R > 1:
            raise UsageError("--R must exceed 1", "--R")
        cfg.R = ns.R
        allowed = EXTEND_CHECKS if ns.command == "extend" else SWEEP_CHECKS
        for c in ns.check:
            if c not in allowed:
                raise UsageError(f"--check must be one of {', '.join(allowed)}", "--check")
        cfg.checks = list(ns.check)
    if getattr(ns, "root", None):
        try:
            lv, ix = (int(x) for x in ns.root.split(":"))
        except ValueError:
            raise UsageError("--root expects level:index", "--root") from None
        if lv < 1 or not 0 <= ix < (1 << lv):
            raise UsageError("--root must be a proper dyadic arc level:index with level >= 1", "--root")
        cfg.root = (lv, ix)
    if getattr(ns, "curve", None):
        if not Path(ns.curve).is_file():
            raise UsageError(f"--curve file {ns.curve} not found", "--curve")
        cfg.curve = ns.curve
    cfg.map = ns.map
    if cfg.map is None and not (cfg.command == "beta" and cfg.curve):
        raise UsageError("--map is required", "--map")
    return cfg


def _build_map(cfg):
    from .maps import registry_get

    try:
        return registry_get(cfg.map, cfg.params)
    except UnknownFamily as exc:
        raise UsageError(str(exc), "--map") from None
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc), "--param") from None


# -- command bodies -----------------------------------------------------------------


def _check(name, verdict, measured=None, inputs=None, notes=None):
    return {"name": name, "inputs": inputs or {}, "measured": measured or {}, "verdict": verdict,
            "thresholds": {}, "notes": notes or []}


def _report_measurement(name, rep):
    d = rep.to_dict()
    d["name"] = name
    return d


def _ladder_rows(rep):
    return [{"level": e.level, "value": e.value, "err": e.err, "cumulative": e.cumulative} for e in rep.entries]


def _cmd_analyze(cfg, th):
    from .harness import _member_verdict
    from .spaces import dlogp_energy, eta_profile, qp_vanishing_profile

    m = _build_map(cfg)
    if cfg.space == "dlogp":
        rep = dlogp_energy(m, cfg.p, cfg.depth, cfg.tol, thresholds=th)
        good, bad = rep.verdict == "converged", rep.verdict == "diverging"
    elif cfg.space == "qp0":
        rep = qp_vanishing_profile(m, cfg.p, cfg.depth, tol=max(cfg.tol, 1e-6), thresholds=th)
        good, bad = rep.verdict == "vanishing", rep.verdict == "not-vanishing"
    else:
        rep = eta_profile(m, min(cfg.depth, 16), thresholds=th)
        good, bad = rep.verdict == "vanishing", rep.verdict == "not-vanishing"
    member = m.membership(cfg.space, cfg.p)
    measured = {"verdict": rep.verdict, "limit": rep.limit, "final": rep.entries[-1].cumulative}
    checks = [_check(f"analyze.{cfg.space}", _member_verdict(member, good, bad), measured,
                     {"map": m.name, "p": cfg.p, "member": member})]
    return checks, [_report_measurement(rep.label, rep)], _ladder_rows(rep), {rep.label: rep}


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        out.append((prefix, obj))


def _cmd_verify(cfg, th):
    from .harness import run_suite
    from .spaces import SpaceParams

    m = _build_map(cfg)
    params = SpaceParams(cfg.space if cfg.space != "bloch0" else "dlogp", cfg.p)
    rep = run_suite(cfg.suite, m, params, cfg.depth, cfg.tol, cfg.seed, thresholds=th)
    checks = [c.to_dict() for c in rep.checks]
    rows = []
    for c in rep.checks:
        flat = []
        _flatten("", c.measured, flat)
        rows.extend({"check": c.name, "quantity": q, "value": v} for q, v in flat)
    meas = [{"name": "not_checked", "items": rep.not_checked}]
    series = {}
    for c in rep.checks:
        shells = c.measured.get("shells") if isinstance(c.measured, dict) else None
        prof = c.measured.get("profile") if isinstance(c.measured, dict) else None
        if isinstance(shells, list) and shells and all(isinstance(x, (int, float)) for x in shells):
            series[c.name] = list(enumerate(shells, start=1))
        elif isinstance(prof, dict) and prof:
            series[c.name] = [(int(k), v) for k, v in prof.items() if isinstance(v, (int, float))]
    return checks, meas, rows, series


def _cmd_extend(cfg, th):
    from .extension import (
        ExtensionField,
        exterior_condition_T1,
        exterior_condition_T2,
        max_identity_residual,
        max_wirtinger_gap,
    )
    from .harness import _check_dynkin, _member_verdict
    from .spaces import SpaceParams

    m = _build_map(cfg)
    fld = ExtensionField(m, cfg.R, cfg.seed)
    wanted = cfg.checks or ["hypotheses", "identity", "wirtinger", "t1"] + (["t2"] if 0 < cfg.p <= 1 else [])
    checks, meas, rows, series = [], [], [], {}
    for name in wanted:
        try:
            if name == "hypotheses":
                kr = fld.k_report
                hyp = fld.hypotheses(cfg.p)
                v = "pass" if kr["stable"] and hyp["k_below_one"] else "inconclusive"
                checks.append(_check("extend.hypotheses", v, {**kr, **hyp}, {"R": cfg.R, "seed": cfg.seed}))
            elif name == "identity":
                r = max_identity_residual(fld, 10_000, cfg.seed)
                checks.append(_check("extend.identity_residual", "pass" if r <= 1e-10 else "fail",
                                     {"max_residual": r}, {"points": 10_000}))
            elif name == "wirtinger":
                g = max_wirtinger_gap(fld, 1000, cfg.seed + 1)
                checks.append(_check("extend.wirtinger", "pass" if g <= 1e-6 else "fail", {"max_gap": g},
                                     {"points": 1000, "h": 1e-6}))
            elif name == "t1":
                rep = exterior_condition_T1(fld, cfg.p, cfg.depth, cfg.tol, thresholds=th)
                member = m.membership("dlogp", cfg.p)
                v = _member_verdict(member, rep.verdict == "converged", rep.verdict == "diverging")
                checks.append(_check("extend.t1", v, {"verdict": rep.verdict, "limit": rep.limit},
                                     {"p": cfg.p, "member": member}))
                meas.append(_report_measurement("t1", rep))
                rows += [{**r, "series": "t1"} for r in _ladder_rows(rep)]
                series["t1"] = rep
            elif name == "t2":
                rep = exterior_condition_T2(fld, cfg.p, cfg.depth, tol=max(cfg.tol, 1e-6), thresholds=th)
                member = m.membership("qp0", cfg.p)
                v = _member_verdict(member, rep.verdict == "vanishing", rep.verdict == "not-vanishing")
                checks.append(_check("extend.t2", v, {"verdict": rep.verdict, "final": rep.final},
                                     {"p": cfg.p, "member": member}))
                meas.append(_report_measurement("t2", rep))
                rows += [{**r, "series": "t2"} for r in _ladder_rows(rep)]
                series["t2"] = rep
            elif name == "dynkin":
                from .harness import THRESHOLDS as _T

                recs = _check_dynkin(m, SpaceParams("dlogp", cfg.p), cfg.depth, cfg.tol, cfg.seed, {**_T, **th})
                checks += [r.to_dict() for r in recs]
        except CurveSpaceError as exc:
            checks.append(_check(f"extend.{name}", "inconclusive", {"error": type(exc).__name__, "message": str(exc)}))
    return checks, meas, rows, series


def _cmd_beta(cfg, th):
    from .curves import ParametricCurve, arc_table, read_polyline_csv, remark2_sum, theorem3_statistic
    from .dyadic import DyadicArc
    from .harness import run_suite
    from .spaces import SpaceParams

    if cfg.curve:
        poly = read_polyline_csv(cfg.curve)
        depth = min(cfg.depth, 14)
        total, per = remark2_sum(poly, cfg.p, depth, breakdown=True)
        inc = [per[k] for k in sorted(per)]
        tail = [b / a for a, b in zip(inc[:-1], inc[1:]) if a > 0][-3:]
        ok = bool(tail) and all(x < th["increment_ratio"] for x in tail)
        checks = [_check("beta.remark2", "pass" if ok else "inconclusive",
                         {"total": total, "subtotals": inc, "tail_ratios": tail},
                         {"curve": cfg.curve, "p": cfg.p, "maxdepth": depth, "vertices": len(poly)})]
        src = ParametricCurve.from_polyline(poly)
        arc_depth = max(1, min(depth, int(math.log2(len(poly))) - 1))
        stat = theorem3_statistic(src, cfg.p, DyadicArc(0, 0), arc_depth, "dlogp_global", detail=True)
        checks.append(_check("beta.arc_sum", "inconclusive" if not stat.per_level else "pass",
                             {"value": stat.value, "per_level": stat.per_level},
                             {"family": "dyadic", "depth": arc_depth},
                             ["unlabelled curve: the sum is reported, not judged"]))
        rows = [{"level": k, "subtotal": per[k]} for k in sorted(per)]
        return checks, [{"name": "remark2", "per_level": per, "total": total}], rows, {"remark2": sorted(per.items())}
    m = _build_map(cfg)
    space = "qp0" if cfg.space == "qp0" else "dlogp"
    params = SpaceParams(space, cfg.p)
    checks = []
    for suite in ("theorem3", "corollary1"):
        rep = run_suite(suite, m, params, cfg.depth, cfg.tol, cfg.seed, thresholds=th)
        checks += [c.to_dict() for c in rep.checks]
    root = DyadicArc(*cfg.root) if cfg.root != (2, 0) or space == "qp0" else DyadicArc(0, 0)
    table = arc_table(m, root, min(cfg.depth, 12), "mr")
    rows = table.rows()
    series = {}
    for c in checks:
        inc = c["measured"].get("increments")
        if inc:
            series[c["name"]] = list(enumerate(inc, start=1))
        ws = c["measured"].get("window_sup")
        if ws:
            series[c["name"]] = [(int(k), v) for k, v in ws.items()]
    return checks, [], rows, series


def _cmd_tst(cfg, th):
    from .curves import tst_sum
    from .dyadic import DyadicArc

    m = _build_map(cfg)
    root = DyadicArc(*cfg.root)
    lo = max(1, cfg.depth - 4)
    rows = []
    for d in range(lo, cfg.depth + 1):
        lhs, rhs = tst_sum(m, root, d)
        rows.append({"depth": d, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)})
    ratios = [r["ratio"] for r in rows]
    in_band = all(0.1 <= x <= 10 for x in ratios) or all(x == 0 for x in ratios)
    stable = max(ratios) == 0 or (max(ratios) - min(ratios)) <= 0.2 * min(ratios)
    v = "pass" if in_band and stable else "fail"
    checks = [_check("tst.comparability", v, {"ratios": ratios}, {"root": list(cfg.root), "depths": [lo, cfg.depth]},
                     ["band [0.1, 10]; stability within 20% across the depths"])]
    return checks, [{"name": "tst", "rows": rows}], rows, {"tst_ratio": [(r["depth"], r["ratio"]) for r in rows]}


def _cmd_sweep(cfg, th):
    from .extension import ExtensionField, KTooLarge, dynkin_ratio
    from .spaces import dini_profile, dini_verdict, eta_profile

    m = _build_map(cfg)
    which = cfg.checks or ["dynkin"]
    checks, rows, series = [], [], {}
    for name in which:
        try:
            if name == "dynkin":
                fld = ExtensionField(m, cfg.R, cfg.seed)
                k = fld.k_estimate
                if k >= 1:
                    raise KTooLarge(f"sampled sup |mu| = {k:.4g} is not below 1")
                theta = np.arange(4096) * (2 * math.pi / 4096)
                phi = float(theta[int(np.argmax(np.abs(m.log_deriv(0.99 * np.exp(1j * theta)))))])
                js = list(range(2, min(cfg.depth, 14) + 1))
                vals = [dynkin_ratio(fld, (1 - 2.0**-j) * complex(math.cos(phi), math.sin(phi)), k) for j in js]
                ok = all(math.isfinite(v) for v in vals)
                checks.append(_check("sweep.dynkin", "pass" if ok else "fail", {"k": k, "max_ratio": max(vals)},
                                     {"direction": phi}))
                rows += [{"j": j, "r": 1 - 2.0**-j, "value": v} for j, v in zip(js, vals)]
                series["dynkin"] = list(zip(js, vals))
            elif name == "eta":
                rep = eta_profile(m, min(cfg.depth, 16), thresholds=th)
                checks.append(_check("sweep.eta", "pass" if rep.verdict != "inconclusive" else "inconclusive",
                                     {"verdict": rep.verdict, "final": rep.final}))
                rows += [{"j": e.level, "r": 1 - 2 * math.pi * 2.0**-e.level, "value": e.value} for e in rep.entries]
                series["eta"] = rep
            elif name == "dini":
                p = cfg.p if cfg.p > 2 else 3.0
                js = list(range(4, min(cfg.depth, 14) + 1))
                prof = dini_profile(m, p, [1 - 2.0**-j for j in js])
                verdict = dini_verdict(prof)
                checks.append(_check("sweep.dini", "pass" if verdict == "bounded" else "inconclusive",
                                     {"verdict": verdict}, {"p": p}))
                rows += [{"j": j, "r": r, "value": v} for j, (r, v) in zip(js, prof)]
                series["dini"] = [(j, v) for j, (_, v) in zip(js, prof)]
        except CurveSpaceError as exc:
            checks.append(_check(f"sweep.{name}", "inconclusive", {"error": type(exc).__name__, "message": str(exc)}))
    return checks, [], rows, series


_COMMANDS = {
    "analyze": _cmd_analyze,
    "verify": _cmd_verify,
    "extend": _cmd_extend,
    "beta": _cmd_beta,
    "tst": _cmd_tst,
    "sweep": _cmd_sweep,
}


# -- emission ---------------------------------------------------------------


def build_report(cfg, checks, measurements):
    from .harness import _clean

    return _clean({
        "version": __version__,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "checks": checks,
        "measurements": measurements,
    })


def dumps_report(report) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def read_report(path):
    return json.loads(Path(path).read_text())


def recheck_report(report):
    """Re-derive every ladder/profile verdict stored in a report; returns {name: (stored, recomputed)}."""
    from .quadrature import LadderReport, build_ladder_report, build_profile_report

    out = {}
    th = {**THRESHOLDS, **report.get("config", {}).get("thresholds", {})}
    for mrec in report.get("measurements", []):
        if mrec.get("kind") not in ("ladder", "profile"):
            continue
        rep = LadderReport.from_dict(mrec)
        shells = [(e.level, e.value, e.err) for e in rep.entries]
        build = build_ladder_report if rep.kind == "ladder" else build_profile_report
        out[mrec["name"]] = (rep.verdict, build(rep.label, shells, th).verdict)
    return out


def emit_report(report, fmt, path, rows=None, columns=None, series=None, title=""):
    """Write the report as json, the rows as csv, or the series as svg."""
    path = Path(path)
    if fmt == "json":
        path.write_text(dumps_report(report))
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in rows or []:
                w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    elif fmt == "svg":
        from .plotting import render_svg

        render_svg(series or {}, path, title=title)
    else:
        raise UsageError(f"unknown format {fmt!r}", "format")
    return path


def _summary_lines(checks):
    lines = ["check\tverdict"]
    for c in checks:
        lines.append(f"{c['name']}\t{c['verdict']}")
    return lines


def run(cfg: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    th = {**THRESHOLDS, **cfg.thresholds}
    checks, meas, rows, series = _COMMANDS[cfg.command](cfg, th)
    report = build_report(cfg, checks, meas)
    if cfg.out:
        emit_report(report, "json", cfg.out)
    if cfg.csv:
        key = "beta_curve" if cfg.command == "beta" and cfg.curve else cfg.command
        emit_report(report, "csv", cfg.csv, rows, CSV_COLUMNS[key])
    if cfg.svg:
        emit_report(report, "svg", cfg.svg, series=series, title=f"{cfg.command} {cfg.map or cfg.curve}")
    for line in _summary_lines(report["checks"]):
        print(line, file=stdout)
    return report


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"usage error ({exc.flag}): {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    try:
        report = run(cfg)
    except UsageError as exc:
        print(f"usage error ({exc.flag}): {exc}", file=sys.stderr)
        return 2
    except (CurveSpaceError, OSError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    verdicts = [c["verdict"] for c in report["checks"]]
    return 1 if "fail" in verdicts else 0


if __name__ == "__main__":
    sys.exit(main())
