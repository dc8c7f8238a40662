import csv
import json
import re

import pytest

from curvespace.cli import (
    CSV_COLUMNS,
    RunConfig,
    build_report,
    dumps_report,
    emit_report,
    main,
    parse_args,
    read_report,
    recheck_report,
    run,
)
from curvespace.config import THRESHOLDS
from curvespace.errors import UsageError
from curvespace.plotting import render_svg
from curvespace.quadrature import build_ladder_report

MOEBIUS = ["--map", "moebius", "--param", "a=0.5"]


def test_parse_analyze_config():
    cfg = parse_args(["analyze", *MOEBIUS, "--space", "dlogp", "--p", "0", "--depth", "14"])
    assert cfg.command == "analyze" and cfg.map == "moebius"
    assert cfg.params == {"a": "0.5"}
    assert (cfg.space, cfg.p, cfg.depth, cfg.seed) == ("dlogp", 0.0, 14, 0)


def test_parse_verify_defaults():
    cfg = parse_args(["verify", *MOEBIUS])
    assert cfg.suite == "all" and cfg.depth == 12
    assert cfg.to_dict()["thresholds"] == THRESHOLDS


def test_qp0_defaults_to_half():
    assert parse_args(["analyze", *MOEBIUS, "--space", "qp0"]).p == 0.5


@pytest.mark.parametrize(
    "argv,flag",
    [
        (["analyze", "--p", "-1", *MOEBIUS], "--p"),
        (["analyze", "--space", "qp0", "--p", "1.5", *MOEBIUS], "--p"),
        (["analyze", "--space", "bmo", *MOEBIUS], "--space"),
        (["analyze", "--depth", "21", *MOEBIUS], "--depth"),
        (["analyze", "--tol", "1", *MOEBIUS], "--tol"),
        (["analyze"], "--map"),
        (["analyze", "--param", "a", "--map", "moebius"], "--param"),
        (["analyze", "--threshold", "bogus=1", *MOEBIUS], "--threshold"),
        (["verify", "--suite", "nope", *MOEBIUS], "--suite"),
        (["extend", "--R", "0.5", *MOEBIUS], "--R"),
        (["tst", "--root", "0:0", *MOEBIUS], "--root"),
        (["beta", "--curve", "/no/such/file.csv"], "--curve"),
        (["analyze", "--out", "/no/such/dir/x.json", *MOEBIUS], "--out"),
    ],
)
def test_usage_errors_name_the_flag(argv, flag):
    with pytest.raises(UsageError) as exc:
        parse_args(argv)
    assert exc.value.flag == flag


def test_exit_codes(capsys):
    assert main(["analyze", *MOEBIUS, "--depth", "8"]) == 0
    # nothing counts as vanishing, so the member fails its own check
    argv = ["analyze", *MOEBIUS, "--space", "qp0", "--depth", "8", "--threshold", "vanishing=1e-30",
            "--threshold", "stabilized=100"]
    assert main(argv) == 1
    assert main(["analyze", "--p", "-1", *MOEBIUS]) == 2
    assert "--p" in capsys.readouterr().err
    assert main(["analyze", "--map", "nope"]) == 2
    assert main(["tst", "--map", "log_singular", "--param", "beta=0", "--depth", "6"]) == 3
    assert "NonFinite" in capsys.readouterr().err


def test_summary_is_tab_delimited(capsys):
    main(["analyze", *MOEBIUS, "--depth", "6"])
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["check\tverdict", "analyze.dlogp\tpass"]


def test_json_schema_and_round_trip(tmp_path):
    out = tmp_path / "r.json"
    main(["analyze", *MOEBIUS, "--depth", "10", "--out", str(out)])
    rep = read_report(out)
    assert list(rep) == ["version", "command", "config", "checks", "measurements"]
    assert rep["command"] == "analyze"
    for c in rep["checks"]:
        assert set(c) >= {"name", "inputs", "measured", "verdict", "thresholds", "notes"}
    m = rep["measurements"][0]
    assert m["kind"] == "ladder" and len(m["entries"]) == 10
    assert recheck_report(rep) == {m["name"]: ("converged", "converged")}


def test_empty_ladder_report_is_valid_json(tmp_path):
    cfg = RunConfig("analyze", map="identity")
    rep = build_report(cfg, [], [])
    text = dumps_report(rep)
    assert json.loads(text)["measurements"] == []
    emit_report(rep, "json", tmp_path / "e.json")
    assert read_report(tmp_path / "e.json") == json.loads(text)


def test_report_has_no_nan(tmp_path):
    cfg = RunConfig("analyze", map="identity")
    rep = build_report(cfg, [{"name": "x", "measured": {"v": float("inf")}}], [])
    json.loads(dumps_report(rep))


def test_csv_columns(tmp_path):
    path = tmp_path / "a.csv"
    main(["analyze", *MOEBIUS, "--depth", "7", "--csv", str(path)])
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == CSV_COLUMNS["analyze"]
    assert [int(r["level"]) for r in rows] == list(range(7))
    path = tmp_path / "t.csv"
    main(["tst", *MOEBIUS, "--depth", "6", "--csv", str(path)])
    with open(path) as fh:
        assert next(csv.reader(fh)) == CSV_COLUMNS["tst"]


def _ladder_vertices(svg_text, gid):
    block = re.search(rf'<g id="{gid}">\s*<path d="([^"]*)"', svg_text)
    assert block, gid
    return re.findall(r"[ML] [-\d.]+ [-\d.]+", block.group(1))


def test_svg_ladder_structure(tmp_path):
    rep = build_ladder_report("toy", [(k, 2.0**-k, 0.0) for k in range(14)])
    path = render_svg(rep, tmp_path / "l.svg")
    text = path.read_text()
    assert text.count('<g id="ladder">') == 1
    assert len(_ladder_vertices(text, "ladder")) == 14


def test_cli_svg_is_deterministic(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    main(["analyze", *MOEBIUS, "--depth", "14", "--svg", str(a)])
    main(["analyze", *MOEBIUS, "--depth", "14", "--svg", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert len(_ladder_vertices(a.read_text(), "dlogp_energy_p_0")) == 14


def test_svg_skips_nonpositive_values(tmp_path):
    path = render_svg({"zero": [(k, 0.0) for k in range(5)]}, tmp_path / "z.svg")
    assert '<g id="zero">' not in path.read_text()


def test_run_returns_report(capsys):
    rep = run(parse_args(["sweep", *MOEBIUS, "--depth", "14", "--check", "eta", "--check", "dini"]))
    assert {c["name"] for c in rep["checks"]} == {"sweep.eta", "sweep.dini"}
    assert all(c["verdict"] == "pass" for c in rep["checks"])
    assert rep["checks"][0]["measured"]["verdict"] == "vanishing"
    # eta is still about 1e-2 at depth 8, above the vanishing threshold
    rep = run(parse_args(["sweep", *MOEBIUS, "--depth", "8", "--check", "eta"]))
    assert rep["checks"][0]["verdict"] == "inconclusive"
