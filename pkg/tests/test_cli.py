import csv
import json
import math

import pytest

from gapdg.cli import build_parser, config_from_args, main
from gapdg.geometry import read_geometry
from gapdg.study import RunConfig, parse_dg_token


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["run", *args, "--out", str(out), "--quiet"])
    return code, out


def read_csv(out):
    with open(out / "errors.csv") as fh:
        return list(csv.DictReader(fh))


def test_defaults_only_run(tmp_path):
    code, out = run(tmp_path, "--case", "ex1", "--levels", "2:3")
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["level", "h", "dg", "dg_error", "l2_error", "rate", "predicted_rate"]
    assert [r["level"] for r in rows] == ["2", "3"]
    assert float(rows[0]["dg"]) == float(rows[0]["h"])  # lambda defaults to 1
    payload = json.loads((out / "rates.json").read_text())
    assert payload["config"]["mu"] == 18.0 and payload["config"]["solver"] == "lu"
    assert (out / "report.md").exists() and not (out / "system.mtx").exists()


def test_lambda_and_levels_parsing():
    args = build_parser().parse_args(["run", "--case", "ex1", "--lambda", "2", "--levels", "1:5"])
    cfg = config_from_args(args)
    gaps = cfg.level_gaps()
    assert [g[0] for g in gaps] == [1, 2, 3, 4, 5]
    assert all(dg == h ** 2 and lam == 2 for _, h, dg, lam in gaps)


def test_dg_schedule_tokens():
    assert parse_dg_token("h^2", 0.25) == (0.0625, 2.0)
    assert parse_dg_token("0", 0.25) == (0.0, math.inf)
    dg, lam = parse_dg_token("0.0625", 0.25)
    assert dg == 0.0625 and lam == pytest.approx(2.0)
    with pytest.raises(ValueError):
        parse_dg_token("-1", 0.25)
    cfg = RunConfig(dg_schedule=["h^1", "h^2"], levels=(2, 3))
    assert [g[3] for g in cfg.level_gaps()] == [1.0, 2.0]


def test_conflicting_gap_flags_are_usage_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "--case", "ex1", "--lambda", "2", "--dg-schedule", "0.1,0.05")
    assert code == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("lambda = 2\ndg-schedule = h^1,h^2\nlevels = 1:2\n")
    code, _ = run(tmp_path, "--config", str(cfg))
    assert code == 2
    assert "mutually exclusive" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["colour = red\n", "levels = 1-3\n", "degree = two\n", "just words\n"])
def test_bad_config_files(tmp_path, text):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(text)
    assert run(tmp_path, "--config", str(cfg))[0] == 2


def test_bad_flags():
    assert main(["run", "--case", "ex7"]) == 2
    assert main(["run", "--levels", "3:1", "--quiet"]) == 2
    assert main(["run", "--penalty", "0.5", "--quiet"]) == 2
    assert main(["run", "--case", "ex3", "--quiet"]) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# study\ncase = ex2\nlambda = 2\nlevels = 1:1\nsolver = gmres\n")
    code, out = run(tmp_path, "--config", str(cfg), "--levels", "1:2")
    assert code == 0
    payload = json.loads((out / "rates.json").read_text())
    assert payload["config"]["case"] == "ex2" and payload["levels"] == [1, 2]
    assert payload["config"]["solver"] == "gmres" and payload["config"]["lam"] == 2.0


def test_single_level_has_empty_rate(tmp_path):
    code, out = run(tmp_path, "--case", "ex1", "--levels", "2:2")
    rows = read_csv(out)
    assert code == 0 and len(rows) == 1 and rows[0]["rate"] == ""
    assert json.loads((out / "rates.json").read_text())["rates"] == []


def test_runtime_failure_gives_nonzero_exit(tmp_path, capsys):
    # a gap this wide folds the right patch
    code, _ = run(tmp_path, "--case", "ex1", "--dg-schedule", "0.4", "--levels", "1:1")
    assert code == 1
    assert "DegenerateGeometryError" in capsys.readouterr().err


def test_reports_agree_and_are_deterministic(tmp_path):
    args = ("--case", "ex2", "--lambda", "1.5", "--levels", "1:3", "--dump-matrix")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    assert (a / "errors.csv").read_bytes() == (b / "errors.csv").read_bytes()
    assert (a / "system.mtx").exists()
    md = (a / "report.md").read_text()
    for row in read_csv(a):
        line = next(l for l in md.splitlines() if l.startswith(f"| {row['level']} | {row['h']} "))
        cells = [c.strip() for c in line.strip("|").split("|")]
        assert cells == [v or "-" for v in row.values()]
    payload = json.loads((a / "rates.json").read_text())
    assert [float(r["dg_error"]) for r in read_csv(a)] == payload["dg_error"]


def test_geometry_command_and_reuse(tmp_path):
    geo = tmp_path / "domain.txt"
    assert main(["geometry", "--case", "ex2", "--dg", "0.05", "--out", str(geo)]) == 0
    assert read_geometry(geo).gap_distance() == pytest.approx(0.05)
    code, out = run(tmp_path, "--case", "ex2", "--geometry", str(geo), "--levels", "1:2")
    assert code == 0
    assert [float(r["dg"]) for r in read_csv(out)] == [0.05, 0.05]
    assert run(tmp_path, "--case", "ex4", "--geometry", str(geo), "--levels", "1:1")[0] == 1
