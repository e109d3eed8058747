import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from bernloc.cli import COLUMNS, build_parser, main, run

GOLDEN = Path(__file__).parent / "golden"
IND = "1 on [0,0.25]; 0 on (0.25,0.75); 1 on [0.75,1]"

CASES = {
    "bounds.csv": ["bounds", "--n", "10", "--x", "0.3", "--threshold", "0.5", "--side", "upper"],
    "bounds_lower.csv": ["bounds", "--n", "4,10", "--x", "0.5,0.7", "--threshold", "0.25", "--side", "lower"],
    "verify.csv": ["verify", "--f", IND, "--a", "0.25", "--b", "0.75", "--c", "0", "--x", "0.5", "--n", "4"],
    "verify_kantorovich.csv": ["verify", "--f", IND, "--a", "0.25", "--b", "0.75", "--c", "0",
                               "--x", "0.4,0.5", "--n", "40,80", "--k", "1"],
    "eval.csv": ["eval", "--f", "t on [0,1]", "--n", "12", "--x", "0.3"],
    "eval_k2.json": ["eval", "--f", IND, "--n", "20", "--x", "0.5", "--k", "2", "--format", "json"],
    "decay.csv": ["decay", "--f", IND, "--a", "0.25", "--b", "0.75", "--c", "0", "--x", "0.5",
                  "--n", "1000:5000:1000"],
    "sharpness.csv": ["experiment", "sharpness", "--n", "50,500,5000"],
    "boundary.csv": ["experiment", "boundary", "--s", "2", "--n", "10,100"],
    "herzog_hill.csv": ["experiment", "herzog-hill", "--n", "100,200"],
    "dloc.csv": ["experiment", "dloc", "--n", "100,200"],
}


def table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def header(text):
    return dict(ln[2:].split(": ", 1) for ln in text.splitlines() if ln.startswith("# "))


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(name, capsys):
    status, text = run(CASES[name])
    capsys.readouterr()
    assert status == 0
    assert text == (GOLDEN / name).read_text(encoding="utf-8")


@pytest.mark.parametrize("name", sorted(CASES))
def test_deterministic(name, capsys):
    first = run(CASES[name])[1]
    second = run(CASES[name])[1]
    capsys.readouterr()
    assert first == second


def test_schemas_match_goldens():
    for name in CASES:
        text = (GOLDEN / name).read_text(encoding="utf-8")
        if name.endswith(".json"):
            cols = json.loads(text)["columns"]
        else:
            cols = next(ln for ln in text.splitlines() if not ln.startswith("#")).split(",")
        table_name = header(text).get("command") if not name.endswith(".json") else json.loads(text)["meta"]["command"]
        assert cols == COLUMNS[table_name]


def test_bounds_values():
    (row,) = table((GOLDEN / "bounds.csv").read_text())
    assert math.exp(float(row["exact_log"])) == pytest.approx(0.1502683326, rel=1e-12)
    assert math.exp(float(row["chernoff_log"])) == pytest.approx(0.4182119424, rel=1e-9)
    assert row["ferrante_applicable"] == "true" and row["ferrante_log"] != ""
    assert int(row["exact_sign"]) == 1


def test_verify_values():
    (row,) = table((GOLDEN / "verify.csv").read_text())
    assert math.exp(float(row["error_log"])) == pytest.approx(0.625, rel=1e-15)
    assert math.exp(float(row["bound_log"])) == pytest.approx(1.1851851851851851852, rel=1e-14)
    assert row["holds"] == "true"


def test_eval_value():
    (row,) = table((GOLDEN / "eval.csv").read_text())
    assert float(row["value"]) == pytest.approx(0.3, rel=1e-15)


def test_header_metadata():
    text = (GOLDEN / "verify.csv").read_text()
    meta = header(text)
    assert meta["tool"].startswith("bernloc ")
    assert meta["seed"] == "20240601"
    cfg = json.loads(meta["config"])
    assert cfg["f"] == IND and cfg["n"] == [4]


def test_seed_is_echoed(capsys):
    _, text = run(CASES["eval.csv"] + ["--seed", "7"])
    capsys.readouterr()
    assert header(text)["seed"] == "7"


def test_seventeen_digits(capsys):
    _, text = run(["eval", "--f", "t on [0,1]", "--n", "3", "--x", "0.1"])
    capsys.readouterr()
    (row,) = table(text)
    assert row["x"] == "0.10000000000000001"


def test_wrong_constant_is_a_usage_error(capsys):
    status = main(["verify", "--f", "0 on [0,1]", "--a", "0.25", "--b", "0.75", "--c", "1", "--x", "0.5", "--n", "4"])
    assert status == 2
    assert "not constant" in capsys.readouterr().err


def test_exit_status_one_when_a_check_fails(monkeypatch, capsys):
    # the theorem never fails on valid input, so stub a failing check
    import bernloc.cli as cli
    from bernloc.experiments import BoundCheck
    from bernloc.numerics import LogValue

    def failing(args, f, n, x):
        return BoundCheck(n, x, LogValue.one(), LogValue.from_log(-1.0), False, -1.0)

    monkeypatch.setattr(cli, "_check", failing)
    assert main(CASES["verify.csv"]) == 1
    assert "false" in capsys.readouterr().out


@pytest.mark.parametrize("argv, fragment", [
    (["eval", "--f", "1 on [0,0.5); 0 on (0.5,1]", "--n", "4", "--x", "0.5"], "t = 0.5 uncovered"),
    (["eval", "--f", "1 on [0,1", "--n", "4", "--x", "0.5"], "position"),
    (["eval", "--f", "t on [0,1]", "--n", "4,3", "--x", "0.5"], "increasing"),
    (["bounds", "--n", "10", "--x", "0.6", "--threshold", "0.5"], "x <= threshold"),
    (["verify", "--f", IND, "--a", "0.25", "--b", "0.75", "--c", "0", "--x", "0.6", "--n", "4", "--k", "1"], "outside"),
    (["decay", "--f", "0 on [0,1]", "--a", "0.25", "--b", "0.75", "--c", "0", "--x", "0.5", "--n", "1,2,3,4"], "zero"),
])
def test_usage_errors_exit_two(argv, fragment, capsys):
    assert main(argv) == 2
    assert fragment in capsys.readouterr().err


def test_argparse_errors_exit_two(capsys):
    assert main(["bounds", "--n", "10"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_help_lists_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
    top = parser.format_help()
    for word in ("--config", "eval", "bounds", "verify", "decay", "experiment"):
        assert word in top


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "bounds", "n": [10], "x": 0.3, "threshold": 0.5, "side": "upper"}))
    _, text = run(["--config", str(cfg)])
    capsys.readouterr()
    assert text == (GOLDEN / "bounds.csv").read_text()
    cfg.write_text(json.dumps({"command": "experiment", "name": "dloc", "n": "100,200"}))
    assert run(["--config", str(cfg)])[1] == (GOLDEN / "dloc.csv").read_text()
    capsys.readouterr()


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text("[1, 2]")
    assert main(["--config", str(cfg)]) == 2
    assert "command" in capsys.readouterr().err


def test_spec_file_and_output_path(tmp_path, capsys):
    spec = tmp_path / "spec.txt"
    spec.write_text(IND + "\n")
    out = tmp_path / "out.csv"
    status = main(["verify", "--f", str(spec), "--a", "0.25", "--b", "0.75", "--c", "0", "--x", "0.5", "--n", "4",
                   "--output", str(out)])
    capsys.readouterr()
    assert status == 0
    rows = table(out.read_text())
    assert rows[0]["holds"] == "true"


def test_grid_forms(capsys):
    _, text = run(["eval", "--f", "t on [0,1]", "--n", "2:6:2", "--x", "0.5"])
    capsys.readouterr()
    assert [r["n"] for r in table(text)] == ["2", "4", "6"]


def test_point_mass_law(capsys):
    _, text = run(["eval", "--f", "t on [0,1]", "--n", "10", "--x", "0.3", "--k", "1", "--w", "point:0.5"])
    capsys.readouterr()
    assert float(table(text)[0]["value"]) == pytest.approx(0.32, rel=1e-14)


def test_json_is_strict(capsys):
    _, text = run(["verify", "--f", "0.5 on [0,1]", "--a", "0.25", "--b", "0.75", "--c", "0.5", "--x", "0.5",
                   "--n", "4", "--format", "json"])
    capsys.readouterr()
    doc = json.loads(text)
    (row,) = doc["rows"]
    assert row[doc["columns"].index("slack")] == "inf"
    assert row[doc["columns"].index("error_log")] == "-inf"


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "bernloc", "eval", "--f", "t on [0,1]", "--n", "12", "--x", "0.3"],
                         capture_output=True, text=True, check=True)
    assert out.stdout == (GOLDEN / "eval.csv").read_text()
    ver = subprocess.run([sys.executable, "-m", "bernloc", "--version"], capture_output=True, text=True)
    assert ver.returncode == 0 and "bernloc" in ver.stdout
