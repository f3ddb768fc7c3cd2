import csv
import dataclasses
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from optbranch import synthetic as sy
from optbranch.cli import run_cli
from optbranch.io import dumps


def run(*argv):
    out = io.StringIO()
    code = run_cli(list(argv), out)
    return code, out.getvalue()


def test_validate_ok():
    assert run("validate", "--network", "sce56") == (0, "ok\n")


def test_validate_meshed(tmp_path, sce56):
    path = tmp_path / "meshed.json"
    path.write_text(dumps(sce56.with_open([])))
    code, text = run("validate", "--network", str(path))
    assert code == 1 and "cycle" in text


def test_unknown_flag():
    assert run("validate", "--network", "sce56", "--bogus")[0] == 2


def test_unknown_command():
    assert run("frobnicate")[0] == 2


def test_missing_network_file():
    assert run("validate", "--network", "/nonexistent.json")[0] == 2


def test_bad_objective():
    assert run("solve-opf", "--network", "sce56", "--objective", "linear:1")[0] == 2


def test_enumerate_csv():
    code, text = run("enumerate", "--network", "sce56", "--close", "1-32")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [(int(r["from"]), int(r["to"])) for r in rows] == [
        (1, 2), (2, 4), (4, 20), (20, 23), (23, 25), (25, 26), (26, 32), (32, 1)
    ]
    costs = [float(r["cost_mw"]) for r in rows]
    assert costs.index(min(costs)) == 3 and costs.index(max(costs)) == 7


def test_enumerate_json_argmin():
    code, text = run("enumerate", "--network", "sce56", "--format", "json")
    assert code == 0
    assert json.loads(text)["argmin"] == [20, 23]


def test_branch_exchange_json():
    code, text = run("branch-exchange", "--network", "sce56", "--close", "1-32")
    d = json.loads(text)
    assert code == 0
    assert d["line"] == [20, 23] and d["case"] == "C4" and d["case_bus"] == 23
    assert d["opf_solve_count"] <= 3
    assert d["path"][-1] == [32, 1]


def test_branch_exchange_table():
    code, text = run("branch-exchange", "--network", "sce56", "--format", "table")
    assert code == 0 and "20-23" in text and "C4 at bus 23" in text


def test_solve_opf_and_precision():
    code, text = run("solve-opf", "--network", "sce56")
    d = json.loads(text)
    assert code == 0 and d["exact"]
    value = d["objective_mw"]
    assert float(f"{value:.12g}") == value


def test_infeasible_exit_code(tmp_path):
    net, _ = sy.two_feeder(np.random.default_rng(0), 3)
    capped = net.map_buses(lambda b: dataclasses.replace(b, p_bounds=(0.0, 0.0)) if b.is_substation else b)
    path = tmp_path / "capped.json"
    path.write_text(dumps(capped.with_open([(1, 2)])))
    assert run("solve-opf", "--network", str(path))[0] == 1


def test_f_curve_csv():
    code, text = run("f-curve", "--network", "sce56", "--grid", "1:2:0.5")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["p0_mw", "f_mw", "aggregate_mw"]
    f = [float(r["f_mw"]) for r in rows]
    assert len(f) == 3 and f[0] > f[1] > f[2]
    for r in rows:
        assert float(r["aggregate_mw"]) == pytest.approx(float(r["p0_mw"]) + float(r["f_mw"]), abs=1e-10)


def test_bad_grid():
    assert run("f-curve", "--network", "sce56", "--grid", "2:1:0.5")[0] == 2


def test_reconfigure():
    code, text = run("reconfigure", "--network", "sce56")
    d = json.loads(text)
    assert code == 0 and d["converged"] and d["open_lines"] == [[20, 23]]


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "optbranch.cli", "validate", "--network", "sce56"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "ok\n"
