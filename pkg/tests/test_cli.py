import csv
import json
import math
from pathlib import Path

import pytest

from ofdma_reuse.cli import main
from ofdma_reuse.system import CellScenario, SystemParams, write_scenario

DATA = Path(__file__).parent / "data"


def _close(got, want, path="$"):
    if isinstance(want, dict):
        assert set(got) == set(want), path
        for k in want:
            _close(got[k], want[k], f"{path}.{k}")
    elif isinstance(want, list):
        assert len(got) == len(want), path
        for i, (g, w) in enumerate(zip(got, want)):
            _close(g, w, f"{path}[{i}]")
    elif isinstance(want, float):
        if math.isnan(want):
            assert math.isnan(got), path
        else:
            assert got == pytest.approx(want, rel=1e-9, abs=1e-300), path
    else:
        assert got == want, path


def test_allocate_matches_golden(tmp_path):
    out = tmp_path / "alloc.json"
    assert main(["allocate", str(DATA / "two_user_scenario.json"), "--out", str(out)]) == 0
    got = json.loads(out.read_text())
    want = json.loads((DATA / "two_user_golden.json").read_text())
    got.pop("system")
    _close({k: got[k] for k in want}, want)


def test_allocate_accepts_config_flag(tmp_path, capsys):
    assert main(["allocate", "--config", str(DATA / "two_user_scenario.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["system"]["alpha"] == 0.5


def test_unknown_subcommand():
    assert main(["bogus"]) == 1
    assert main([]) == 1


def test_bad_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"trials": 0}))
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "trials" in capsys.readouterr().err
    cfg.write_text(json.dumps({"r_t_bps": [1e6], "colour": "red"}))
    assert main(["mse", "--config", str(cfg)]) == 1
    assert "colour" in capsys.readouterr().err
    cfg.write_text(json.dumps({"system": {"alpha": 2.0}}))
    assert main(["sensitivity", "--config", str(cfg)]) == 1
    assert "alpha" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["asymptotic", "--config", str(cfg)]) == 1
    assert main(["allocate", str(tmp_path / "missing.json")]) == 1


def test_asymptotic_header(tmp_path):
    cfg = tmp_path / "limits.json"
    cfg.write_text(json.dumps({"r_t_bps": [10e6], "exponents": [2], "alpha_grid": [0.3, 0.5, 0.7]}))
    out = tmp_path / "out"
    assert main(["asymptotic", "--config", str(cfg), "--out", str(out)]) == 0
    with open(out / "asymptotic_s2.csv") as fh:
        rows = list(csv.reader(fh))
    assert ",".join(rows[0]) == "alpha,r_t_bps,d_opt_m,q1,q2,q_t,feasible"
    assert len(rows) == 2 and rows[1][-1] == "true"
    with open(out / "asymptotic_s2_curve.csv") as fh:
        assert len(list(csv.reader(fh))) == 4
    assert json.loads((out / "config.json").read_text())["kind"] == "asymptotic_sweep"


def test_infeasible_scenario_exits_2(tmp_path):
    p = SystemParams(alpha=1.0)
    cells = (CellScenario.from_arrays([480.0, 490.0], 60e6, "A"), CellScenario.from_arrays([480.0, 490.0], 60e6, "B"))
    path = tmp_path / "hard.json"
    write_scenario(path, p, cells)
    assert main(["allocate", str(path)]) == 2
