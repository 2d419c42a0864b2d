import json
import subprocess
import sys
from pathlib import Path

import pytest

from kplab.cli import build_parser, example_evolve_config, load_config, main, parse_evolve_config

ROOT = Path(__file__).resolve().parents[1]


def test_parser_has_all_subcommands():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == {
        "soliton-check", "threshold", "spectrum", "sigma-curve", "evolve",
        "stability", "instability", "manifold", "sweep",
    }


def test_reference_config_matches_builtin():
    assert load_config(ROOT / "configs" / "evolve_reference.toml") == example_evolve_config()


def test_config_is_strict():
    data = example_evolve_config()
    del data["evolve"]["blowup_factor"]
    with pytest.raises(ValueError):
        parse_evolve_config(data)
    data = example_evolve_config()
    data["grid"]["extra"] = 1
    with pytest.raises(ValueError):
        parse_evolve_config(data)
    data = example_evolve_config()
    data["evolve"]["dt"] = "auto"
    assert parse_evolve_config(data)[1].dt is None


def test_soliton_check_writes_run_dir(tmp_path):
    out = tmp_path / "run"
    assert main(["soliton-check", "--out", str(out), "--quiet"]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert len(cfg["hash"]) == 64
    assert (out / "report.json").exists()


def test_failing_check_gives_nonzero_exit(tmp_path):
    assert main(["soliton-check", "--Nx", "64", "--out", str(tmp_path / "r"), "--quiet"]) == 1


def test_spectrum_csv(tmp_path):
    out = tmp_path / "s"
    assert main(["spectrum", "--Nx", "128", "--out", str(out), "--quiet"]) == 0
    head = next(p for p in out.iterdir() if p.suffix == ".csv").read_text().splitlines()[0]
    assert "verdict" in head


def test_evolve_json_config(tmp_path):
    data = example_evolve_config()
    data["grid"].update(Nx=128, Ny=8)
    data["evolve"].update(T_final=0.2, monitor_every=5, snapshot_every=10)
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps(data))
    out = tmp_path / "e"
    assert main(["evolve", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert (out / "series.csv").exists()
    assert any(p.suffix == ".kpf" for p in out.iterdir())


def test_sweep_command(tmp_path):
    cells = tmp_path / "cells.json"
    cells.write_text(json.dumps({"kind": "threshold", "cells": [{"c": 2.0, "Lx": 80.0, "Nx": 128}]}))
    out = tmp_path / "sw"
    assert main(["sweep", str(cells), "--out", str(out), "--quiet"]) == 0
    assert (out / "results.csv").exists()
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps([{"c": 2.0, "Lx": 80.0, "Nx": 128}]))
    assert main(["sweep", str(bare), "--out", str(out), "--quiet"]) == 1


def test_error_exit_code(tmp_path):
    # box too small for the soliton tail
    assert main(["soliton-check", "--Lx", "10", "--Nx", "64", "--out", str(tmp_path / "x"), "--quiet"]) == 1


def test_console_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "kplab.cli", "soliton-check", "--out", str(tmp_path / "m")],
        capture_output=True, text=True,
    )
    assert r.returncode == 0
    assert "check residual: PASS" in r.stdout
