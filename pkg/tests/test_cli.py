"""Command-line interface: subcommands, exit codes, deterministic output."""

import subprocess
import sys
from pathlib import Path

import pytest

from biotfv.app.cli import main

CASES = Path(__file__).resolve().parent.parent / "cases"

BARRIER_SMALL = """
[case]
name = small

[mesh]
builder = barrier
nx = 6
ny = 4
nz = 2
lx = 60 m
ly = 40 m
lz = 20 m
barrier_index = 3

[properties]
mu = 3.5 GPa
lambda = 4 GPa
alpha = 0.87
c0 = 1e-8 1/Pa
permeability = 100 mD
fluid_viscosity = 1 cP

[time]
dt = 10 day
n_steps = 3

[scheme]
tol = 1e-8
max_iter = 40

[well.w]
cell = 1 2 1
rate = 5 m3/day
"""

MANUFACTURED_SMALL = """
[case]
name = tinyman
problem = manufactured

[mesh]
nx = 4
ny = 4
nz = 4

[properties]
mu = 0.01 Pa
lambda = 1 Pa
alpha = 1.0
c0 = 0.01 1/Pa
permeability = 1 Darcy
fluid_viscosity = 5e-4 Pa.s

[time]
dt = 50 day
n_steps = 2

[scheme]
kind = lagged
"""


@pytest.fixture
def barrier_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(BARRIER_SMALL + f"\n[output]\ndirectory = {tmp_path / 'out'}\n")
    return path


@pytest.fixture
def manufactured_cfg(tmp_path):
    path = tmp_path / "tinyman.cfg"
    path.write_text(
        MANUFACTURED_SMALL + f"\n[output]\ndirectory = {tmp_path / 'out'}\n"
    )
    return path


def test_run_success(barrier_cfg, tmp_path, capsys):
    assert main(["run", str(barrier_cfg)]) == 0
    out = capsys.readouterr().out
    assert "mass defect" in out
    for name in ("small_series.csv", "small_psi.csv", "small_final.vtk"):
        assert (tmp_path / "out" / name).exists()


def test_run_dump_matrix(barrier_cfg, tmp_path):
    assert main(["run", str(barrier_cfg), "--dump-matrix"]) == 0
    assert (tmp_path / "out" / "small_mech.mtx").exists()


def test_run_is_deterministic(barrier_cfg, tmp_path):
    assert main(["run", str(barrier_cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(barrier_cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("small_series.csv", "small_psi.csv", "small_final.vtk"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(BARRIER_SMALL + "\n[solver]\nwarp_factor = 9\n")
    assert main(["run", str(bad)]) == 2


def test_bad_cli_overrides_exit_2(barrier_cfg):
    assert main(["run", str(barrier_cfg), "--rtol", "-1"]) == 2
    assert main(["run", str(barrier_cfg), "--max-iter", "0"]) == 2
    assert main(["convergence", str(barrier_cfg), "--grids", "a,b,c"]) == 2


def test_solver_failure_exits_3(tmp_path, capsys):
    cfg = tmp_path / "hard.cfg"
    cfg.write_text(
        BARRIER_SMALL
        + f"\n[solver]\nmethod = iterative\n[output]\ndirectory = {tmp_path / 'o'}\n"
    )
    assert main(["run", str(cfg), "--max-iter", "1"]) == 3
    assert "solver failure" in capsys.readouterr().err


def test_unwritable_output_exits_4(barrier_cfg, tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory")
    assert main(["run", str(barrier_cfg), "--out", str(blocker / "sub")]) == 4
    assert "i/o error" in capsys.readouterr().err


def test_convergence_subcommand(manufactured_cfg, tmp_path, capsys):
    out = tmp_path / "conv"
    assert main(["convergence", str(manufactured_cfg), "--grids", "3,4,5", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "order dp" in stdout
    assert (out / "convergence_errors.csv").exists()
    assert (out / "convergence_orders.csv").exists()


def test_convergence_rejects_two_grids(manufactured_cfg):
    assert main(["convergence", str(manufactured_cfg), "--grids", "4,8"]) == 2


def test_barrier_subcommand(barrier_cfg, tmp_path, capsys):
    out = tmp_path / "bar"
    assert (
        main(["barrier", str(barrier_cfg), "--schemes", "lagged,fixed", "--out", str(out)])
        == 0
    )
    stdout = capsys.readouterr().out
    assert "scheme lagged" in stdout and "scheme fixed" in stdout
    assert (out / "barrier_summary.csv").exists()
    assert (out / "barrier_lagged.csv").exists()
    assert (out / "barrier_fixed.csv").exists()


def test_barrier_rejects_unknown_scheme(barrier_cfg):
    assert main(["barrier", str(barrier_cfg), "--schemes", "psychic"]) == 2


def test_module_invocation_round_trip(barrier_cfg, tmp_path):
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "biotfv.app.cli",
            "run",
            str(barrier_cfg),
            "--out",
            str(tmp_path / "sub"),
            "--log-level",
            "warning",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "sub" / "small_series.csv").exists()
