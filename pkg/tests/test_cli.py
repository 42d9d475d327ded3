import hashlib
import json
from pathlib import Path

import pytest

from sllnlab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, *args, config_text=None, name="cfg.ini"):
    argv = list(args)
    if config_text is not None:
        p = tmp_path / name
        p.write_text(config_text)
        argv += ["--config", str(p)]
    return main(argv + ["--out", str(tmp_path / "out")])


def test_help_and_usage(capsys, tmp_path):
    assert main(["--help"]) == 0
    assert "usage: sllnlab" in capsys.readouterr().out
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert run(tmp_path, "slln", config_text="") == 2
    assert "empty config" in capsys.readouterr().err


def test_list(capsys):
    assert main(["slln", "--list"]) == 0
    assert "checkpoints (ints)" in capsys.readouterr().out
    assert main(["paper-suite", "--list"]) == 0
    assert "11" in capsys.readouterr().out


def test_config_error_names_line(capsys, tmp_path):
    code = run(tmp_path, "slln", config_text="[generator]\nkind = zero\nalpha = one\n")
    assert code == 2
    assert "cfg.ini:3: [generator] alpha: expected a real number" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["slln", "--config", str(tmp_path / "nope.ini")]) == 2


def test_toeplitz_exit_codes(tmp_path):
    assert main(["toeplitz", "--config", str(CONFIGS / "toeplitz.ini"), "--out", str(tmp_path / "a")]) == 0
    assert main(["toeplitz", "--config", str(CONFIGS / "toeplitz.ini"), "--set", "toeplitz.input=constant", "--out", str(tmp_path / "b")]) == 1
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["strict_decrease_per_doubling"]
    assert (tmp_path / "a" / "tail_sup.csv").read_text().startswith("N,tail_sup\n")


def test_manifest_deterministic(tmp_path):
    args = ["toeplitz", "--config", str(CONFIGS / "toeplitz.ini"), "--set", "toeplitz.n_max=10"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    m1 = (tmp_path / "a" / "manifest.json").read_bytes()
    m = json.loads(m1)
    assert m["command"] == "toeplitz" and m["config"]["toeplitz"]["n_max"] == 10
    assert "results" not in m


def test_slln_zero_and_iid(tmp_path):
    assert main(["slln", "--config", str(CONFIGS / "slln_zero.ini"), "--out", str(tmp_path / "z")]) == 0
    code = main([
        "slln", "--config", str(CONFIGS / "slln_iid_sas.ini"), "--set", "slln.replicates=8",
        "--set", "slln.checkpoints=16,64,256", "--out", str(tmp_path / "i"),
    ])
    assert code == 0
    s = json.loads((tmp_path / "i" / "summary.json").read_text())
    assert s["decayed"]


def test_inadmissible_plan_exit_2(capsys, tmp_path):
    text = "[generator]\nkind = iid_gauss\nd = 1\n[slln]\nphi = power(0.5)\np = 2\ncheckpoints = 4, 16\n"
    assert run(tmp_path, "slln", config_text=text) == 2
    assert "C_low^floor(log2 a)" in capsys.readouterr().err


def _simulate(tmp_path, name, threads):
    out = tmp_path / name
    code = main([
        "simulate", "--config", str(CONFIGS / "simulate_lfss_2d.ini"), "--set", "simulate.shape=32,24",
        "--set", "generator.grid=0.25", "--set", "generator.uniform_zone=4", "--threads", str(threads), "--out", str(out),
    ])
    assert code == 0
    return hashlib.sha256((out / "field.bin").read_bytes()).hexdigest(), json.loads((out / "summary.json").read_text())


def test_simulate_thread_independent(tmp_path):
    a, sa = _simulate(tmp_path, "t1", 1)
    b, _ = _simulate(tmp_path, "t8", 8)
    assert a == b == sa["sha256"]
    assert sa["shape"] == [32, 24] and sa["origin"] == [1, 1]


def test_simulate_memory_budget_exit_3(capsys, tmp_path):
    text = "[generator]\nkind = lfss\nhurst = 0.8\n[simulate]\nshape = 64\nmemory_budget = 1000\n"
    assert run(tmp_path, "simulate", config_text=text) == 3
    assert "allowed 1000 bytes" in capsys.readouterr().err


def test_simulate_csv(tmp_path):
    text = "[generator]\nkind = iid_gauss\nd = 2\n[simulate]\nshape = 3, 2\nformat = both\n"
    assert run(tmp_path, "simulate", config_text=text) == 0
    lines = (tmp_path / "out" / "field.csv").read_text().splitlines()
    assert lines[0] == "k1,k2,value" and len(lines) == 7


def test_quasi_stationary_construction_error(tmp_path):
    text = "[generator]\nkind = quasi_stationary\nd = 2\nar = 1.0, 0.2\n[simulate]\nshape = 4\n"
    assert run(tmp_path, "simulate", config_text=text) == 2


def test_estimate_moments_abs(tmp_path):
    text = "[moments]\ntarget = abs\nreplicates = 20000\n[sampler]\nkind = gauss\n"
    assert run(tmp_path, "estimate-moments", config_text=text) == 0
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert s["value"] == pytest.approx(0.7979, rel=0.02)


def test_check_conditions_expectations(tmp_path):
    text = (
        "[generator]\nkind = iid_gauss\n"
        "[check.ok]\nphi = power(1.5)\np = 2\nn_max = 4\nreplicates = 500\nexpect = converges\n"
        "[check.bad]\nkind = corollary\nphi = power(1.5)\np = 2\nn_max = 12\ng_power = 3\nexpect = converges\n"
    )
    assert run(tmp_path, "check-conditions", config_text=text) == 1
    assert run(tmp_path, "check-conditions", "--set", "check.bad.expect=diverges", config_text=text) == 0


def test_paper_suite_single_criterion(tmp_path):
    assert main(["paper-suite", "--set", "suite.criteria=3", "--out", str(tmp_path / "a")]) == 0
    assert main(["paper-suite", "--set", "suite.criteria=3,99", "--out", str(tmp_path / "b")]) == 2
    assert main(["paper-suite", "--set", "suite.criteria=1", "--set", "tolerance.c1_ecf=0", "--out", str(tmp_path / "c")]) == 1


def test_check_conditions_lfss_dichotomy(tmp_path):
    cfg = str(CONFIGS / "lfss_conditions.ini")
    assert main(["check-conditions", "--config", cfg, "--set", "check.with-log.replicates=1000", "--set", "check.no-log.replicates=1000", "--out", str(tmp_path / "a")]) == 0
    assert main(["check-conditions", "--config", cfg, "--set", "check.with-log.replicates=1000", "--set", "check.no-log.replicates=1000", "--set", "check.no-log.expect=converges", "--out", str(tmp_path / "b")]) == 1


def test_slln_negative_control_behaves(tmp_path):
    code = main([
        "slln", "--config", str(CONFIGS / "slln_negative_control.ini"), "--set", "slln.replicates=8",
        "--set", "slln.checkpoints=16,64,256", "--out", str(tmp_path / "n"),
    ])
    assert code == 0
    s = json.loads((tmp_path / "n" / "summary.json").read_text())
    assert not s["decayed"] and s["expectation_met"]


def test_simulate_header_and_repeatability(tmp_path):
    import struct

    args = ["simulate", "--config", str(CONFIGS / "simulate_lfss_2d.ini"), "--set", "simulate.shape=64,48", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "field.bin").read_bytes()
    assert a == (tmp_path / "b" / "field.bin").read_bytes()
    assert a[:4] == b"SLLF"
    assert struct.unpack_from("<II", a, 4) == (1, 2)
    assert struct.unpack_from("<2Q", a, 12) == (64, 48)
    (glen,) = struct.unpack_from("<I", a, 44)
    assert a[48 : 48 + glen].decode().startswith("lfss(H=(0.8,0.7),alpha=1.5")
    assert struct.unpack_from("<Q", a, 48 + glen) == (7,)


def test_sphere_geometry_requires_norm(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[generator]\nkind = iid_gauss\nd = 2\n[check.ball]\ngeometry = sphere\nphi = power(1.5)\np = 2\nn_max = 2\nreplicates = 10\n")
    assert main(["check-conditions", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "[check.ball] norm: required for sphere geometry" in capsys.readouterr().err
    assert main(["check-conditions", "--config", str(cfg), "--set", "check.ball.norm=linf", "--out", str(tmp_path / "p")]) == 0
