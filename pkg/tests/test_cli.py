import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ionsim import cli
from ionsim.interferometer import FringeDataset
from ionsim.noise import AllanResult


def run(tmp_path, command, config=None, *extra, out="out"):
    args = [command, "--out", str(tmp_path / out)]
    if config is not None:
        path = tmp_path / f"{command}_{out}.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return cli.main(args + list(extra))


def read(tmp_path, name, out="out"):
    return (tmp_path / out / name).read_text()


def fit_value(report, key):
    for line in report.splitlines():
        if line.startswith(key + "="):
            return float(line.split("=", 1)[1])
    raise KeyError(key)


def test_print_defaults(capsys):
    assert cli.main(["fringe", "--print-defaults"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["eta"] == 0.35
    assert math.isclose(d["omega_z"], 2 * math.pi * 3.63e6)
    for cmd in ("allan", "compile"):
        assert cli.main([cmd, "--print-defaults"]) == 0


@pytest.mark.parametrize("n", [1, 3])
def test_fringe_fit_frequency(tmp_path, n):
    assert run(tmp_path, "fringe", {"order": n}) == 0
    rep = read(tmp_path, "fringe_fit.txt")
    assert abs(fit_value(rep, "fit_frequency_over_delta_omega_z") - n) < 1e-3 * n
    data = FringeDataset.from_csv(read(tmp_path, "fringe.csv"))
    assert len(data) == 101


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "fringe", {"contrast": 1.2}) == 2
    assert "contrast" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()
    assert run(tmp_path, "allan", {"bogus": 1}) == 2
    assert "bogus" in capsys.readouterr().err
    assert run(tmp_path, "allan", {"shots": "many"}) == 2
    assert "shots" in capsys.readouterr().err
    assert run(tmp_path, "allan", {"N_b": [2]}) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["fringe", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["nonsense"]) == 2
    assert cli.main(["fringe", "--seed", "-1", "--out", str(tmp_path / "y")]) == 2


def test_allan_tracks_sql(tmp_path):
    assert run(tmp_path, "allan") == 0
    res = AllanResult.from_csv(read(tmp_path, "allan.csv"))
    sql = np.array([1 / math.sqrt(n) for n in res.N_b])
    assert np.all(np.abs(res.delta_phi / sql - 1) < 0.15)


def test_allan_order_two_halves_delta_phi(tmp_path):
    assert run(tmp_path, "allan", {"order": 1}, out="a") == 0
    assert run(tmp_path, "allan", {"order": 2}, out="b") == 0
    a = AllanResult.from_csv(read(tmp_path, "allan.csv", "a"))
    b = AllanResult.from_csv(read(tmp_path, "allan.csv", "b"))
    assert abs(np.exp(np.mean(np.log(b.delta_phi / a.delta_phi))) - 0.5) < 0.05


def test_outputs_are_byte_identical_and_stamped(tmp_path):
    for out in ("r1", "r2"):
        assert run(tmp_path, "allan", {"shots": 5000, "N_b": [4, 8]}, "--seed", "42", out=out) == 0
    a, b = read(tmp_path, "allan.csv", "r1"), read(tmp_path, "allan.csv", "r2")
    assert a == b
    head = a.splitlines()[0]
    assert "config_sha256=" in head and "seed=42" in head
    assert run(tmp_path, "allan", {"shots": 5000, "N_b": [4, 8]}, "--seed", "43", out="r3") == 0
    assert read(tmp_path, "allan.csv", "r3") != a


def test_sampled_fringe_deterministic(tmp_path):
    cfg = {"shots": 200, "points": 20}
    assert run(tmp_path, "fringe", cfg, out="f1") == 0
    assert run(tmp_path, "fringe", cfg, out="f2") == 0
    assert read(tmp_path, "fringe.csv", "f1") == read(tmp_path, "fringe.csv", "f2")


def test_compile_carrier(tmp_path):
    (tmp_path / "c.txt").write_text("SP 0 0 0.5 0\nHERMITIZE\n")
    assert cli.main(["compile", "--expr", str(tmp_path / "c.txt"), "--out", str(tmp_path / "o")]) == 0
    prog = [l for l in read(tmp_path, "program.txt", "o").splitlines() if not l.startswith("#")]
    assert len(prog) == 1 and prog[0].startswith("PULSE eps=1 l=0")
    rep = read(tmp_path, "compile_report.txt", "o")
    err = float([l for l in rep.splitlines() if l.startswith("measured_error")][0].split()[1])
    assert err < 1e-10


def test_compile_error_drops_with_delta_t(tmp_path):
    (tmp_path / "e.txt").write_text("I 1 2 0 1\nHERMITIZE\n")
    errs = []
    for i, dt in enumerate(("0.01", "0.005")):
        out = f"o{i}"
        args = ["compile", "--expr", str(tmp_path / "e.txt"), "--time", "0.05", "--delta-t", dt, "--depth", "1"]
        assert cli.main(args + ["--out", str(tmp_path / out)]) == 0
        rep = read(tmp_path, "compile_report.txt", out)
        errs.append(float([l for l in rep.splitlines() if l.startswith("measured_error")][0].split()[1]))
        assert len(read(tmp_path, "program.txt", out).splitlines()) > 10
    assert errs[1] < errs[0]


def test_compile_unreachable_exit_4(tmp_path, capsys):
    cfg = {"expr": "I 5 0 1 0\nHERMITIZE\n", "depth": 1}
    assert run(tmp_path, "compile", cfg) == 4
    assert "(a+)^5" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_compile_parse_error_exit_2(tmp_path, capsys):
    assert run(tmp_path, "compile", {"expr": "I 1 2 0 1\nI 1 x 0 1\n"}) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column 5" in err


def test_physics_error_exit_3(tmp_path, capsys):
    cfg = {"expr": "I 2 0 3 0\nHERMITIZE\n", "time": 1.0, "n_max": 3, "padding": 2}
    assert run(tmp_path, "compile", cfg) == 3
    assert "truncation" in capsys.readouterr().err


def test_atomic_write_cleans_up(tmp_path, monkeypatch):
    calls = []
    real = os.replace

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        real(src, dst)

    monkeypatch.setattr(os, "replace", flaky)
    with pytest.raises(OSError):
        cli.write_atomic(str(tmp_path), [("a.txt", "1"), ("b.txt", "2")])
    assert os.listdir(tmp_path) == []


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ionsim.cli", "fringe", "--print-defaults"], capture_output=True, text=True, check=True
    )
    assert json.loads(proc.stdout)["order"] == 1
