import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from sigma_collapse import records
from sigma_collapse.cli import main
from sigma_collapse.functionals import FieldState
from sigma_collapse.grid import RadialGrid

TINY = """# small enough for a unit test
k = 4
epsilon = 0.1
c0 = 0.1
grid.N = 301
grid.hin = 0.02
grid.rc = 2
grid.Rmax = 12
cfl = 0.5
T_end = 1.0
snapshot_stride = 5
regrid.depth = 0
out_dir = {out}
"""


def write_cfg(path, out, extra=""):
    path.write_text(TINY.format(out=out) + extra)
    return path


class TestCsv:
    def test_roundtrip_and_format(self, tmp_path):
        p = records.write_csv(tmp_path / "a.csv", ["x", "y", "s"], [{"x": 0.1, "y": None, "s": "ok"},
                                                                   [1, True, "z"]])
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw.splitlines()[1] == b"0.10000000000000001,,ok"
        rows = records.read_csv(p)
        assert rows[0] == {"x": 0.1, "y": None, "s": "ok"}
        assert rows[1] == {"x": 1.0, "y": 1.0, "s": "z"}

    def test_fmt_roundtrips_floats(self):
        for x in (math.pi, 1e-300, -2.5e17, 1 / 3):
            assert float(records.fmt(x)) == x


class TestConfig:
    def test_parse(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("a = 1  # trailing\n\n# full line\nb=x y\n")
        assert records.parse_config(p) == {"a": "1", "b": "x y"}

    def test_bad_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("just words\n")
        with pytest.raises(records.ConfigError):
            records.parse_config(p)


def test_snapshots_roundtrip(tmp_path):
    g = RadialGrid.two_zone(101, 0.05, 1.0, 10.0)
    w = records.SnapshotWriter(tmp_path)
    rng = np.random.default_rng(0)
    states = [FieldState(0.5 * i, rng.standard_normal(g.n), rng.standard_normal(g.n), g, 4) for i in range(3)]
    for s in states:
        w(s)
    back = list(records.read_snapshots(tmp_path))
    assert len(back) == 3
    for a, b in zip(states, back):
        assert a.t == b.t and np.array_equal(a.phi, b.phi) and np.array_equal(a.pi, b.pi)
        assert np.array_equal(b.grid.faces, g.faces)
    with pytest.raises(FileNotFoundError):
        list(records.read_snapshots(tmp_path / "missing"))


def test_manifest_checksums(tmp_path):
    f = tmp_path / "x.txt"
    f.write_text("hello\n")
    m = json.loads(records.write_manifest(tmp_path, [f], {"a": 1}, "completed").read_text())
    assert m["files"][0]["path"] == "x.txt"
    assert m["files"][0]["sha256"] == records.sha256(f)
    assert {"numpy", "scipy", "kernel_backend"} <= set(m["versions"])


class TestCli:
    def test_usage_errors(self, tmp_path, capsys):
        assert main([]) == 2
        assert main(["bogus"]) == 2
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 2
        p = tmp_path / "bad.cfg"
        p.write_text("T_end = 1\nout_dir = x\nmystery = 3\n")
        assert main(["simulate", "--config", str(p)]) == 2
        p.write_text("T_end = 1\n")
        assert main(["simulate", "--config", str(p)]) == 2

    def test_domain_error_exit_1(self, tmp_path):
        # R_max below T_end violates the boundary precondition
        cfg = write_cfg(tmp_path / "c.cfg", tmp_path / "run", "T_end = 30\n")
        assert main(["simulate", "--config", str(cfg)]) == 1

    def test_constants(self, tmp_path):
        out = tmp_path / "c.json"
        assert main(["constants", "--k", "4", "--out", str(out)]) == 0
        c = json.loads(out.read_text())
        assert c["a"] == pytest.approx(-1 / (2 * math.sqrt(2)), rel=1e-12)
        assert main(["constants", "--k", "2"]) == 1

    def test_ode(self, tmp_path):
        out = tmp_path / "ode.csv"
        C0 = 2 * math.pi / math.sin(math.pi / 4)
        assert main(["ode", "--variant", "riccati", "--C0", repr(C0), "--eps0", repr(0.1 / math.pi),
                     "--out", str(out)]) == 0
        rows = records.read_csv(out)
        half = [r for r in rows if r["t"] == pytest.approx(C0 / (0.1 / math.pi) / 2, rel=1e-14)]
        assert half and half[0]["lambda"] == pytest.approx(2.0, rel=1e-9)
        assert main(["ode", "--variant", "riccati", "--C0", repr(C0), "--eps0", repr(0.1 / math.pi),
                     "--out", str(tmp_path / "o2.csv"), "--fit", str(out)]) == 0
        fits = json.loads((tmp_path / "o2.csv.fit.json").read_text())
        assert fits["pure-self-similar"]["T_star"] == pytest.approx(C0 / (0.1 / math.pi), rel=1e-6)
        assert "T_star" in fits["log-modified"]

    def test_verify_operators(self, tmp_path):
        out = tmp_path / "v.json"
        assert main(["verify-operators", "--k", "4", "--grid", "uniform:N=2000,Rmax=20",
                     "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["potential"]["positivity"] and rep["residuals"]["HK"] < 1e-2

    def test_simulate_modulate_reproducible(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg = write_cfg(tmp_path / f"{name}.cfg", tmp_path / name)
            assert main(["simulate", "--config", str(cfg)]) == 0
            outs.append(json.loads((tmp_path / name / "manifest.json").read_text()))
        a, b = outs
        assert a["status"] == "completed"
        assert [f["sha256"] for f in a["files"]] == [f["sha256"] for f in b["files"]]
        assert len(a["files"]) >= 4
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert main(["modulate", "--run", str(tmp_path / "a"), "--out", str(tmp_path / "m")]) == 0
        rows = records.read_csv(tmp_path / "m" / "modulation.csv")
        assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)
        assert json.loads((tmp_path / "m" / "morawetz.json").read_text())["E_delta"] > 0

    def test_sweep(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(TINY.format(out=tmp_path / "sw").replace("epsilon = 0.1", "epsilon = 0.05, 0.1")
                       .replace("grid.N = 301", "grid.N = 301, 401"))
        env = dict(os.environ, SIGMA_COLLAPSE_THREADS="1")
        proc = subprocess.run([sys.executable, "-m", "sigma_collapse.cli", "sweep", "--config", str(cfg)],
                              env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        rows = records.read_csv(tmp_path / "sw" / "sweep.csv")
        assert len(rows) == 4
        assert {(r["epsilon"], r["grid.N"]) for r in rows} == {(0.05, 301), (0.05, 401), (0.1, 301), (0.1, 401)}
        assert all(r["status"] == "completed" for r in rows)
