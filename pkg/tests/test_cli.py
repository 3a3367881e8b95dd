import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsol import cli
from fracsol.io import load_field, read_csv, save_field
from fracsol.spectral import Field, SpectralGrid


def manifests(root):
    return sorted(root.rglob("manifest.json"))


class TestExitCodes:
    def test_empty_argv(self, capsys):
        assert cli.main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_order_out_of_range(self, capsys, tmp_path):
        assert cli.main(["ode", "--s", "1.5", "--out", str(tmp_path / "t.csv")]) == 2
        assert "(0, 1]" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["nope"], ["ode", "--T", "-1"], ["ground", "--n", "x"],
                                      ["linops", "--probe", "other"]])
    def test_bad_flags(self, argv):
        assert cli.main(argv) == 2

    def test_domain_error_after_parse(self, tmp_path):
        out = tmp_path / "run"
        code = cli.main(["ode", "--x0", "1,2", "--v0", "1", "--out", str(out / "t.csv")])
        assert code == 2
        data = json.loads((out / "manifest.json").read_text())
        assert data["status"] == "failed" and "DomainError" in data["error"]

    def test_numerical_error(self, tmp_path):
        out = tmp_path / "ev"
        code = cli.main(["evolve", "--eps", "0.2", "--potential", "zero", "--v0", "3", "--T", "2",
                         "--box", "4", "--n", "512", "--dt", "1e-3", "--q-n", "1024", "--q-box", "20",
                         "--out", str(out)])
        assert code == 3
        data = json.loads((out / "manifest.json").read_text())
        assert data["status"] == "failed" and "BoundaryError" in data["error"]
        assert any("boundary" in g for g in data["guards"])
        header, rows = read_csv(out / "diagnostics.csv")
        assert header == ["t", "mass", "E_eps", "halfnorm"] and rows

    def test_module_entry(self):
        res = subprocess.run([sys.executable, "-m", "fracsol"], capture_output=True, text=True)
        assert res.returncode == 2 and "usage" in res.stderr


class TestManifest:
    def test_round_trip(self, tmp_path):
        cfg = cli.RunConfig("ode", {"s": 0.5, "x0": [1.0, 2.0], "method": "rk4"}, 7, str(tmp_path))
        path = cli.emit_manifest(cli.RunManifest(cfg, "0"), tmp_path / "manifest.json")
        assert cli.load_manifest(path)["config"] == cfg

    def test_run_writes_one_manifest(self, tmp_path):
        out = tmp_path / "ode" / "traj.csv"
        assert cli.main(["ode", "--s", "0.5", "--T", "1", "--out", str(out)]) == 0
        found = manifests(tmp_path)
        assert found == [out.parent / "manifest.json"]
        data = cli.load_manifest(found[0])
        assert data["status"] == "complete"
        assert data["config"].params["s"] == 0.5
        assert cli.main(["ode", "--s", "0.5", "--T", "1", "--out", str(out)]) == 0
        assert manifests(tmp_path) == found

    def test_reproduces_from_manifest(self, tmp_path):
        out = tmp_path / "a" / "traj.csv"
        cli.main(["ode", "--s", "0.75", "--T", "2", "--out", str(out)])
        cfg = cli.load_manifest(out.parent / "manifest.json")["config"]
        cfg.out = str(tmp_path / "b" / "traj.csv")
        assert cli.run(cfg) == 0
        assert (tmp_path / "b" / "traj.csv").read_bytes() == out.read_bytes()


class TestConfig:
    def test_file_and_precedence(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("# trajectory\ns = 0.5\nT = 3   # final time\nmethod = rk4\n")
        args = cli.parse_args(["ode", "--config", str(conf), "--T", "2"])
        assert args.s == 0.5 and args.T == 2.0 and args.method == "rk4"

    def test_flag_names_accepted(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("--reg-floor = 1e-3\n")
        assert cli.parse_args(["ode", "--config", str(conf)]).reg_floor == 1e-3

    @pytest.mark.parametrize("text", ["bogus = 1\n", "s = 2\n", "method = euler\n", "no separator\n"])
    def test_bad_config(self, tmp_path, text):
        conf = tmp_path / "run.conf"
        conf.write_text(text)
        assert cli.main(["ode", "--config", str(conf), "--out", str(tmp_path / "t.csv")]) == 2
        assert not (tmp_path / "manifest.json").exists()

    def test_missing_config(self, tmp_path):
        assert cli.main(["ode", "--config", str(tmp_path / "none")]) == 2


class TestOutputs:
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31), complex_=st.booleans(), dim=st.sampled_from([1, 2]))
    def test_field_round_trip(self, tmp_path_factory, seed, complex_, dim):
        rng = np.random.default_rng(seed)
        g = SpectralGrid(dim, 16, 3.0)
        vals = rng.standard_normal(g.shape)
        if complex_:
            vals = vals + 1j * rng.standard_normal(g.shape)
        f = Field(g, vals)
        prefix = tmp_path_factory.mktemp("dump") / "f"
        save_field(f, prefix)
        back = load_field(prefix)
        assert back.grid == g
        assert back.values.dtype == f.values.dtype
        assert back.values.tobytes() == f.values.tobytes()

    def test_trajectory_columns(self, tmp_path):
        out = tmp_path / "t.csv"
        cli.main(["ode", "--T", "1", "--sample-dt", "0.1", "--out", str(out)])
        header, rows = read_csv(out)
        assert header == ["t", "x1", "x2", "xi1", "xi2", "H"]
        assert len(rows) == 11

    def test_ground_outputs(self, tmp_path):
        prefix = tmp_path / "g" / "Q"
        assert cli.main(["ground", "--n", "512", "--box", "20", "--out", str(prefix)]) == 0
        Q = load_field(prefix)
        assert Q.grid.n == 512
        rep = json.loads((tmp_path / "g" / "Q_identities.json").read_text())
        assert rep["residual"] < 1e-9
        assert manifests(tmp_path) == [tmp_path / "g" / "manifest.json"]

    def test_fit_of_ground_dump(self, tmp_path):
        prefix = tmp_path / "g" / "Q"
        cli.main(["ground", "--n", "512", "--box", "20", "--out", str(prefix)])
        assert cli.main(["fit", "--field", str(prefix), "--out", str(tmp_path / "fit")]) == 0
        fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
        assert fit["dist_sq"] < 1e-12

    @pytest.mark.parametrize("probe", ["kernel", "identities"])
    def test_linops(self, tmp_path, probe):
        assert cli.main(["linops", "--n", "256", "--box", "20", "--probe", probe, "--out", str(tmp_path)]) == 0
        assert (tmp_path / f"linops_{probe}.json").exists()

    def test_evolve_outputs_deterministic(self, tmp_path):
        argv = ["evolve", "--eps", "0.2", "--T", "0.1", "--dt", "1e-3", "--q-n", "1024", "--q-box", "20",
                "--snap-every", "50", "--seed", "3"]
        for d in ("a", "b"):
            assert cli.main(argv + ["--out", str(tmp_path / d)]) == 0
        a, b = (tmp_path / d / "diagnostics.csv" for d in ("a", "b"))
        assert a.read_bytes() == b.read_bytes()
        snaps = sorted((tmp_path / "a" / "snapshots").glob("*.json"))
        assert len(snaps) == 3
        data = json.loads((tmp_path / "a" / "manifest.json").read_text())
        resolved = data["checks"][0]
        assert resolved["eps"] == 0.2 and resolved["n"] >= 8 * 2 * resolved["box"] / 0.2


class TestVerifyAndSweep:
    def test_verify_quick_only(self, tmp_path, capsys):
        assert cli.main(["verify", "--suite", "quick", "--only", "3", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "criterion  3 PASS" in out
        data = json.loads((tmp_path / "acceptance.json").read_text())
        assert [r["number"] for r in data["results"]] == [3]

    def test_verify_endpoint_bundle(self, tmp_path):
        assert cli.main(["verify", "--suite", "endpoint-s1", "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "acceptance.json").read_text())
        assert len(data["results"]) == 10 and all(r["passed"] for r in data["results"])

    def test_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FRACSOL_THREADS", "0")
        assert cli.main(["sweep", "--eps", "0.2", "--T", "0.01", "--out", str(tmp_path)]) == 2
        monkeypatch.setenv("FRACSOL_THREADS", "two")
        with pytest.raises(cli.UsageError):
            cli.thread_count()
        monkeypatch.setenv("FRACSOL_THREADS", "3")
        assert cli.thread_count() == 3

    def test_sweep_parallel_matches_serial(self, tmp_path, monkeypatch):
        argv = ["sweep", "--eps", "0.2,0.1", "--T", "0.05", "--dt", "1e-3"]
        monkeypatch.setenv("FRACSOL_THREADS", "1")
        assert cli.main(argv + ["--out", str(tmp_path / "serial")]) == 0
        monkeypatch.setenv("FRACSOL_THREADS", "2")
        assert cli.main(argv + ["--out", str(tmp_path / "pool")]) == 0
        for name in ("sweep_runs.csv", "sweep_orders.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()
        guards = json.loads((tmp_path / "pool" / "manifest.json").read_text())["guards"]
        assert "workers: 2" in guards

    def test_sweep_order_range(self, tmp_path):
        assert cli.main(["sweep", "--s", "0.5,1.2", "--out", str(tmp_path)]) == 2
