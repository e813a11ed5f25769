import csv
import hashlib
import json
from pathlib import Path

import pytest

from sparsecode import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(args, monkeypatch=None, threads=None):
    if monkeypatch is not None and threads is not None:
        monkeypatch.setenv("SPARSECODE_THREADS", str(threads))
    return cli.main([str(a) for a in args])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


class TestParsing:
    def test_grids(self):
        assert cli.parse_int_list("25:100:25") == [25, 50, 75, 100]
        assert cli.parse_int_list("8,12,16") == [8, 12, 16]
        assert cli.parse_int_list(7) == [7]
        assert cli.parse_int_list([1, "3:5:1"]) == [1, 3, 4, 5]
        assert cli.parse_float_list("0.1,0.3") == [0.1, 0.3]
        for bad in ("1:2", "5:1:1", "1:5:0", "a,b", True):
            with pytest.raises(cli.UsageError):
                cli.parse_int_list(bad)

    def test_grid_text(self):
        assert cli.grid_text([25, 50, 75, 100]) == "25:100:25"
        assert cli.grid_text([8, 12, 20]) == "8,12,20"

    def test_fmt(self):
        assert cli.fmt(0.1) == "0.10000000000000001"
        assert cli.fmt(3) == "3"
        assert cli.fmt(None) == ""
        assert float(cli.fmt(1 / 3)) == 1 / 3


class TestRun:
    def test_bound_example(self, tmp_path):
        out = tmp_path / "b.csv"
        assert run(["bound", "--channel", "bsc", "--eps", "0.11", "--n", "200", "--k", "100",
                    "--ensemble", "bernoulli", "--rho", "0.3", "--output", out]) == 0
        table = rows(out)
        assert ",".join(table[0]) == cli.HEADERS["bound"]
        assert len(table) == 2
        value, pe = float(table[1][7]), float(table[1][8])
        assert 0 < value < 1 and abs(value + pe - 1) < 1e-12

    def test_headers_exact(self):
        assert cli.HEADERS["bound"] == "channel,eps,ensemble,n,k,rho_or_w,window,value,pe_upper"
        assert cli.HEADERS["rate-curve"] == "n,eps,target_pe,ensemble,rho_or_w,k_star,rate,capacity,normal_approx_rate"
        assert cli.HEADERS["exponent"] == "rho_or_w,R_over_C,slope_bits,r_squared,n_min,n_max"
        assert cli.HEADERS["rank-study"] == "m,k,ensemble,rho_or_w,trials,mean_rank,std_error"
        assert cli.HEADERS["convergence"] == "n,k,matrices,delta,fraction_above_delta"

    def test_rate_curve_capacity_column(self, tmp_path):
        out = tmp_path / "rc.csv"
        run(["rate-curve", "--eps", "0.11", "--target-pe", "0.1", "--rho", "0.1,0.3,0.5",
             "--n", "25:400:25", "--output", out])
        table = rows(out)
        assert len(table) == 1 + 3 * 16
        caps = {r[7] for r in table[1:]}
        assert len(caps) == 1 and abs(float(caps.pop()) - 0.5001) < 1e-4

    def test_manifest(self, tmp_path):
        out = tmp_path / "r.csv"
        run(["rank-study", "--m", "10,20", "--ensemble", "row_regular", "--rho", "0.25", "--trials", "5",
             "--output", out])
        manifest = json.loads((tmp_path / "r.csv.manifest.json").read_text())
        digest = hashlib.sha256(out.read_bytes()).hexdigest()
        assert manifest["outputs"] == {"r.csv": digest}
        assert manifest["config"]["command"] == "rank-study"
        assert manifest["config"]["m"] == "10,20"
        assert manifest["version"] == cli.__version__
        assert manifest["started"] <= manifest["finished"]
        # 10 * 0.25 = 2.5 rounds half-up to 3
        assert {"k": 10, "rho": 0.25, "row_weight": 3} in manifest["row_weight_rounding"]

    def test_exponent_points_file(self, tmp_path):
        out = tmp_path / "e.csv"
        run(["exponent", "--eps", "0.05", "--r-over-c", "0.8", "--rho", "0.5", "--n", "100:300:100",
             "--output", out])
        points = rows(tmp_path / "e_points.csv")
        assert ",".join(points[0]) == cli.HEADERS["exponent-points"] and len(points) == 4
        manifest = json.loads((tmp_path / "e.csv.manifest.json").read_text())
        assert set(manifest["outputs"]) == {"e.csv", "e_points.csv"}

    def test_config_and_override(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"eps": 0.11, "n": 100, "k": 40, "rho": 0.3, "output": str(tmp_path / "a.csv")}))
        run(["bound", "--config", cfg])
        run(["bound", "--config", cfg, "--k", "50", "--output", tmp_path / "b.csv"])
        assert rows(tmp_path / "a.csv")[1][4] == "40"
        assert rows(tmp_path / "b.csv")[1][4] == "50"

    def test_every_command_runs(self, tmp_path):
        small = {
            "bec-bound": ["--eps", "0.2", "--n", "30", "--k", "10", "--rho", "0.3", "--trials", "10"],
            "simulate": ["--eps", "0.1", "--n", "10", "--k", "4", "--rho", "0.3", "--trials", "5"],
            "convergence": ["--eps", "0.1", "--rate", "0.5", "--n", "6,8", "--matrices", "3"],
            "sweep-density": ["--eps", "0.05", "--r-over-c", "0.8", "--gamma", "0.5", "--n", "50,100"],
            "oracle-check": ["--n", "1:2:1", "--k", "1:2:1", "--eps", "0.1", "--rho", "0.3"],
        }
        for cmd, args in small.items():
            out = tmp_path / f"{cmd}.csv"
            assert run([cmd, *args, "--output", out]) == 0
            table = rows(out)
            assert ",".join(table[0]) == cli.HEADERS[cmd] and len(table) > 1


class TestErrors:
    def test_unknown_flag(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["bound", "--eps", "0.1", "--n", "5", "--k", "2", "--rho", "0.3", "--bogus", "1",
                 "--output", tmp_path / "x.csv"])
        assert exc.value.code == 2
        assert error_line(capsys)["error"] == "usage"

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"eps": 0.1, "n": 5, "k": 2, "rho": 0.3, "colour": "red"}))
        with pytest.raises(SystemExit) as exc:
            run(["bound", "--config", cfg, "--output", tmp_path / "x.csv"])
        assert exc.value.code == 2
        assert "colour" in error_line(capsys)["message"]

    @pytest.mark.parametrize("args", [
        ["--eps", "1.0", "--n", "5", "--k", "2", "--rho", "0.3"],
        ["--eps", "0.1", "--n", "0", "--k", "2", "--rho", "0.3"],
        ["--eps", "0.1", "--n", "5", "--rho", "0.3"],
        ["--eps", "0.1", "--n", "5", "--k", "2"],
        ["--eps", "0.1", "--n", "5", "--k", "2", "--rho", "0.3", "--trials", "0"],
        ["--eps", "0.5", "--n", "5", "--k", "2", "--rho", "0.3"],
    ])
    def test_invalid_values(self, tmp_path, capsys, args):
        with pytest.raises(SystemExit) as exc:
            run(["bound", *args, "--output", tmp_path / "x.csv"])
        assert exc.value.code == 2
        error_line(capsys)
        assert not (tmp_path / "x.csv").exists()

    def test_size_guard(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["simulate", "--eps", "0.1", "--n", "40", "--k", "30", "--rho", "0.3", "--output", tmp_path / "s.csv"])
        assert exc.value.code == 3
        assert error_line(capsys) == {
            "error": "size_guard", "guard": "posterior.k<=24",
            "message": "posterior.k<=24: k=30 exceeds the enumeration guard",
        }

    def test_bad_threads(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SPARSECODE_THREADS", "many")
        with pytest.raises(SystemExit) as exc:
            run(["bound", "--eps", "0.1", "--n", "5", "--k", "2", "--rho", "0.3", "--output", tmp_path / "x.csv"])
        assert exc.value.code == 2


class TestDeterminism:
    @pytest.mark.parametrize("name", ["rate_curve_bsc", "bound_bsc", "bound_bec", "rank_study_row_regular"])
    def test_repeat_and_threads(self, tmp_path, monkeypatch, name):
        cfg = CONFIGS / f"{name}.json"
        command = json.loads(cfg.read_text())["command"]
        outputs = []
        for i, threads in enumerate((0, 0, 1, 4)):
            out = tmp_path / f"{i}.csv"
            run([command, "--config", cfg, "--output", out], monkeypatch, threads)
            outputs.append(out.read_bytes())
        assert len(set(outputs)) == 1

    def test_shipped_configs_valid(self):
        for path in sorted(CONFIGS.glob("*.json")):
            data = json.loads(path.read_text())
            cmd = data.pop("command")
            cfg = cli.resolve_config(cmd, data, {})
            assert cfg["output"]
