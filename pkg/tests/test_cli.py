import json
import shutil
from pathlib import Path

import pytest

from rwreht.cli import ConfigError, load_config, main, parse_range, replay_manifest
from rwreht.io import RunManifest, format_value, read_csv, sha256_file, verify_manifest, write_csv

CONFIGS = Path(__file__).parents[1] / "configs"


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


class TestParsing:
    def test_inclusive_range(self):
        assert parse_range("0.1:0.9:0.1") == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        assert parse_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_list(self):
        assert parse_range("5,20,50") == [5.0, 20.0, 50.0]

    @pytest.mark.parametrize("bad", ["1:0:0.1", "0:1:0", "0:1", "a:b:c"])
    def test_bad_range(self, bad):
        with pytest.raises(ValueError):
            parse_range(bad)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.json"):
            load_config(tmp_path / "nope.json")

    def test_json_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "environment": {\n    "dim": 1,,\n  }\n}\n')
        with pytest.raises(ConfigError, match=r"bad\.json:3:"):
            load_config(p)

    def test_field_diagnostics(self, tmp_path):
        cfg = json.loads((CONFIGS / "srw1d.json").read_text())
        cfg["environment"]["laws"][0] = {"family": "gamma", "shape": -1, "scale": 1}
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        with pytest.raises(ConfigError, match=r"environment\.laws\[0\]"):
            load_config(p)
        cfg = json.loads((CONFIGS / "srw1d.json").read_text())
        cfg["rate"]["bogus"] = 1
        p.write_text(json.dumps(cfg))
        with pytest.raises(ConfigError, match=r"rate\.bogus"):
            load_config(p)
        cfg = json.loads((CONFIGS / "srw1d.json").read_text())
        cfg["fpp"]["replicas"] = "many"
        p.write_text(json.dumps(cfg))
        with pytest.raises(ConfigError, match=r"fpp\.replicas"):
            load_config(p)


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        code, _ = run(tmp_path, "rate", "--config", str(tmp_path / "missing.json"))
        assert code == 2
        assert "missing.json" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "broken.json"
        p.write_text('{"environment": \n [}')
        code, _ = run(tmp_path, "rate", "--config", str(p))
        assert code == 2
        assert "broken.json:2:" in capsys.readouterr().err

    def test_validate_quick(self, tmp_path):
        code, out = run(tmp_path, "validate", "--quick")
        assert code == 0
        report = json.loads((out / "validate_quick.json").read_text())
        assert all(c["passed"] for c in report["checks"])


class TestRuns:
    def test_rate_rows(self, tmp_path):
        code, out = run(tmp_path, "rate", "--config", str(CONFIGS / "srw1d.json"), "--speeds", "0.1:0.9:0.1")
        assert code == 0
        rows = read_csv(out / "rate.csv")
        assert len(rows) == 9
        half = next(r for r in rows if float(r["speed"]) == 0.5)
        assert float(half["I"]) == pytest.approx(0.130812, abs=1e-6)
        assert half["attained"] == "true"
        assert (out / "rate.svg").exists()
        m = RunManifest.read(out / "manifest.json")
        assert m.command == "rate" and set(m.outputs) == {"rate.csv", "rate.svg"}
        assert verify_manifest(out / "manifest.json") == []

    @pytest.mark.parametrize("command,extra,files", [
        ("lyapunov", [], ["lyapunov.csv", "lyapunov_summary.csv"]),
        ("fpp", [], ["fpp.csv", "fpp_summary.csv"]),
        ("scaling", [], ["scaling.csv"]),
        ("ldp-curve", ["--samples", "20000"], ["ldp.csv"]),
    ])
    def test_subcommands_write_outputs(self, tmp_path, command, extra, files):
        code, out = run(tmp_path, command, "--config", str(CONFIGS / "srw1d.json"), *extra)
        assert code in (0, 1)
        for f in files:
            assert len(read_csv(out / f)) > 0

    def test_lyapunov_values(self, tmp_path):
        code, out = run(tmp_path, "lyapunov", "--config", str(CONFIGS / "srw1d.json"), "--lams", "1")
        assert code == 0
        (row,) = read_csv(out / "lyapunov_summary.csv")
        assert float(row["alpha"]) == pytest.approx(1.657455, abs=1e-6)
        assert row["within_sandwich"] == "true"

    def test_overrides_recorded(self, tmp_path):
        code, out = run(tmp_path, "ldp-curve", "--config", str(CONFIGS / "srw1d.json"),
                        "--samples", "5000", "--horizon", "20", "--seed", "9")
        m = RunManifest.read(out / "manifest.json")
        assert m.seed == 9
        assert m.config["ldp-curve"]["samples"] == 5000 and m.config["ldp-curve"]["t"] == 20

    @pytest.mark.parametrize("command,config", [
        ("lyapunov", "rwre1d.json"),
        ("fpp", "rwre1d.json"),
        ("ldp-curve", "rwre1d.json"),
        ("rate", "srw1d.json"),
    ])
    def test_same_digests_across_parallelism(self, tmp_path, command, config):
        extra = ["--samples", "40000"] if command == "ldp-curve" else []
        base = [command, "--config", str(CONFIGS / config), *extra]
        _, a = run(tmp_path, *base, "--parallelism", "1", name="p1")
        _, b = run(tmp_path, *base, "--parallelism", "8", name="p8")
        da = RunManifest.read(a / "manifest.json").outputs
        db = RunManifest.read(b / "manifest.json").outputs
        assert da == db


class TestManifest:
    def test_replay_reproduces(self, tmp_path):
        _, out = run(tmp_path, "ldp-curve", "--config", str(CONFIGS / "rwre1d.json"), "--samples", "20000")
        assert replay_manifest(out / "manifest.json") == []

    def test_tampered_seed_detected(self, tmp_path):
        _, out = run(tmp_path, "ldp-curve", "--config", str(CONFIGS / "rwre1d.json"), "--samples", "20000")
        path = out / "manifest.json"
        raw = json.loads(path.read_text())
        raw["seed"] += 1
        path.write_text(json.dumps(raw))
        assert replay_manifest(path) == ["ldp.csv"]

    def test_tampered_output_detected(self, tmp_path):
        _, out = run(tmp_path, "rate", "--config", str(CONFIGS / "srw1d.json"))
        with open(out / "rate.csv", "a") as fh:
            fh.write("0,0,0,true,0,0,0,0\n")
        assert verify_manifest(out / "manifest.json") == ["rate.csv"]

    def test_validate_with_manifest(self, tmp_path):
        _, out = run(tmp_path, "rate", "--config", str(CONFIGS / "srw1d.json"))
        code, _ = run(tmp_path, "validate", "--quick", "--manifest", str(out / "manifest.json"), name="v")
        assert code == 0
        shutil.copy(out / "rate.csv", tmp_path / "keep.csv")
        (out / "rate.csv").write_text("speed\n")
        code, _ = run(tmp_path, "validate", "--quick", "--manifest", str(out / "manifest.json"), name="v2")
        assert code == 1


def test_csv_format(tmp_path):
    p = tmp_path / "t.csv"
    digest = write_csv(p, ["a", "b", "c"], [(0.1, True, 3), (float("inf"), False, float("nan"))])
    assert p.read_text() == "a,b,c\n0.1,true,3\ninf,false,nan\n"
    assert digest == sha256_file(p)
    assert format_value(1 / 3) == "0.3333333333333333"
    with pytest.raises(ValueError):
        write_csv(p, ["a"], [(1, 2)])
