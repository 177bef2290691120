import csv
import json
import math

import numpy as np
import pytest
import yaml

from tmfa.cli import main
from tmfa.config import ConfigError, RunConfig, parse_si
from tmfa.system import peak_band


def write_config(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
    return str(path)


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def error_record(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def fbw10(freqs, s11_db, f0=2.4e9):
    below = s11_db < -10
    i = j = int(np.argmin(np.abs(freqs - f0)))
    assert below[i]
    while i > 0 and below[i - 1]:
        i -= 1
    while j < below.size - 1 and below[j + 1]:
        j += 1
    return (freqs[j] - freqs[i]) / f0


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    assert main(["sweep", "--out", str(out)]) == 0
    return out


class TestConfig:
    @pytest.mark.parametrize("text, value", [("2.4G", 2.4e9), ("75M", 75e6), ("10k", 1e4),
                                             ("0.86p", 0.86e-12), ("2.4 GHz", 2.4e9), (3, 3.0),
                                             ("1e3", 1e3), ("inf", math.inf)])
    def test_parse_si(self, text, value):
        assert parse_si(text) == pytest.approx(value, rel=1e-15)

    @pytest.mark.parametrize("bad", ["2.4X", "", "G", True, None])
    def test_parse_si_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_si(bad)

    def test_roundtrip(self):
        cfg = RunConfig.from_dict({"filter": {"f0": "2.4G"}, "modulation": {"fm": "80M"}})
        again = RunConfig.from_dict(yaml.safe_load(cfg.dump()))
        assert again == cfg

    @pytest.mark.parametrize("data, word", [
        ({"filter": {"bogus": 1}}, "unknown key"), ({"nope": {}}, "unknown block"),
        ({"modulation": {"delta_m": 1.0}}, "delta_m"), ({"sweep": {"points": 2.5}}, "integer"),
        ({"optimizer": {"fm_bounds": [2e8, 1e7]}}, "lower bound"),
        ({"oracle": {"steps_per_cycle": 50}}, "steps_per_cycle"),
        ({"antenna": {"lengths_wl": [0.5, 0.47]}}, "one more length")])
    def test_validation(self, data, word):
        with pytest.raises(ConfigError, match=word):
            RunConfig.from_dict(data)


class TestSynth:
    def test_default(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "ladder.yaml").read_text()
        assert text.startswith("# tmfa")
        rec = yaml.safe_load(text)
        assert len(rec["L_h"]) == 3
        summary = dict(ln.split(" = ") for ln in (tmp_path / "synth_summary.txt").read_text()
                       .splitlines() if " = " in ln and not ln.startswith("#"))
        assert float(summary["min_in_band_rl_db"]) >= 13.0
        assert int(summary["reflection_zeros"]) == 3

    def test_malformed(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "filter: [unclosed\n")
        out = tmp_path / "out"
        assert main(["synth", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()
        assert error_record(capsys)["exit_code"] == 2

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"filter": {"f0": "2.4G", "colour": "red"}})
        out = tmp_path / "out"
        assert main(["synth", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()
        assert "colour" in error_record(capsys)["message"]

    def test_unreachable_return_loss(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"filter": {"rl": 30.0}})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
        assert error_record(capsys)["exit_code"] == 3


class TestSweep:
    def test_header_embeds_config(self, sweep_dir):
        text = (sweep_dir / "sweep_static.csv").read_text()
        header = "\n".join(ln[2:] for ln in text.splitlines()
                           if ln.startswith("# ") and not ln.startswith("# tmfa"))
        resolved = yaml.safe_load(header.split("resolved config:\n", 1)[1])
        assert RunConfig.from_dict(resolved) == RunConfig()

    def test_static_fbw10(self, sweep_dir):
        d = read_csv(sweep_dir / "sweep_static.csv")
        assert list(d) == ["f_hz", "s11_db", "s21_db", "s12_db", "iso_db"]
        assert d["f_hz"].size == 201
        assert 0.036 <= fbw10(d["f_hz"], d["s11_db"]) <= 0.048

    def test_modulated_band_narrower(self, sweep_dir):
        s = read_csv(sweep_dir / "sweep_static.csv")
        m = read_csv(sweep_dir / "sweep_modulated.csv")
        assert fbw10(m["f_hz"], m["s11_db"]) < fbw10(s["f_hz"], s["s11_db"])
        assert np.max(m["iso_db"]) > 3.0
        np.testing.assert_allclose(s["iso_db"], 0.0, atol=1e-9)

    def test_single_point_with_harmonics(self, tmp_path):
        cfg = write_config(tmp_path, {"sweep": {"f_start": "2.4G", "f_stop": "2.4G", "points": 1,
                                                "harmonics": True}})
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--modulated"]) == 0
        assert not (tmp_path / "sweep_static.csv").exists()
        d = read_csv(tmp_path / "sweep_modulated.csv")
        assert d["f_hz"].size == 1
        assert "s21_k-5_db" in d and "s12_k+5_db" in d

    def test_collision_exit(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"sweep": {"f_start": "375M", "f_stop": "375M",
                                                "points": 1}})
        out = tmp_path / "o"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--modulated"]) == 4
        rec = error_record(capsys)
        assert rec["frequency_hz"] == 375e6
        assert not out.exists()


class TestPatternAndBoresight:
    def test_pattern_files(self, tmp_path):
        cfg = write_config(tmp_path, {"sweep": {"points": 5}})
        assert main(["pattern", "--config", cfg, "--out", str(tmp_path)]) == 0
        e = read_csv(tmp_path / "cut_E.csv")
        assert e["angle_deg"].size == 360
        h = read_csv(tmp_path / "cut_H.csv")
        assert int(np.argmax(h["tx_db"])) == 0
        assert read_csv(tmp_path / "pattern.csv")["d_dbi"].size == 181 * 360
        assert read_csv(tmp_path / "impedance.csv")["f_hz"].size == 5

    def test_boresight_reference(self, tmp_path):
        cfg = write_config(tmp_path, {"sweep": {"f_start": "2.38G", "f_stop": "2.42G",
                                                "points": 3}})
        assert main(["boresight", "--config", cfg, "--out", str(tmp_path), "--static"]) == 0
        d = read_csv(tmp_path / "boresight.csv")
        assert d["ref_db"][1] == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(d["iso"], 0.0, atol=1e-9)


class TestOptimize:
    def test_optimize_then_boresight(self, tmp_path):
        cfg = write_config(tmp_path, {"sweep": {"f_start": "2.4G", "f_stop": "2.4G",
                                                "points": 1}})
        assert main(["optimize", "--config", cfg, "--out", str(tmp_path)]) == 0
        report = (tmp_path / "optimize_report.txt").read_text()
        iso = float(report.split("isolation_db = ")[1].split()[0])
        assert iso >= 20.0
        trace = read_csv(tmp_path / "optimize_trace.csv")
        assert np.all(np.diff(trace["objective"]) <= 0)
        tuned = str(tmp_path / "optimized_config.yaml")
        out = tmp_path / "bs"
        assert main(["boresight", "--config", tuned, "--out", str(out)]) == 0
        assert read_csv(out / "boresight.csv")["iso"][0] >= 20.0

    def test_zero_depth_fails(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"optimizer": {"delta_m_bounds": [0.0, 0.0],
                                                    "grid": [2, 1, 2], "n_starts": 1},
                                      "modulation": {"delta_m": 0.0}})
        assert main(["optimize", "--config", cfg, "--out", str(tmp_path)]) == 5
        assert error_record(capsys)["exit_code"] == 5

    def test_seeded_runs_identical(self, tmp_path):
        cfg = write_config(tmp_path, {"optimizer": {"grid": [2, 2, 3], "n_starts": 1}})
        reports = []
        for i in range(2):
            out = tmp_path / f"r{i}"
            main(["optimize", "--config", cfg, "--out", str(out), "--seed", "7"])
            reports.append((out / "optimize_report.txt").read_bytes())
        assert reports[0] == reports[1]


class TestOracleCheck:
    def test_default_passes(self, tmp_path):
        cfg = write_config(tmp_path, {"oracle": {"points": [["2.4G", 32]]}})
        assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path)]) == 0
        d = read_csv(tmp_path / "oracle_check.csv")
        assert d["fm_hz"][0] == 0.0
        assert abs(d["delta_s21_db"][0]) <= 0.01 and abs(d["delta_s12_db"][0]) <= 0.01
        assert d["fm_hz"][1] == 75e6
        assert abs(d["delta_s21_db"][1]) <= 0.05 and abs(d["delta_s12_db"][1]) <= 0.05

    def test_incommensurate(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"oracle": {"points": [["2.4G", 32.5]]}})
        assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "incommensurate" in error_record(capsys)["message"]

    def test_tolerance_breach(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"oracle": {"points": [["2.4G", 32]],
                                                 "tolerance_db": 1e-9}})
        assert main(["oracle-check", "--config", cfg, "--out", str(tmp_path)]) == 6
        assert error_record(capsys)["exit_code"] == 6
        assert (tmp_path / "oracle_check.csv").exists()
