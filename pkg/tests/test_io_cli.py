import json
import subprocess
import sys

import numpy as np
import pytest

from uwbnlos import io
from uwbnlos.cli import main
from uwbnlos.config import ConfigError, bundled_config, load_pipeline, load_scenario, parse_scenario
from uwbnlos.features import RangingSample, extract_features
from uwbnlos.geometry import Point2, Pose
from uwbnlos.nn import load_model


def small_scenario(**over):
    doc = {
        "name": "mini",
        "seed": 3,
        "environment": {
            "bounds": [0, 0, 12, 10],
            "anchors": [{"id": i, "x": x, "y": y} for i, (x, y) in
                        enumerate([(0.5, 0.5), (11.5, 0.5), (11.5, 9.5), (0.5, 9.5), (6, 9.5)])],
            "walls": [[4, 5, 8, 5]],
        },
        # 99.9 m at 1 m/s sampled at 10 Hz: 1000 poses
        "trajectories": [{"waypoints": [[1, 1], [11, 1], [11, 9], [1, 9], [1, 1], [11, 1], [11, 9],
                                        [1, 9], [1, 1], [11, 1], [11, 9], [1.1, 9]],
                          "speed": 1.0, "rate": 10}],
        "train": {"hidden_layers": 2, "neurons_per_layer": 32, "epochs": 30,
                  "learning_rate": 0.01, "batch_size": 32},
    }
    doc.update(over)
    return doc


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "mini.json"
    p.write_text(json.dumps(small_scenario()))
    return p


@pytest.fixture
def simulated(tmp_path, cfg_path):
    out = tmp_path / "data.csv"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    return out, tmp_path / "data_truth.csv"


class TestCsv:
    def test_dataset_round_trip(self, tmp_path):
        s = [RangingSample(0.1, 2, 3.0000000000000004, -70.25, -75.5, 1),
             RangingSample(0.2, 3, 1e-3, -80.0, -90.0, None)]
        io.write_dataset(tmp_path / "d.csv", s)
        assert io.read_dataset(tmp_path / "d.csv") == s

    def test_truth_and_estimates(self, tmp_path):
        poses = [Pose(0.0, Point2(1.5, 2.25)), Pose(0.1, Point2(1.0 / 3, 2))]
        io.write_truth(tmp_path / "t.csv", poses)
        assert io.read_truth(tmp_path / "t.csv") == poses

    def test_features_round_trip(self, tmp_path):
        s = [RangingSample(0.1 * k, k % 3, 2.0 + k, -70.0 - k, -72.0 - 2 * k, k % 2) for k in range(9)]
        rows = extract_features(s)
        io.write_features(tmp_path / "f.csv", rows, np.linspace(0, 1, 9))
        back, probs = io.read_features(tmp_path / "f.csv")
        assert back == rows
        np.testing.assert_array_equal(probs, np.linspace(0, 1, 9))

    def test_bad_value_has_location(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,anchor_id,range,rx_rssi,fp_rssi,label\n0.1,1,abc,-70,-72,1\n")
        with pytest.raises(io.DataFormatError, match=r"d\.csv:2.*range"):
            io.read_dataset(p)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,anchor_id,range\n0.1,1,2\n")
        with pytest.raises(io.DataFormatError, match="rx_rssi"):
            io.read_dataset(p)


class TestConfig:
    def test_bundled_configs_load(self):
        for name in ("office.json", "lobby.json", "corridor.json"):
            sc = load_scenario(bundled_config(name))
            assert len(sc.environment.anchors) >= 5
        cfg = load_pipeline(bundled_config("benchmark.json"))
        assert cfg.train_scenario.name == "office"
        assert [s.name for s in cfg.test_scenarios] == ["lobby", "corridor"]

    def test_anchor_out_of_bounds_names_field(self):
        doc = small_scenario()
        doc["environment"]["anchors"][2]["x"] = 50
        with pytest.raises(ConfigError, match=r"environment\.anchors\[2\]"):
            parse_scenario(doc)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match=r"noise\.bogus"):
            parse_scenario(small_scenario(noise={"bogus": 1}))

    def test_seed_override(self, cfg_path):
        assert load_scenario(cfg_path, seed=99).noise.seed == 99


class TestSimulate:
    def test_cardinality(self, simulated):
        data, truth = simulated
        assert len(io.read_dataset(data)) == 5000
        assert len(io.read_truth(truth)) == 1000

    def test_byte_identical(self, tmp_path, cfg_path, simulated):
        data, truth = simulated
        again = tmp_path / "again.csv"
        main(["simulate", "--config", str(cfg_path), "--out", str(again)])
        assert again.read_bytes() == data.read_bytes()
        assert (tmp_path / "again_truth.csv").read_bytes() == truth.read_bytes()

    def test_seed_changes_output(self, tmp_path, cfg_path, simulated):
        other = tmp_path / "other.csv"
        main(["simulate", "--config", str(cfg_path), "--out", str(other), "--seed", "4"])
        assert other.read_bytes() != simulated[0].read_bytes()

    def test_bad_config_is_clean_error(self, tmp_path, capsys):
        doc = small_scenario()
        doc["environment"]["anchors"][0]["y"] = -3
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "x.csv")]) == 2
        assert "environment.anchors[0]" in capsys.readouterr().err


class TestTrain:
    def test_no_std_and_untrained(self, tmp_path, cfg_path, simulated, capsys):
        data, _ = simulated
        m1 = tmp_path / "m1.json"
        assert main(["train", "--dataset", str(data), "--config", str(cfg_path), "--out", str(m1),
                     "--inputs", "no_std", "--epochs", "3"]) == 0
        model = load_model(m1)
        assert len(model.input_selection) == 4 and "range_std" not in model.input_selection
        m0 = tmp_path / "m0.json"
        assert main(["train", "--dataset", str(data), "--config", str(cfg_path), "--out", str(m0),
                     "--epochs", "0"]) == 0
        assert len(load_model(m0).input_selection) == 5
        assert "held-out accuracy" in capsys.readouterr().out

    def test_unlabeled_dataset_rejected(self, tmp_path, cfg_path, capsys):
        p = tmp_path / "u.csv"
        io.write_dataset(p, [RangingSample(0.1 * k, k % 3, 2.0, -70.0, -72.0, None) for k in range(30)])
        assert main(["train", "--dataset", str(p), "--config", str(cfg_path),
                     "--out", str(tmp_path / "m.json")]) == 2
        assert "label" in capsys.readouterr().err


class TestLocalizeEvaluate:
    def test_nwls_noise_free(self, tmp_path):
        doc = small_scenario(noise={"los_range_sigma": 0, "nlos_range_sigma": 0, "nlos_bias_min": 0,
                                    "nlos_bias_max": 0, "rssi_sigma": 0})
        doc["environment"]["walls"] = []
        cfg = tmp_path / "clean.json"
        cfg.write_text(json.dumps(doc))
        data = tmp_path / "clean.csv"
        main(["simulate", "--config", str(cfg), "--out", str(data)])
        est = tmp_path / "est.csv"
        assert main(["localize", "--dataset", str(data), "--config", str(cfg), "--nwls",
                     "--start", "1,1", "--out", str(est)]) == 0
        rep = tmp_path / "rep"
        assert main(["evaluate", str(est), "--truth", str(tmp_path / "clean_truth.csv"),
                     "--out", str(rep)]) == 0
        e = io.read_estimates(est)
        t = np.array([[p.t, p.position.x, p.position.y] for p in io.read_truth(tmp_path / "clean_truth.csv")])
        assert np.max(np.hypot(*(e[:, 1:3] - t[:, 1:3]).T)) < 1e-6

    def test_model_flow_and_six_row_report(self, tmp_path, cfg_path, simulated, capsys):
        data, truth = simulated
        model = tmp_path / "m.json"
        main(["train", "--dataset", str(data), "--config", str(cfg_path), "--out", str(model), "--epochs", "5"])
        feats = tmp_path / "feat.csv"
        assert main(["classify", "--dataset", str(data), "--model", str(model), "--out", str(feats)]) == 0
        rows, probs = io.read_features(feats)
        assert len(rows) == 5000 and np.all((probs > 0) & (probs < 1))

        files = []
        nwls = tmp_path / "nwls.csv"
        main(["localize", "--dataset", str(data), "--config", str(cfg_path), "--nwls", "--out", str(nwls)])
        files.append(str(nwls))
        for k in range(5):
            f = tmp_path / f"wls{k}.csv"
            main(["localize", "--dataset", str(data), "--config", str(cfg_path), "--model", str(model),
                  "--out", str(f)])
            files.append(str(f))
        rep = tmp_path / "rep"
        assert main(["evaluate", *files, "--truth", str(truth), "--out", str(rep),
                     "--names", "NWLS,a,b,c,d,e"]) == 0
        table = (rep / "report.txt").read_text().strip().splitlines()
        assert sum(1 for line in table if line.split()[0] in {"NWLS", "a", "b", "c", "d", "e"}) == 6
        assert [line for line in table if line.startswith("NWLS")][0].endswith("Nil")
        assert len((rep / "report.csv").read_text().strip().splitlines()) == 7
        for name in ("NWLS", "a", "e"):
            assert (rep / f"cdf_{name}.csv").exists()

    def test_self_comparison_zero(self, tmp_path, cfg_path, simulated, capsys):
        data, truth = simulated
        est = tmp_path / "n.csv"
        main(["localize", "--dataset", str(data), "--config", str(cfg_path), "--nwls", "--out", str(est)])
        capsys.readouterr()
        main(["evaluate", str(est), str(est), "--truth", str(truth), "--out", str(tmp_path / "r"),
              "--names", "base,same"])
        assert "improvement 0.00%" in capsys.readouterr().out

    def test_unknown_anchor_id(self, tmp_path, cfg_path, capsys):
        p = tmp_path / "d.csv"
        io.write_dataset(p, [RangingSample(0.0, 42, 2.0, -70.0, -72.0, 1)])
        assert main(["localize", "--dataset", str(p), "--config", str(cfg_path), "--nwls",
                     "--out", str(tmp_path / "e.csv")]) == 2
        assert "42" in capsys.readouterr().err

    def test_missing_truth(self, tmp_path, capsys):
        est = tmp_path / "e.csv"
        est.write_text("t,x,y,cost,iterations,converged\n0.0,1,1,0,1,1\n")
        assert main(["evaluate", str(est), "--truth", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "r")]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error:") and "nope.csv" in err

    def test_model_and_nwls_exclusive(self, tmp_path, cfg_path):
        with pytest.raises(SystemExit):
            main(["localize", "--dataset", "x", "--config", str(cfg_path), "--nwls", "--model", "m",
                  "--out", "o"])


def test_module_entry_point_exit_status(tmp_path):
    r = subprocess.run([sys.executable, "-m", "uwbnlos", "evaluate", "missing.csv", "--truth", "t.csv",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode != 0 and "error:" in r.stderr and "Traceback" not in r.stderr
