import json

import pytest

from pcgscreen.cli import load_config, main

SMALL_CONFIG = {
    "workdir": "out",
    "seed": 77,
    "synth": {
        "n_per_class": 4,
        "heldout_per_class": 2,
        "murmur_rel_power": 0.3,
        "ambient_noise_std": 0.02,
    },
    "feature": {
        "family": "lfcc",
        "channels": [2, 3],
        "cepstral": {"num_frames": 20, "coeff_lo": 0, "coeff_hi": 4},
    },
    "cv": {
        "k": 2,
        "iterations": 2,
        "classifier": {"kind": "rbf", "C": 1.0, "gamma": None, "coef0": 0.0},
    },
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One small synthetic dataset shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    assert main(["--config", str(config_path), "synth"]) == 0
    return root, config_path


def _report(root, name):
    return json.loads((root / "out" / "reports" / f"{name}.json").read_text())


class TestPipelineCommands:
    def test_synth_outputs(self, workspace):
        root, _ = workspace
        doc = _report(root, "synth")
        assert doc["schema_version"] == 1
        assert doc["results"]["n_subjects"] == 12
        assert doc["results"]["n_annotation_spans"] == 36
        data = root / "out" / "data"
        assert (data / "manifest.csv").exists()
        assert (data / "annotations.csv").exists()
        assert len(list(data.glob("*.wav"))) == 12

    def test_preprocess(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "preprocess"]) == 0
        doc = _report(root, "preprocess")
        # 12 subjects x 7 channels x 3 epochs
        assert doc["results"]["n_epochs"] == 252

    def test_extract(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "extract"]) == 0
        doc = _report(root, "extract")
        assert doc["results"]["channels"] == [2, 3]
        assert doc["results"]["n_features"] == {"2": 100, "3": 100}
        assert doc["results"]["n_rows"] == {"2": 36, "3": 36}

    def test_evaluate_report_structure(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "evaluate"]) == 0
        doc = _report(root, "evaluate")
        res = doc["results"]
        assert set(res["epoch_metrics"]) == {"sens", "spec", "acc", "f1"}
        assert set(res["subject_metrics"]) == {"sens", "spec", "acc", "f1"}
        assert res["n_models"] == 4
        assert doc["config"]["cv"]["k"] == 2
        assert doc["tool"]["name"] == "pcgscreen"
        assert res["subject_metrics"]["acc"] >= 0.75

    def test_evaluate_deterministic(self, workspace):
        root, config = workspace
        path = root / "out" / "reports" / "evaluate.json"
        assert main(["--config", str(config), "evaluate"]) == 0
        first = path.read_bytes()
        assert main(["--config", str(config), "evaluate"]) == 0
        assert path.read_bytes() == first

    def test_predict_heldout(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "predict"]) == 0
        doc = _report(root, "predict")
        preds = doc["results"]["predictions"]
        assert len(preds) == 4
        assert set(preds) == {"cad-h001", "cad-h002", "nor-h001", "nor-h002"}
        for sid, label in preds.items():
            assert label in ("CAD", "Normal")

    def test_search(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "search"]) == 0
        doc = _report(root, "search")
        assert len(doc["results"]["all_subsets"]) == 3  # subsets of {2, 3}
        csv_path = root / "out" / "reports" / "search.csv"
        assert csv_path.exists()
        header = csv_path.read_text().splitlines()[0]
        assert header.startswith("n_channels,channels,fd")

    def test_report_plots(self, workspace):
        root, config = workspace
        assert main(["--config", str(config), "report"]) == 0
        plots = root / "out" / "reports" / "plots"
        assert (plots / "psd_by_channel.png").exists()
        assert (plots / "cepstra_heatmap.png").exists()
        assert (plots / "cepstra_boxplot.png").exists()


class TestErrors:
    def test_missing_config_exit_1(self, capsys):
        assert main(["--config", "/nonexistent/config.json", "evaluate"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["type"] == "ConfigError"

    def test_missing_manifest_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"workdir": "w"}), encoding="utf-8")
        assert main(["--config", str(cfg), "evaluate"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "manifest" in err["error"]["message"]

    def test_unknown_config_key_exit_1(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"wrkdir": "w"}), encoding="utf-8")
        assert main(["--config", str(cfg), "evaluate"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "unknown config key" in err["error"]["message"]

    def test_usage_error_exit_1(self, capsys):
        assert main(["frobnicate"]) == 1
        capsys.readouterr()

    def test_corrupt_data_exit_2(self, tmp_path, capsys):
        data = tmp_path / "data"
        data.mkdir()
        (data / "manifest.csv").write_text(
            "subject_id,path,label,cohort\ns1,s1.wav,CAD,train\n", encoding="utf-8"
        )
        (data / "s1.wav").write_bytes(b"RIFF\x00\x00")
        (data / "annotations.csv").write_text(
            "subject_id,epoch_idx,start_sample,end_sample\ns1,0,0,100\n",
            encoding="utf-8",
        )
        cfg = tmp_path / "c.json"
        cfg.write_text(
            json.dumps({
                "workdir": "w",
                "data": {
                    "manifest": str(data / "manifest.csv"),
                    "annotations": str(data / "annotations.csv"),
                },
            }),
            encoding="utf-8",
        )
        code = main(["--config", str(cfg), "--no-strict", "preprocess"])
        err = json.loads(capsys.readouterr().err)
        assert code == 2
        assert err["error"]["type"] == "DataError"


class TestConfig:
    def test_defaults_resolve_paths(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"workdir": "deep/out"}), encoding="utf-8")
        cfg = load_config(cfg_path)
        assert cfg["workdir"] == str(tmp_path / "deep" / "out")
        assert cfg["data"]["manifest"].endswith("manifest.csv")

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"seed": 1}), encoding="utf-8")
        assert load_config(cfg_path, seed_override=99)["seed"] == 99

    def test_per_channel_cepstral_override(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(
            json.dumps({
                "feature": {
                    "family": "lfcc",
                    "channels": [1, 2],
                    "cepstral": {"num_frames": 20, "coeff_lo": 0, "coeff_hi": 7},
                    "cepstral_by_channel": {
                        "2": {"num_frames": 108, "coeff_lo": 0, "coeff_hi": 7}
                    },
                }
            }),
            encoding="utf-8",
        )
        from pcgscreen.cli import _channel_configs

        cfgs = _channel_configs(load_config(cfg_path), strict=True)
        assert cfgs[1].num_frames == 20
        assert cfgs[2].num_frames == 108
        assert cfgs[2].feature_dim == 864
