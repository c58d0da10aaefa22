import json

import numpy as np
import pytest

from brdfest.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    code = main(
        [
            "gen-data",
            "--scenes", "8",
            "--views", "6",
            "--voxels", "50",
            "--resolution", "32",
            "--val-fraction", "0.25",
            "--seed", "7",
            "--out", str(root / "ds"),
        ]
    )
    assert code == 0
    code = main(
        [
            "train",
            "--dataset", str(root / "ds"),
            "--model", "grouplet-fast",
            "--metric", "rmse1",
            "--lambda", "0.01",
            "--minibatches", "25",
            "--batch-size", "4",
            "--seed", "7",
            "--out", str(root / "run"),
        ]
    )
    assert code == 0
    return root


class TestContracts:
    def test_gen_data_layout(self, workdir):
        manifest = json.loads((workdir / "ds" / "manifest.json").read_text())
        assert len(manifest["scenes"]) == 8
        assert (workdir / "ds" / "scenes" / "scene_0000" / "voxels.f32").exists()

    def test_train_outputs(self, workdir):
        assert (workdir / "run" / "final.ckpt").exists()
        assert (workdir / "run" / "best.ckpt").exists()
        lines = (workdir / "run" / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 25
        assert {"step", "loss", "e_d", "e_c"} <= set(json.loads(lines[0]))

    def test_eval_writes_report(self, workdir, capsys):
        code = main(
            [
                "eval",
                "--checkpoint", str(workdir / "run" / "final.ckpt"),
                "--dataset", str(workdir / "ds"),
                "--split", "val",
                "--out", str(workdir / "eval"),
            ]
        )
        assert code == 0
        report = json.loads((workdir / "eval" / "eval_report.json").read_text())
        assert "rmse_overall" in report
        assert "normalized RMSE" in capsys.readouterr().out

    def test_sweep_writes_csv(self, workdir):
        code = main(
            [
                "sweep",
                "--checkpoint", str(workdir / "run" / "final.ckpt"),
                "--dataset", str(workdir / "ds"),
                "--counts", "2,4,6",
                "--out", str(workdir / "sweep"),
            ]
        )
        assert code == 0
        rows = (workdir / "sweep" / "sweep_views.csv").read_text().splitlines()
        assert rows[0] == "count,rmse,n_scenes"
        assert len(rows) == 4

    def test_render_writes_images(self, workdir):
        code = main(
            [
                "render",
                "--checkpoint", str(workdir / "run" / "final.ckpt"),
                "--dataset", str(workdir / "ds"),
                "--resolution", "32",
                "--out", str(workdir / "render"),
            ]
        )
        assert code == 0
        assert list((workdir / "render").glob("*_comparison.ppm"))

    def test_report_prints_counts(self, workdir, capsys):
        code = main(
            [
                "report",
                "--checkpoint", str(workdir / "run" / "final.ckpt"),
                "--dataset", str(workdir / "ds"),
            ]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["parameter_count"] == 274245
        assert out["checkpoint_bytes"] == out["header_bytes"] + 4 * out["parameter_count"]

    def test_gradcheck_passes(self, workdir):
        assert main(["gradcheck", "--out", str(workdir / "gc")]) == 0
        rows = json.loads((workdir / "gc" / "gradcheck.json").read_text())
        assert all(r["passed"] for r in rows)

    def test_ablate_ec_smoke(self, workdir):
        code = main(
            [
                "ablate-ec",
                "--dataset", str(workdir / "ds"),
                "--minibatches", "10",
                "--seed", "7",
                "--out", str(workdir / "ablate"),
            ]
        )
        assert code == 0
        result = json.loads((workdir / "ablate" / "ablation.json").read_text())
        assert {"with_ec", "without_ec"} <= set(result)


class TestErrorPaths:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_dataset_json_error(self, tmp_path, capsys):
        code = main(
            ["eval", "--checkpoint", str(tmp_path / "no.ckpt"), "--dataset", str(tmp_path / "db")]
        )
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err and "message" in err

    def test_corrupt_checkpoint_json_error(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage")
        code = main(["report", "--checkpoint", str(bad)])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "CheckpointError"

    def test_config_file_supplies_defaults(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"minibatches": 3, "metric": "rmse1"}))
        code = main(
            [
                "train",
                "--dataset", str(workdir / "ds"),
                "--model", "grouplet-fast",
                "--config", str(cfg),
                "--seed", "1",
                "--out", str(tmp_path / "run2"),
            ]
        )
        assert code == 0
        lines = (tmp_path / "run2" / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 3
