import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from vitsoh.cli import main

TRAIN_FLAGS = ["--d-embed", "16", "--heads", "2", "--mlp-hidden", "16",
               "--depth", "1", "--fc-hidden", "4", "--s-patch", "10",
               "--max-epochs", "3", "--patience", "5"]


def run(*argv) -> int:
    return main([str(a) for a in argv])


def hash_tree(path: Path, skip=("run_record.json",)) -> dict:
    return {f.name: hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(path.iterdir())
            if f.is_file() and f.name not in skip}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Tiny but complete generate -> preprocess -> train chain."""
    root = tmp_path_factory.mktemp("pipeline")
    fleet = root / "fleet"
    dataset = root / "dataset"
    model = root / "model"
    assert run("generate", "--out", fleet, "--seed", "11", "--cells", "2",
               "--max-cycles", "90", "--stride", "10") == 0
    assert run("preprocess", "--fleet", fleet, "--out", dataset,
               "--target-cells", "cell_02", "--lv", "20", "--rt", "0.7",
               "--cycles", "2", "--seed", "11") == 0
    assert run("train", "--dataset", dataset, "--out", model,
               "--seed", "11", *TRAIN_FLAGS) == 0
    return root


class TestGenerate:
    def test_default_cell_count(self, tmp_path):
        out = tmp_path / "fleet"
        assert run("generate", "--out", out, "--seed", "1", "--max-cycles", "0") == 0
        manifest = json.loads((out / "fleet.json").read_text())
        assert len(manifest["conditions"]) == 12
        assert len(list(out.glob("cell_*.csv"))) == 12
        assert (out / "run_record.json").exists()

    def test_quick_fixture_flags(self, pipeline):
        manifest = json.loads((pipeline / "fleet" / "fleet.json").read_text())
        assert len(manifest["conditions"]) == 2
        assert manifest["max_cycles"] == 90

    def test_same_seed_identical_hashes(self, tmp_path):
        for sub in ("a", "b"):
            assert run("generate", "--out", tmp_path / sub, "--seed", "3",
                       "--cells", "1", "--max-cycles", "20", "--stride", "10") == 0
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")

    def test_bad_config_exits_nonzero(self, tmp_path):
        assert run("generate", "--out", tmp_path, "--cells", "99") == 1


class TestPreprocess:
    def test_index_lists_raw_channels(self, pipeline):
        index = json.loads((pipeline / "dataset" / "index.json").read_text())
        assert index["channels"] == ["current", "voltage", "temperature"]
        assert index["points"] == 20

    def test_rerun_identical(self, pipeline, tmp_path):
        assert run("preprocess", "--fleet", pipeline / "fleet", "--out",
                   tmp_path, "--target-cells", "cell_02", "--lv", "20",
                   "--rt", "0.7", "--cycles", "2", "--seed", "11") == 0
        assert hash_tree(tmp_path) == hash_tree(pipeline / "dataset")

    def test_missing_fleet_exits_nonzero(self, tmp_path):
        assert run("preprocess", "--fleet", tmp_path / "nope", "--out",
                   tmp_path / "out") == 1

    def test_unknown_target_cell_rejected(self, pipeline, tmp_path):
        assert run("preprocess", "--fleet", pipeline / "fleet", "--out",
                   tmp_path, "--target-cells", "cell_99") == 1


class TestTrain:
    def test_outputs_exist(self, pipeline):
        model = pipeline / "model"
        assert (model / "checkpoint.json").exists()
        assert (model / "checkpoint.f32").exists()
        history = (model / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_rmspe"
        assert len(history) >= 2
        record = json.loads((model / "run_record.json").read_text())
        assert record["subcommand"] == "train"
        assert record["config"]["d_embed"] == 16

    def test_deterministic_checkpoints(self, pipeline, tmp_path):
        for sub in ("a", "b"):
            assert run("train", "--dataset", pipeline / "dataset", "--out",
                       tmp_path / sub, "--seed", "11", *TRAIN_FLAGS) == 0
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")

    def test_reproducible_from_run_record(self, pipeline, tmp_path):
        assert run("train", "--dataset", pipeline / "dataset", "--out",
                   tmp_path / "replay", "--config",
                   pipeline / "model" / "run_record.json") == 0
        assert hash_tree(tmp_path / "replay") == hash_tree(pipeline / "model")


class TestEvaluate:
    def test_report_written_and_parses(self, pipeline, tmp_path):
        out = tmp_path / "eval"
        assert run("evaluate", "--dataset", pipeline / "dataset",
                   "--checkpoint", pipeline / "model", "--out", out) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["m"] > 0
        assert payload["rmspe_pct"] >= 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "cell,cycle,y,yhat,err"
        assert len(lines) == payload["m"] + 1

    def test_evaluate_twice_identical(self, pipeline, tmp_path):
        for sub in ("a", "b"):
            assert run("evaluate", "--dataset", pipeline / "dataset",
                       "--checkpoint", pipeline / "model", "--out",
                       tmp_path / sub, "--split", "target_test") == 0
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")

    def test_mismatched_checkpoint_rejected(self, pipeline, tmp_path):
        dataset2 = tmp_path / "dataset_lv10"
        assert run("preprocess", "--fleet", pipeline / "fleet", "--out",
                   dataset2, "--target-cells", "cell_02", "--lv", "10",
                   "--rt", "0.7", "--cycles", "2", "--seed", "11") == 0
        assert run("evaluate", "--dataset", dataset2, "--checkpoint",
                   pipeline / "model", "--out", tmp_path / "eval") == 1


class TestTransfer:
    def test_transfer_freezes_features(self, pipeline, tmp_path):
        out = tmp_path / "transferred"
        assert run("transfer", "--dataset", pipeline / "dataset",
                   "--checkpoint", pipeline / "model", "--out", out,
                   "--cycles", "2", "--epochs", "5", "--seed", "11") == 0
        base = json.loads((pipeline / "model" / "checkpoint.json").read_text())
        tuned = json.loads((out / "checkpoint.json").read_text())
        base_blob = (pipeline / "model" / "checkpoint.f32").read_bytes()
        tuned_blob = (out / "checkpoint.f32").read_bytes()
        for entry_base, entry_tuned in zip(base["tensors"], tuned["tensors"]):
            assert entry_base["name"] == entry_tuned["name"]
            name = entry_base["name"]
            size = int(np.prod(entry_base["shape"] or [1])) * 4
            lo, hi = entry_base["offset"], entry_base["offset"] + size
            if not name.startswith("head."):
                assert base_blob[lo:hi] == tuned_blob[lo:hi], name
                assert entry_tuned["frozen"]
        # the head itself must have moved
        assert base_blob != tuned_blob

    def test_fast_flag_sets_epochs(self, pipeline, tmp_path):
        out = tmp_path / "fast"
        assert run("transfer", "--dataset", pipeline / "dataset",
                   "--checkpoint", pipeline / "model", "--out", out,
                   "--cycles", "1", "--fast") == 1  # one sample cannot batch-norm

    def test_too_many_cycles_rejected(self, pipeline, tmp_path):
        assert run("transfer", "--dataset", pipeline / "dataset",
                   "--checkpoint", pipeline / "model", "--out",
                   tmp_path / "x", "--cycles", "99", "--epochs", "1") == 1


class TestSweep:
    def test_single_point_sweep(self, pipeline, tmp_path):
        out = tmp_path / "sweep"
        assert run("sweep", "--fleet", pipeline / "fleet", "--out", out,
                   "--kind", "depth", "--grid", "1", "--repeats", "2",
                   "--lv", "20", "--rt", "0.7", "--channels", "raw",
                   "--target-cells", "cell_02", "--seed", "4",
                   *TRAIN_FLAGS) == 0
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "depth,repeat,seed,val_rmspe,test_rmspe,status"
        assert len(lines) == 3  # 1 value x 2 repeats
        summary = json.loads((out / "summary.json").read_text())
        assert summary["values"]["1"]["n_ok"] == 2

    def test_sweep_repeat_determinism(self, pipeline, tmp_path):
        for sub in ("a", "b"):
            assert run("sweep", "--fleet", pipeline / "fleet", "--out",
                       tmp_path / sub, "--kind", "ratio", "--grid", "0.7",
                       "--repeats", "1", "--lv", "20", "--channels", "raw",
                       "--target-cells", "cell_02", "--seed", "4",
                       *TRAIN_FLAGS) == 0
        assert hash_tree(tmp_path / "a") == hash_tree(tmp_path / "b")

    def test_unknown_kind_rejected(self, pipeline, tmp_path):
        assert run("sweep", "--fleet", pipeline / "fleet", "--out",
                   tmp_path, "--kind", "depth", "--grid", "nope") == 1
