import json
import shutil

import numpy as np
import pytest

from cli import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from dataio.bevg import read_grid
from dataio.manifest import load_manifest
from models.report import EvalReport
from models.sequence import ConsistencyReport

CONFIG = """
seed = 3

[grid]
rows = 64
cols = 64
resolution = 0.625

[synth]
seqlen = 3
prediction_noise = 0.2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "bevbench.toml"
    config.write_text(CONFIG)
    assert main(["synth", "--config", str(config), "--out", str(root / "data"), "--sequence-id", "cli"]) == EXIT_OK
    return root, config, root / "data" / "manifest.json"


def test_synth_writes_a_complete_dataset(workspace):
    _, _, manifest_path = workspace
    manifest = load_manifest(manifest_path)
    assert manifest.sequence_id == "cli"
    assert len(manifest.frames) == 3
    for sub in ("velodyne", "semantic", "depth", "labels", "predictions"):
        assert len(list((manifest_path.parent / sub).iterdir())) == 3
    assert (manifest_path.parent / "poses.txt").exists()
    assert (manifest_path.parent / "calib.txt").exists()


def test_eval_then_report(workspace, capsys):
    root, config, manifest = workspace
    code = main(["eval", str(manifest), "--config", str(config), "--out", str(root / "eval"), "--method", "noisy"])
    assert code == EXIT_OK
    report = EvalReport.model_validate(json.loads((root / "eval" / "eval.json").read_text()))
    assert report.method == "noisy"
    assert report.frame_count == 3
    assert not report.frame_errors
    assert 0.0 < report.miou < 1.0
    assert report.config["grid"]["rows"] == 64
    assert "noisy" in (root / "eval" / "eval.md").read_text()
    assert "Method: noisy" in capsys.readouterr().out

    label = manifest.parent / "labels" / "000000.bevg"
    code = main(["report", str(root / "eval" / "eval.json"), "--out", str(root / "cmp"), "--render", str(label)])
    assert code == EXIT_OK
    assert "| noisy |" in (root / "cmp" / "comparison.md").read_text()
    rows = json.loads((root / "cmp" / "comparison.json").read_text())["rows"]
    assert rows[0][0] == "Method" and rows[1][0] == "noisy"
    assert (root / "cmp" / "comparison.pdf").read_bytes().startswith(b"%PDF")
    assert (root / "cmp" / "png" / "000000.png").exists()


def test_consistency_scores(workspace):
    root, config, manifest = workspace
    assert main(["consistency", str(manifest), "--config", str(config), "--out", str(root / "cons")]) == EXIT_OK
    report = ConsistencyReport.model_validate(json.loads((root / "cons" / "consistency.json").read_text()))
    assert (report.seqlen, report.short_pairs, report.long_pairs) == (3, 2, 1)
    assert report.sup is not None and report.sup > 0
    assert report.short > 0 and report.long > 0


def test_voxelize_conserves_points(workspace):
    root, config, manifest = workspace
    assert main(["voxelize", str(manifest), "--config", str(config), "--out", str(root / "vox")]) == EXIT_OK
    summary = json.loads((root / "vox" / "summary.json").read_text())
    assert summary["voxel_spec"]["channels"] == 10
    assert all(f["conserved"] and f["in_range"] == f["total_count"] for f in summary["frames"])
    volume = read_grid(root / "vox" / "voxels" / "000000.bevg")
    assert volume.total_count == summary["frames"][0]["total_count"]


def test_gen_labels_on_synthetic_data(workspace):
    root, config, manifest_path = workspace
    code = main(["gen-labels", str(manifest_path), "--config", str(config), "--out", str(root / "weak")])
    assert code == EXIT_OK
    summary = json.loads((root / "weak" / "summary.json").read_text())
    assert [f["index"] for f in summary["frames"]] == [0, 1, 2]
    assert summary["sequence_lane_ids"] == {"-1": 2, "0": 1, "1": 3}
    assert not summary["load_errors"]

    manifest = load_manifest(manifest_path)
    for entry, record in zip(summary["frames"], manifest.frames):
        assert entry["status"] == "ok"
        assert {lane["side"]: lane["lane_id"] for lane in entry["lanes"]} == {-1: 2, 0: 1, 1: 3}
        weak = read_grid(root / "weak" / "labels" / f"{record.index:06d}.bevg")
        truth = read_grid(manifest.resolve(record.label))
        assert weak.spec == truth.spec
        assert weak.lane_ids() == truth.lane_ids() == [1, 2, 3]
        for lane_id in (1, 2, 3):
            overlap = (weak.lane_id_layer == lane_id) & (truth.lane_id_layer > 0)
            assert overlap.any(), f"frame {record.index}: lane {lane_id}"
            assert np.bincount(truth.lane_id_layer[overlap]).argmax() == lane_id


def test_corrupt_cloud_only_fails_its_frame(workspace, tmp_path):
    _, config, manifest = workspace
    data = shutil.copytree(manifest.parent, tmp_path / "data")
    (data / "velodyne" / "000001.bin").write_bytes(b"\x00" * 20)
    out = tmp_path / "weak"
    code = main(["gen-labels", str(data / "manifest.json"), "--config", str(config), "--out", str(out)])
    assert code == EXIT_PARTIAL
    summary = json.loads((out / "summary.json").read_text())
    assert [f["index"] for f in summary["frames"]] == [0, 2]
    assert all(f["status"] == "ok" for f in summary["frames"])
    assert [e["index"] for e in summary["load_errors"]] == [1]
    assert "TruncatedFile" in summary["load_errors"][0]["error"]
    assert sorted(p.name for p in (out / "labels").iterdir()) == ["000000.bevg", "000002.bevg"]


def test_manifest_grid_wins_over_config(workspace, tmp_path, capsys):
    _, _, manifest = workspace
    config = tmp_path / "other.toml"
    config.write_text("[grid]\nrows = 32\ncols = 32\nresolution = 1.25\n")
    code = main(["voxelize", str(manifest), "--config", str(config), "--out", str(tmp_path / "vox")])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "vox" / "summary.json").read_text())
    assert (summary["voxel_spec"]["rows"], summary["voxel_spec"]["resolution"]) == (64, 0.625)
    assert "manifest grid" in capsys.readouterr().err


def test_reruns_are_byte_identical(tmp_path):
    config = tmp_path / "bevbench.toml"
    config.write_text(CONFIG)

    def run(out):
        data = out / "data"
        assert main(["synth", "--config", str(config), "--out", str(data)]) == EXIT_OK
        for command in ("gen-labels", "eval", "voxelize", "consistency"):
            code = main([command, str(data / "manifest.json"), "--config", str(config), "--out", str(out / command)])
            assert code == EXIT_OK
        return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    first, second = run(tmp_path / "a"), run(tmp_path / "b")
    assert sorted(first) == sorted(second)
    assert [name for name in first if first[name] != second[name]] == []


def test_missing_prediction_is_a_partial_failure(workspace, tmp_path):
    root, config, manifest = workspace
    data = shutil.copytree(manifest.parent, tmp_path / "data")
    (data / "predictions" / "000001.bevg").unlink()
    code = main(["eval", str(data / "manifest.json"), "--config", str(config), "--out", str(tmp_path / "eval")])
    assert code == EXIT_PARTIAL
    report = json.loads((tmp_path / "eval" / "eval.json").read_text())
    assert [e["index"] for e in report["frame_errors"]] == [1]
    assert report["frame_count"] == 2


# ----------------- exit codes -----------------
def test_usage_errors_exit_with_one():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["eval"])
    assert err.value.code == EXIT_USAGE


def test_missing_manifest(tmp_path):
    assert main(["eval", str(tmp_path / "manifest.json"), "--out", str(tmp_path)]) == EXIT_USAGE


def test_jobs_must_be_positive(workspace, tmp_path):
    _, _, manifest = workspace
    assert main(["eval", str(manifest), "--jobs", "0", "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_config(workspace, tmp_path):
    _, _, manifest = workspace
    config = tmp_path / "bad.toml"
    config.write_text("[grid]\nrows = -4\n")
    assert main(["eval", str(manifest), "--config", str(config), "--out", str(tmp_path)]) == EXIT_USAGE


def test_report_rejects_non_reports(tmp_path):
    path = tmp_path / "eval.json"
    path.write_text(json.dumps({"miou": 3.0}))
    assert main(["report", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


def test_gen_labels_needs_every_cloud(workspace, tmp_path):
    _, config, manifest = workspace
    data = shutil.copytree(manifest.parent, tmp_path / "data")
    (data / "velodyne" / "000000.bin").unlink()
    code = main(["gen-labels", str(data / "manifest.json"), "--config", str(config), "--out", str(tmp_path / "weak")])
    assert code == EXIT_USAGE
    assert not (tmp_path / "weak" / "summary.json").exists()
