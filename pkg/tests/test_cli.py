import json
import shutil
from pathlib import Path

import pytest

from reflectguard.cli import main

GOLDEN = Path(__file__).parent / "data" / "golden"


@pytest.fixture
def golden_cwd(tmp_path, monkeypatch):
    """Run in a temp directory seeded with the golden scene spec.

    The golden outputs embed relative input paths in their metadata, so
    regeneration must happen with the same relative layout.
    """
    shutil.copy(GOLDEN / "scene_spec.json", tmp_path / "scene_spec.json")
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*args) -> int:
    return main([str(a) for a in args])


def synth_golden() -> int:
    return run(
        "synth",
        "--spec", "scene_spec.json",
        "--out-annotations", "annotations.json",
        "--out-detections", "detections.json",
        "--out-labels", "labels.json",
    )


class TestGoldenPipeline:
    def test_synth_reproduces_frozen_fixture_bytes(self, golden_cwd):
        assert synth_golden() == 0
        for name in ("annotations.json", "detections.json", "labels.json"):
            assert (golden_cwd / name).read_bytes() == (GOLDEN / name).read_bytes(), name

    def test_filter_eval_compare_reproduce_frozen_reports(self, golden_cwd):
        assert synth_golden() == 0
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "filtered.json",
            "--removal-log", "removal_log.json",
        ) == 0
        assert run(
            "eval",
            "--detections", "filtered.json",
            "--annotations", "annotations.json",
            "--out", "eval_report.json",
        ) == 0
        assert run(
            "compare",
            "--before", "detections.json",
            "--after", "filtered.json",
            "--annotations", "annotations.json",
            "--out", "compare_report.json",
        ) == 0
        for name in (
            "filtered.json",
            "removal_log.json",
            "eval_report.json",
            "compare_report.json",
        ):
            assert (golden_cwd / name).read_bytes() == (GOLDEN / name).read_bytes(), name


class TestFilterCommand:
    def test_empty_detections_passthrough(self, golden_cwd, capsys):
        synth_golden()
        Path("empty.json").write_text("[]")
        assert run(
            "filter",
            "--detections", "empty.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        ) == 0
        assert json.loads(Path("out.json").read_text()) == []
        assert "removed:        0" in capsys.readouterr().out

    def test_summary_lists_per_class_counts(self, golden_cwd, capsys):
        synth_golden()
        run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        )
        out = capsys.readouterr().out
        assert "detections in:  30" in out
        assert "class 1: removed" in out

    def test_filter_matches_reference_filter(self, golden_cwd):
        from reflectguard import (
            load_annotations,
            load_detections,
            oracle_sliding_filter,
            save_detections,
        )

        synth_golden()
        run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        )
        index = load_annotations("annotations.json")
        dets = load_detections("detections.json", index)
        expected_kept, _ = oracle_sliding_filter(dets, index.dims_by_image)
        save_detections(expected_kept, "expected.json")
        assert Path("out.json").read_bytes() == Path("expected.json").read_bytes()

    def test_shift_basis_flag(self, golden_cwd):
        synth_golden()
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out_box.json",
            "--shift-basis", "box",
        ) == 0
        assert Path("out_box.json").exists()


class TestEvalCommand:
    def test_perfect_detections_score_one(self, golden_cwd, capsys):
        synth_golden()
        # detections exactly on the ground truths
        ann = json.loads(Path("annotations.json").read_text())
        perfect = [
            {
                "image_id": a["image_id"],
                "category_id": a["category_id"],
                "bbox": a["bbox"],
                "score": 0.9,
            }
            for a in ann["annotations"]
        ]
        Path("perfect.json").write_text(json.dumps(perfect))
        assert run(
            "eval",
            "--detections", "perfect.json",
            "--annotations", "annotations.json",
            "--out", "report.json",
        ) == 0
        report = json.loads(Path("report.json").read_text())
        assert report["map"]["map_50_95"] == 1.0
        assert report["map"]["map_50"] == 1.0

    def test_custom_thresholds(self, golden_cwd):
        synth_golden()
        assert run(
            "eval",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "report.json",
            "--mode", "voc",
            "--iou-thresholds", "0.5,0.75",
            "--score-thresholds", "0.3",
        ) == 0
        report = json.loads(Path("report.json").read_text())
        assert report["iou_thresholds"] == [0.5, 0.75]
        assert report["mode"] == "voc"
        assert list(report["mean_iou_at_score"]) == ["0.3"]

    def test_metadata_carries_digests(self, golden_cwd):
        synth_golden()
        run(
            "eval",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "report.json",
        )
        meta = json.loads(Path("report.json").read_text())["metadata"]
        assert meta["num_images"] == 1
        assert len(meta["inputs"]["detections"]["sha256"]) == 64


class TestCompareCommand:
    def test_identical_inputs_zero_deltas(self, golden_cwd):
        synth_golden()
        assert run(
            "compare",
            "--before", "detections.json",
            "--after", "detections.json",
            "--annotations", "annotations.json",
            "--out", "cmp.json",
        ) == 0
        cmp = json.loads(Path("cmp.json").read_text())
        assert cmp["fp_reduction_pct"] == 0.0
        assert cmp["tp_reduction_pct"] == 0.0
        assert cmp["map_deltas"]["map_50"]["delta"] == 0.0

    def test_baseline_score_filter(self, golden_cwd):
        synth_golden()
        assert run(
            "compare",
            "--before", "detections.json",
            "--baseline-score", "0.3",
            "--annotations", "annotations.json",
            "--out", "cmp.json",
        ) == 0
        cmp = json.loads(Path("cmp.json").read_text())
        # the baseline drops every sub-0.3 proposal, reflections included
        assert cmp["counts"]["0.50"]["fp_after"] < cmp["counts"]["0.50"]["fp_before"]
        assert cmp["after"]["metadata"]["baseline_score_threshold"] == 0.3

    def test_after_and_baseline_mutually_exclusive(self, golden_cwd):
        synth_golden()
        assert run(
            "compare",
            "--before", "detections.json",
            "--after", "detections.json",
            "--baseline-score", "0.3",
            "--annotations", "annotations.json",
            "--out", "cmp.json",
        ) == 1


class TestHeatmapCommand:
    def test_black_png_for_empty_detections(self, golden_cwd):
        pytest.importorskip("PIL")
        import numpy as np
        from PIL import Image

        synth_golden()
        Path("empty.json").write_text("[]")
        assert run(
            "heatmap",
            "--detections", "empty.json",
            "--annotations", "annotations.json",
            "--image-id", 1,
            "--class-id", 1,
            "--out", "h.png",
        ) == 0
        img = np.asarray(Image.open("h.png"))
        assert img.shape == (160, 160)
        assert img.sum() == 0

    def test_renders_detections(self, golden_cwd):
        pytest.importorskip("PIL")
        import numpy as np
        from PIL import Image

        synth_golden()
        assert run(
            "heatmap",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--image-id", 1,
            "--class-id", 1,
            "--out", "h.png",
        ) == 0
        assert np.asarray(Image.open("h.png")).max() == 255

    def test_unknown_image_id(self, golden_cwd):
        synth_golden()
        Path("empty.json").write_text("[]")
        assert run(
            "heatmap",
            "--detections", "empty.json",
            "--annotations", "annotations.json",
            "--image-id", 99,
            "--class-id", 1,
            "--out", "h.png",
        ) == 1


class TestExitCodesAndAtomicity:
    def test_validation_error_is_exit_1_and_no_output(self, golden_cwd):
        synth_golden()
        Path("broken.json").write_text('[{"image_id": 1]')
        assert run(
            "filter",
            "--detections", "broken.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        ) == 1
        assert not Path("out.json").exists()

    def test_missing_input_is_exit_2(self, golden_cwd):
        synth_golden()
        assert run(
            "filter",
            "--detections", "missing.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        ) == 2

    def test_unwritable_output_is_exit_2_without_partial_file(self, golden_cwd):
        synth_golden()
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "no_such_dir/out.json",
        ) == 2
        assert not Path("no_such_dir").exists()

    def test_usage_error_is_exit_1(self, capsys):
        assert run("filter") == 1

    def test_bad_parameter_value_is_exit_1(self, golden_cwd, capsys):
        synth_golden()
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
            "--shift-fraction", "0",
        ) == 1
        assert "shift_fraction" in capsys.readouterr().err

    def test_help_is_exit_0(self, capsys):
        assert run("--help") == 0

    def test_bad_score_in_detections_cited(self, golden_cwd, capsys):
        synth_golden()
        Path("bad.json").write_text(
            json.dumps(
                [{"image_id": 1, "category_id": 1, "bbox": [1, 1, 2, 2], "score": 7}]
            )
        )
        assert run(
            "eval",
            "--detections", "bad.json",
            "--annotations", "annotations.json",
            "--out", "r.json",
        ) == 1
        assert "score" in capsys.readouterr().err


class TestThreadsFlag:
    def test_env_var_fallback(self, golden_cwd, monkeypatch):
        synth_golden()
        monkeypatch.setenv("REFLECTGUARD_THREADS", "2")
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        ) == 0

    def test_invalid_env_var_rejected(self, golden_cwd, monkeypatch):
        synth_golden()
        monkeypatch.setenv("REFLECTGUARD_THREADS", "zero")
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
        ) == 1

    def test_explicit_flag_overrides_env(self, golden_cwd, monkeypatch):
        synth_golden()
        monkeypatch.setenv("REFLECTGUARD_THREADS", "zero")  # invalid, but unused
        assert run(
            "filter",
            "--detections", "detections.json",
            "--annotations", "annotations.json",
            "--out", "out.json",
            "--threads", "2",
        ) == 0
