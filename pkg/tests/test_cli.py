import csv
import json
import os
import subprocess
import sys

import pytest

from vru_intent.cli import META_COLUMNS, main
from vru_intent.features import all_feature_names
from vru_intent.skeleton import schema_for


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _synth(out, seed=0, per_action=3, n_frames=26,
           actions="StartCrossing,Standing"):
    return main([
        "synth", "--role", "pedestrian", "--actions", actions,
        "--per-action", str(per_action), "--n-frames", str(n_frames),
        "--onset", "12", "--jitter", "1.0", "--seed", str(seed),
        "--out", out,
    ])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end run shared by the inspection tests."""
    d = tmp_path_factory.mktemp("pipe")
    paths = {
        "raw": str(d / "raw.jsonl"),
        "tracked": str(d / "tracked.jsonl"),
        "summary": str(d / "summary.json"),
        "features": str(d / "features.csv"),
        "model": str(d / "model.json"),
        "preds": str(d / "preds.csv"),
        "report": str(d / "report.json"),
    }
    assert _synth(paths["raw"]) == 0
    assert main(["track", "--in", paths["raw"], "--out", paths["tracked"],
                 "--summary-out", paths["summary"]]) == 0
    assert main(["featurize", "--in", paths["tracked"], "--role", "pedestrian",
                 "-T", "6", "--out", paths["features"]]) == 0
    assert main(["train", "--features", paths["features"], "--role",
                 "pedestrian", "-T", "6", "--no-cv", "--trees", "30",
                 "--depths", "8", "--out", paths["model"]]) == 0
    assert main(["predict", "--model", paths["model"], "--features",
                 paths["features"], "--out", paths["preds"]]) == 0
    assert main(["eval", "--preds", paths["preds"], "--curves",
                 "--out", paths["report"]]) == 0
    return paths


class TestPipeline:
    def test_tracking_keeps_unmatched_without_ids(self, pipeline):
        rows = [json.loads(l) for l in _read(pipeline["tracked"]).splitlines()]
        # 6 videos x 26 frames; the 2 pre-confirmation frames per video
        # stay as untracked passthrough records
        assert len(rows) == 156
        untracked = [r for r in rows if r["track_id"] is None]
        assert len(untracked) == 12
        assert {r["frame"] for r in untracked} == {0, 1}
        videos = {r["video_id"] for r in rows}
        assert len(videos) == 6
        for vid in videos:
            ids = {r["track_id"] for r in rows
                   if r["video_id"] == vid and r["track_id"] is not None}
            assert ids == {1}  # ids restart per video

    def test_track_summary_structure(self, pipeline):
        summary = json.loads(_read(pipeline["summary"]))
        assert set(summary) == {
            f"pedestrian-{a}-{i:03d}"
            for a in ("StartCrossing", "Standing") for i in range(3)
        }
        for s in summary.values():
            assert s == {"records": 26, "assigned": 24, "tracks": 1,
                         "id_space": "per-video"}

    def test_feature_csv_layout(self, pipeline):
        rows = _csv_rows(pipeline["features"])
        names = all_feature_names(schema_for("pedestrian"), 6)
        assert rows[0] == list(META_COLUMNS) + names
        # 24 tracked frames -> 19 windows per track, 6 tracks
        assert len(rows) - 1 == 6 * 19
        labels = {r[3] for r in rows[1:]}
        assert labels == {"C", "NC"}

    def test_prediction_csv_layout(self, pipeline):
        rows = _csv_rows(pipeline["preds"])
        assert rows[0] == ["video_id", "track_id", "frame", "label", "tte",
                           "p_C", "p_NC", "pred"]
        assert len(rows) - 1 == 6 * 19
        for r in rows[1:3]:
            assert abs(float(r[5]) + float(r[6]) - 1.0) < 1e-12
            assert r[7] in ("C", "NC")

    def test_eval_report(self, pipeline):
        report = json.loads(_read(pipeline["report"]))
        assert report["classes"] == ["C", "NC"]
        assert report["balanced"] is True
        assert report["accuracy"] >= 0.9  # clean separable training data
        assert report["positive"] == "C"
        assert len(report["confusion"]) == 2
        ttes = [p["tte"] for p in report["tte_curve"]]
        assert ttes == sorted(ttes, reverse=True)
        assert {"tte", "fraction", "n"} <= set(report["predictability"][0])

    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        paths = {k: str(tmp_path / os.path.basename(v))
                 for k, v in pipeline.items()}
        assert _synth(paths["raw"]) == 0
        assert main(["track", "--in", paths["raw"], "--out", paths["tracked"],
                     "--summary-out", paths["summary"]]) == 0
        assert main(["featurize", "--in", paths["tracked"], "--role",
                     "pedestrian", "-T", "6", "--out", paths["features"]]) == 0
        assert main(["train", "--features", paths["features"], "--role",
                     "pedestrian", "-T", "6", "--no-cv", "--trees", "30",
                     "--depths", "8", "--out", paths["model"]]) == 0
        assert main(["predict", "--model", paths["model"], "--features",
                     paths["features"], "--out", paths["preds"]]) == 0
        assert main(["eval", "--preds", paths["preds"], "--curves",
                     "--out", paths["report"]]) == 0
        for key in paths:
            assert _read(paths[key]) == _read(pipeline[key]), key


class TestSynth:
    def test_seed_changes_output(self, tmp_path):
        a, b, c = (str(tmp_path / n) for n in ("a", "b", "c"))
        _synth(a, seed=1)
        _synth(b, seed=1)
        _synth(c, seed=2)
        assert _read(a) == _read(b)
        assert _read(a) != _read(c)

    def test_unknown_action_exits_2(self, tmp_path):
        assert main(["synth", "--role", "pedestrian", "--actions", "Moonwalk",
                     "--out", str(tmp_path / "x.jsonl")]) == 2

    def test_missing_onset_exits_2(self, tmp_path):
        assert main(["synth", "--role", "cyclist", "--actions", "TurnLeft",
                     "--out", str(tmp_path / "x.jsonl")]) == 2

    def test_rider_preset_accepted(self, tmp_path):
        out = str(tmp_path / "r.jsonl")
        code = main(["synth", "--role", "cyclist", "--actions", "NoSign",
                     "--per-action", "1", "--n-frames", "4", "--rider", "1",
                     "--out", out])
        assert code == 0
        rec = json.loads(_read(out).splitlines()[0])
        assert len(rec["keypoints"]) == 13


class TestPerturb:
    def test_zero_noise_is_identity(self, pipeline, tmp_path):
        out = str(tmp_path / "p0.jsonl")
        assert main(["perturb", "--in", pipeline["raw"], "--pct", "0",
                     "--out", out]) == 0
        assert _read(out) == _read(pipeline["raw"])

    def test_noise_moves_keypoints_only(self, pipeline, tmp_path):
        out = str(tmp_path / "p30.jsonl")
        assert main(["perturb", "--in", pipeline["raw"], "--pct", "0.3",
                     "--out", out]) == 0
        orig = [json.loads(l) for l in _read(pipeline["raw"]).splitlines()]
        noisy = [json.loads(l) for l in _read(out).splitlines()]
        assert len(orig) == len(noisy)
        moved = 0
        for o, n in zip(orig, noisy):
            assert o["bbox"] == n["bbox"]
            assert o["label"] == n["label"]
            assert o["tte"] == n["tte"]
            moved += o["keypoints"] != n["keypoints"]
        assert moved == len(orig)

    def test_deterministic(self, pipeline, tmp_path):
        a, b = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        for out in (a, b):
            assert main(["perturb", "--in", pipeline["raw"], "--pct", "0.2",
                         "--seed", "9", "--out", out]) == 0
        assert _read(a) == _read(b)


class TestExitCodes:
    def test_missing_input_file(self, tmp_path):
        assert main(["track", "--in", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_malformed_jsonl(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{nope\n")
        assert main(["track", "--in", str(bad),
                     "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_strict_rejects_unknown_fields(self, pipeline, tmp_path):
        lines = _read(pipeline["raw"]).splitlines()
        obj = json.loads(lines[0])
        obj["mystery"] = 1
        f = tmp_path / "extra.jsonl"
        f.write_text(json.dumps(obj) + "\n")
        out = str(tmp_path / "o.jsonl")
        assert main(["track", "--in", str(f), "--out", out, "--strict"]) == 2
        assert main(["track", "--in", str(f), "--out", out]) == 0

    def test_featurize_role_mismatch(self, pipeline, tmp_path):
        assert main(["featurize", "--in", pipeline["tracked"], "--role",
                     "cyclist", "--out", str(tmp_path / "f.csv")]) == 2

    def test_train_window_mismatch(self, pipeline, tmp_path):
        assert main(["train", "--features", pipeline["features"], "--role",
                     "pedestrian", "-T", "14", "--no-cv",
                     "--out", str(tmp_path / "m.json")]) == 2

    def test_predict_layout_mismatch(self, pipeline, tmp_path):
        other = str(tmp_path / "other.csv")
        assert main(["featurize", "--in", pipeline["tracked"], "--role",
                     "pedestrian", "-T", "3", "--out", other]) == 0
        assert main(["predict", "--model", pipeline["model"],
                     "--features", other,
                     "--out", str(tmp_path / "p.csv")]) == 2

    def test_single_class_training_is_degenerate(self, tmp_path):
        raw = str(tmp_path / "one.jsonl")
        tracked = str(tmp_path / "one_tracked.jsonl")
        feats = str(tmp_path / "one.csv")
        assert _synth(raw, actions="Standing", per_action=2, n_frames=13) == 0
        assert main(["track", "--in", raw, "--out", tracked]) == 0
        assert main(["featurize", "--in", tracked, "--role", "pedestrian",
                     "-T", "4", "--out", feats]) == 0
        # balancing rejects one class up front (contract), while training
        # directly on it is a degenerate numerical input
        assert main(["train", "--features", feats, "--role", "pedestrian",
                     "-T", "4", "--no-cv",
                     "--out", str(tmp_path / "m.json")]) == 2
        assert main(["train", "--features", feats, "--role", "pedestrian",
                     "-T", "4", "--no-cv", "--no-balance",
                     "--out", str(tmp_path / "m.json")]) == 3

    def test_eval_without_labels(self, tmp_path):
        preds = tmp_path / "p.csv"
        preds.write_text(
            "video_id,track_id,frame,label,tte,p_C,p_NC,pred\n"
            "v,1,0,,,0.9,0.1,C\n"
        )
        assert main(["eval", "--preds", str(preds),
                     "--out", str(tmp_path / "r.json")]) == 2

    def test_usage_error_raises_system_exit(self):
        with pytest.raises(SystemExit):
            main([])
        with pytest.raises(SystemExit):
            main(["synth", "--role", "pedestrian"])  # missing required


class TestEvalMetrics:
    def test_hand_checked_report(self, tmp_path):
        """Known predictions produce exactly the expected numbers."""
        preds = tmp_path / "p.csv"
        rows = [
            ("v", 1, 0, "C", "", 0.9, 0.1, "C"),
            ("v", 1, 1, "C", "", 0.8, 0.2, "C"),
            ("v", 2, 0, "NC", "", 0.6, 0.4, "C"),
            ("v", 2, 1, "NC", "", 0.2, 0.8, "NC"),
        ]
        body = "video_id,track_id,frame,label,tte,p_C,p_NC,pred\n" + "".join(
            ",".join(str(c) for c in r) + "\n" for r in rows
        )
        preds.write_text(body)
        report_path = str(tmp_path / "r.json")
        assert main(["eval", "--preds", str(preds), "--no-balance",
                     "--out", report_path]) == 0
        report = json.loads(_read(report_path))
        assert report["accuracy"] == 0.75
        assert report["confusion"] == [[2, 0], [1, 1]]
        assert report["f1"]["C"] == pytest.approx(0.8)
        assert report["f1"]["NC"] == pytest.approx(2 / 3)
        assert report["n_scored"] == 4

    def test_curves_need_positive_for_multiclass(self, tmp_path):
        preds = tmp_path / "p.csv"
        preds.write_text(
            "video_id,track_id,frame,label,tte,p_A,p_B,p_X,pred\n"
            "v,1,0,A,3,0.5,0.3,0.2,A\n"
        )
        report = str(tmp_path / "r.json")
        assert main(["eval", "--preds", str(preds), "--curves",
                     "--out", report]) == 2
        # naming the positive class unblocks the curve aggregation
        assert main(["eval", "--preds", str(preds), "--curves",
                     "--positive", "A", "--no-balance", "--out", report]) == 0
        out = json.loads(_read(report))
        assert out["tte_curve"] == [{"tte": 3, "mean": 0.5, "std": 0.0, "n": 1}]


def _run_backend(backend, *cli):
    script = (
        "import sys; from vru_intent.cli import main; "
        "sys.exit(main(sys.argv[1:]))"
    )
    r = subprocess.run(
        [sys.executable, "-c", script, *cli],
        capture_output=True, text=True,
        env=dict(os.environ, VRU_INTENT_BACKEND=backend),
    )
    assert r.returncode == 0, r.stderr
    return r


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("backends")
    raw = str(d / "raw.jsonl")
    tracked = str(d / "tracked.jsonl")
    feats = str(d / "features.csv")
    assert main(["synth", "--role", "pedestrian",
                 "--actions", "StartCrossing,Standing",
                 "--per-action", "1", "--n-frames", "14", "--onset", "6",
                 "--jitter", "1.0", "--out", raw]) == 0
    assert main(["track", "--in", raw, "--out", tracked]) == 0
    assert main(["featurize", "--in", tracked, "--role", "pedestrian",
                 "-T", "4", "--out", feats]) == 0
    return {"tracked": tracked, "features": feats, "dir": d}


class TestBackendIndependence:
    def test_training_bytes_identical_across_backends(self, small_corpus):
        """Training and scoring the same feature file yields byte-identical
        model and prediction artifacts under the compiled and pure Python
        tree kernels."""
        outputs = {}
        for backend in ("native", "python"):
            d = small_corpus["dir"] / backend
            d.mkdir()
            model = str(d / "model.json")
            preds = str(d / "preds.csv")
            _run_backend(backend, "train", "--features",
                         small_corpus["features"], "--role", "pedestrian",
                         "-T", "4", "--no-cv", "--trees", "10",
                         "--depths", "5", "--out", model)
            _run_backend(backend, "predict", "--model", model,
                         "--features", small_corpus["features"],
                         "--out", preds)
            outputs[backend] = (_read(model), _read(preds))
        assert outputs["native"] == outputs["python"]

    def test_featurize_agrees_numerically_across_backends(self, small_corpus):
        """The geometric kernels may differ in the last ulp of libm calls,
        so feature files are compared as numbers, not bytes."""
        import numpy as np

        cols = {}
        for backend in ("native", "python"):
            out = str(small_corpus["dir"] / f"feat-{backend}.csv")
            _run_backend(backend, "featurize", "--in",
                         small_corpus["tracked"], "--role", "pedestrian",
                         "-T", "4", "--out", out)
            rows = _csv_rows(out)
            cols[backend] = (
                rows[0],
                [r[: len(META_COLUMNS)] for r in rows[1:]],
                np.array([[float(v) for v in r[len(META_COLUMNS):]]
                          for r in rows[1:]]),
            )
        assert cols["native"][0] == cols["python"][0]
        assert cols["native"][1] == cols["python"][1]
        np.testing.assert_allclose(
            cols["native"][2], cols["python"][2], rtol=0, atol=1e-12
        )
