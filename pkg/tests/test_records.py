import json
import os

import numpy as np
import pytest

from vru_intent.errors import ContractError
from vru_intent.records import (
    FIELD_ORDER,
    KeypointRecord,
    atomic_write_text,
    frame_from_record,
    parse,
    read_jsonl,
    record_from_frame,
    records_from_sequence,
    sequences_from_records,
    serialize,
    write_jsonl,
)
from vru_intent.synth import SynthSpec, generate_sequence

from conftest import make_frame, random_valid_points


def _record(video_id="v0", frame=0, track_id=1, role="pedestrian", **kw):
    K = 9 if role == "pedestrian" else 13
    defaults = dict(
        video_id=video_id,
        frame=frame,
        track_id=track_id,
        bbox=(10.0, 20.0, 30.0, 60.0),
        keypoints=[(float(i), float(2 * i + 1), 0.9) for i in range(K)],
        label="C",
        tte=3,
        embedding=[0.6, 0.8],
        role=role,
    )
    defaults.update(kw)
    return KeypointRecord(**defaults)


class TestWireFormat:
    def test_roundtrip_equality(self):
        for rec in (
            _record(),
            _record(track_id=None, label=None, tte=None, embedding=None),
            _record(role="cyclist", label="TurnLeft", frame=-2, tte=-5),
            _record(bbox=(0.1, 0.2, 1e-3, 1e9)),
        ):
            assert parse(serialize(rec)) == rec

    def test_float_precision_survives(self):
        rec = _record(bbox=(1 / 3, 2 / 7, np.pi, 1e-17 + 1))
        back = parse(serialize(rec))
        assert back.bbox == rec.bbox

    def test_field_order_on_wire(self):
        line = serialize(_record())
        keys = list(json.loads(line, object_pairs_hook=dict).keys())
        assert tuple(keys) == FIELD_ORDER

    def test_none_serializes_as_null(self):
        line = serialize(_record(track_id=None, tte=None))
        obj = json.loads(line)
        assert obj["track_id"] is None
        assert obj["tte"] is None

    def test_single_line(self):
        assert "\n" not in serialize(_record())


class TestParse:
    def test_missing_optionals_default_null(self):
        obj = json.loads(serialize(_record()))
        for f in ("track_id", "label", "tte", "embedding"):
            del obj[f]
        rec = parse(json.dumps(obj))
        assert rec.track_id is None and rec.label is None
        assert rec.tte is None and rec.embedding is None

    def test_missing_required_rejected(self):
        for f in ("video_id", "frame", "bbox", "keypoints", "role"):
            obj = json.loads(serialize(_record()))
            del obj[f]
            with pytest.raises(ContractError, match=f):
                parse(json.dumps(obj))

    def test_unknown_field_strict_vs_lenient(self, caplog):
        obj = json.loads(serialize(_record()))
        obj["surprise"] = 1
        line = json.dumps(obj)
        with pytest.raises(ContractError, match="surprise"):
            parse(line, strict=True)
        with caplog.at_level("WARNING", logger="vru_intent.records"):
            rec = parse(line, strict=False)
        assert rec == _record()
        assert "surprise" in caplog.text

    def test_malformed_json(self):
        with pytest.raises(ContractError, match="malformed"):
            parse("{not json")
        with pytest.raises(ContractError):
            parse("[1, 2, 3]")

    def test_schema_mismatch_rejected(self):
        obj = json.loads(serialize(_record()))
        obj["keypoints"] = obj["keypoints"][:5]
        with pytest.raises(ContractError, match="9 keypoints"):
            parse(json.dumps(obj))
        obj = json.loads(serialize(_record()))
        obj["role"] = "scooter"
        with pytest.raises(ContractError):
            parse(json.dumps(obj))

    def test_value_validation(self):
        with pytest.raises(ContractError):
            _record(video_id="")
        with pytest.raises(ContractError):
            _record(frame="zero")
        with pytest.raises(ContractError):
            _record(bbox=(1, 2, 3))
        with pytest.raises(ContractError):
            _record(keypoints=[(1.0, 2.0)] * 9)
        with pytest.raises(ContractError):
            _record(tte=1.5)


class TestFiles:
    def test_write_read_roundtrip(self, tmp_path):
        path = str(tmp_path / "a.jsonl")
        recs = [_record(frame=i) for i in range(5)]
        write_jsonl(path, recs)
        assert list(read_jsonl(path)) == recs

    def test_blank_lines_skipped(self, tmp_path):
        path = str(tmp_path / "a.jsonl")
        body = serialize(_record()) + "\n\n   \n" + serialize(_record(frame=1)) + "\n"
        atomic_write_text(path, body)
        assert [r.frame for r in read_jsonl(path)] == [0, 1]

    def test_parse_error_carries_location(self, tmp_path):
        path = str(tmp_path / "bad.jsonl")
        atomic_write_text(path, serialize(_record()) + "\n{broken\n")
        with pytest.raises(ContractError, match=r"bad\.jsonl:2"):
            list(read_jsonl(path))

    def test_atomic_write_replaces_and_leaves_no_temp(self, tmp_path):
        path = str(tmp_path / "out.txt")
        atomic_write_text(path, "first")
        atomic_write_text(path, "second")
        with open(path) as fh:
            assert fh.read() == "second"
        assert os.listdir(tmp_path) == ["out.txt"]

    def test_failed_write_keeps_old_content(self, tmp_path):
        path = str(tmp_path / "out.jsonl")
        write_jsonl(path, [_record()])

        def bad_iter():
            yield _record()
            raise RuntimeError("source died")

        with pytest.raises(RuntimeError):
            write_jsonl(path, bad_iter())
        assert list(read_jsonl(path)) == [_record()]
        assert os.listdir(tmp_path) == ["out.jsonl"]


class TestFrameBridge:
    def test_frame_roundtrip(self, rng):
        frame = make_frame(
            random_valid_points(rng, 9), label="NC", tte=7, track_id=4
        )
        rec = record_from_frame(frame, "pedestrian", embedding=[1.0, 0.0])
        back = frame_from_record(rec)
        np.testing.assert_array_equal(back.keypoints, frame.keypoints)
        assert back.video_id == frame.video_id
        assert back.bbox == tuple(frame.bbox)
        assert (back.label, back.tte, back.track_id) == ("NC", 7, 4)

    def test_sequence_roundtrip_and_grouping(self):
        seq = generate_sequence(
            SynthSpec(role="pedestrian", action="StartCrossing",
                      n_frames=8, onset_frame=5)
        )
        recs = records_from_sequence(seq, "pedestrian")
        for r in recs:
            r.track_id = 2
        # interleave two videos to test first-appearance grouping
        other = [
            KeypointRecord(**{**rec.__dict__, "video_id": "vb"})
            for rec in recs
        ]
        mixed = [x for pair in zip(recs, other) for x in pair]
        seqs = sequences_from_records(mixed)
        assert len(seqs) == 2
        assert seqs[0].frames[0].video_id == seq.frames[0].video_id
        assert seqs[1].frames[0].video_id == "vb"
        got = seqs[0]
        assert [f.frame for f in got.frames] == list(range(8))
        assert got.action_label == "C"  # terminal label
        assert got.event_frame == 5  # frame + tte of the first row

    def test_out_of_order_frames_sorted(self):
        recs = [_record(frame=f) for f in (3, 1, 2)]
        seqs = sequences_from_records(recs)
        assert [f.frame for f in seqs[0].frames] == [1, 2, 3]

    def test_duplicate_frame_rejected(self):
        recs = [_record(frame=1), _record(frame=1)]
        with pytest.raises(ContractError, match="duplicate frame"):
            sequences_from_records(recs)

    def test_untracked_records_rejected_unless_allowed(self):
        recs = [_record(track_id=None)]
        with pytest.raises(ContractError, match="no track id"):
            sequences_from_records(recs)
        seqs = sequences_from_records(recs, require_track=False)
        assert len(seqs) == 1
