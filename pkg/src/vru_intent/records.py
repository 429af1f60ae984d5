"""JSONL wire format for keypoint records.

One record per (video, frame, subject) with the exact field order
video_id, frame, track_id, bbox, keypoints, label, tte, embedding,
role.  Optional fields serialize as null.  Floats use repr round-trip
formatting, so parse(serialize(r)) == r.  File writes are atomic:
content goes to a temp file in the target directory which is fsynced
and renamed over the destination.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ContractError
from .skeleton import LabeledSequence, SkeletonFrame, schema_for

log = logging.getLogger(__name__)

FIELD_ORDER = (
    "video_id",
    "frame",
    "track_id",
    "bbox",
    "keypoints",
    "label",
    "tte",
    "embedding",
    "role",
)


@dataclass
class KeypointRecord:
    video_id: str
    frame: int
    track_id: Optional[int]
    bbox: tuple[float, float, float, float]
    keypoints: list[tuple[float, float, float]]
    label: Optional[str]
    tte: Optional[int]
    embedding: Optional[list[float]]
    role: str

    def __post_init__(self):
        if not isinstance(self.video_id, str) or not self.video_id:
            raise ContractError("video_id must be a non-empty string")
        if not isinstance(self.frame, int):
            raise ContractError("frame must be an integer")
        if self.track_id is not None and not isinstance(self.track_id, int):
            raise ContractError("track_id must be an integer or null")
        if len(self.bbox) != 4:
            raise ContractError("bbox must be (x, y, w, h)")
        self.bbox = tuple(float(v) for v in self.bbox)
        kps = []
        for kp in self.keypoints:
            if len(kp) != 3:
                raise ContractError("each keypoint must be (x, y, confidence)")
            kps.append(tuple(float(v) for v in kp))
        self.keypoints = kps
        if self.tte is not None and not isinstance(self.tte, int):
            raise ContractError("tte must be an integer or null")
        if self.embedding is not None:
            self.embedding = [float(v) for v in self.embedding]
        schema = schema_for(self.role)  # validates the role
        if len(self.keypoints) != schema.K:
            raise ContractError(
                f"role {self.role!r} requires {schema.K} keypoints, "
                f"got {len(self.keypoints)}"
            )


def serialize(rec: KeypointRecord) -> str:
    """One JSON line, fields in canonical order, no trailing newline."""
    obj = {
        "video_id": rec.video_id,
        "frame": rec.frame,
        "track_id": rec.track_id,
        "bbox": list(rec.bbox),
        "keypoints": [list(kp) for kp in rec.keypoints],
        "label": rec.label,
        "tte": rec.tte,
        "embedding": rec.embedding,
        "role": rec.role,
    }
    return json.dumps(obj, separators=(", ", ": "))


def parse(line: str, strict: bool = False) -> KeypointRecord:
    """Parse one JSONL line.

    Missing optional fields default to null.  Unknown fields raise in
    strict mode and are logged and dropped otherwise.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ContractError(f"malformed JSON record: {e}") from e
    if not isinstance(obj, dict):
        raise ContractError("record must be a JSON object")
    unknown = sorted(set(obj) - set(FIELD_ORDER))
    if unknown:
        if strict:
            raise ContractError(f"unknown record fields {unknown}")
        log.warning("ignoring unknown record fields %s", unknown)
    required = ("video_id", "frame", "bbox", "keypoints", "role")
    missing = [f for f in required if f not in obj]
    if missing:
        raise ContractError(f"record missing required fields {missing}")
    return KeypointRecord(
        video_id=obj["video_id"],
        frame=obj["frame"],
        track_id=obj.get("track_id"),
        bbox=obj["bbox"],
        keypoints=obj["keypoints"],
        label=obj.get("label"),
        tte=obj.get("tte"),
        embedding=obj.get("embedding"),
        role=obj["role"],
    )


def read_jsonl(path: str, strict: bool = False) -> Iterator[KeypointRecord]:
    """Yield records from a JSONL file; blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield parse(line, strict=strict)
            except ContractError as e:
                raise ContractError(f"{path}:{lineno}: {e}") from e


def atomic_write_text(path: str, text: str):
    """Write text to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_jsonl(path: str, records: Iterable[KeypointRecord]):
    atomic_write_text(path, "".join(serialize(r) + "\n" for r in records))


def record_from_frame(
    frame: SkeletonFrame, role: str, embedding: Optional[Sequence[float]] = None
) -> KeypointRecord:
    return KeypointRecord(
        video_id=frame.video_id,
        frame=int(frame.frame),
        track_id=frame.track_id,
        bbox=tuple(float(v) for v in frame.bbox),
        keypoints=[tuple(kp) for kp in frame.keypoints.tolist()],
        label=frame.label,
        tte=frame.tte,
        embedding=list(embedding) if embedding is not None else None,
        role=role,
    )


def frame_from_record(rec: KeypointRecord) -> SkeletonFrame:
    return SkeletonFrame(
        video_id=rec.video_id,
        frame=rec.frame,
        keypoints=np.array(rec.keypoints, dtype=np.float64),
        bbox=rec.bbox,
        track_id=rec.track_id,
        label=rec.label,
        tte=rec.tte,
    )


def records_from_sequence(
    seq: LabeledSequence, role: str
) -> list[KeypointRecord]:
    return [record_from_frame(f, role) for f in seq.frames]


def sequences_from_records(
    records: Iterable[KeypointRecord], require_track: bool = True
) -> list[LabeledSequence]:
    """Group records by (video_id, track_id) into frame-sorted sequences.

    Output order follows first appearance of each group.  Records
    without a track id are rejected when require_track is set (they
    cannot belong to a sequence) and grouped under track None otherwise.
    """
    groups: dict[tuple, list[KeypointRecord]] = {}
    for rec in records:
        if require_track and rec.track_id is None:
            raise ContractError(
                f"record {rec.video_id}:{rec.frame} has no track id; "
                "run tracking first"
            )
        groups.setdefault((rec.video_id, rec.track_id), []).append(rec)
    out = []
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.frame)
        frames = [frame_from_record(r) for r in recs]
        seen = set()
        for r in recs:
            if r.frame in seen:
                raise ContractError(
                    f"duplicate frame {r.frame} in track {key[1]} of {key[0]}"
                )
            seen.add(r.frame)
        labels = [f.label for f in frames if f.label is not None]
        terminal = labels[-1] if labels else None
        event = None
        for f in frames:
            if f.tte is not None:
                event = f.frame + f.tte
                break
        out.append(
            LabeledSequence(
                frames=frames,
                action_label=terminal,
                event_frame=event,
                scenario=None,
            )
        )
    return out
