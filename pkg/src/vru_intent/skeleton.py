"""Keypoint schemas, frame validation and sequence containers.

Canonical keypoint ids (1-based, dense):

    1 neck, 2 l_shoulder, 3 r_shoulder, 4 l_elbow, 5 r_elbow,
    6 l_wrist, 7 r_wrist, 8 l_hip, 9 r_hip, 10 l_knee, 11 r_knee,
    12 l_ankle, 13 r_ankle

The pedestrian schema keeps ids {1, 2, 3, 8, 9, 10, 11, 12, 13} (neck,
shoulders, hips, knees, ankles); the cyclist schema adds elbows and
wrists for a total of 13.  Image convention: y grows downward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError

_KEYPOINT_NAMES = {
    1: "neck",
    2: "l_shoulder",
    3: "r_shoulder",
    4: "l_elbow",
    5: "r_elbow",
    6: "l_wrist",
    7: "r_wrist",
    8: "l_hip",
    9: "r_hip",
    10: "l_knee",
    11: "r_knee",
    12: "l_ankle",
    13: "r_ankle",
}

PEDESTRIAN_IDS = (1, 2, 3, 8, 9, 10, 11, 12, 13)
CYCLIST_IDS = tuple(range(1, 14))


@dataclass(frozen=True)
class KeypointSchema:
    """Ordered keypoint set for one VRU role."""

    role: str
    ids: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.ids)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(_KEYPOINT_NAMES[i] for i in self.ids)

    def position_of(self, keypoint_id: int) -> int:
        """0-based position of a canonical id within this schema."""
        try:
            return self.ids.index(keypoint_id)
        except ValueError:
            raise ContractError(
                f"keypoint id {keypoint_id} not in {self.role} schema"
            ) from None


PEDESTRIAN_SCHEMA = KeypointSchema(role="pedestrian", ids=PEDESTRIAN_IDS)
CYCLIST_SCHEMA = KeypointSchema(role="cyclist", ids=CYCLIST_IDS)

SCHEMAS = {"pedestrian": PEDESTRIAN_SCHEMA, "cyclist": CYCLIST_SCHEMA}


def schema_for(role: str) -> KeypointSchema:
    try:
        return SCHEMAS[role]
    except KeyError:
        raise ContractError(f"unknown role {role!r}") from None


@dataclass(eq=False)
class SkeletonFrame:
    """One VRU's keypoints in one video frame.

    keypoints is a (K, 3) array of (x_px, y_px, confidence); confidences
    live in [0, 1] and y points downward.
    """

    video_id: str
    frame: int
    keypoints: np.ndarray
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    track_id: Optional[int] = None
    label: Optional[str] = None
    tte: Optional[int] = None

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        if self.keypoints.ndim != 2 or self.keypoints.shape[1] != 3:
            raise ContractError("keypoints must be a (K, 3) array of (x, y, c)")

    @property
    def xy(self) -> np.ndarray:
        return self.keypoints[:, :2]

    @property
    def confidences(self) -> np.ndarray:
        return self.keypoints[:, 2]


@dataclass
class LabeledSequence:
    """Time-ordered frames of one track with its action annotation.

    event_frame marks TTE = 0; positive TTE values are frames before the
    event.  scenario names the generating situation (e.g. StartCrossing)
    when it is finer-grained than the C/NC action label.
    """

    frames: list[SkeletonFrame]
    action_label: Optional[str] = None
    event_frame: Optional[int] = None
    scenario: Optional[str] = None

    def __post_init__(self):
        idx = [f.frame for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractError("frame indices must be strictly increasing")


@dataclass(frozen=True)
class FrameValidation:
    ok: bool
    reason: Optional[str] = None


VALID = FrameValidation(True, None)


def validate_frame(
    frame: SkeletonFrame, schema: KeypointSchema, cmin: float = 0.1
) -> FrameValidation:
    """Check a frame against its schema.

    Valid iff every confidence is >= cmin and the keypoints span a
    strictly positive vertical extent; the first failing condition is
    reported.  A keypoint-count mismatch is a contract violation, not a
    degenerate frame.
    """
    kp = frame.keypoints
    if kp.shape[0] != schema.K:
        raise ContractError(
            f"expected {schema.K} keypoints for role {schema.role}, got {kp.shape[0]}"
        )
    conf = kp[:, 2]
    low = np.where(conf < cmin)[0]
    if low.size:
        i = int(low[0])
        return FrameValidation(False, f"low confidence {conf[i]:.3g} at keypoint {i}")
    if not np.isfinite(kp[:, :2]).all():
        return FrameValidation(False, "non-finite coordinate")
    height = float(kp[:, 1].max() - kp[:, 1].min())
    if height <= 0.0:
        return FrameValidation(False, "zero height")
    return VALID


@dataclass
class Window:
    """T consecutive frames labeled by the newest one."""

    frames: list[SkeletonFrame]
    label: Optional[str]
    tte: Optional[int]

    @property
    def newest(self) -> SkeletonFrame:
        return self.frames[-1]


def window_slices(seq: LabeledSequence, T: int) -> list[Window]:
    """All T-frame sliding windows of a sequence.

    Windows take the label and TTE of their newest frame.  Only windows
    whose frame indices are consecutive are emitted, so a gap-free
    sequence of N frames yields max(0, N - T + 1) windows.
    """
    if T < 1:
        raise ContractError("window length must be >= 1")
    frames = seq.frames
    out = []
    for i in range(len(frames) - T + 1):
        chunk = frames[i : i + T]
        if chunk[-1].frame - chunk[0].frame != T - 1:
            continue
        out.append(Window(frames=chunk, label=chunk[-1].label, tte=chunk[-1].tte))
    return out


def impute_forward(
    frames: Sequence[SkeletonFrame], schema: KeypointSchema, cmin: float = 0.1
) -> tuple[list[SkeletonFrame], list[bool], list[bool]]:
    """Carry keypoints of the last valid frame over degenerate ones.

    Returns (frames, imputed, usable).  Degenerate frames get the most
    recent valid frame's keypoints and imputed=True; leading degenerate
    frames with nothing to carry stay as-is with usable=False.  Intended
    for inference; training drops degenerate windows instead.
    """
    out: list[SkeletonFrame] = []
    imputed: list[bool] = []
    usable: list[bool] = []
    last_good: Optional[np.ndarray] = None
    for f in frames:
        if validate_frame(f, schema, cmin).ok:
            last_good = f.keypoints
            out.append(f)
            imputed.append(False)
            usable.append(True)
        elif last_good is not None:
            patched = SkeletonFrame(
                video_id=f.video_id,
                frame=f.frame,
                keypoints=last_good.copy(),
                bbox=f.bbox,
                track_id=f.track_id,
                label=f.label,
                tte=f.tte,
            )
            out.append(patched)
            imputed.append(True)
            usable.append(True)
        else:
            out.append(f)
            imputed.append(False)
            usable.append(False)
    return out, imputed, usable
