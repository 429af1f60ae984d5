"""Synthetic VRU sequences with controllable kinematics.

Articulated 2-D stick figures rendered in image coordinates (y down).
Pedestrians swing their legs with a sinusoidal gait; crossing-type
walks swing laterally (full apparent amplitude) while walking along the
sidewalk shows the compressed projection of a sagittal swing.  Cyclists
sit on a static frame, pedal, and raise an arm into the signal pose
over a short ramp starting at onset_frame.

Everything is a pure function of its SynthSpec: the same SynthSpec
yields bit-identical sequences.  With zero jitter and zero forward speed the
gait is exactly periodic in the period P, i.e. frame t + P repeats
frame t.

Actions
  pedestrian: KeepWalkingToCross (C), StartCrossing (NC then C at
    onset), Standing (NC), WalkAlong (NC)
  cyclist: NoSign, TurnLeft, TurnRight, Stop; labels are
    vehicle-centric, so the signaling arm depends on the camera view
    (back: rider's side = labeled side; front: mirrored), and the
    "bent-up opposite arm" right-turn variant is available via
    variant="alt".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractError
from .skeleton import LabeledSequence, SkeletonFrame, schema_for

PEDESTRIAN_ACTIONS = ("KeepWalkingToCross", "StartCrossing", "Standing", "WalkAlong")
CYCLIST_ACTIONS = ("NoSign", "TurnLeft", "TurnRight", "Stop")

_MASK64 = (1 << 64) - 1
SIGNAL_RAMP_FRAMES = 5


@dataclass(frozen=True)
class SynthSpec:
    role: str
    action: str
    n_frames: int
    seed: int = 0
    onset_frame: Optional[int] = None  # event / signal start; None only for
    # actions without an event (Standing, WalkAlong, NoSign)
    view: str = "back"  # "back" or "front"
    variant: str = "standard"  # "alt" -> bent-up opposite-arm right turn
    base_height_px: float = 120.0
    gait_amplitude_rad: float = 0.55
    gait_period_frames: int = 16
    walk_speed_px: float = 1.5
    jitter_std_px: float = 0.0
    limb_scale: float = 1.0
    width_scale: float = 1.0
    video_id: Optional[str] = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ContractError("n_frames must be >= 1")
        if self.role == "pedestrian":
            if self.action not in PEDESTRIAN_ACTIONS:
                raise ContractError(f"unknown pedestrian action {self.action!r}")
        elif self.role == "cyclist":
            if self.action not in CYCLIST_ACTIONS:
                raise ContractError(f"unknown cyclist action {self.action!r}")
        else:
            raise ContractError(f"unknown role {self.role!r}")
        if self.view not in ("back", "front"):
            raise ContractError(f"view must be 'back' or 'front', got {self.view!r}")
        if self.variant not in ("standard", "alt"):
            raise ContractError(f"variant must be 'standard' or 'alt'")
        if self.variant == "alt" and self.action != "TurnRight":
            raise ContractError("variant='alt' only applies to TurnRight")
        if self.gait_period_frames < 2:
            raise ContractError("gait period must be >= 2 frames")
        if self.base_height_px <= 0:
            raise ContractError("base height must be positive")
        needs_onset = self.action in (
            "KeepWalkingToCross",
            "StartCrossing",
            "TurnLeft",
            "TurnRight",
            "Stop",
        )
        if needs_onset and self.onset_frame is None:
            raise ContractError(f"action {self.action!r} requires onset_frame")
        if self.onset_frame is not None and not (
            0 <= self.onset_frame < self.n_frames
        ):
            raise ContractError("onset_frame must lie inside the sequence")

    @property
    def resolved_video_id(self) -> str:
        if self.video_id is not None:
            return self.video_id
        return f"synth-{self.role}-{self.action}-s{self.seed}"


def _gait_phase(t: int, period: int) -> float:
    # exact wrap: identical value at t and t + period
    return 2.0 * math.pi * ((t % period) / period)


def _pedestrian_points(spec: SynthSpec, t: int) -> np.ndarray:
    """(9, 2) rest-frame points: neck, shoulders, hips, knees, ankles."""
    H = spec.base_height_px
    W = spec.width_scale
    limb = spec.limb_scale
    thigh = 0.24 * H * limb
    shank = 0.24 * H * limb

    if spec.action == "Standing":
        walking = False
        amp_scale = 0.0
        t_walk = 0
    elif spec.action == "WalkAlong":
        walking = True
        amp_scale = 0.35  # sagittal swing seen edge-on
        t_walk = t
    elif spec.action == "KeepWalkingToCross":
        walking = True
        amp_scale = 1.0
        t_walk = t
    else:  # StartCrossing
        walking = t >= spec.onset_frame
        amp_scale = 1.0
        t_walk = t - spec.onset_frame

    if walking:
        phase = _gait_phase(t_walk, spec.gait_period_frames)
        a = spec.gait_amplitude_rad * amp_scale
        phi_l = a * math.sin(phase)
        phi_r = a * math.sin(phase + math.pi)
        psi_l = a * math.sin(phase - 0.5)
        psi_r = a * math.sin(phase + math.pi - 0.5)
        x_off = spec.walk_speed_px * t_walk
    else:
        phi_l = phi_r = psi_l = psi_r = 0.0
        x_off = 0.0

    pts = np.empty((9, 2))
    pts[0] = (0.0, 0.0)  # neck
    pts[1] = (-0.13 * H * W, 0.06 * H)  # l_shoulder
    pts[2] = (+0.13 * H * W, 0.06 * H)  # r_shoulder
    l_hip = np.array((-0.08 * H * W, 0.47 * H))
    r_hip = np.array((+0.08 * H * W, 0.47 * H))
    pts[3] = l_hip
    pts[4] = r_hip
    l_knee = l_hip + thigh * np.array((math.sin(phi_l), math.cos(phi_l)))
    r_knee = r_hip + thigh * np.array((math.sin(phi_r), math.cos(phi_r)))
    pts[5] = l_knee
    pts[6] = r_knee
    pts[7] = l_knee + shank * np.array((math.sin(psi_l), math.cos(psi_l)))
    pts[8] = r_knee + shank * np.array((math.sin(psi_r), math.cos(psi_r)))
    pts[:, 0] += x_off
    return pts


def _signal_side(spec: SynthSpec) -> tuple[int, str]:
    """(rider-local arm side, pose) for a cyclist signal; side -1 = left."""
    if spec.action == "TurnLeft":
        side, pose = -1, "horizontal"
    elif spec.action == "TurnRight":
        if spec.variant == "alt":
            side, pose = -1, "bent_up"
        else:
            side, pose = +1, "horizontal"
    else:  # Stop
        side, pose = -1, "bent_down"
    if spec.view == "front":
        side = -side
    return side, pose


def _cyclist_points(spec: SynthSpec, t: int) -> np.ndarray:
    """(13, 2) points; seated pose, pedaling legs, signal arm ramp."""
    H = spec.base_height_px
    W = spec.width_scale
    limb = spec.limb_scale
    upper_arm = 0.16 * H * limb
    forearm = 0.16 * H * limb

    pts = np.empty((13, 2))
    pts[0] = (0.0, 0.0)  # neck
    l_sho = np.array((-0.14 * H * W, 0.05 * H))
    r_sho = np.array((+0.14 * H * W, 0.05 * H))
    pts[1] = l_sho
    pts[2] = r_sho

    # resting arms reach down-in to the handlebar
    rest_elbows = {
        -1: l_sho + np.array((-0.02 * H, 0.18 * H * limb)),
        +1: r_sho + np.array((+0.02 * H, 0.18 * H * limb)),
    }
    rest_wrists = {
        -1: rest_elbows[-1] + np.array((+0.03 * H, 0.14 * H * limb)),
        +1: rest_elbows[+1] + np.array((-0.03 * H, 0.14 * H * limb)),
    }
    elbows = dict(rest_elbows)
    wrists = dict(rest_wrists)

    if spec.action != "NoSign" and t >= spec.onset_frame:
        alpha = min(1.0, (t - spec.onset_frame + 1) / SIGNAL_RAMP_FRAMES)
        side, pose = _signal_side(spec)
        sho = l_sho if side < 0 else r_sho
        elbow_target = sho + np.array((side * upper_arm, 0.0))
        if pose == "horizontal":
            wrist_target = elbow_target + np.array((side * forearm, 0.0))
        elif pose == "bent_up":
            wrist_target = elbow_target + np.array((0.0, -forearm))
        else:  # bent_down
            wrist_target = elbow_target + np.array((0.0, +forearm))
        elbows[side] = rest_elbows[side] + alpha * (elbow_target - rest_elbows[side])
        wrists[side] = rest_wrists[side] + alpha * (wrist_target - rest_wrists[side])

    pts[3] = elbows[-1]  # l_elbow
    pts[4] = elbows[+1]  # r_elbow
    pts[5] = wrists[-1]  # l_wrist
    pts[6] = wrists[+1]  # r_wrist

    pts[7] = (-0.09 * H * W, 0.42 * H)  # l_hip
    pts[8] = (+0.09 * H * W, 0.42 * H)  # r_hip
    phase = _gait_phase(t, spec.gait_period_frames)
    pedal = 0.05 * spec.gait_amplitude_rad * H
    dy_l = pedal * math.sin(phase)
    dy_r = pedal * math.sin(phase + math.pi)
    pts[9] = (-0.12 * H * W, 0.62 * H + 0.5 * dy_l)  # l_knee
    pts[10] = (+0.12 * H * W, 0.62 * H + 0.5 * dy_r)  # r_knee
    pts[11] = (-0.10 * H * W, 0.80 * H + dy_l)  # l_ankle
    pts[12] = (+0.10 * H * W, 0.80 * H + dy_r)  # r_ankle
    return pts


def _labels(spec: SynthSpec, t: int) -> tuple[str, Optional[int]]:
    """(frame label, tte) for frame t."""
    event = spec.onset_frame
    tte = None if event is None else event - t
    if spec.role == "pedestrian":
        if spec.action in ("Standing", "WalkAlong"):
            return "NC", tte
        if spec.action == "KeepWalkingToCross":
            return "C", tte
        return ("NC", tte) if t < event else ("C", tte)
    if spec.action == "NoSign":
        return "NoSign", tte
    return ("NoSign", tte) if t < event else (spec.action, tte)


def generate_sequence(spec: SynthSpec) -> LabeledSequence:
    """Render a spec into a labeled skeleton sequence.

    Frames carry per-frame labels and TTE; the sequence records the
    terminal action label, the event frame and the generating scenario.
    """
    schema = schema_for(spec.role)
    video_id = spec.resolved_video_id
    point_fn = _pedestrian_points if spec.role == "pedestrian" else _cyclist_points

    g = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([spec.seed & _MASK64]))
    )
    jitter = g.standard_normal((spec.n_frames, schema.K, 2)) * spec.jitter_std_px

    frames = []
    # detector-style box: centroid-centered with a per-subject fixed
    # size, so the aspect ratio does not flutter with limb motion
    box_w = (0.62 if spec.role == "pedestrian" else 0.70) * spec.base_height_px
    box_h = 1.10 * spec.base_height_px
    for t in range(spec.n_frames):
        pts = point_fn(spec, t)
        if spec.view == "front":
            pts = pts.copy()
            pts[:, 0] = -pts[:, 0]
        pts = pts + jitter[t]
        label, tte = _labels(spec, t)
        cx = float(pts[:, 0].mean())
        cy = float(pts[:, 1].mean())
        x0, y0 = cx - box_w / 2.0, cy - box_h / 2.0
        kp = np.column_stack([pts, np.ones(schema.K)])
        frames.append(
            SkeletonFrame(
                video_id=video_id,
                frame=t,
                keypoints=kp,
                bbox=(x0, y0, box_w, box_h),
                track_id=None,
                label=label,
                tte=tte,
            )
        )

    if spec.role == "pedestrian":
        terminal = "C" if spec.action in ("KeepWalkingToCross", "StartCrossing") else "NC"
    else:
        terminal = spec.action
    return LabeledSequence(
        frames=frames,
        action_label=terminal,
        event_frame=spec.onset_frame,
        scenario=spec.action,
    )


# physique presets for multi-rider corpora
RIDER_STYLES = (
    {"limb_scale": 1.00, "width_scale": 1.00, "base_height_px": 120.0, "gait_period_frames": 16},
    {"limb_scale": 0.92, "width_scale": 1.08, "base_height_px": 135.0, "gait_period_frames": 14},
    {"limb_scale": 1.06, "width_scale": 0.95, "base_height_px": 110.0, "gait_period_frames": 18},
    {"limb_scale": 0.98, "width_scale": 1.12, "base_height_px": 150.0, "gait_period_frames": 20},
)


def rider_spec(rider: int, base: SynthSpec) -> SynthSpec:
    """Apply one of the four physique presets to a cyclist spec."""
    if not 0 <= rider < len(RIDER_STYLES):
        raise ContractError(f"rider index must be in 0..{len(RIDER_STYLES) - 1}")
    return replace(base, **RIDER_STYLES[rider])


def generate_corpus(specs: list[SynthSpec]) -> list[LabeledSequence]:
    return [generate_sequence(s) for s in specs]
