"""Detection-noise perturbation for robustness studies.

Keypoint noise is applied at test time only: each keypoint gets
independent Gaussian offsets per axis whose std is a percentage of the
distance to its nearest other keypoint, so noise scale follows subject
size.  The draw for (video, frame, keypoint) is derived from those
coordinates alone, making corpus perturbation independent of record
order and of which other records exist.

Boxes without usable keypoints get corner noise with std equal to 10%
of box width (x) and height (y).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .skeleton import SkeletonFrame

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    pct: float  # e.g. 0.2 for 20% of nearest-keypoint distance
    seed: int = 0

    def __post_init__(self):
        if self.pct < 0:
            raise ContractError("noise percentage must be >= 0")


def _video_key(video_id: str) -> int:
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _keypoint_rng(seed: int, video_id: str, frame: int, k: int) -> np.random.Generator:
    entropy = [seed & _MASK64, _video_key(video_id), frame & _MASK64, k]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def nearest_neighbor_distances(xy: np.ndarray) -> np.ndarray:
    """Distance from each point to the closest other point; (K,)."""
    xy = np.asarray(xy, dtype=np.float64)
    K = xy.shape[0]
    if K < 2:
        raise ContractError("need at least 2 keypoints for nearest distances")
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    return dist.min(axis=1)


def keypoint_noise(frame: SkeletonFrame, spec: NoiseSpec) -> SkeletonFrame:
    """Perturbed copy of a frame; pct = 0 returns the coordinates intact.

    std for keypoint k is pct times its clean nearest-neighbor distance;
    x and y offsets are independent draws.  Confidences, bbox and
    annotations pass through unchanged.
    """
    kp = frame.keypoints.copy()
    if spec.pct > 0.0:
        scale = spec.pct * nearest_neighbor_distances(kp[:, :2])
        for k in range(kp.shape[0]):
            g = _keypoint_rng(spec.seed, frame.video_id, frame.frame, k)
            kp[k, :2] += g.standard_normal(2) * scale[k]
    return SkeletonFrame(
        video_id=frame.video_id,
        frame=frame.frame,
        keypoints=kp,
        bbox=frame.bbox,
        track_id=frame.track_id,
        label=frame.label,
        tte=frame.tte,
    )


def bbox_fallback_noise(
    bbox: tuple[float, float, float, float],
    video_id: str,
    frame: int,
    seed: int = 0,
    pct: float = 0.10,
) -> tuple[float, float, float, float]:
    """Corner noise for boxes lacking keypoints.

    Both x corners get std = pct * w, both y corners std = pct * h.
    Inverted corners are swapped back; the measure-zero zero-area result
    redraws from the same stream.
    """
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ContractError(f"bbox must have positive size, got w={w} h={h}")
    if pct < 0:
        raise ContractError("noise percentage must be >= 0")
    if pct == 0.0:
        return (x, y, w, h)
    entropy = [seed & _MASK64, _video_key(video_id), frame & _MASK64, 1 << 20]
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
    while True:
        n = g.standard_normal(4)
        x1 = x + n[0] * pct * w
        y1 = y + n[1] * pct * h
        x2 = x + w + n[2] * pct * w
        y2 = y + h + n[3] * pct * h
        if x1 > x2:
            x1, x2 = x2, x1
        if y1 > y2:
            y1, y2 = y2, y1
        if x2 > x1 and y2 > y1:
            return (x1, y1, x2 - x1, y2 - y1)
