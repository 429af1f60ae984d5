"""Multi-object tracking with a constant-velocity Kalman filter.

State is (u, v, a, h, du, dv, da, dh): box center, aspect ratio w/h,
height, and their velocities.  Motion and observation noise scale with
box height (std weights 1/20 position, 1/160 velocity).  Association is
a single Hungarian round over all live tracks, using appearance cost
(1 - max cosine similarity against the track gallery) when both sides
carry embeddings and 1 - IoU otherwise, with a chi-square gate on the
Mahalanobis distance of box measurements.

Lifecycle: tracks start Tentative, confirm at 3 consecutive hits, and
end after 30 consecutive missed frames.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ContractError, DegenerateError

# 0.95 quantile of chi-square with 4 degrees of freedom
CHI2_GATE_4D = 9.4877

STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160


def bbox_to_measurement(bbox: Sequence[float]) -> np.ndarray:
    """(x, y, w, h) -> (center_u, center_v, w/h, h)."""
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ContractError(f"bbox must have positive size, got w={w} h={h}")
    return np.array([x + w / 2.0, y + h / 2.0, w / h, h])


def measurement_to_bbox(z: np.ndarray) -> tuple[float, float, float, float]:
    u, v, a, h = (float(x) for x in z[:4])
    w = a * h
    return (u - w / 2.0, v - h / 2.0, w, h)


def iou(b1: Sequence[float], b2: Sequence[float]) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    x1, y1, w1, h1 = b1
    x2, y2, w2, h2 = b2
    xa = max(x1, x2)
    ya = max(y1, y2)
    xb = min(x1 + w1, x2 + w2)
    yb = min(y1 + h1, y2 + h2)
    iw = max(0.0, xb - xa)
    ih = max(0.0, yb - ya)
    inter = iw * ih
    union = w1 * h1 + w2 * h2 - inter
    if union <= 0.0:
        return 0.0
    return inter / union


class KalmanFilter8:
    """Constant-velocity filter over (u, v, a, h) boxes, unit time step."""

    def __init__(self):
        self.F = np.eye(8)
        for i in range(4):
            self.F[i, 4 + i] = 1.0
        self.H = np.eye(4, 8)

    def initiate(self, measurement: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """State from a first detection: zero velocities, height-scaled
        uncertainty with velocity variance 10x the position weight."""
        mean = np.zeros(8)
        mean[:4] = measurement
        h = measurement[3]
        std = [
            2 * STD_WEIGHT_POSITION * h,
            2 * STD_WEIGHT_POSITION * h,
            1e-2,
            2 * STD_WEIGHT_POSITION * h,
            10 * STD_WEIGHT_VELOCITY * h,
            10 * STD_WEIGHT_VELOCITY * h,
            1e-5,
            10 * STD_WEIGHT_VELOCITY * h,
        ]
        cov = np.diag(np.square(std))
        return mean, cov

    def _motion_cov(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        std = [
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_POSITION * h,
            1e-2,
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_VELOCITY * h,
            STD_WEIGHT_VELOCITY * h,
            1e-5,
            STD_WEIGHT_VELOCITY * h,
        ]
        return np.diag(np.square(std))

    def _measurement_cov(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        std = [
            STD_WEIGHT_POSITION * h,
            STD_WEIGHT_POSITION * h,
            1e-1,
            STD_WEIGHT_POSITION * h,
        ]
        return np.diag(np.square(std))

    def predict(self, mean: np.ndarray, cov: np.ndarray):
        mean = self.F @ mean
        cov = self.F @ cov @ self.F.T + self._motion_cov(mean)
        return mean, cov

    def project(self, mean: np.ndarray, cov: np.ndarray):
        return self.H @ mean, self.H @ cov @ self.H.T + self._measurement_cov(mean)

    def update(self, mean: np.ndarray, cov: np.ndarray, measurement: np.ndarray):
        """Measurement update; re-symmetrizes and checks positive
        definiteness of the posterior covariance."""
        zm, S = self.project(mean, cov)
        try:
            chol = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as e:
            raise DegenerateError(f"innovation covariance not SPD: {e}") from e
        K = scipy.linalg.cho_solve(chol, (cov @ self.H.T).T, check_finite=False).T
        mean = mean + K @ (measurement - zm)
        cov = cov - K @ S @ K.T
        cov = (cov + cov.T) / 2.0
        try:
            np.linalg.cholesky(cov + 1e-12 * np.eye(8))
        except np.linalg.LinAlgError as e:
            raise DegenerateError(f"posterior covariance not SPD: {e}") from e
        return mean, cov

    def gating_distance(
        self, mean: np.ndarray, cov: np.ndarray, measurements: np.ndarray
    ) -> np.ndarray:
        """Squared Mahalanobis distance of each (u, v, a, h) row."""
        zm, S = self.project(mean, cov)
        try:
            chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as e:
            raise DegenerateError(f"innovation covariance not SPD: {e}") from e
        d = measurements - zm
        z = scipy.linalg.solve_triangular(
            chol, d.T, lower=True, check_finite=False, overwrite_b=True
        )
        return np.sum(z * z, axis=0)


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    ENDED = "ended"


@dataclass
class Detection:
    bbox: tuple[float, float, float, float]
    confidence: float = 1.0
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        bbox_to_measurement(self.bbox)  # validates size
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)
            n = np.linalg.norm(self.embedding)
            if n > 0:
                self.embedding = self.embedding / n


class Track:
    def __init__(self, track_id: int, mean, cov, embedding=None, gallery_budget=50):
        self.track_id = track_id
        self.mean = mean
        self.cov = cov
        self.status = TrackStatus.TENTATIVE
        self.consecutive_hits = 1
        self.frames_since_update = 0
        self.gallery_budget = gallery_budget
        self.gallery: list[np.ndarray] = []
        if embedding is not None:
            self.gallery.append(embedding)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return measurement_to_bbox(self.mean[:4])

    def predict(self, kf: KalmanFilter8):
        self.mean, self.cov = kf.predict(self.mean, self.cov)
        self.frames_since_update += 1

    def update(self, kf: KalmanFilter8, det: Detection, n_init: int):
        self.mean, self.cov = kf.update(
            self.mean, self.cov, bbox_to_measurement(det.bbox)
        )
        if det.embedding is not None:
            self.gallery.append(det.embedding)
            if len(self.gallery) > self.gallery_budget:
                self.gallery = self.gallery[-self.gallery_budget :]
        self.consecutive_hits += 1
        self.frames_since_update = 0
        if self.status is TrackStatus.TENTATIVE and self.consecutive_hits >= n_init:
            self.status = TrackStatus.CONFIRMED

    def mark_missed(self, max_age: int):
        self.consecutive_hits = 0
        if self.frames_since_update > max_age:
            self.status = TrackStatus.ENDED

    def appearance_cost(self, det: Detection) -> Optional[float]:
        if det.embedding is None or not self.gallery:
            return None
        sims = [float(g @ det.embedding) for g in self.gallery]
        return 1.0 - max(sims)


_INFEASIBLE = 1e5


def associate(
    tracks: Sequence[Track],
    detections: Sequence[Detection],
    kf: KalmanFilter8,
    appearance_gate: float = 0.7,
    iou_gate: float = 0.7,
    chi2_gate: float = CHI2_GATE_4D,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Min-cost one-to-one matching of tracks to detections.

    Returns (matches, unmatched_track_indices, unmatched_det_indices).
    A pair uses appearance cost when both sides have embeddings, else
    1 - IoU; pairs beyond the relevant gate or the chi-square motion
    gate are infeasible even if the assignment picked them.
    """
    from scipy.optimize import linear_sum_assignment

    if not tracks or not detections:
        return [], list(range(len(tracks))), list(range(len(detections)))

    z = np.stack([bbox_to_measurement(d.bbox) for d in detections])
    cost = np.full((len(tracks), len(detections)), _INFEASIBLE)
    for ti, tr in enumerate(tracks):
        gates = kf.gating_distance(tr.mean, tr.cov, z)
        for di, det in enumerate(detections):
            if gates[di] > chi2_gate:
                continue
            ac = tr.appearance_cost(det)
            if ac is not None:
                if ac <= appearance_gate:
                    cost[ti, di] = ac
            else:
                c = 1.0 - iou(tr.bbox, det.bbox)
                if c <= iou_gate:
                    cost[ti, di] = c

    rows, cols = linear_sum_assignment(cost)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] < _INFEASIBLE]
    matched_t = {r for r, _ in matches}
    matched_d = {c for _, c in matches}
    un_t = [i for i in range(len(tracks)) if i not in matched_t]
    un_d = [i for i in range(len(detections)) if i not in matched_d]
    return matches, un_t, un_d


@dataclass
class TrackSnapshot:
    """Per-frame output for one confirmed track."""

    track_id: int
    bbox: tuple[float, float, float, float]
    detection_index: Optional[int]
    status: TrackStatus


@dataclass
class TrackerConfig:
    n_init: int = 3
    max_age: int = 30
    appearance_gate: float = 0.7
    iou_gate: float = 0.7
    chi2_gate: float = CHI2_GATE_4D
    gallery_budget: int = 50


class Tracker:
    """Per-video track manager; call step once per frame in order."""

    def __init__(self, config: TrackerConfig = TrackerConfig()):
        self.config = config
        self.kf = KalmanFilter8()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: Optional[int] = None

    @property
    def live_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status is not TrackStatus.ENDED]

    def step(
        self, detections: Sequence[Detection], frame_index: int
    ) -> list[TrackSnapshot]:
        """Advance one frame: predict, associate, update, manage lifecycle.

        Returns snapshots of confirmed tracks; detection_index points
        into this call's detections for matched tracks, None for
        coasting ones.
        """
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise ContractError(
                f"frame indices must increase: got {frame_index} after {self._last_frame}"
            )
        self._last_frame = frame_index

        live = self.live_tracks
        for tr in live:
            tr.predict(self.kf)

        matches, un_t, un_d = associate(
            live,
            detections,
            self.kf,
            self.config.appearance_gate,
            self.config.iou_gate,
            self.config.chi2_gate,
        )

        matched_det: dict[int, int] = {}
        for ti, di in matches:
            live[ti].update(self.kf, detections[di], self.config.n_init)
            matched_det[live[ti].track_id] = di
        for ti in un_t:
            live[ti].mark_missed(self.config.max_age)
        for di in un_d:
            mean, cov = self.kf.initiate(bbox_to_measurement(detections[di].bbox))
            tr = Track(
                self._next_id,
                mean,
                cov,
                embedding=detections[di].embedding,
                gallery_budget=self.config.gallery_budget,
            )
            self._next_id += 1
            self.tracks.append(tr)
            matched_det[tr.track_id] = di

        out = []
        for tr in self.tracks:
            if tr.status is TrackStatus.CONFIRMED:
                out.append(
                    TrackSnapshot(
                        track_id=tr.track_id,
                        bbox=tr.bbox,
                        detection_index=matched_det.get(tr.track_id),
                        status=tr.status,
                    )
                )
        return out
