import numpy as np
import pytest

from vru_intent.skeleton import SkeletonFrame


def make_frame(
    pts,
    video_id="v0",
    frame=0,
    conf=1.0,
    track_id=1,
    label=None,
    tte=None,
    bbox=None,
):
    """SkeletonFrame from an (K, 2) array of points; uniform confidence."""
    pts = np.asarray(pts, dtype=np.float64)
    kp = np.column_stack([pts, np.full(len(pts), conf)])
    if bbox is None:
        x0 = float(pts[:, 0].min()) - 1.0
        y0 = float(pts[:, 1].min()) - 1.0
        bbox = (
            x0,
            y0,
            float(pts[:, 0].max()) - x0 + 1.0,
            float(pts[:, 1].max()) - y0 + 1.0,
        )
    return SkeletonFrame(
        video_id=video_id,
        frame=frame,
        keypoints=kp,
        bbox=bbox,
        track_id=track_id,
        label=label,
        tte=tte,
    )


def random_valid_points(rng, K, span=100.0, min_height=1.0):
    """Random (K, 2) points with a guaranteed vertical extent."""
    while True:
        pts = rng.uniform(0.0, span, (K, 2))
        if pts[:, 1].max() - pts[:, 1].min() >= min_height:
            return pts


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240817))
