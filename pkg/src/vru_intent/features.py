"""Geometric skeleton features.

Per frame, every unordered keypoint pair contributes the
height-normalized distance L and projections Lx, Ly plus the pair angle
Theta = atan2(dy, dx); every unordered triplet contributes its three
interior angles.  With K keypoints that is 4*C(K,2) + 3*C(K,3) values
(396 for the 9-point pedestrian schema, 1170 for the 13-point cyclist
schema).  A T-frame window concatenates its frames oldest to newest.

Feature names carry a 1-based frame super-index f (f = T is the newest
frame) and canonical keypoint ids: L^f(i,j), Lx^f(i,j), Ly^f(i,j),
Theta^f(i,j) for pairs and Theta^f(p,v,q) for the interior angle at
vertex v with neighbors p < q.
"""

from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kernels
from .errors import ContractError, DegenerateError
from .skeleton import KeypointSchema, SkeletonFrame

PAIR_COMPONENTS = ("L", "Lx", "Ly", "Theta")


@dataclass(frozen=True)
class FeatureLayout:
    """Index bookkeeping for one schema's per-frame feature block."""

    schema: KeypointSchema
    pairs: tuple[tuple[int, int], ...]
    triplets: tuple[tuple[int, int, int], ...]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def n_triplets(self) -> int:
        return len(self.triplets)

    @property
    def per_frame(self) -> int:
        return 4 * self.n_pairs + 3 * self.n_triplets

    def index_arrays(self):
        """(pair_i, pair_j, tri_a, tri_b, tri_c) as int64 arrays."""
        pi = np.array([p[0] for p in self.pairs], dtype=np.int64)
        pj = np.array([p[1] for p in self.pairs], dtype=np.int64)
        ta = np.array([t[0] for t in self.triplets], dtype=np.int64)
        tb = np.array([t[1] for t in self.triplets], dtype=np.int64)
        tc = np.array([t[2] for t in self.triplets], dtype=np.int64)
        return pi, pj, ta, tb, tc


@functools.lru_cache(maxsize=None)
def layout_for(schema: KeypointSchema) -> FeatureLayout:
    """Lexicographic pair/triplet enumeration over schema positions."""
    K = schema.K
    pairs = tuple(itertools.combinations(range(K), 2))
    triplets = tuple(itertools.combinations(range(K), 3))
    return FeatureLayout(schema=schema, pairs=pairs, triplets=triplets)


def _points(frame: Union[SkeletonFrame, np.ndarray]) -> np.ndarray:
    if isinstance(frame, SkeletonFrame):
        return frame.xy
    pts = np.asarray(frame, dtype=np.float64)
    return pts[:, :2]


def height_norm(frame: Union[SkeletonFrame, np.ndarray]) -> float:
    """Vertical keypoint extent max(y) - min(y); the length normalizer."""
    y = _points(frame)[:, 1]
    h = float(y.max() - y.min())
    if h <= 0.0:
        raise DegenerateError("zero vertical extent, cannot normalize lengths")
    return h


def pair_features(
    frame: Union[SkeletonFrame, np.ndarray], i: int, j: int
) -> tuple[float, float, float, float]:
    """(L, Lx, Ly, Theta) for keypoint positions i, j of one frame.

    L, Lx, Ly are normalized by the frame height; Theta = atan2(dy, dx)
    in (-pi, pi] is not.  Coincident points give L = Lx = Ly = 0 and
    Theta = atan2(0, 0) = 0.
    """
    pts = _points(frame)
    h = height_norm(pts)
    dx = float(pts[j, 0] - pts[i, 0])
    dy = float(pts[j, 1] - pts[i, 1])
    return (
        float(np.hypot(dx, dy)) / h,
        abs(dx) / h,
        abs(dy) / h,
        float(np.arctan2(dy, dx)),
    )


def triplet_angles(
    frame: Union[SkeletonFrame, np.ndarray], a: int, b: int, c: int
) -> tuple[float, float, float]:
    """Interior angles of triangle (a, b, c) at each vertex, in order.

    Angles are in [0, pi] and sum to pi for non-degenerate triangles.
    If any two points coincide all three angles are reported as 0.
    """
    pts = _points(frame)
    pa, pb, pc = pts[a], pts[b], pts[c]
    ab = pb - pa
    ac = pc - pa
    bc = pc - pb
    if not (ab.any() and ac.any() and bc.any()):
        return (0.0, 0.0, 0.0)
    # atan2(2*area, dot) keeps full precision on thin triangles, where
    # arccos of the normalized dot loses ~1/sin(angle)
    cr = abs(float(ab[0] * ac[1] - ab[1] * ac[0]))
    ang_a = float(np.arctan2(cr, np.dot(ab, ac)))
    ang_b = float(np.arctan2(cr, -np.dot(ab, bc)))
    ang_c = float(np.arctan2(cr, np.dot(ac, bc)))
    return (ang_a, ang_b, ang_c)


@dataclass
class FeatureVector:
    """Flat feature values plus the layout that indexes them."""

    values: np.ndarray
    layout: FeatureLayout
    T: int

    @property
    def dim(self) -> int:
        return self.values.size


def _check_frame(frame: SkeletonFrame, schema: KeypointSchema):
    if frame.keypoints.shape[0] != schema.K:
        raise ContractError(
            f"expected {schema.K} keypoints for role {schema.role}, "
            f"got {frame.keypoints.shape[0]}"
        )


def frame_features(frame: SkeletonFrame, schema: KeypointSchema) -> FeatureVector:
    """Feature block of a single valid frame."""
    _check_frame(frame, schema)
    layout = layout_for(schema)
    xy = frame.xy[None, :, :]
    if float(frame.xy[:, 1].max() - frame.xy[:, 1].min()) <= 0.0:
        raise DegenerateError("zero vertical extent, cannot normalize lengths")
    block = kernels.frame_blocks(xy, *layout.index_arrays())
    return FeatureVector(values=block[0], layout=layout, T=1)


def window_features(
    frames: Sequence[SkeletonFrame],
    schema: KeypointSchema,
    T: int | None = None,
) -> FeatureVector:
    """Concatenated per-frame blocks of a window, oldest frame first.

    Frames must be time-ordered within one track; pass T to assert the
    expected window length.
    """
    frames = list(frames)
    if not frames:
        raise ContractError("empty window")
    if T is not None and len(frames) != T:
        raise ContractError(f"expected {T} frames per window, got {len(frames)}")
    idx = [f.frame for f in frames]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ContractError("window frames must be strictly time-ordered")
    tids = {f.track_id for f in frames}
    if len(tids) > 1:
        raise ContractError("window mixes track ids")
    layout = layout_for(schema)
    xy = np.empty((len(frames), schema.K, 2), dtype=np.float64)
    for t, f in enumerate(frames):
        _check_frame(f, schema)
        if float(f.xy[:, 1].max() - f.xy[:, 1].min()) <= 0.0:
            raise DegenerateError(
                f"zero vertical extent at frame {f.frame}, cannot normalize lengths"
            )
        xy[t] = f.xy
    block = kernels.frame_blocks(xy, *layout.index_arrays())
    return FeatureVector(values=block.ravel(), layout=layout, T=len(frames))


def batch_window_features(
    windows: Sequence[Sequence[SkeletonFrame]], schema: KeypointSchema
) -> np.ndarray:
    """(n_windows, per_frame * T) matrix; rows follow the input order."""
    if not windows:
        layout = layout_for(schema)
        return np.empty((0, 0), dtype=np.float64)
    T = len(windows[0])
    rows = [window_features(w, schema, T=T).values for w in windows]
    return np.vstack(rows)


def feature_name(index: int, schema: KeypointSchema, T: int = 1) -> str:
    """Human-readable name of one flat feature index.

    The super-index f in 1..T is the frame within the window (f = T
    newest).  Pair features name the two canonical ids; the triplet
    angle at vertex v with neighbors p < q is Theta^f(p,v,q).
    """
    layout = layout_for(schema)
    d = layout.per_frame
    if T < 1:
        raise ContractError("window length must be >= 1")
    if not 0 <= index < d * T:
        raise ContractError(f"feature index {index} out of range for dim {d * T}")
    f, off = divmod(index, d)
    f += 1
    ids = schema.ids
    if off < 4 * layout.n_pairs:
        p, comp = divmod(off, 4)
        i, j = layout.pairs[p]
        return f"{PAIR_COMPONENTS[comp]}^{f}({ids[i]},{ids[j]})"
    q, vpos = divmod(off - 4 * layout.n_pairs, 3)
    tri = layout.triplets[q]
    v = tri[vpos]
    p1, p2 = sorted(t for t in tri if t != v)
    return f"Theta^{f}({ids[p1]},{ids[v]},{ids[p2]})"


_NAME_RE = re.compile(
    r"^(L|Lx|Ly|Theta)\^(\d+)\((\d+),(\d+)(?:,(\d+))?\)$"
)


def parse_feature_name(name: str, schema: KeypointSchema, T: int = 1) -> int:
    """Inverse of feature_name; rejects anything non-canonical."""
    m = _NAME_RE.match(name)
    if not m:
        raise ContractError(f"unparseable feature name {name!r}")
    comp, f_str, *id_strs = m.groups()
    f = int(f_str)
    if not 1 <= f <= T:
        raise ContractError(f"frame super-index {f} out of range 1..{T}")
    layout = layout_for(schema)
    d = layout.per_frame
    base = (f - 1) * d
    if id_strs[2] is None:
        i_id, j_id = int(id_strs[0]), int(id_strs[1])
        pair = (schema.position_of(i_id), schema.position_of(j_id))
        if pair[0] >= pair[1]:
            raise ContractError(f"pair ids must be ascending in {name!r}")
        p = layout.pairs.index(pair)
        return base + 4 * p + PAIR_COMPONENTS.index(comp)
    if comp != "Theta":
        raise ContractError(f"three ids only valid for Theta, got {name!r}")
    p_id, v_id, q_id = (int(s) for s in id_strs)
    if p_id >= q_id:
        raise ContractError(f"neighbor ids must be ascending in {name!r}")
    pp, vv, qq = (schema.position_of(t) for t in (p_id, v_id, q_id))
    tri = tuple(sorted((pp, vv, qq)))
    if len(set(tri)) != 3:
        raise ContractError(f"triplet ids must be distinct in {name!r}")
    q = layout.triplets.index(tri)
    return base + 4 * layout.n_pairs + 3 * q + tri.index(vv)


def all_feature_names(schema: KeypointSchema, T: int = 1) -> list[str]:
    d = layout_for(schema).per_frame
    return [feature_name(i, schema, T) for i in range(d * T)]
