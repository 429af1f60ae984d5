"""Evaluation protocol: balancing, accuracy, F1, TTE curves,
predictability, and the leave-riders-out cyclist procedure.

Decision-level metrics treat every classified window as one decision.
Accuracy is computed on a class-balanced subset (equal counts per
class, deterministic subsample).  Time-to-event (TTE) curves aggregate
per-sequence probabilities at each TTE, with TTE > 0 before the event.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .forest import (
    ForestParams,
    GridSearchResult,
    grid_search_holdout,
)


def balance(labels: Sequence, seed: int = 0) -> np.ndarray:
    """Indices of a class-balanced subset, ascending.

    Every class is subsampled (without replacement, deterministically
    from seed) to the size of the rarest class.  At least two classes
    must be present.
    """
    labels = list(labels)
    if not labels:
        raise ContractError("cannot balance an empty label list")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ContractError("balancing needs at least 2 classes present")
    arr = np.array(labels, dtype=object)
    per_class = [np.where(arr == c)[0] for c in classes]
    m = min(idx.size for idx in per_class)
    keep = []
    for k, idx in enumerate(per_class):
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k])))
        pick = g.choice(idx.size, size=m, replace=False)
        keep.append(idx[pick])
    return np.sort(np.concatenate(keep))


def accuracy(pred: Sequence, truth: Sequence) -> float:
    """Fraction of agreeing decisions; (TP + TN) / (P + N) when binary."""
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth):
        raise ContractError(f"{len(pred)} predictions vs {len(truth)} labels")
    if not truth:
        raise ContractError("cannot score zero decisions")
    return sum(1 for p, t in zip(pred, truth) if p == t) / len(truth)


def confusion_matrix(
    pred: Sequence, truth: Sequence, classes: Sequence
) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth):
        raise ContractError(f"{len(pred)} predictions vs {len(truth)} labels")
    index = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(pred, truth):
        if t not in index or p not in index:
            raise ContractError(f"label outside class list: pred={p!r} true={t!r}")
        out[index[t], index[p]] += 1
    return out


@dataclass
class F1Report:
    per_class: dict
    macro: float
    absent: list = field(default_factory=list)  # classes with no support at all


def f1_scores(pred: Sequence, truth: Sequence, classes: Sequence) -> F1Report:
    """Per-class and macro F1.

    A class absent from both predictions and labels scores 0 and is
    flagged in `absent` rather than dropped from the macro mean.
    """
    cm = confusion_matrix(pred, truth, classes)
    per = {}
    absent = []
    for i, c in enumerate(classes):
        tp = float(cm[i, i])
        fp = float(cm[:, i].sum() - tp)
        fn = float(cm[i, :].sum() - tp)
        denom = 2 * tp + fp + fn
        if denom == 0.0:
            per[c] = 0.0
            absent.append(c)
        else:
            per[c] = 2 * tp / denom
    macro = float(np.mean([per[c] for c in classes]))
    return F1Report(per_class=per, macro=macro, absent=absent)


@dataclass
class ScoredSequence:
    """One track's per-decision positive-class probabilities.

    tte[i] is the time to event of decision i (positive before the
    event); prob[i] the model's positive-class probability there.
    """

    tte: np.ndarray
    prob: np.ndarray
    scenario: Optional[str] = None

    def __post_init__(self):
        self.tte = np.asarray(self.tte, dtype=np.int64)
        self.prob = np.asarray(self.prob, dtype=np.float64)
        if self.tte.shape != self.prob.shape:
            raise ContractError("tte and prob must have matching shapes")


@dataclass
class CurvePoint:
    tte: int
    mean: float
    std: float
    n: int

    @property
    def single_sequence(self) -> bool:
        # std is reported as 0 when only one sequence contributes
        return self.n < 2


def tte_curve(sequences: Sequence[ScoredSequence]) -> list[CurvePoint]:
    """Mean and population std of probability at each TTE.

    Points are ordered by decreasing TTE (approaching the event).  Every
    TTE seen in at least one sequence is emitted; single-contributor
    points carry std 0 and are detectable via n.
    """
    if not sequences:
        raise ContractError("no sequences to aggregate")
    bucket: dict[int, list[float]] = {}
    for s in sequences:
        for t, p in zip(s.tte.tolist(), s.prob.tolist()):
            bucket.setdefault(t, []).append(p)
    out = []
    for t in sorted(bucket, reverse=True):
        vals = np.array(bucket[t])
        out.append(
            CurvePoint(
                tte=t,
                mean=float(vals.mean()),
                std=float(vals.std()) if vals.size > 1 else 0.0,
                n=vals.size,
            )
        )
    return out


def predictability(
    sequences: Sequence[ScoredSequence], threshold: float = 0.5
) -> list[CurvePoint]:
    """Fraction of sequences whose probability clears threshold, per TTE.

    The mean field holds the fraction; std is 0 by construction."""
    if not sequences:
        raise ContractError("no sequences to aggregate")
    bucket: dict[int, list[float]] = {}
    for s in sequences:
        for t, p in zip(s.tte.tolist(), s.prob.tolist()):
            bucket.setdefault(t, []).append(float(p >= threshold))
    out = []
    for t in sorted(bucket, reverse=True):
        vals = bucket[t]
        out.append(
            CurvePoint(tte=t, mean=float(np.mean(vals)), std=0.0, n=len(vals))
        )
    return out


@dataclass
class ProtocolRun:
    train_riders: tuple
    val_rider: object
    test_rider: object
    best: ForestParams
    acc: float
    f1_macro: float


@dataclass
class ProtocolSummary:
    runs: list[ProtocolRun]

    def _stats(self, vals: list[float]) -> dict:
        v = np.array(vals)
        return {
            "worst": float(v.min()),
            "best": float(v.max()),
            "avg": float(v.mean()),
            "std": float(v.std()),
        }

    @property
    def acc_stats(self) -> dict:
        return self._stats([r.acc for r in self.runs])

    @property
    def f1_stats(self) -> dict:
        return self._stats([r.f1_macro for r in self.runs])


def rider_protocol_runs(riders: Sequence) -> list[tuple[tuple, object, object]]:
    """All (train_pair, val, test) splits over exactly 4 rider keys.

    Each unordered train pair leaves two riders; both assignments of
    (validation, test) are used, giving C(4,2) * 2 = 12 runs.
    """
    riders = sorted(riders)
    if len(riders) != 4:
        raise ContractError(f"protocol expects exactly 4 riders, got {len(riders)}")
    runs = []
    for pair in itertools.combinations(riders, 2):
        rest = [r for r in riders if r not in pair]
        a, b = rest
        runs.append((pair, a, b))
        runs.append((pair, b, a))
    return runs


def cyclist_protocol(
    rider_data: dict,
    tree_grid: Sequence[int],
    depth_grid: Sequence[int],
    base: ForestParams = ForestParams(),
    classes: Optional[Sequence] = None,
) -> ProtocolSummary:
    """Leave-riders-out evaluation over 4 riders.

    rider_data maps rider key -> (X, y).  Per run: grid-search on the
    two training riders scored on the validation rider, then test-rider
    accuracy and macro F1 with the winning configuration.
    """
    from .forest import classify

    runs = []
    for pair, val_r, test_r in rider_protocol_runs(list(rider_data)):
        X_tr = np.vstack([rider_data[r][0] for r in pair])
        y_tr = [l for r in pair for l in rider_data[r][1]]
        X_val, y_val = rider_data[val_r]
        X_te, y_te = rider_data[test_r]
        result: GridSearchResult = grid_search_holdout(
            X_tr, y_tr, X_val, y_val, tree_grid, depth_grid, base
        )
        pred = classify(result.forest, X_te)
        cls = list(classes) if classes is not None else result.forest.classes
        runs.append(
            ProtocolRun(
                train_riders=pair,
                val_rider=val_r,
                test_rider=test_r,
                best=result.best,
                acc=accuracy(pred, list(y_te)),
                f1_macro=f1_scores(pred, list(y_te), cls).macro,
            )
        )
    return ProtocolSummary(runs=runs)
