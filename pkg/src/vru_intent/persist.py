"""Model artifact serialization.

A trained classifier saves to a single JSON file carrying the role,
window length, training parameters, full tree structure and a checksum
of the feature-name layout.  Numbers round-trip exactly through JSON
repr, so a loaded model reproduces the original's predictions bit for
bit.  The layout checksum guards against loading a model onto a
mismatched schema or window length.
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional

import numpy as np

from .errors import ContractError
from .features import all_feature_names
from .forest import DecisionForest, ForestParams, Tree
from .records import atomic_write_text
from .skeleton import schema_for

FORMAT_VERSION = 1


def layout_checksum(role: str, T: int) -> str:
    """sha256 over the newline-joined canonical feature names."""
    names = all_feature_names(schema_for(role), T)
    return hashlib.sha256("\n".join(names).encode("ascii")).hexdigest()


def _tree_to_obj(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_obj(obj: dict) -> Tree:
    return Tree(
        feature=np.asarray(obj["feature"], dtype=np.int32),
        threshold=np.asarray(obj["threshold"], dtype=np.float64),
        left=np.asarray(obj["left"], dtype=np.int32),
        right=np.asarray(obj["right"], dtype=np.int32),
        value=np.asarray(obj["value"], dtype=np.float64),
    )


def save_model(
    path: str,
    forest: DecisionForest,
    role: str,
    T: int,
    metadata: Optional[dict] = None,
):
    """Write the model file; metadata is free-form JSON (grids, CV table,
    seeds) stored verbatim."""
    expected = len(all_feature_names(schema_for(role), T))
    if forest.n_features != expected:
        raise ContractError(
            f"forest has {forest.n_features} features but role {role!r} "
            f"with T={T} defines {expected}"
        )
    obj = {
        "format_version": FORMAT_VERSION,
        "role": role,
        "T": T,
        "layout_checksum": layout_checksum(role, T),
        "params": {
            "n_trees": forest.params.n_trees,
            "max_depth": forest.params.max_depth,
            "mtry": forest.params.mtry,
            "min_leaf": forest.params.min_leaf,
            "seed": forest.params.seed,
        },
        "classes": list(forest.classes),
        "n_features": forest.n_features,
        "importances": forest.importances.tolist(),
        "trees": [_tree_to_obj(t) for t in forest.trees],
        "metadata": metadata or {},
    }
    atomic_write_text(path, json.dumps(obj))


def load_model(path: str) -> tuple[DecisionForest, dict]:
    """Read a model file back; returns (forest, info).

    info carries role, T, and the stored metadata.  A checksum mismatch
    against the current layout definition is a contract violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ContractError(f"{path}: malformed model file: {e}") from e
    if obj.get("format_version") != FORMAT_VERSION:
        raise ContractError(
            f"{path}: unsupported model format {obj.get('format_version')!r}"
        )
    role = obj["role"]
    T = obj["T"]
    expected = layout_checksum(role, T)
    if obj["layout_checksum"] != expected:
        raise ContractError(
            f"{path}: layout checksum mismatch; model was built against a "
            "different feature layout"
        )
    p = obj["params"]
    params = ForestParams(
        n_trees=p["n_trees"],
        max_depth=p["max_depth"],
        mtry=p["mtry"],
        min_leaf=p["min_leaf"],
        seed=p["seed"],
    )
    forest = DecisionForest(
        trees=[_tree_from_obj(t) for t in obj["trees"]],
        classes=obj["classes"],
        n_features=obj["n_features"],
        params=params,
        importances=np.asarray(obj["importances"], dtype=np.float64),
    )
    info = {"role": role, "T": T, "metadata": obj.get("metadata", {})}
    return forest, info
