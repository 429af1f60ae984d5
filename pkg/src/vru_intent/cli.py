"""Command line pipeline over JSONL keypoint records.

Subcommands compose into the full chain:

    synth -> (perturb) -> track -> featurize -> train -> predict -> eval

Exit codes: 0 success, 2 contract violation or malformed input,
3 degenerate numerical input.  All file outputs are atomic.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import rng
from .errors import ContractError, DegenerateError
from .evaluate import (
    ScoredSequence,
    accuracy,
    balance,
    confusion_matrix,
    f1_scores,
    predictability,
    tte_curve,
)
from .features import all_feature_names, layout_for, window_features
from .forest import (
    CYCLIST_DEPTH_GRID,
    CYCLIST_TREE_GRID,
    PEDESTRIAN_DEPTH_GRID,
    PEDESTRIAN_TREE_GRID,
    ForestParams,
    grid_search_cv,
    predict_proba,
    train_forest,
)
from .perturb import NoiseSpec, bbox_fallback_noise, keypoint_noise
from .persist import load_model, save_model
from .records import (
    KeypointRecord,
    atomic_write_text,
    frame_from_record,
    read_jsonl,
    record_from_frame,
    records_from_sequence,
    write_jsonl,
)
from .skeleton import (
    LabeledSequence,
    impute_forward,
    schema_for,
    validate_frame,
    window_slices,
)
from .synth import (
    CYCLIST_ACTIONS,
    PEDESTRIAN_ACTIONS,
    SynthSpec,
    generate_sequence,
    rider_spec,
)
from .tracking import Detection, Tracker, TrackerConfig

META_COLUMNS = ("video_id", "track_id", "frame", "label", "tte", "imputed")

_MASK64 = (1 << 64) - 1


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    role = args.role
    valid = PEDESTRIAN_ACTIONS if role == "pedestrian" else CYCLIST_ACTIONS
    actions = [a for a in args.actions.split(",") if a]
    for a in actions:
        if a not in valid:
            raise ContractError(f"unknown {role} action {a!r}; choose from {valid}")
    records = []
    counter = 0
    for action in actions:
        for i in range(args.per_action):
            seq_seed = rng.draw(args.seed, counter) & _MASK64
            counter += 1
            spec = SynthSpec(
                role=role,
                action=action,
                n_frames=args.n_frames,
                seed=seq_seed,
                onset_frame=args.onset,
                view=args.view,
                variant=args.variant if action == "TurnRight" else "standard",
                jitter_std_px=args.jitter,
                walk_speed_px=args.walk_speed,
                gait_amplitude_rad=args.gait_amplitude,
                gait_period_frames=args.gait_period,
                base_height_px=args.base_height,
                video_id=f"{role}-{action}-{i:03d}",
            )
            if args.rider is not None:
                spec = rider_spec(args.rider, spec)
            records.extend(records_from_sequence(generate_sequence(spec), role))
    write_jsonl(args.out, records)
    print(f"wrote {len(records)} records ({counter} sequences) to {args.out}")
    return 0


# ---------------------------------------------------------------- track

def cmd_track(args) -> int:
    by_video: dict[str, list[KeypointRecord]] = {}
    for rec in read_jsonl(args.input, strict=args.strict):
        by_video.setdefault(rec.video_id, []).append(rec)

    out_records = []
    summary = {}
    for video_id, recs in by_video.items():
        frames: dict[int, list[KeypointRecord]] = {}
        for r in recs:
            frames.setdefault(r.frame, []).append(r)
        order = sorted(frames)
        if args.strict:
            seen_order = []
            for r in recs:
                if not seen_order or r.frame != seen_order[-1]:
                    seen_order.append(r.frame)
            if seen_order != sorted(seen_order):
                raise ContractError(
                    f"video {video_id!r}: frames out of order in strict mode"
                )
        config = TrackerConfig(
            n_init=args.n_init,
            max_age=args.max_age,
            appearance_gate=args.appearance_gate,
            iou_gate=args.iou_gate,
        )
        tracker = Tracker(config)  # fresh per video: ids are per-video
        n_assigned = 0
        assigned_ids = set()
        for f in order:
            batch = frames[f]
            dets = [
                Detection(bbox=r.bbox, embedding=r.embedding) for r in batch
            ]
            snaps = tracker.step(dets, f)
            for snap in snaps:
                if snap.detection_index is None:
                    continue
                r = batch[snap.detection_index]
                assigned_ids.add(id(r))
                out_records.append(
                    KeypointRecord(
                        video_id=r.video_id,
                        frame=r.frame,
                        track_id=snap.track_id,
                        bbox=r.bbox,
                        keypoints=r.keypoints,
                        label=r.label,
                        tte=r.tte,
                        embedding=r.embedding,
                        role=r.role,
                    )
                )
                n_assigned += 1
        if not args.drop_unmatched:
            for r in recs:
                if id(r) not in assigned_ids:
                    out_records.append(r)
        summary[video_id] = {
            "records": len(recs),
            "assigned": n_assigned,
            "tracks": tracker._next_id - 1,
            "id_space": "per-video",
        }

    video_order = {vid: k for k, vid in enumerate(by_video)}
    out_records.sort(key=lambda r: (video_order[r.video_id], r.frame))
    write_jsonl(args.out, out_records)
    if args.summary_out:
        atomic_write_text(args.summary_out, json.dumps(summary, indent=2) + "\n")
    for vid, s in summary.items():
        print(f"{vid}: {s['assigned']}/{s['records']} records assigned, "
              f"{s['tracks']} tracks started")
    return 0


# ------------------------------------------------------------ featurize

def cmd_featurize(args) -> int:
    schema = schema_for(args.role)
    layout = layout_for(schema)
    T = args.window
    names = all_feature_names(schema, T)

    groups: dict[tuple, list] = {}
    skipped_untracked = 0
    for rec in read_jsonl(args.input):
        if rec.role != args.role:
            raise ContractError(
                f"record role {rec.role!r} does not match --role {args.role!r}"
            )
        if rec.track_id is None:
            skipped_untracked += 1
            continue
        groups.setdefault((rec.video_id, rec.track_id), []).append(rec)

    rows = []
    n_windows = 0
    n_dropped = 0
    for (video_id, track_id), recs in groups.items():
        recs = sorted(recs, key=lambda r: r.frame)
        frames = [frame_from_record(r) for r in recs]
        if args.mode == "infer":
            frames, imputed, usable = impute_forward(frames, schema, args.cmin)
            keep = [i for i, u in enumerate(usable) if u]
            frames = [frames[i] for i in keep]
            imap = {frames[j].frame: imputed[keep[j]] for j in range(len(keep))}
        else:
            ok = [validate_frame(f, schema, args.cmin).ok for f in frames]
            frames = [f for f, o in zip(frames, ok) if o]
            imap = {f.frame: False for f in frames}
        if len(frames) < T:
            continue
        seq = LabeledSequence(frames=frames)
        for w in window_slices(seq, T):
            fv = window_features(w.frames, schema, T=T)
            any_imputed = any(imap[f.frame] for f in w.frames)
            if args.mode == "train" and any_imputed:
                n_dropped += 1
                continue
            rows.append(
                [video_id, track_id, w.newest.frame,
                 w.label if w.label is not None else "",
                 w.tte if w.tte is not None else "",
                 int(any_imputed)]
                + fv.values.tolist()
            )
            n_windows += 1

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(META_COLUMNS) + names)
    writer.writerows(rows)
    atomic_write_text(args.out, buf.getvalue())
    msg = (f"wrote {n_windows} windows of dim {len(names)} "
           f"({layout.per_frame} per frame x T={T}) to {args.out}")
    if skipped_untracked:
        msg += f"; skipped {skipped_untracked} untracked records"
    print(msg)
    return 0


def _read_feature_csv(path: str):
    """Returns (meta_rows, X, names); meta rows as dicts."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{path}: empty feature file")
        if tuple(header[: len(META_COLUMNS)]) != META_COLUMNS:
            raise ContractError(
                f"{path}: expected meta columns {META_COLUMNS}, "
                f"got {tuple(header[:len(META_COLUMNS)])}"
            )
        names = header[len(META_COLUMNS) :]
        meta = []
        values = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ContractError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            m = dict(zip(META_COLUMNS, row))
            m["track_id"] = int(m["track_id"])
            m["frame"] = int(m["frame"])
            m["label"] = m["label"] or None
            m["tte"] = int(m["tte"]) if m["tte"] != "" else None
            m["imputed"] = bool(int(m["imputed"]))
            meta.append(m)
            try:
                values.append([float(v) for v in row[len(META_COLUMNS) :]])
            except ValueError as e:
                raise ContractError(f"{path}:{lineno}: bad feature value: {e}") from e
    X = np.array(values, dtype=np.float64) if values else np.empty((0, len(names)))
    return meta, X, names


# ---------------------------------------------------------------- train

def cmd_train(args) -> int:
    meta, X, names = _read_feature_csv(args.features)
    schema = schema_for(args.role)
    expected = all_feature_names(schema, args.window)
    if names != expected:
        raise ContractError(
            f"feature file layout does not match role {args.role!r} with "
            f"T={args.window} ({len(names)} columns vs {len(expected)} expected)"
        )
    labels = [m["label"] for m in meta]
    if any(l is None for l in labels):
        raise ContractError("training rows must all carry labels")
    if X.shape[0] == 0:
        raise ContractError("no training rows")

    if args.preset == "pedestrian":
        tree_grid, depth_grid = PEDESTRIAN_TREE_GRID, PEDESTRIAN_DEPTH_GRID
    elif args.preset == "cyclist":
        tree_grid, depth_grid = CYCLIST_TREE_GRID, CYCLIST_DEPTH_GRID
    else:
        tree_grid, depth_grid = tuple(args.trees), tuple(args.depths)

    if args.balance:
        keep = balance(labels, seed=args.balance_seed)
        X = X[keep]
        labels = [labels[i] for i in keep]

    base = ForestParams(seed=args.seed, min_leaf=args.min_leaf, mtry=args.mtry)
    if args.no_cv:
        params = ForestParams(
            n_trees=tree_grid[0], max_depth=depth_grid[0],
            mtry=args.mtry, min_leaf=args.min_leaf, seed=args.seed,
        )
        forest = train_forest(X, labels, params)
        table = []
        best = params
    else:
        result = grid_search_cv(
            X, labels, tree_grid, depth_grid, n_folds=args.folds, base=base
        )
        forest = result.forest
        best = result.best
        table = [
            {"n_trees": c.n_trees, "max_depth": c.max_depth,
             "fold_accuracy": c.scores, "mean_accuracy": c.mean_score}
            for c in result.table
        ]
        for c in result.table:
            print(f"trees={c.n_trees:4d} depth={c.max_depth:3d} "
                  f"cv_acc={c.mean_score:.4f}")

    counts = {c: labels.count(c) for c in sorted(set(labels))}
    metadata = {
        "tree_grid": list(tree_grid),
        "depth_grid": list(depth_grid),
        "folds": None if args.no_cv else args.folds,
        "seed": args.seed,
        "balanced": bool(args.balance),
        "balance_seed": args.balance_seed if args.balance else None,
        "n_samples": int(X.shape[0]),
        "class_counts": counts,
        "cv_table": table,
    }
    save_model(args.out, forest, args.role, args.window, metadata)
    print(f"best: trees={best.n_trees} depth={best.max_depth}; "
          f"model written to {args.out}")
    return 0


# -------------------------------------------------------------- predict

def cmd_predict(args) -> int:
    forest, info = load_model(args.model)
    meta, X, names = _read_feature_csv(args.features)
    expected = all_feature_names(schema_for(info["role"]), info["T"])
    if names != expected:
        raise ContractError(
            "feature file layout does not match the model "
            f"(role {info['role']!r}, T={info['T']})"
        )
    classes = forest.classes
    positive = args.positive
    if positive is None and len(classes) == 2 and "C" in classes:
        positive = "C"
    if positive is not None:
        if len(classes) != 2:
            raise ContractError(
                "positive-class thresholding needs a binary model"
            )
        if positive not in classes:
            raise ContractError(
                f"positive class {positive!r} not in model classes"
            )

    proba = predict_proba(forest, X) if X.shape[0] else np.empty((0, len(classes)))
    header = ["video_id", "track_id", "frame", "label", "tte"] + [
        f"p_{c}" for c in classes
    ] + ["pred"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for m, p in zip(meta, proba):
        if positive is not None:
            k = classes.index(positive)
            pred = positive if p[k] >= args.thr else classes[1 - k]
        else:
            pred = classes[int(np.argmax(p))]
        writer.writerow(
            [m["video_id"], m["track_id"], m["frame"],
             m["label"] if m["label"] is not None else "",
             m["tte"] if m["tte"] is not None else ""]
            + [float(v) for v in p] + [pred]
        )
    atomic_write_text(args.out, buf.getvalue())
    extra = f" (positive={positive}, thr={args.thr})" if positive else " (argmax)"
    print(f"wrote {len(meta)} predictions to {args.out}{extra}")
    return 0


# ----------------------------------------------------------------- eval

def _read_predictions(path: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{path}: empty predictions file")
        fixed = ("video_id", "track_id", "frame", "label", "tte")
        if tuple(header[:5]) != fixed or header[-1] != "pred":
            raise ContractError(f"{path}: unrecognized predictions header")
        classes = [c[2:] for c in header[5:-1]]
        if not classes or any(not c.startswith("p_") for c in header[5:-1]):
            raise ContractError(f"{path}: missing probability columns")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ContractError(
                    f"{path}:{lineno}: expected {len(header)} columns"
                )
            rows.append(
                {
                    "video_id": row[0],
                    "track_id": int(row[1]),
                    "frame": int(row[2]),
                    "label": row[3] or None,
                    "tte": int(row[4]) if row[4] != "" else None,
                    "proba": {c: float(v) for c, v in zip(classes, row[5:-1])},
                    "pred": row[-1],
                }
            )
    return rows, classes


def cmd_eval(args) -> int:
    rows, classes = _read_predictions(args.preds)
    labeled = [r for r in rows if r["label"] is not None]
    if not labeled:
        raise ContractError("no labeled rows to score")
    for r in labeled:
        if r["label"] not in classes:
            raise ContractError(
                f"label {r['label']!r} not among model classes {classes}"
            )

    scored = labeled
    if args.balance:
        keep = balance([r["label"] for r in labeled], seed=args.balance_seed)
        scored = [labeled[i] for i in keep]
    preds = [r["pred"] for r in scored]
    truth = [r["label"] for r in scored]
    acc = accuracy(preds, truth)
    f1 = f1_scores(preds, truth, classes)
    cm = confusion_matrix(preds, truth, classes)

    report = {
        "n_rows": len(rows),
        "n_scored": len(scored),
        "balanced": bool(args.balance),
        "accuracy": acc,
        "f1": f1.per_class,
        "f1_macro": f1.macro,
        "f1_absent_classes": f1.absent,
        "classes": classes,
        "confusion": cm.tolist(),
        "threshold": args.thr,
    }

    positive = args.positive
    if positive is None and len(classes) == 2 and "C" in classes:
        positive = "C"
    if args.curves:
        if positive is None:
            raise ContractError("--curves needs --positive for multi-class output")
        seqs = {}
        for r in rows:
            if r["tte"] is None:
                continue
            seqs.setdefault((r["video_id"], r["track_id"]), []).append(r)
        if not seqs:
            raise ContractError("--curves needs rows with tte annotations")
        scored_seqs = [
            ScoredSequence(
                tte=[r["tte"] for r in grp],
                prob=[r["proba"][positive] for r in grp],
            )
            for grp in seqs.values()
        ]
        report["positive"] = positive
        report["tte_curve"] = [
            {"tte": p.tte, "mean": p.mean, "std": p.std, "n": p.n}
            for p in tte_curve(scored_seqs)
        ]
        report["predictability"] = [
            {"tte": p.tte, "fraction": p.mean, "n": p.n}
            for p in predictability(scored_seqs, threshold=args.thr)
        ]

    atomic_write_text(args.out, json.dumps(report, indent=2) + "\n")
    print(f"accuracy={acc:.4f} f1_macro={f1.macro:.4f} "
          f"({len(scored)} decisions) -> {args.out}")
    return 0


# -------------------------------------------------------------- perturb

def cmd_perturb(args) -> int:
    spec = NoiseSpec(pct=args.pct, seed=args.seed)
    out = []
    n_kp = 0
    n_bbox = 0
    for rec in read_jsonl(args.input):
        conf = [kp[2] for kp in rec.keypoints]
        if rec.keypoints and max(conf) >= args.cmin:
            frame = keypoint_noise(frame_from_record(rec), spec)
            out.append(record_from_frame(frame, rec.role, rec.embedding))
            n_kp += 1
        else:
            bbox = bbox_fallback_noise(
                rec.bbox, rec.video_id, rec.frame, seed=args.seed, pct=args.bbox_pct
            )
            out.append(
                KeypointRecord(
                    video_id=rec.video_id, frame=rec.frame, track_id=rec.track_id,
                    bbox=bbox, keypoints=rec.keypoints, label=rec.label,
                    tte=rec.tte, embedding=rec.embedding, role=rec.role,
                )
            )
            n_bbox += 1
    write_jsonl(args.out, out)
    print(f"perturbed {n_kp} keypoint records, {n_bbox} bbox-only records "
          f"-> {args.out}")
    return 0


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vru-intent",
        description="VRU intention recognition pipeline over JSONL keypoint records",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate synthetic labeled sequences")
    ps.add_argument("--role", choices=["pedestrian", "cyclist"], required=True)
    ps.add_argument("--actions", required=True,
                    help="comma-separated action names")
    ps.add_argument("--per-action", type=int, default=10)
    ps.add_argument("--n-frames", type=int, default=40)
    ps.add_argument("--onset", type=int, default=None)
    ps.add_argument("--view", choices=["back", "front"], default="back")
    ps.add_argument("--variant", choices=["standard", "alt"], default="standard")
    ps.add_argument("--jitter", type=float, default=1.0)
    ps.add_argument("--walk-speed", type=float, default=1.5)
    ps.add_argument("--gait-amplitude", type=float, default=0.55)
    ps.add_argument("--gait-period", type=int, default=16)
    ps.add_argument("--base-height", type=float, default=120.0)
    ps.add_argument("--rider", type=int, default=None,
                    help="physique preset index 0..3")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_synth)

    pt = sub.add_parser("track", help="assign track ids to detections")
    pt.add_argument("--in", dest="input", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--strict", action="store_true",
                    help="reject unknown fields and out-of-order frames")
    pt.add_argument("--n-init", type=int, default=3)
    pt.add_argument("--max-age", type=int, default=30)
    pt.add_argument("--appearance-gate", type=float, default=0.7)
    pt.add_argument("--iou-gate", type=float, default=0.7)
    pt.add_argument("--drop-unmatched", action="store_true",
                    help="drop records never assigned to a confirmed track")
    pt.add_argument("--summary-out", default=None,
                    help="optional JSON per-video tracking summary")
    pt.set_defaults(func=cmd_track)

    pf = sub.add_parser("featurize", help="windowed geometric features to CSV")
    pf.add_argument("--in", dest="input", required=True)
    pf.add_argument("--role", choices=["pedestrian", "cyclist"], required=True)
    pf.add_argument("--window", "-T", type=int, default=14)
    pf.add_argument("--mode", choices=["train", "infer"], default="train")
    pf.add_argument("--cmin", type=float, default=0.1)
    pf.add_argument("--out", required=True)
    pf.set_defaults(func=cmd_featurize)

    pr = sub.add_parser("train", help="grid-search and fit the classifier")
    pr.add_argument("--features", required=True)
    pr.add_argument("--role", choices=["pedestrian", "cyclist"], required=True)
    pr.add_argument("--window", "-T", type=int, default=14)
    pr.add_argument("--out", required=True)
    pr.add_argument("--preset", choices=["pedestrian", "cyclist"], default=None,
                    help="use the standard grid for a role")
    pr.add_argument("--trees", type=_int_list, default=[400])
    pr.add_argument("--depths", type=_int_list, default=[15])
    pr.add_argument("--folds", type=int, default=5)
    pr.add_argument("--no-cv", action="store_true",
                    help="train directly with the first grid entry")
    pr.add_argument("--mtry", type=int, default=None)
    pr.add_argument("--min-leaf", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--balance", dest="balance", action="store_true", default=True)
    pr.add_argument("--no-balance", dest="balance", action="store_false")
    pr.add_argument("--balance-seed", type=int, default=0)
    pr.set_defaults(func=cmd_train)

    pp = sub.add_parser("predict", help="score feature windows with a model")
    pp.add_argument("--model", required=True)
    pp.add_argument("--features", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--thr", type=float, default=0.5)
    pp.add_argument("--positive", default=None,
                    help="positive class for binary thresholding")
    pp.set_defaults(func=cmd_predict)

    pe = sub.add_parser("eval", help="metrics report from predictions")
    pe.add_argument("--preds", required=True)
    pe.add_argument("--out", required=True)
    pe.add_argument("--thr", type=float, default=0.5)
    pe.add_argument("--positive", default=None)
    pe.add_argument("--balance", dest="balance", action="store_true", default=True)
    pe.add_argument("--no-balance", dest="balance", action="store_false")
    pe.add_argument("--balance-seed", type=int, default=0)
    pe.add_argument("--curves", action="store_true",
                    help="emit TTE mean/std and predictability curves")
    pe.set_defaults(func=cmd_eval)

    pn = sub.add_parser("perturb", help="apply detection noise to records")
    pn.add_argument("--in", dest="input", required=True)
    pn.add_argument("--out", required=True)
    pn.add_argument("--pct", type=float, required=True,
                    help="keypoint noise std as fraction of nearest-keypoint distance")
    pn.add_argument("--bbox-pct", type=float, default=0.10)
    pn.add_argument("--cmin", type=float, default=0.1)
    pn.add_argument("--seed", type=int, default=0)
    pn.set_defaults(func=cmd_perturb)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DegenerateError as e:
        print(f"degenerate input: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
