"""``graspkit`` command-line entry point.

Verbs: generate, verify, evaluate, export-vis, train-ref, info.  Machine
readable results go to stdout (JSON) or to the files named on the command
line; diagnostics go to stderr.

Exit codes
----------
====  =====================================================
0     success
1     unexpected graspkit error
2     usage or configuration error
10    mesh parse error            11  part label error
12    degenerate mesh             13  degenerate volume
14    part without material       15  LP solver failure
16    no positive grasps          17  empty instance
18    shape mismatch              19  degenerate metric labels
20    domain error                21  training diverged
22    schema version mismatch     23  record I/O error
24    dataset verification failed
====  =====================================================
"""
from __future__ import annotations

import argparse
import collections
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, flat_items, load_config
from .errors import GraspkitError, RecordIOError, ShapeMismatch, UsageError, VerificationFailure

VERBS = ("generate", "verify", "evaluate", "export-vis", "train-ref", "info")


@dataclass
class Command:
    verb: str
    config: str | None = None
    seed: int | None = None
    overrides: list = field(default_factory=list)
    options: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML (or JSON) config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. grasp.cone_edges=32")
    common.add_argument("--seed", type=int, help="global seed (overrides config 'seed')")

    ap = _Parser(prog="graspkit", description="Physics-aware grasp dataset toolkit.")
    ap.add_argument("--version", action="version", version=f"graspkit {__version__}")
    sub = ap.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="generate a dataset")
    p.add_argument("--out", default="dataset", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (output is identical for any count)")

    p = sub.add_parser("verify", parents=[common], help="re-check every record of a dataset")
    p.add_argument("data", nargs="?", default="dataset")
    p.add_argument("--brute-force", action="store_true", help="recompute maps with the slow direct loop")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against a dataset")
    p.add_argument("--pred", required=True, help="dataset dir or dir of <instance_id>.npz files")
    p.add_argument("--gt", required=True, help="ground-truth dataset dir")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", help="per-instance CSV path")
    p.add_argument("--top-n", type=int, default=5)

    p = sub.add_parser("export-vis", parents=[common], help="write a colored PLY of an affordance map")
    p.add_argument("--data", default="dataset")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ref", parents=[common], help="overfit the reference network")
    p.add_argument("--data", default="dataset")
    p.add_argument("--out", default="bridge.ckpt", help="checkpoint path")
    p.add_argument("--log", default="train_log.csv", help="training log CSV path")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("info", parents=[common], help="dataset statistics or config defaults")
    p.add_argument("data", nargs="?", default="dataset")
    p.add_argument("--defaults", action="store_true", help="print every config default and exit")
    return ap


def parse_args(argv) -> Command:
    ns = _build_parser().parse_args(list(argv))
    if ns.verb is None:
        raise UsageError(f"a verb is required: one of {', '.join(VERBS)}")
    opts = {k: v for k, v in vars(ns).items() if k not in ("verb", "config", "seed", "overrides")}
    return Command(ns.verb, ns.config, ns.seed, list(ns.overrides), opts)


def _config(cmd: Command) -> dict:
    cfg = load_config(cmd.config, cmd.overrides)
    if cmd.seed is not None:
        cfg["seed"] = int(cmd.seed)
    return cfg


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# verbs


def cmd_generate(cmd: Command) -> int:
    from .dataset import generate_dataset, write_records

    cfg = _config(cmd)
    workers = cmd.options.get("workers") or cfg["dataset"]["workers"]
    records = generate_dataset(cfg, workers)
    out = write_records(cmd.options["out"], records)
    (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    _emit({"out": str(out), "records": len(records), "hard": sum(r.hard for r in records),
           "positive_pairs": int(sum(len(r.positive_pairs) for r in records)),
           "config_hash": config_hash(cfg)})
    return 0


def cmd_verify(cmd: Command) -> int:
    from .dataset import load_record, read_index, verify_record

    root = Path(cmd.options["data"])
    entries = read_index(root)
    failed, grasps_checked = [], 0
    for entry in entries:
        iid = entry.get("instance_id", "?")
        try:
            rec = load_record(root, entry)
            problems = verify_record(rec, brute_force=cmd.options["brute_force"])
            grasps_checked += len(rec.grasps)
        except GraspkitError as e:
            problems = [str(e)]
        for prob in problems:
            print(f"{iid}: {prob}", file=sys.stderr)
        if problems:
            failed.append(iid)
    _emit({"records": len(entries), "failed": failed, "positive_grasps_checked": grasps_checked})
    if failed:
        raise VerificationFailure(f"{len(failed)} of {len(entries)} records failed verification")
    return 0


def _load_predictions(pred_dir: Path, gt_records):
    """instance_id -> (prob, ranked candidates or point-index pairs or None).

    A dataset directory supplies its stored exact contacts as candidates;
    ``.npz`` files supply ``prob`` and optionally ranked point-index ``pairs``.
    """
    from .dataset import grasp_candidates_from_record, read_records

    if (pred_dir / "index.jsonl").exists():
        return {r.instance_id: (r.prob, grasp_candidates_from_record(r)) for r in read_records(pred_dir)}
    out = {}
    for rec in gt_records:
        f = pred_dir / f"{rec.instance_id}.npz"
        if not f.exists():
            continue
        with np.load(f) as z:
            out[rec.instance_id] = (np.asarray(z["prob"], dtype=np.float64),
                                    np.asarray(z["pairs"]) if "pairs" in z.files else None)
    return out


def cmd_evaluate(cmd: Command) -> int:
    from .dataset import instance_from_record, material_table, pair_candidates, read_records
    from .metrics import map_metrics, topn_success

    cfg = _config(cmd)
    gt_records = read_records(cmd.options["gt"])
    preds = _load_predictions(Path(cmd.options["pred"]), gt_records)
    missing = [r.instance_id for r in gt_records if r.instance_id not in preds]
    if missing:
        raise ShapeMismatch(f"no prediction for {len(missing)} instances (first: {missing[0]})")
    table = material_table(cfg)
    n = int(cmd.options["top_n"])
    rows, cand_lists, instances = [], [], []
    for rec in gt_records:
        prob, pairs = preds[rec.instance_id]
        m = map_metrics(prob, rec.prob, cfg["metrics"]["kld_eta"], cfg["metrics"]["auc_positive_threshold"])
        rows.append({"instance_id": rec.instance_id, "kld": m.kld, "sim": m.sim, "auc_j": m.auc_j})
        if pairs is None:
            cand_lists.append([])
        elif isinstance(pairs, list):
            cand_lists.append(pairs)
        else:
            cand_lists.append(pair_candidates(rec, pairs))
        instances.append(instance_from_record(rec, table))
    rep = topn_success(cand_lists, instances, n, cfg["gripper"], cfg["grasp"])
    for row, rank in zip(rows, rep.ranks):
        row.update(top1=int(1 <= rank <= 1), top5=int(1 <= rank <= 5), topn=int(1 <= rank <= n))
    report = {
        "instances": len(rows),
        "kld": float(np.mean([r["kld"] for r in rows])) if rows else float("nan"),
        "kld_direction": "KL(gt || pred)",
        "sim": float(np.mean([r["sim"] for r in rows])) if rows else float("nan"),
        "auc_j": float(np.mean([r["auc_j"] for r in rows])) if rows else float("nan"),
        "top1": rep.top1, "top5": rep.top5, "topn": rep.topn, "n": n,
    }
    Path(cmd.options["out"]).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    if cmd.options.get("csv"):
        with open(cmd.options["csv"], "w", newline="") as fh:
            w = csv.DictWriter(fh, ["instance_id", "kld", "sim", "auc_j", "top1", "top5", "topn"])
            w.writeheader()
            w.writerows(rows)
    _emit(report)
    return 0


def cmd_export_vis(cmd: Command) -> int:
    from .affordance import write_colored_ply
    from .dataset import load_record, read_index

    root = Path(cmd.options["data"])
    entry = next((e for e in read_index(root) if e["instance_id"] == cmd.options["instance"]), None)
    if entry is None:
        raise RecordIOError(f"no instance {cmd.options['instance']!r} in {root}")
    rec = load_record(root, entry)
    write_colored_ply(cmd.options["out"], rec.points.astype(np.float64), rec.prob)
    _emit({"out": cmd.options["out"], "points": len(rec.points)})
    return 0


def cmd_train_ref(cmd: Command) -> int:
    from .bridge import BridgeDims, LossConfig, save_checkpoint, train_overfit, training_instance, write_training_log
    from .dataset import read_records

    cfg = _config(cmd)
    b = cfg["bridge"]
    dims = BridgeDims(embed=int(b["embed_dim"]), head_hidden=int(b["hidden"]), match_hidden=int(b["hidden"]))
    records = read_records(cmd.options["data"])[: int(b["instances"])]
    if not records:
        raise RecordIOError("dataset has no records to train on")
    insts = [training_instance(r, int(b["n_points"]), dims=dims, seed=cfg["seed"]) for r in records]
    loss_cfg = LossConfig(float(b["delta_p"]), float(b["delta_n"]), float(b["lambda"]))
    steps = cmd.options.get("steps") if cmd.options.get("steps") is not None else int(b["steps"])
    lr = cmd.options.get("lr") if cmd.options.get("lr") is not None else float(b["lr"])
    res = train_overfit(insts, steps, lr, cfg["seed"], dims, loss_cfg)
    save_checkpoint(cmd.options["out"], res.params, dims)
    write_training_log(cmd.options["log"], res.history)
    last = res.history[-1]
    _emit({"steps": steps, "L_g": last[1], "L_emb": last[2], "L_match": last[3], "combined": last[4],
           "checkpoint": cmd.options["out"], "log": cmd.options["log"]})
    return 0


def cmd_info(cmd: Command) -> int:
    if cmd.options["defaults"]:
        cfg = _config(cmd)
        _emit({k: v for k, v in flat_items(cfg)})
        return 0
    from .dataset import read_index

    entries = read_index(cmd.options["data"])
    per_object = collections.Counter(e["object_id"] for e in entries)
    per_material = collections.Counter(m for e in entries for m in e["materials"].values())
    _emit({
        "instances": len(entries),
        "hard": sum(bool(e["hard"]) for e in entries),
        "instances_per_object": dict(sorted(per_object.items())),
        "parts_per_material": dict(sorted(per_material.items())),
        "positive_pairs": sum(e["n_positive_pairs"] for e in entries),
        "negative_pairs": sum(e["n_negative_pairs"] for e in entries),
    })
    return 0


_DISPATCH = {
    "generate": cmd_generate, "verify": cmd_verify, "evaluate": cmd_evaluate,
    "export-vis": cmd_export_vis, "train-ref": cmd_train_ref, "info": cmd_info,
}


def execute(cmd: Command) -> int:
    try:
        return _DISPATCH[cmd.verb](cmd)
    except GraspkitError as e:
        print(f"graspkit {cmd.verb}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return UsageError.exit_code
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    return execute(cmd)


if __name__ == "__main__":
    sys.exit(main())
