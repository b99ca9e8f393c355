"""Command-line pipeline: every stage reads and writes files, so runs are
resumable and independently testable.

Subcommands: synth | mine | refine | eval | report. Config-file values
override defaults; CLI flags override the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import metrics, miner, refine, synth
from .ingest import load_manifest, load_sequence_features, save_saliency_map
from .model import MiningState, PipelineConfig
from .motion import compute_sequence_pms


def _write_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: str | None, overrides: dict) -> PipelineConfig:
    config = PipelineConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if "classifier_hidden" in data:
            data["classifier_hidden"] = tuple(data["classifier_hidden"])
        config = PipelineConfig.from_dict(data)
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**cleaned) if cleaned else config


def cmd_synth(spec_path: str, out_dir: str, seed: int) -> int:
    spec = synth.SceneSpec.from_file(spec_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest = synth.generate_sequence(spec, seed, out_dir)
    print(f"wrote {manifest.frame_count} frames, {manifest.n_proposals} proposals to {out_dir}")
    return 0


def cmd_mine(manifest_path: str, config_path: str | None, out_dir: str, **overrides) -> int:
    config = _load_config(config_path, overrides)
    manifest = load_manifest(manifest_path)
    features = load_sequence_features(manifest)
    pms = compute_sequence_pms(manifest)
    state, partition, trace = miner.run_mining(manifest, features, pms, config)

    matrices = None
    if manifest.has_gt:
        trust = synth.oracle_trust_order(manifest, synth.load_gt_masks(manifest))
        matrices = [m.tolist() for m in miner.emit_mining_matrix(trace, trust)]

    os.makedirs(out_dir, exist_ok=True)
    _write_json(
        {
            "config": config.to_dict(),
            "iterations": [
                {
                    "iteration": r.iteration,
                    "pos_admitted": list(r.pos_admitted),
                    "neg_admitted": list(r.neg_admitted),
                    "pos_size": r.pos_size,
                    "neg_size": r.neg_size,
                    "uncertain_size": r.uncertain_size,
                }
                for r in trace.records
            ],
            "matrices": matrices,
        },
        os.path.join(out_dir, "trace.json"),
    )
    _write_json(
        {
            "pos": sorted(state.pos),
            "neg": sorted(state.neg),
            "uncertain": sorted(state.uncertain),
            "iteration": state.iteration,
        },
        os.path.join(out_dir, "state.json"),
    )
    print(
        f"mined {len(state.pos)} positive / {len(state.neg)} negative proposals "
        f"({len(state.uncertain)} uncertain) in {config.max_iterations} iterations"
    )
    return 0


def _load_state(mining_dir: str) -> MiningState:
    path = os.path.join(mining_dir, "state.json")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"mining state not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return MiningState(
        pos=frozenset(doc["pos"]),
        neg=frozenset(doc["neg"]),
        uncertain=frozenset(doc["uncertain"]),
        iteration=doc["iteration"],
    )


def cmd_refine(
    manifest_path: str,
    mining_dir: str,
    out_dir: str,
    paste_mode: str = "max",
    b: int | None = None,
) -> int:
    manifest = load_manifest(manifest_path)
    state = _load_state(mining_dir)
    batch = b if b is not None else PipelineConfig().b
    if batch < 1:
        raise ValueError(f"b must be >= 1, got {batch}")

    fs_maps = refine.compute_frame_saliency(manifest, state, mode=paste_mode)
    fs_dir = os.path.join(out_dir, "fs")
    os.makedirs(fs_dir, exist_ok=True)
    for t, fs in enumerate(fs_maps):
        save_saliency_map(fs, os.path.join(fs_dir, f"frame_{t:04d}.pgm"))

    consistencies = refine.sequence_consistencies(manifest, fs_maps)
    keyframes = refine.select_keyframes(consistencies, batch)
    finetune_path = refine.export_finetune_set(
        keyframes, fs_maps, os.path.join(out_dir, "finetune"), name=manifest.name
    )
    _write_json(
        {
            "b": batch,
            "paste_mode": paste_mode,
            "consistencies": consistencies,
            "keyframes": keyframes,
            "finetune_epochs": refine.FINETUNE_EPOCHS,
        },
        os.path.join(out_dir, "refine_report.json"),
    )
    print(f"wrote {len(fs_maps)} frame saliency maps, {len(keyframes)} keyframes; "
          f"finetune manifest at {os.path.relpath(finetune_path, out_dir)}")
    return 0


def cmd_eval(pred_dir: str, gt_dir: str, report_path: str) -> int:
    report = metrics.evaluate_directories(pred_dir, gt_dir)
    metrics.save_report(report, report_path)
    means = report["means"]
    print(
        f"maxF {means['max_f']:.4f}  S-measure {means['s_measure']:.4f}  "
        f"MAE {means['mae']:.4f} over {len(report['per_frame'])} frames"
    )
    return 0


def cmd_report(trace_paths: list[str], out_path: str) -> int:
    stacks: list[list[np.ndarray]] = []
    for path in trace_paths:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("matrices") is None:
            raise ValueError(f"{path}: trace has no matrices (sequence lacked GT maps)")
        stacks.append([np.asarray(m) for m in doc["matrices"]])
    depth = len(stacks[0])
    if any(len(s) != depth for s in stacks):
        raise ValueError("traces disagree on iteration count")
    iterations = []
    for it in range(depth):
        mean = np.mean([s[it] for s in stacks], axis=0)
        iterations.append({"iteration": it, "probability_matrix": mean.tolist()})
    _write_json({"count": len(stacks), "iterations": iterations}, out_path)
    print(f"averaged {len(stacks)} traces over {depth} iterations into {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sopmine",
        description="Salient-object-proposal mining pipeline over file-based providers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sequence from a scene spec")
    p.add_argument("spec", help="scene spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("mine", help="run the iterative proposal mining")
    p.add_argument("manifest", help="sequence manifest JSON")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--iterations", type=int, dest="max_iterations")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("refine", help="paste mined proposals into frame saliency and pick keyframes")
    p.add_argument("manifest")
    p.add_argument("--mining", required=True, help="directory written by 'mine'")
    p.add_argument("--out", required=True)
    p.add_argument("--paste-mode", choices=list(refine.PASTE_MODES), default="max")
    p.add_argument("--b", type=int)

    p = sub.add_parser("eval", help="score a directory of predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--report", required=True, help="output report JSON path")

    p = sub.add_parser("report", help="average mining matrices across traces")
    p.add_argument("traces", nargs="+", help="trace.json files from 'mine'")
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args.spec, args.out, args.seed)
        if args.command == "mine":
            return cmd_mine(
                args.manifest,
                args.config,
                args.out,
                k=args.k,
                b=args.b,
                max_iterations=args.max_iterations,
                seed=args.seed,
            )
        if args.command == "refine":
            return cmd_refine(args.manifest, args.mining, args.out, args.paste_mode, args.b)
        if args.command == "eval":
            return cmd_eval(args.pred_dir, args.gt_dir, args.report)
        if args.command == "report":
            return cmd_report(args.traces, args.out)
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
