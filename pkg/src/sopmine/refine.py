"""From mined proposals to frame-level saliency, keyframes, and the exported
fine-tune set for an external framewise refiner.
"""

from __future__ import annotations

import json
import math
import os
from typing import Mapping, Sequence

import numpy as np

from .ingest import SequenceManifest, load_patch_map, load_saliency_map, provider_bundle
from .metrics import s_measure
from .model import BoundingBox, MiningState, ProviderBundle, SaliencyMap

FINETUNE_EPOCHS = 10

PASTE_MODES = ("max", "ave")


def normalize_minmax(patch: SaliencyMap) -> SaliencyMap:
    """Stretch a patch to span [0, 1]; a constant patch collapses to zeros."""
    v = patch.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return SaliencyMap(np.zeros_like(v))
    return SaliencyMap((v - lo) / (hi - lo))


def paste_frame_saliency(
    frame_width: int,
    frame_height: int,
    patches: Sequence[tuple[SaliencyMap, BoundingBox]],
    mode: str = "max",
) -> SaliencyMap:
    """Project normalized patches onto a zero canvas.

    "max" keeps the elementwise maximum over covering patches; "ave" averages
    them. Uncovered pixels stay 0 either way.
    """
    if mode not in PASTE_MODES:
        raise ValueError(f"mode must be one of {PASTE_MODES}, got {mode!r}")
    canvas = np.zeros((frame_height, frame_width), dtype=np.float64)
    counts = np.zeros_like(canvas)
    for patch, box in patches:
        if (patch.height, patch.width) != (box.height, box.width):
            raise ValueError(
                f"patch {patch.width}x{patch.height} does not fit box {box.as_tuple()}"
            )
        if not box.within(frame_width, frame_height):
            raise ValueError(f"box {box.as_tuple()} outside {frame_width}x{frame_height} frame")
        region = (slice(box.y0, box.y1), slice(box.x0, box.x1))
        normalized = normalize_minmax(patch).values
        if mode == "max":
            canvas[region] = np.maximum(canvas[region], normalized)
        else:
            canvas[region] += normalized
            counts[region] += 1.0
    if mode == "ave":
        covered = counts > 0.0
        canvas[covered] /= counts[covered]
    return SaliencyMap(canvas)


def compute_frame_saliency(
    manifest: SequenceManifest,
    state: MiningState,
    mode: str = "max",
    bundle: ProviderBundle | None = None,
) -> list[SaliencyMap]:
    """Frame-level saliency for every frame by pasting the mined positive
    proposals' patch maps. Frames with no mined proposal come back all-zero."""
    if bundle is None:
        bundle = provider_bundle(manifest)
    maps = []
    for frame in manifest.frames:
        patches = []
        for rank, proposal in enumerate(frame.proposals):
            if proposal.id in state.pos:
                patches.append((load_patch_map(bundle, proposal, rank), proposal.box))
        maps.append(
            paste_frame_saliency(manifest.frame_width, manifest.frame_height, patches, mode)
        )
    return maps


def spatiotemporal_consistency(fs: SaliencyMap, ms: SaliencyMap) -> float:
    """Structural similarity of a frame saliency map against its binarized
    motion map; the score that drives keyframe selection."""
    if (fs.height, fs.width) != (ms.height, ms.width):
        raise ValueError("frame saliency and motion map sizes differ")
    reference = SaliencyMap((ms.values > 0.5).astype(np.float64))
    return s_measure(fs, reference)


def sequence_consistencies(manifest: SequenceManifest, fs_maps: Sequence[SaliencyMap]) -> list[float]:
    if len(fs_maps) != manifest.frame_count:
        raise ValueError("need one frame saliency map per frame")
    scores = []
    for frame, fs in zip(manifest.frames, fs_maps):
        ms = load_saliency_map(manifest.resolve(frame.motion_map_path))
        scores.append(spatiotemporal_consistency(fs, ms))
    return scores


def select_keyframes(consistencies: Sequence[float], b: int) -> list[int]:
    """One keyframe per consecutive batch of b frames: the batch argmax,
    earliest frame on ties. Returns ceil(T/b) frame indices."""
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    scores = list(consistencies)
    if not scores:
        raise ValueError("no consistency scores given")
    keyframes = []
    for start in range(0, len(scores), b):
        batch = scores[start : start + b]
        keyframes.append(start + int(np.argmax(batch)))
    return keyframes


def export_finetune_set(
    keyframes: Sequence[int],
    fs_maps: Sequence[SaliencyMap],
    out_dir: str,
    name: str = "sequence",
) -> str:
    """Write keyframe saliency maps as pseudo-GT PGMs plus a manifest naming
    the pairs and the recommended fine-tune epoch count."""
    from .ingest import save_saliency_map

    os.makedirs(out_dir, exist_ok=True)
    pairs = []
    for idx in keyframes:
        if not 0 <= idx < len(fs_maps):
            raise ValueError(f"keyframe index {idx} out of range")
        rel = f"keyframe_{idx:05d}.pgm"
        save_saliency_map(fs_maps[idx], os.path.join(out_dir, rel))
        pairs.append(
            {
                "frame_index": idx,
                "image_ref": f"{name}/frame_{idx:05d}",
                "pseudo_gt_path": rel,
            }
        )
    manifest_path = os.path.join(out_dir, "finetune.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"epochs": FINETUNE_EPOCHS, "pairs": pairs}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_finetune_manifest(path: str) -> dict:
    """Load and validate an exported fine-tune manifest."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if set(doc) != {"epochs", "pairs"}:
        raise ValueError(f"{path}: expected exactly 'epochs' and 'pairs' fields")
    if not isinstance(doc["epochs"], int) or doc["epochs"] < 1:
        raise ValueError(f"{path}: epochs must be a positive integer")
    base = os.path.dirname(os.path.abspath(path))
    for pair in doc["pairs"]:
        if set(pair) != {"frame_index", "image_ref", "pseudo_gt_path"}:
            raise ValueError(f"{path}: malformed pair record {pair}")
        if not os.path.isfile(os.path.join(base, pair["pseudo_gt_path"])):
            raise ValueError(f"{path}: missing pseudo-GT file {pair['pseudo_gt_path']}")
    return doc
