"""Deterministic synthetic sequences with ground truth.

A scene is a handful of moving salient disks plus static or moving distractor
disks. The generator rasterizes GT masks and displacement-magnitude motion
maps, jitters true boxes into proposals, draws features around per-object
prototypes (salient and distractor prototypes pushed apart along a fixed
direction by a configurable margin), and writes everything in the ingest
formats. Identical (spec, seed) pairs produce byte-identical trees.

Scene spec JSON::

    {
      "name": "scene",
      "frame_width": 128, "frame_height": 96, "frame_count": 60,
      "salient_blobs": [{"radius": 10, "start": [25, 30], "velocity": [1.2, 0.4]}],
      "distractors":   [{"radius": 6,  "start": [100, 20], "velocity": [0, 0]}],
      "feature_dim": 512, "feature_noise": 0.1,
      "prototype_scale": 3.0, "prototype_margin": 6.0,
      "motion_noise": 0.02, "box_jitter": 2, "patch_noise": 0.05
    }

All fields beyond the blob lists have the defaults shown above.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .ingest import (
    SequenceManifest,
    FrameRecord,
    load_manifest,
    manifest_to_dict,
    save_features,
    save_saliency_map,
)
from .model import BoundingBox, ObjectProposal, SaliencyMap

_BLOB_KEYS = {"radius", "start", "velocity"}


@dataclass(frozen=True)
class Blob:
    radius: int
    start: tuple[float, float]
    velocity: tuple[float, float]

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"blob radius must be >= 1, got {self.radius}")
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))


@dataclass(frozen=True)
class SceneSpec:
    """Validated scene description for the generator."""

    name: str = "scene"
    frame_width: int = 128
    frame_height: int = 96
    frame_count: int = 60
    salient_blobs: tuple[Blob, ...] = ()
    distractors: tuple[Blob, ...] = ()
    feature_dim: int = 512
    feature_noise: float = 0.1
    prototype_scale: float = 3.0
    prototype_margin: float = 6.0
    motion_noise: float = 0.02
    box_jitter: int = 2
    patch_noise: float = 0.05

    def __post_init__(self):
        if self.frame_width < 4 or self.frame_height < 4:
            raise ValueError("frame must be at least 4x4")
        if not 2 <= self.frame_count <= 100:
            raise ValueError(f"frame_count must be in [2, 100], got {self.frame_count}")
        if not 1 <= len(self.salient_blobs) <= 3:
            raise ValueError("need 1 to 3 salient blobs")
        if len(self.distractors) > 10:
            raise ValueError("at most 10 distractors")
        if len(self.salient_blobs) + len(self.distractors) > 10:
            raise ValueError("at most 10 objects total (proposal cap is 10 per frame)")
        for blob in self.salient_blobs + self.distractors:
            if 2 * blob.radius + 1 > min(self.frame_width, self.frame_height):
                raise ValueError(
                    f"blob radius {blob.radius} larger than frame "
                    f"{self.frame_width}x{self.frame_height}"
                )
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        for name in ("feature_noise", "motion_noise", "patch_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.prototype_margin < 0:
            raise ValueError("prototype_margin must be >= 0")
        if self.prototype_scale <= 0:
            raise ValueError("prototype_scale must be positive")
        if self.box_jitter < 0:
            raise ValueError("box_jitter must be >= 0")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SceneSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scene fields: {sorted(unknown)}")
        data = dict(data)
        for key in ("salient_blobs", "distractors"):
            blobs = []
            for entry in data.get(key, ()):
                bad = set(entry) - _BLOB_KEYS
                if bad:
                    raise ValueError(f"{key}: unknown blob fields {sorted(bad)}")
                blobs.append(
                    Blob(entry["radius"], tuple(entry["start"]), tuple(entry["velocity"]))
                )
            data[key] = tuple(blobs)
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "SceneSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _blob_centers(spec: SceneSpec, blob: Blob) -> np.ndarray:
    """(T, 2) clamped centers so the disk always stays inside the frame."""
    t = np.arange(spec.frame_count, dtype=np.float64)
    cx = blob.start[0] + t * blob.velocity[0]
    cy = blob.start[1] + t * blob.velocity[1]
    r = blob.radius
    cx = np.clip(cx, r, spec.frame_width - 1 - r)
    cy = np.clip(cy, r, spec.frame_height - 1 - r)
    return np.stack([cx, cy], axis=1)


def _disk_mask(spec: SceneSpec, center: np.ndarray, radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0 : spec.frame_height, 0 : spec.frame_width]
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius * radius


def _true_box(spec: SceneSpec, center: np.ndarray, radius: int) -> BoundingBox:
    x0 = int(math.floor(center[0] - radius))
    y0 = int(math.floor(center[1] - radius))
    x1 = int(math.floor(center[0] + radius)) + 1
    y1 = int(math.floor(center[1] + radius)) + 1
    return BoundingBox(max(0, x0), max(0, y0), min(spec.frame_width, x1), min(spec.frame_height, y1))


def _jittered_box(spec: SceneSpec, box: BoundingBox, rng: np.random.Generator) -> BoundingBox:
    j = spec.box_jitter
    if j == 0:
        return box
    dx0, dy0, dx1, dy1 = rng.integers(-j, j + 1, size=4)
    x0 = max(0, min(box.x0 + int(dx0), spec.frame_width - 1))
    y0 = max(0, min(box.y0 + int(dy0), spec.frame_height - 1))
    x1 = max(x0 + 1, min(box.x1 + int(dx1), spec.frame_width))
    y1 = max(y0 + 1, min(box.y1 + int(dy1), spec.frame_height))
    return BoundingBox(x0, y0, x1, y1)


def generate_sequence(spec: SceneSpec, seed: int, out_dir: str) -> SequenceManifest:
    """Write a full synthetic sequence under out_dir and return its manifest."""
    rng = np.random.default_rng(seed)
    for sub in ("gt", "motion", "features", "patches"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    blobs = list(spec.salient_blobs) + list(spec.distractors)
    n_salient = len(spec.salient_blobs)

    # prototypes: random points pushed apart across the salient/distractor split
    direction = rng.normal(size=spec.feature_dim)
    direction /= np.linalg.norm(direction)
    prototypes = []
    for i in range(len(blobs)):
        proto = rng.normal(size=spec.feature_dim) * spec.prototype_scale
        shift = spec.prototype_margin / 2.0
        prototypes.append(proto + (shift if i < n_salient else -shift) * direction)

    centers = [_blob_centers(spec, blob) for blob in blobs]
    displacement = []
    for c in centers:
        step = np.linalg.norm(np.diff(c, axis=0), axis=1)
        displacement.append(np.append(step, step[-1]) if step.size else np.zeros(1))
    peak = max(float(d.max()) for d in displacement)

    frames = []
    for t in range(spec.frame_count):
        gt = np.zeros((spec.frame_height, spec.frame_width), dtype=np.float64)
        motion = np.zeros_like(gt)
        for i, blob in enumerate(blobs):
            mask = _disk_mask(spec, centers[i][t], blob.radius)
            if i < n_salient:
                gt[mask] = 1.0
            if peak > 0.0:
                motion[mask] = np.maximum(motion[mask], displacement[i][t] / peak)
        motion = np.clip(motion + rng.normal(0.0, spec.motion_noise, motion.shape), 0.0, 1.0)

        gt_rel = f"gt/frame_{t:04d}.pgm"
        motion_rel = f"motion/frame_{t:04d}.pgm"
        save_saliency_map(SaliencyMap(gt), os.path.join(out_dir, gt_rel))
        save_saliency_map(SaliencyMap(motion), os.path.join(out_dir, motion_rel))

        proposals = []
        feature_rows = []
        patch_rels = []
        for i, blob in enumerate(blobs):
            box = _jittered_box(spec, _true_box(spec, centers[i][t], blob.radius), rng)
            lo, hi = (0.75, 0.95) if i < n_salient else (0.4, 0.9)
            proposals.append((box, float(rng.uniform(lo, hi))))
            feature_rows.append(prototypes[i] + rng.normal(0.0, spec.feature_noise, spec.feature_dim))

            patch = gt[box.y0 : box.y1, box.x0 : box.x1]
            patch = np.clip(patch + rng.normal(0.0, spec.patch_noise, patch.shape), 0.0, 1.0)
            patch_rel = f"patches/frame_{t:04d}_p{i:02d}.pgm"
            save_saliency_map(SaliencyMap(patch), os.path.join(out_dir, patch_rel))
            patch_rels.append(patch_rel)

        feature_rel = f"features/frame_{t:04d}.limf"
        save_features(np.asarray(feature_rows, dtype=np.float32), os.path.join(out_dir, feature_rel))
        frames.append((proposals, feature_rel, motion_rel, gt_rel, tuple(patch_rels)))

    records = []
    next_id = 1
    for t, (proposals, feature_rel, motion_rel, gt_rel, patch_rels) in enumerate(frames):
        objs = []
        for box, objectness in proposals:
            objs.append(ObjectProposal(next_id, t, box, objectness))
            next_id += 1
        records.append(FrameRecord(tuple(objs), feature_rel, motion_rel, gt_rel, patch_rels))
    manifest = SequenceManifest(
        name=spec.name,
        frame_count=spec.frame_count,
        frame_width=spec.frame_width,
        frame_height=spec.frame_height,
        frames=tuple(records),
        base_dir=out_dir,
    )
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return load_manifest(manifest_path)


def _occupancy(manifest: SequenceManifest, gt_masks: Sequence[SaliencyMap]) -> dict[int, float]:
    if len(gt_masks) != manifest.frame_count:
        raise ValueError("need one GT mask per frame")
    occ = {}
    for frame_index, frame in enumerate(manifest.frames):
        gt = gt_masks[frame_index].values > 0.5
        for p in frame.proposals:
            box = p.box
            occ[p.id] = float(gt[box.y0 : box.y1, box.x0 : box.x1].mean())
    return occ


def load_gt_masks(manifest: SequenceManifest) -> list[SaliencyMap]:
    from .ingest import load_saliency_map

    masks = []
    for fi, frame in enumerate(manifest.frames):
        if frame.gt_map_path is None:
            raise ValueError(f"frame {fi} has no GT map")
        masks.append(load_saliency_map(manifest.resolve(frame.gt_map_path)))
    return masks


def oracle_trust_order(manifest: SequenceManifest, gt_masks: Sequence[SaliencyMap]) -> list[int]:
    """Proposal ids best-first by mean GT occupancy inside the box (ties by id)."""
    occ = _occupancy(manifest, gt_masks)
    return sorted(occ, key=lambda pid: (-occ[pid], pid))


def oracle_label(
    manifest: SequenceManifest, gt_masks: Sequence[SaliencyMap], threshold: float = 0.5
) -> dict[int, bool]:
    """Proposal id -> True when GT occupancy reaches the threshold."""
    occ = _occupancy(manifest, gt_masks)
    return {pid: occ[pid] >= threshold for pid in occ}
