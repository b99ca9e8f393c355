"""File formats and loaders: sequence manifests, PGM saliency maps, LIMF features.

Formats
-------
Manifest: JSON with exactly these fields (unknown fields rejected)::

    {
      "name": "seq",
      "frame_count": 2, "frame_width": 64, "frame_height": 48,
      "frames": [
        {
          "proposals": [{"box": [x0, y0, x1, y1], "objectness": 0.9}, ...],
          "features": "features/frame_0000.limf",
          "motion_map": "motion/frame_0000.pgm",
          "gt_map": "gt/frame_0000.pgm",          # optional
          "patch_maps": ["patches/...", ...]       # optional, one per proposal
        }, ...
      ]
    }

Paths are relative to the manifest's directory. Proposals receive global ids
1..N in (frame, listed-rank) order.

Maps: binary PGM (P5), maxval 255, loaded as value/255.
Features: "LIMF" magic, u32 count, u32 dim, count*dim little-endian float32.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    MAX_PROPOSALS_PER_FRAME,
    BoundingBox,
    ObjectProposal,
    ProviderBundle,
    SaliencyMap,
    as_feature_matrix,
)

FEATURE_MAGIC = b"LIMF"

_MANIFEST_KEYS = {"name", "frame_count", "frame_width", "frame_height", "frames"}
_FRAME_KEYS = {"proposals", "features", "motion_map", "gt_map", "patch_maps"}
_FRAME_REQUIRED = {"proposals", "features", "motion_map"}
_PROPOSAL_KEYS = {"box", "objectness"}


@dataclass(frozen=True)
class FrameRecord:
    """One frame's proposals and provider file references (paths relative)."""

    proposals: tuple[ObjectProposal, ...]
    feature_path: str
    motion_map_path: str
    gt_map_path: Optional[str] = None
    patch_map_paths: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class SequenceManifest:
    """A fully validated sequence: frame geometry plus per-frame records."""

    name: str
    frame_count: int
    frame_width: int
    frame_height: int
    frames: tuple[FrameRecord, ...]
    base_dir: str = ""

    @property
    def proposals(self) -> tuple[ObjectProposal, ...]:
        return tuple(p for frame in self.frames for p in frame.proposals)

    @property
    def n_proposals(self) -> int:
        return sum(len(frame.proposals) for frame in self.frames)

    @property
    def has_gt(self) -> bool:
        return all(frame.gt_map_path is not None for frame in self.frames)

    def resolve(self, relpath: str) -> str:
        return os.path.join(self.base_dir, relpath) if self.base_dir else relpath

    def proposal_by_id(self, proposal_id: int) -> ObjectProposal:
        props = self.proposals
        if not 1 <= proposal_id <= len(props):
            raise ValueError(f"unknown proposal id {proposal_id}")
        return props[proposal_id - 1]


def _validate_keys(obj: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"{where}: unknown fields {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValueError(f"{where}: missing fields {sorted(missing)}")


def load_manifest(path: str) -> SequenceManifest:
    """Load and validate a sequence manifest, assigning global proposal ids."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"manifest {path}: top level must be an object")
    _validate_keys(doc, _MANIFEST_KEYS, _MANIFEST_KEYS, "manifest")

    name = doc["name"]
    t, w, h = doc["frame_count"], doc["frame_width"], doc["frame_height"]
    if not isinstance(name, str) or not name:
        raise ValueError("manifest: name must be a non-empty string")
    for label, v in (("frame_count", t), ("frame_width", w), ("frame_height", h)):
        if not isinstance(v, int) or v <= 0:
            raise ValueError(f"manifest: {label} must be a positive integer")
    if t < 2:
        raise ValueError(f"manifest: frame_count must be >= 2, got {t}")
    frames_doc = doc["frames"]
    if not isinstance(frames_doc, list) or len(frames_doc) != t:
        raise ValueError(f"manifest: expected {t} frame records, got {len(frames_doc)}")

    base_dir = os.path.dirname(os.path.abspath(path))
    frames = []
    next_id = 1
    for fi, frame_doc in enumerate(frames_doc):
        if not isinstance(frame_doc, dict):
            raise ValueError(f"frame {fi}: must be an object")
        _validate_keys(frame_doc, _FRAME_KEYS, _FRAME_REQUIRED, f"frame {fi}")
        props_doc = frame_doc["proposals"]
        if not isinstance(props_doc, list):
            raise ValueError(f"frame {fi}: proposals must be a list")
        if len(props_doc) > MAX_PROPOSALS_PER_FRAME:
            raise ValueError(
                f"frame {fi}: proposal cap exceeded ({len(props_doc)} > {MAX_PROPOSALS_PER_FRAME})"
            )
        proposals = []
        for pi, prop_doc in enumerate(props_doc):
            where = f"frame {fi} proposal {pi}"
            if not isinstance(prop_doc, dict):
                raise ValueError(f"{where}: must be an object")
            _validate_keys(prop_doc, _PROPOSAL_KEYS, _PROPOSAL_KEYS, where)
            box_doc = prop_doc["box"]
            if not (isinstance(box_doc, list) and len(box_doc) == 4):
                raise ValueError(f"{where}: box must be [x0, y0, x1, y1]")
            try:
                box = BoundingBox(*box_doc)
            except ValueError as exc:
                raise ValueError(f"{where}: {exc}") from exc
            if not box.within(w, h):
                raise ValueError(f"{where}: box {box.as_tuple()} out of frame bounds {w}x{h}")
            try:
                proposals.append(ObjectProposal(next_id, fi, box, float(prop_doc["objectness"])))
            except ValueError as exc:
                raise ValueError(f"{where}: {exc}") from exc
            next_id += 1
        patch_paths = frame_doc.get("patch_maps")
        if patch_paths is not None:
            if not isinstance(patch_paths, list) or len(patch_paths) != len(proposals):
                raise ValueError(f"frame {fi}: patch_maps must list one path per proposal")
            patch_paths = tuple(patch_paths)
        record = FrameRecord(
            proposals=tuple(proposals),
            feature_path=frame_doc["features"],
            motion_map_path=frame_doc["motion_map"],
            gt_map_path=frame_doc.get("gt_map"),
            patch_map_paths=patch_paths,
        )
        for ref in (record.feature_path, record.motion_map_path, record.gt_map_path) + (
            record.patch_map_paths or ()
        ):
            if ref is not None and not os.path.isfile(os.path.join(base_dir, ref)):
                raise ValueError(f"frame {fi}: referenced file missing: {ref}")
        frames.append(record)

    return SequenceManifest(name, t, w, h, tuple(frames), base_dir)


def manifest_to_dict(manifest: SequenceManifest) -> dict:
    frames = []
    for frame in manifest.frames:
        frame_doc: dict = {
            "proposals": [
                {"box": list(p.box.as_tuple()), "objectness": p.objectness}
                for p in frame.proposals
            ],
            "features": frame.feature_path,
            "motion_map": frame.motion_map_path,
        }
        if frame.gt_map_path is not None:
            frame_doc["gt_map"] = frame.gt_map_path
        if frame.patch_map_paths is not None:
            frame_doc["patch_maps"] = list(frame.patch_map_paths)
        frames.append(frame_doc)
    return {
        "name": manifest.name,
        "frame_count": manifest.frame_count,
        "frame_width": manifest.frame_width,
        "frame_height": manifest.frame_height,
        "frames": frames,
    }


def save_manifest(manifest: SequenceManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_saliency_map(path: str) -> SaliencyMap:
    """Load a binary (P5) PGM with maxval 255; values come back as byte/255."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"saliency map not found: {path}")
    with open(path, "rb") as fh:
        data = fh.read()

    # Tokenize the header: magic, width, height, maxval; '#' starts a comment.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval, then raw payload

    if tokens[0] != b"P5":
        raise ValueError(f"{path}: bad magic {tokens[0]!r}, expected P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{path}: maxval must be 255, got {maxval}")
    payload = data[pos : pos + width * height]
    if len(payload) != width * height:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {width * height} bytes)")
    grid = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return SaliencyMap(grid.astype(np.float64) / 255.0)


def save_saliency_map(saliency: SaliencyMap, path: str) -> None:
    """Write a P5 PGM; values are rounded half-up to bytes."""
    header = f"P5\n{saliency.width} {saliency.height}\n255\n".encode("ascii")
    payload = np.floor(saliency.values * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_features(path: str) -> np.ndarray:
    """Load a LIMF feature file as an (count, dim) float32 matrix."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"feature file not found: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(data) < 12:
        raise ValueError(f"{path}: truncated header")
    count, dim = struct.unpack_from("<II", data, 4)
    expected = 12 + count * dim * 4
    if len(data) != expected:
        raise ValueError(f"{path}: length mismatch ({len(data)} bytes, expected {expected})")
    mat = np.frombuffer(data, dtype="<f4", offset=12).reshape(count, dim)
    if count and not np.isfinite(mat).all():
        raise ValueError(f"{path}: non-finite feature value")
    return mat.astype(np.float32)


def save_features(features: np.ndarray, path: str) -> None:
    mat = as_feature_matrix(features) if len(features) else np.zeros((0, 0), dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        fh.write(mat.astype("<f4").tobytes())


def crop(saliency: SaliencyMap, box: BoundingBox) -> SaliencyMap:
    """Cut the patch a box covers; errors if the box leaves the map."""
    if not box.within(saliency.width, saliency.height):
        raise ValueError(
            f"box {box.as_tuple()} out of bounds for {saliency.width}x{saliency.height} map"
        )
    return SaliencyMap(saliency.values[box.y0 : box.y1, box.x0 : box.x1])


def load_sequence_features(manifest: SequenceManifest) -> np.ndarray:
    """Concatenate per-frame feature files into an (N, D) matrix in id order."""
    blocks = []
    dim = None
    for fi, frame in enumerate(manifest.frames):
        mat = load_features(manifest.resolve(frame.feature_path))
        if mat.shape[0] != len(frame.proposals):
            raise ValueError(
                f"frame {fi}: feature file has {mat.shape[0]} vectors "
                f"for {len(frame.proposals)} proposals"
            )
        if mat.shape[0] == 0:
            continue
        if dim is None:
            dim = mat.shape[1]
        elif mat.shape[1] != dim:
            raise ValueError(f"frame {fi}: feature dimension {mat.shape[1]} != {dim}")
        blocks.append(mat)
    if not blocks:
        raise ValueError("sequence has no proposals")
    return np.concatenate(blocks, axis=0)


def provider_bundle(manifest: SequenceManifest) -> ProviderBundle:
    """Collect resolved provider paths; patch maps fall back to the motion-crop
    stub when any frame lacks them."""
    have_patches = all(f.patch_map_paths is not None for f in manifest.frames)
    return ProviderBundle(
        motion_map_paths=tuple(manifest.resolve(f.motion_map_path) for f in manifest.frames),
        feature_paths=tuple(manifest.resolve(f.feature_path) for f in manifest.frames),
        patch_map_paths=tuple(
            tuple(manifest.resolve(p) for p in f.patch_map_paths) for f in manifest.frames
        )
        if have_patches
        else None,
    )


def load_patch_map(bundle: ProviderBundle, proposal: ObjectProposal, rank: int) -> SaliencyMap:
    """Patch saliency for one proposal: provider file when present, otherwise
    the stub rule (crop of the frame's motion map)."""
    if bundle.patch_map_paths is not None:
        paths = bundle.patch_map_paths[proposal.frame_index]
        if rank >= len(paths):
            raise ValueError(f"no patch map for proposal {proposal.id}")
        patch = load_saliency_map(paths[rank])
        if patch.width != proposal.box.width or patch.height != proposal.box.height:
            raise ValueError(
                f"patch map for proposal {proposal.id} is {patch.width}x{patch.height}, "
                f"box is {proposal.box.width}x{proposal.box.height}"
            )
        return patch
    motion = load_saliency_map(bundle.motion_map_paths[proposal.frame_index])
    return crop(motion, proposal.box)
