"""Motion-saliency scoring of proposals and coarse salient-cluster selection.

Motion maps are provider inputs; this module reduces them to per-proposal
means, per-cluster averages, and the derivative-based choice of how many
clusters count as salient.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .ingest import SequenceManifest, crop, load_saliency_map
from .model import BoundingBox, ClusterPartition, SaliencyMap


def proposal_motion_saliency(motion: SaliencyMap, box: BoundingBox) -> float:
    """Mean motion-saliency value inside a proposal's box."""
    return float(crop(motion, box).values.mean())


def compute_sequence_pms(manifest: SequenceManifest) -> dict[int, float]:
    """Proposal-id -> motion saliency for a whole sequence."""
    pms: dict[int, float] = {}
    for frame in manifest.frames:
        if not frame.proposals:
            continue
        motion = load_saliency_map(manifest.resolve(frame.motion_map_path))
        if (motion.width, motion.height) != (manifest.frame_width, manifest.frame_height):
            raise ValueError(
                f"motion map {frame.motion_map_path} is {motion.width}x{motion.height}, "
                f"frame is {manifest.frame_width}x{manifest.frame_height}"
            )
        for p in frame.proposals:
            pms[p.id] = proposal_motion_saliency(motion, p.box)
    return pms


def cluster_mean_saliency(partition: ClusterPartition, pms: Mapping[int, float]) -> np.ndarray:
    """Per-cluster mean of member motion saliencies (a K-vector)."""
    ams = np.empty(partition.k, dtype=np.float64)
    for c in range(partition.k):
        members = partition.members(c)
        missing = [pid for pid in members if pid not in pms]
        if missing:
            raise ValueError(f"cluster {c}: missing motion saliency for proposals {missing}")
        ams[c] = float(np.mean([pms[pid] for pid in members]))
    return ams


def select_salient_clusters(ams: np.ndarray, k: int) -> tuple[int, tuple[int, ...]]:
    """Pick how many clusters are salient and which ones.

    Sort the cluster averages descending, take forward differences, and place
    the cut at the steepest drop among the first floor(k/2)-1 gaps (the count
    stays strictly below floor(k/2)). Ties take the earliest gap, so the
    result only depends on the ordering of ``ams`` up to affine rescaling.
    """
    ams = np.asarray(ams, dtype=np.float64)
    if k < 4:
        raise ValueError(f"k must be >= 4, got {k}")
    if ams.shape != (k,):
        raise ValueError(f"expected {k} cluster averages, got shape {ams.shape}")
    if not np.isfinite(ams).all():
        raise ValueError("cluster averages contain non-finite values")

    order = sorted(range(k), key=lambda c: (-ams[c], c))
    sorted_vals = ams[order]
    diffs = np.diff(sorted_vals)  # diffs[i-1] = s(i+1) - s(i), 1-indexed gaps
    bound = k // 2 - 1
    candidates = diffs[:bound]
    nu = int(np.argmin(candidates)) + 1  # earliest minimum wins on ties
    salient = tuple(sorted(order[:nu]))
    return nu, salient
