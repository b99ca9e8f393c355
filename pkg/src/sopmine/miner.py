"""Iterative trustworthy-proposal mining.

Builds per-cluster dual rankings (feature-profile distance and motion
saliency), cuts them at dynamically found gaps, intersects the tops into
initial Pos/Neg training sets, and then grows both sets over a fixed number
of iterations with a classifier-in-the-loop plus a top-gamma%% admission
filter. Everything is deterministic given the config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import classifier as clf
from .cluster import cluster_profile, kmeans, proposal_similarity
from .ingest import SequenceManifest
from .model import (
    MAX_CHUNK_FRAMES,
    ClassifierParams,
    ClusterPartition,
    MiningState,
    PipelineConfig,
)
from .motion import cluster_mean_saliency, select_salient_clusters

MATRIX_SIDE = 20
MATRIX_CELLS = MATRIX_SIDE * MATRIX_SIDE


@dataclass(frozen=True)
class ClusterRanking:
    """Member ids of one cluster in the two trust orders.

    ``si`` is ascending by distance to the cluster profile; ``mi`` is by
    motion saliency, descending for salient clusters and ascending otherwise.
    """

    cluster_index: int
    si: tuple[int, ...]
    mi: tuple[int, ...]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    pos_admitted: tuple[int, ...]
    neg_admitted: tuple[int, ...]
    pos_size: int
    neg_size: int
    uncertain_size: int


@dataclass(frozen=True)
class MiningTrace:
    records: tuple[IterationRecord, ...]

    def pos_sizes(self) -> tuple[int, ...]:
        return tuple(r.pos_size for r in self.records)


def validate_state(state: MiningState, all_ids: frozenset[int]) -> None:
    """Assert the Pos/Neg/uncertain partition property over the given ids."""
    if state.pos & state.neg:
        raise ValueError("pos and neg sets overlap")
    union = state.pos | state.neg | state.uncertain
    if union != all_ids:
        raise ValueError("state does not partition the proposal ids")
    if (state.pos & state.uncertain) or (state.neg & state.uncertain):
        raise ValueError("uncertain overlaps a decided set")


def rank_cluster(
    partition: ClusterPartition,
    cluster_index: int,
    sims: Mapping[int, float],
    pms: Mapping[int, float],
) -> ClusterRanking:
    """Order one cluster's members by profile distance and by motion saliency."""
    members = partition.members(cluster_index)
    for pid in members:
        if pid not in sims or pid not in pms:
            raise ValueError(f"proposal {pid} lacks a sim or pms entry")
    si = tuple(sorted(members, key=lambda pid: (sims[pid], pid)))
    if bool(partition.salient_flags[cluster_index]):
        mi = tuple(sorted(members, key=lambda pid: (-pms[pid], pid)))
    else:
        mi = tuple(sorted(members, key=lambda pid: (pms[pid], pid)))
    return ClusterRanking(cluster_index, si, mi)


def dynamic_cutoff(values_in_rank_order: Sequence[float], xi_frac: float) -> int:
    """Cut position into a ranked value sequence: the largest forward
    difference at or beyond the lower bound ceil(xi_frac * g).

    Returns a 1-based position alpha; the "top" set is positions 1..alpha.
    The bound is clamped to g-1 so the search range is never empty.
    """
    values = np.asarray(values_in_rank_order, dtype=np.float64)
    g = values.size
    if g < 2:
        raise ValueError(f"need at least 2 ranked values, got {g}")
    if not 0.0 < xi_frac < 1.0:
        raise ValueError(f"xi_frac must be in (0, 1), got {xi_frac}")
    xi = min(math.ceil(xi_frac * g), g - 1)
    diffs = np.diff(values)  # diffs[j-1] = v(j+1) - v(j) at 1-based position j
    window = diffs[xi - 1 :]
    return xi + int(np.argmax(window))


def build_training_sets(
    partition: ClusterPartition,
    rankings: Mapping[int, ClusterRanking],
    cutoffs: Mapping[int, tuple[int, int]],
) -> tuple[frozenset[int], frozenset[int]]:
    """Intersect each cluster's top-alpha (by sim) with its top-beta (by pms);
    salient clusters feed Pos, the rest feed Neg.

    An empty intersection falls back to the cluster's single lowest-sim
    member, as does a singleton cluster (which has no cutoffs).
    """
    pos: set[int] = set()
    neg: set[int] = set()
    for c in range(partition.k):
        ranking = rankings.get(c)
        if ranking is None:
            raise ValueError(f"missing ranking for cluster {c}")
        if len(ranking.si) == 1:
            chosen = {ranking.si[0]}
        else:
            if c not in cutoffs:
                raise ValueError(f"missing cutoffs for cluster {c}")
            alpha, beta = cutoffs[c]
            chosen = set(ranking.si[:alpha]) & set(ranking.mi[:beta])
            if not chosen:
                chosen = {ranking.si[0]}
        if bool(partition.salient_flags[c]):
            pos |= chosen
        else:
            neg |= chosen
    return frozenset(pos), frozenset(neg)


def _admit_top_gamma(candidates: set[int], sims: Mapping[int, float], gamma_pct: float) -> set[int]:
    if not candidates:
        return set()
    keep = math.ceil(gamma_pct / 100.0 * len(candidates))
    ordered = sorted(candidates, key=lambda pid: (sims[pid], pid))
    return set(ordered[:keep])


def mining_iteration(
    state: MiningState,
    predict: Callable[[int], float],
    partition: ClusterPartition,
    sims: Mapping[int, float],
    gamma_pct: float = 60.0,
) -> MiningState:
    """One expansion step: classify the uncertain proposals, then admit the
    top-gamma%% most profile-consistent of each predicted group."""
    pos_plus: set[int] = set()
    neg_plus: set[int] = set()
    for pid in state.uncertain:
        salient_cluster = bool(partition.salient_flags[partition.cluster_of(pid)])
        score = predict(pid)
        if salient_cluster and score > 0.5:
            pos_plus.add(pid)
        elif not salient_cluster and score <= 0.5:
            neg_plus.add(pid)

    admitted_pos = _admit_top_gamma(pos_plus, sims, gamma_pct)
    admitted_neg = _admit_top_gamma(neg_plus, sims, gamma_pct)
    return MiningState(
        pos=state.pos | admitted_pos,
        neg=state.neg | admitted_neg,
        uncertain=state.uncertain - admitted_pos - admitted_neg,
        iteration=state.iteration + 1,
    )


def compute_cluster_sims(partition: ClusterPartition, features: np.ndarray) -> dict[int, float]:
    """Distance of every proposal's feature to its own cluster's profile."""
    sims: dict[int, float] = {}
    feats = np.asarray(features, dtype=np.float64)
    for c in range(partition.k):
        profile = cluster_profile(partition, features, c)
        for pid in partition.members(c):
            sims[pid] = proposal_similarity(profile, feats[pid - 1])
    return sims


def _mine_chunk(
    ids: Sequence[int],
    features: np.ndarray,
    pms: Mapping[int, float],
    config: PipelineConfig,
    seed: int,
) -> tuple[MiningState, ClusterPartition, list[IterationRecord], ClassifierParams]:
    """Mine one contiguous block of proposals. ``ids`` are the global ids in
    order; the partition returned is indexed over this block only."""
    ids = list(ids)
    chunk_features = features  # (len(ids), D), aligned with ids
    partition = kmeans(chunk_features, config.k, seed)

    local_pms = {local + 1: pms[gid] for local, gid in enumerate(ids)}
    ams = cluster_mean_saliency(partition, local_pms)
    _, salient = select_salient_clusters(ams, config.k)
    partition = partition.with_salient(salient)

    sims = compute_cluster_sims(partition, chunk_features)
    rankings: dict[int, ClusterRanking] = {}
    cutoffs: dict[int, tuple[int, int]] = {}
    for c in range(partition.k):
        ranking = rank_cluster(partition, c, sims, local_pms)
        rankings[c] = ranking
        if len(ranking.si) >= 2:
            alpha = dynamic_cutoff([sims[pid] for pid in ranking.si], config.xi_frac)
            beta = dynamic_cutoff([local_pms[pid] for pid in ranking.mi], config.xi_frac)
            cutoffs[c] = (alpha, beta)

    pos, neg = build_training_sets(partition, rankings, cutoffs)
    all_local = frozenset(range(1, len(ids) + 1))
    state = MiningState(pos=pos, neg=neg, uncertain=all_local - pos - neg, iteration=0)
    validate_state(state, all_local)
    records = [
        IterationRecord(0, tuple(sorted(pos)), tuple(sorted(neg)), len(pos), len(neg), len(state.uncertain))
    ]

    feats64 = np.asarray(chunk_features, dtype=np.float64)
    params = clf.init_classifier(feats64.shape[1], config.classifier_hidden, config.seed)
    for _ in range(config.max_iterations):
        if config.classifier_retrain:
            params = clf.init_classifier(feats64.shape[1], config.classifier_hidden, config.seed)
        pos_feats = feats64[[pid - 1 for pid in sorted(state.pos)]]
        neg_feats = feats64[[pid - 1 for pid in sorted(state.neg)]]
        params, _ = clf.train(
            params, pos_feats, neg_feats, epochs=config.classifier_epochs, lr=config.learning_rate
        )

        scores = clf.forward_batch(params, feats64)
        new_state = mining_iteration(
            state, lambda pid: float(scores[pid - 1]), partition, sims, config.gamma_pct
        )
        validate_state(new_state, all_local)
        records.append(
            IterationRecord(
                new_state.iteration,
                tuple(sorted(new_state.pos - state.pos)),
                tuple(sorted(new_state.neg - state.neg)),
                len(new_state.pos),
                len(new_state.neg),
                len(new_state.uncertain),
            )
        )
        state = new_state

    # map local ids back to global
    def to_global(ids_local):
        return frozenset(ids[i - 1] for i in ids_local)

    global_state = MiningState(
        pos=to_global(state.pos),
        neg=to_global(state.neg),
        uncertain=to_global(state.uncertain),
        iteration=state.iteration,
    )
    global_records = [
        IterationRecord(
            r.iteration,
            tuple(sorted(ids[i - 1] for i in r.pos_admitted)),
            tuple(sorted(ids[i - 1] for i in r.neg_admitted)),
            r.pos_size,
            r.neg_size,
            r.uncertain_size,
        )
        for r in records
    ]
    return global_state, partition, global_records, params


def _merge_partitions(parts: list[ClusterPartition], sizes: list[int]) -> ClusterPartition:
    offset = 0
    labels = []
    centroids = []
    flags = []
    for part, size in zip(parts, sizes):
        labels.append(np.asarray(part.labels) + offset)
        centroids.append(np.asarray(part.centroids))
        flags.append(np.asarray(part.salient_flags))
        offset += part.k
    return ClusterPartition(
        k=offset,
        labels=np.concatenate(labels),
        centroids=np.concatenate(centroids, axis=0),
        salient_flags=np.concatenate(flags),
    )


def run_mining(
    manifest: SequenceManifest,
    features: np.ndarray,
    pms: Mapping[int, float],
    config: PipelineConfig,
) -> tuple[MiningState, ClusterPartition, MiningTrace]:
    """Full mining pass over a sequence.

    Sequences longer than 100 frames are split into consecutive chunks that
    are mined independently and merged (cluster indices offset per chunk).
    """
    proposals = manifest.proposals
    n = len(proposals)
    feats = np.asarray(features)
    if feats.shape[0] != n:
        raise ValueError(f"expected {n} feature vectors, got {feats.shape[0]}")
    missing = [p.id for p in proposals if p.id not in pms]
    if missing:
        raise ValueError(f"missing motion saliency for proposals {missing[:5]}")

    n_chunks = math.ceil(manifest.frame_count / MAX_CHUNK_FRAMES)
    chunk_results = []
    sizes = []
    for ci in range(n_chunks):
        lo_frame = ci * MAX_CHUNK_FRAMES
        hi_frame = min((ci + 1) * MAX_CHUNK_FRAMES, manifest.frame_count)
        ids = [p.id for p in proposals if lo_frame <= p.frame_index < hi_frame]
        if len(ids) < config.k:
            raise ValueError(
                f"chunk {ci} (frames {lo_frame}..{hi_frame - 1}) has {len(ids)} proposals, "
                f"fewer than k={config.k}"
            )
        idx = [pid - 1 for pid in ids]
        chunk_results.append(_mine_chunk(ids, feats[idx], pms, config, config.seed + ci))
        sizes.append(len(ids))

    if n_chunks == 1:
        state, partition, records, _ = chunk_results[0]
        return state, partition, MiningTrace(tuple(records))

    merged_partition = _merge_partitions([r[1] for r in chunk_results], sizes)
    pos = frozenset().union(*(r[0].pos for r in chunk_results))
    neg = frozenset().union(*(r[0].neg for r in chunk_results))
    uncertain = frozenset().union(*(r[0].uncertain for r in chunk_results))
    state = MiningState(pos, neg, uncertain, iteration=config.max_iterations)

    merged_records = []
    for it in range(config.max_iterations + 1):
        pos_adm: list[int] = []
        neg_adm: list[int] = []
        for _, _, records, _ in chunk_results:
            pos_adm.extend(records[it].pos_admitted)
            neg_adm.extend(records[it].neg_admitted)
        done = [r[2][it] for r in chunk_results]
        merged_records.append(
            IterationRecord(
                it,
                tuple(sorted(pos_adm)),
                tuple(sorted(neg_adm)),
                sum(r.pos_size for r in done),
                sum(r.neg_size for r in done),
                sum(r.uncertain_size for r in done),
            )
        )
    return state, merged_partition, MiningTrace(tuple(merged_records))


def emit_mining_matrix(
    trace: MiningTrace, trust_order: Sequence[int]
) -> list[np.ndarray]:
    """Render each iteration's admitted-Pos set as a 20x20 matrix.

    Proposals are laid out best-trusted first, the selected/not vector is
    nearest-neighbor resampled to 400 cells, and reshaped row-major. Averaging
    these across sequences gives selection-probability matrices.
    """
    order = list(trust_order)
    n = len(order)
    if n == 0 or len(set(order)) != n:
        raise ValueError("trust_order must be a non-empty permutation of proposal ids")
    position = {pid: i for i, pid in enumerate(order)}

    matrices = []
    src_index = (np.arange(MATRIX_CELLS) * n) // MATRIX_CELLS  # floor(j * n / 400)
    for record in trace.records:
        unknown = [pid for pid in record.pos_admitted if pid not in position]
        if unknown:
            raise ValueError(f"admitted ids missing from trust order: {unknown[:5]}")
        vec = np.zeros(n, dtype=np.float64)
        for pid in record.pos_admitted:
            vec[position[pid]] = 1.0
        matrices.append(vec[src_index].reshape(MATRIX_SIDE, MATRIX_SIDE))
    return matrices
