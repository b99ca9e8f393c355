"""Core value types shared by every pipeline stage.

All types here are immutable: numpy payloads are copied on construction and
marked read-only, so instances can be shared freely between concurrent tasks.
Feature vectors are plain float32 ndarrays; ``as_feature_matrix`` is the
validation chokepoint for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

# Feature vectors are 1-D float32 ndarrays rather than a wrapper class.
FeatureVector = np.ndarray

DEFAULT_FEATURE_DIM = 512
MAX_PROPOSALS_PER_FRAME = 10
MAX_CHUNK_FRAMES = 100


def _freeze(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, half-open on x1/y1 (area = (x1-x0)*(y1-y0))."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"box coordinate {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"box origin must be non-negative: {self}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError(f"box must have positive extent: {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def within(self, frame_width: int, frame_height: int) -> bool:
        return self.x1 <= frame_width and self.y1 <= frame_height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class ObjectProposal:
    """One detector box on one frame; ids are global and 1-based."""

    id: int
    frame_index: int
    box: BoundingBox
    objectness: float

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"proposal id must be >= 1, got {self.id}")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must be in [0,1], got {self.objectness}")


@dataclass(frozen=True)
class SaliencyMap:
    """Dense grayscale map over a frame or patch, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError(f"saliency map must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("saliency map contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("saliency map values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def as_feature_matrix(features: Iterable[np.ndarray] | np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Stack feature vectors into an (n, d) float32 matrix, validating finiteness
    and a shared dimension (``dim`` pins it when given)."""
    mat = np.asarray(features, dtype=np.float32)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2:
        raise ValueError(f"features must form a 2-D matrix, got ndim={mat.ndim}")
    if dim is not None and mat.shape[1] != dim:
        raise ValueError(f"feature dimension mismatch: expected {dim}, got {mat.shape[1]}")
    if not np.isfinite(mat).all():
        raise ValueError("features contain non-finite values")
    return mat


@dataclass(frozen=True)
class ClusterPartition:
    """Assignment of proposals (ids 1..n) to k clusters plus centroids.

    ``labels[i]`` is the cluster of proposal id ``i+1``. ``salient_flags``
    starts all-False; coarse localization replaces it via ``with_salient``.
    ``inertia_history`` records the within-cluster sum of squares after each
    Lloyd sweep (diagnostic, not part of equality semantics).
    """

    k: int
    labels: np.ndarray
    centroids: np.ndarray
    salient_flags: np.ndarray
    inertia_history: tuple[float, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        centroids = np.asarray(self.centroids, dtype=np.float64)
        flags = np.asarray(self.salient_flags, dtype=bool)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D array")
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValueError("cluster labels out of range")
        if centroids.shape[0] != self.k:
            raise ValueError(f"expected {self.k} centroids, got {centroids.shape[0]}")
        if flags.shape != (self.k,):
            raise ValueError("salient_flags must have one entry per cluster")
        counts = np.bincount(labels, minlength=self.k)
        if (counts == 0).any():
            empty = int(np.flatnonzero(counts == 0)[0])
            raise ValueError(f"cluster {empty} is empty")
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "centroids", _freeze(centroids))
        object.__setattr__(self, "salient_flags", _freeze(flags))

    @property
    def n_points(self) -> int:
        return int(self.labels.size)

    def cluster_of(self, proposal_id: int) -> int:
        if not 1 <= proposal_id <= self.n_points:
            raise ValueError(f"unknown proposal id {proposal_id}")
        return int(self.labels[proposal_id - 1])

    def members(self, cluster_index: int) -> tuple[int, ...]:
        """Proposal ids in a cluster, ascending."""
        if not 0 <= cluster_index < self.k:
            raise ValueError(f"unknown cluster {cluster_index}")
        return tuple(int(i) + 1 for i in np.flatnonzero(self.labels == cluster_index))

    def salient_clusters(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.flatnonzero(self.salient_flags))

    def with_salient(self, salient_ids: Sequence[int]) -> "ClusterPartition":
        flags = np.zeros(self.k, dtype=bool)
        for c in salient_ids:
            if not 0 <= c < self.k:
                raise ValueError(f"unknown cluster {c}")
            flags[c] = True
        return ClusterPartition(self.k, self.labels, self.centroids, flags, self.inertia_history)


@dataclass(frozen=True)
class MiningState:
    """Pos/Neg/uncertain partition of proposal ids at one mining iteration."""

    pos: frozenset[int]
    neg: frozenset[int]
    uncertain: frozenset[int]
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pos", frozenset(self.pos))
        object.__setattr__(self, "neg", frozenset(self.neg))
        object.__setattr__(self, "uncertain", frozenset(self.uncertain))
        if self.pos & self.neg:
            raise ValueError("pos and neg sets overlap")
        if self.iteration < 0:
            raise ValueError("iteration must be >= 0")

    @property
    def all_ids(self) -> frozenset[int]:
        return self.pos | self.neg | self.uncertain


@dataclass(frozen=True)
class ClassifierParams:
    """Weights/biases of the fully connected binary classifier.

    ``weights[l]`` has shape (in_dim, out_dim); the last layer has out_dim 1.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    rng_seed: int

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(weights) == 0 or len(weights) != len(biases):
            raise ValueError("weights and biases must be non-empty and parallel")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape} / {b.shape}")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input dim {w.shape[0]} does not chain")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} has non-finite parameters")
        if weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")
        object.__setattr__(self, "weights", tuple(_freeze(w) for w in weights))
        object.__setattr__(self, "biases", tuple(_freeze(b) for b in biases))

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)


@dataclass(frozen=True)
class PipelineConfig:
    """Mining hyperparameters; defaults follow the method's reported choices."""

    k: int = 8
    b: int = 5
    gamma_pct: float = 60.0
    xi_frac: float = 0.6
    max_iterations: int = 3
    classifier_epochs: int = 20
    classifier_hidden: tuple[int, ...] = (256, 64)
    learning_rate: float = 1e-3
    seed: int = 0
    classifier_retrain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "classifier_hidden", tuple(int(h) for h in self.classifier_hidden))
        if self.k < 4:
            raise ValueError(f"k must be >= 4, got {self.k}")
        if self.b < 1:
            raise ValueError(f"b must be >= 1, got {self.b}")
        if not 0.0 < self.gamma_pct <= 100.0:
            raise ValueError(f"gamma_pct must be in (0, 100], got {self.gamma_pct}")
        if not 0.0 < self.xi_frac < 1.0:
            raise ValueError(f"xi_frac must be in (0, 1), got {self.xi_frac}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.classifier_epochs < 1:
            raise ValueError("classifier_epochs must be >= 1")
        if any(h < 1 for h in self.classifier_hidden):
            raise ValueError("hidden layer widths must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "b": self.b,
            "gamma_pct": self.gamma_pct,
            "xi_frac": self.xi_frac,
            "max_iterations": self.max_iterations,
            "classifier_epochs": self.classifier_epochs,
            "classifier_hidden": list(self.classifier_hidden),
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "classifier_retrain": self.classifier_retrain,
        }

    def replace(self, **overrides) -> "PipelineConfig":
        data = self.to_dict()
        data["classifier_hidden"] = tuple(data["classifier_hidden"])
        data.update(overrides)
        return PipelineConfig(**data)


@dataclass(frozen=True)
class ProviderBundle:
    """Resolved per-frame provider inputs: motion maps, features, and either
    per-proposal patch-map paths or the motion-crop stub rule (``None``)."""

    motion_map_paths: tuple[str, ...]
    feature_paths: tuple[str, ...]
    patch_map_paths: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self):
        if len(self.motion_map_paths) != len(self.feature_paths):
            raise ValueError("motion map and feature path lists must be parallel")
        if self.patch_map_paths is not None and len(self.patch_map_paths) != len(self.motion_map_paths):
            raise ValueError("patch map paths must cover every frame")

    @property
    def uses_patch_stub(self) -> bool:
        return self.patch_map_paths is None
