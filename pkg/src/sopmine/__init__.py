"""Long-term iterative salient-object-proposal mining for video saliency.

The pipeline treats a video as one flat pool of detector proposals: cluster
them by appearance, use motion saliency to pick the salient clusters, distill
trustworthy positive/negative training sets from dual rankings with dynamic
cutoffs, and iteratively grow those sets with a small classifier in the loop.
Deep networks (detector, optical flow, refiners) are file-based providers;
a synthetic-scene generator makes every stage verifiable at desk scale.
"""

from .classifier import (
    bce_loss,
    forward,
    forward_batch,
    gradient_check,
    init_classifier,
    load_params,
    save_params,
    train,
)
from .cluster import cluster_profile, kmeans, proposal_similarity
from .ingest import (
    FrameRecord,
    SequenceManifest,
    crop,
    load_features,
    load_manifest,
    load_saliency_map,
    load_sequence_features,
    provider_bundle,
    save_features,
    save_manifest,
    save_saliency_map,
)
from .metrics import evaluate_directories, mae, max_f_measure, precision_recall, s_measure
from .miner import (
    ClusterRanking,
    MiningTrace,
    build_training_sets,
    dynamic_cutoff,
    emit_mining_matrix,
    mining_iteration,
    rank_cluster,
    run_mining,
    validate_state,
)
from .model import (
    BoundingBox,
    ClassifierParams,
    ClusterPartition,
    MiningState,
    ObjectProposal,
    PipelineConfig,
    ProviderBundle,
    SaliencyMap,
)
from .motion import (
    cluster_mean_saliency,
    compute_sequence_pms,
    proposal_motion_saliency,
    select_salient_clusters,
)
from .refine import (
    compute_frame_saliency,
    export_finetune_set,
    load_finetune_manifest,
    normalize_minmax,
    paste_frame_saliency,
    select_keyframes,
    spatiotemporal_consistency,
)
from .synth import SceneSpec, generate_sequence, load_gt_masks, oracle_label, oracle_trust_order

__version__ = "0.1.0"
