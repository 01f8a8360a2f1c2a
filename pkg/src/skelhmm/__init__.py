"""Skeleton-based action recognition and detection with discrete HMMs.

Joint-position sequences are bone-normalized, turned into per-frame
descriptors, reduced with z-score + PCA, quantized against an affinity
propagation codebook, and scored by one discrete HMM per action.
"""
from .dataset_io import (
    DatasetManifest,
    LoaderLayout,
    ManifestEntry,
    SplitSpec,
    concatenate,
    load_canonical,
    load_joint_text,
    load_layout,
    make_split,
    save_canonical,
)
from .descriptors import AngleTable, DescriptorKind, DescriptorSequence, Family, extract
from .detection import BACKGROUND, DetectionResult, compose_parallel, detect_sliding, score_detection
from .hmm import DiscreteHmm, HmmConfig, baum_welch, classify, forward_log_likelihood, train_hmm, viterbi
from .pipeline import ModelBundle, PipelineConfig, StageError, detect, fit, recognize, train
from .quantization import ApConfig, Codebook, affinity_propagation, fit_codebook
from .reduction import Normalizer, PcaModel, fit_normalizer, fit_pca
from .skeleton import (
    ActionSequence,
    BoneLengthProfile,
    SkeletonTopology,
    compute_average_bone_lengths,
    default_topology,
    normalize_bones,
)

__version__ = "0.1.0"
