"""End-to-end training and inference, and the model bundle file.

Stages run in a fixed order, each fitted on training data only::

    bone normalization -> descriptors -> z-score + PCA -> codebook -> one HMM per label
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .descriptors import AngleTable, DescriptorKind, default_angle_table, extract, load_angle_table
from .detection import DetectionResult, compose_parallel, detect_sliding
from .hmm import Classification, DiscreteHmm, HmmConfig, classify, train_hmm
from .quantization import ApConfig, Codebook, fit_codebook
from .reduction import Normalizer, PcaModel, fit_normalizer, fit_pca
from .skeleton import (
    ActionSequence,
    BoneLengthProfile,
    SkeletonTopology,
    compute_average_bone_lengths,
    load_topology,
    normalize_bones,
)

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = "skelhmm-bundle"
BUNDLE_VERSION = 1


class StageError(ValueError):
    """A pipeline stage failed; the message starts with the stage name."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    descriptor: DescriptorKind = DescriptorKind()
    variance_fraction: float = 0.95
    ap: ApConfig = ApConfig()
    ap_max_rows: int = 4000
    hmm: HmmConfig = HmmConfig()
    window_width: int = 7
    exit_prob: float = 0.05
    per_window: bool = False
    topology: str = "kinect20"
    angle_table: str = "angles_kinect20"

    REQUIRED = ("seed", "descriptor")

    def __post_init__(self) -> None:
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError(f"seed must be a fixed integer, got {self.seed!r}")
        if not 0.0 < self.variance_fraction <= 1.0:
            raise ValueError("variance_fraction must lie in (0, 1]")
        if self.ap_max_rows < 1:
            raise ValueError("ap_max_rows must be positive")
        if self.window_width < 1:
            raise ValueError("window_width must be at least 1")
        if not 0.0 <= self.exit_prob < 1.0:
            raise ValueError("exit_prob must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "descriptor": self.descriptor.to_dict(),
            "variance_fraction": self.variance_fraction,
            "ap": self.ap.to_dict(),
            "ap_max_rows": self.ap_max_rows,
            "hmm": self.hmm.to_dict(),
            "window_width": self.window_width,
            "exit_prob": self.exit_prob,
            "per_window": self.per_window,
            "topology": self.topology,
            "angle_table": self.angle_table,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config key {unknown[0]!r}")
        for key in cls.REQUIRED:
            if key not in data:
                raise ValueError(f"missing config key {key!r}")
        kwargs = dict(data)
        nested = {"descriptor": DescriptorKind, "ap": ApConfig, "hmm": HmmConfig}
        for key, typ in nested.items():
            if key in kwargs:
                value = kwargs[key]
                if isinstance(value, str) and key == "descriptor":
                    value = {"family": value}
                sub_known = {f.name for f in fields(typ)}
                bad = sorted(set(value) - sub_known)
                if bad:
                    raise ValueError(f"unknown config key {key}.{bad[0]!r}")
                kwargs[key] = typ(**value)
        return cls(**kwargs)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class ModelBundle:
    config: PipelineConfig
    topology: SkeletonTopology
    angles: AngleTable
    profile: BoneLengthProfile
    normalizer: Normalizer
    pca: PcaModel
    codebook: Codebook
    hmms: tuple[DiscreteHmm, ...]
    format_version: int = BUNDLE_VERSION

    def __post_init__(self) -> None:
        if self.normalizer.dimension != self.pca.dimension:
            raise StageError("bundle: normalizer and PCA dimensions differ")
        if self.pca.retained != self.codebook.dimension:
            raise StageError("bundle: PCA output and codebook dimensions differ")
        for m in self.hmms:
            if m.n_symbols != self.codebook.size:
                raise StageError(f"bundle: HMM {m.label!r} alphabet differs from codebook size")

    @property
    def labels(self) -> list:
        return [m.label for m in self.hmms]

    def to_text(self) -> str:
        body = {
            "config": self.config.to_dict(),
            "topology": self.topology.to_dict(),
            "angles": self.angles.to_dict(),
            "bone_profile": self.profile.to_dict(),
            "normalizer": self.normalizer.to_dict(),
            "pca": self.pca.to_dict(),
            "codebook": self.codebook.to_dict(),
            "hmms": [m.to_dict() for m in self.hmms],
        }
        return f"{BUNDLE_MAGIC} {self.format_version}\n" + json.dumps(body, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ModelBundle":
        first, _, rest = text.partition("\n")
        magic, _, version = first.partition(" ")
        if magic != BUNDLE_MAGIC:
            raise ValueError("not a model bundle")
        if version.strip() != str(BUNDLE_VERSION):
            raise ValueError(f"unsupported bundle format version {version.strip()!r}")
        body = json.loads(rest)
        return cls(
            config=PipelineConfig.from_dict(body["config"]),
            topology=SkeletonTopology.from_dict(body["topology"]),
            angles=AngleTable.from_dict(body["angles"]),
            profile=BoneLengthProfile.from_dict(body["bone_profile"]),
            normalizer=Normalizer.from_dict(body["normalizer"]),
            pca=PcaModel.from_dict(body["pca"]),
            codebook=Codebook.from_dict(body["codebook"]),
            hmms=tuple(DiscreteHmm.from_dict(m) for m in body["hmms"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        return cls.from_text(Path(path).read_text())


@dataclass
class TrainingLog:
    """Per-label Baum-Welch log-likelihood histories, one list per restart."""

    codebook_size: int = 0
    ap_iterations: int = 0
    ap_converged: bool = True
    pca_retained: int = 0
    hmm_histories: dict = field(default_factory=dict)
    chosen_restart: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "codebook_size": self.codebook_size,
            "ap_iterations": self.ap_iterations,
            "ap_converged": self.ap_converged,
            "pca_retained": self.pca_retained,
            "hmm": [
                {"label": label, "chosen_restart": self.chosen_restart[label], "restarts": hist}
                for label, hist in self.hmm_histories.items()
            ],
        }


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (ValueError, KeyError)) and not isinstance(exc, StageError):
            raise StageError(f"{self.name}: {exc}") from exc
        return False


def _resolve_angles(cfg: PipelineConfig) -> AngleTable:
    return default_angle_table() if cfg.angle_table == "angles_kinect20" else load_angle_table(cfg.angle_table)


def _features(seq: ActionSequence, profile: BoneLengthProfile, kind: DescriptorKind, angles: AngleTable):
    return extract(normalize_bones(seq, profile), kind, angles).vectors


def fit(
    train_seqs: Sequence[ActionSequence],
    cfg: PipelineConfig,
    require_multiple_labels: bool = True,
) -> tuple[ModelBundle, TrainingLog]:
    """Fit every stage on ``train_seqs``; returns the bundle and a training log."""
    train_seqs = list(train_seqs)
    log = TrainingLog()
    with _stage("input"):
        if not train_seqs:
            raise ValueError("no training sequences")
        if any(s.label is None for s in train_seqs):
            raise ValueError("every training sequence needs a label")
        labels = sorted({s.label for s in train_seqs}, key=lambda l: (str(type(l)), l))
        if require_multiple_labels and len(labels) < 2:
            raise ValueError(f"recognition needs at least 2 labels, got {labels}")
        for label in labels:
            if not any(s.label == label and s.n_frames > 0 for s in train_seqs):
                raise ValueError(f"label {label!r} has no usable sequence")
        empty = [i for i, s in enumerate(train_seqs) if s.n_frames == 0]
        if empty:
            raise ValueError(f"training sequences {empty} have no frames")
        topology = train_seqs[0].topology

    with _stage("bone normalization"):
        profile = compute_average_bone_lengths(train_seqs)
    with _stage("feature extraction"):
        angles = _resolve_angles(cfg)
        feats = [_features(s, profile, cfg.descriptor, angles) for s in train_seqs]
    with _stage("dimension reduction"):
        stacked = np.concatenate(feats)
        normalizer = fit_normalizer(stacked)
        pca = fit_pca(normalizer.apply(stacked), cfg.variance_fraction)
        reduced = [pca.project(normalizer.apply(f)) for f in feats]
        log.pca_retained = pca.retained
    with _stage("vector quantization"):
        rows = np.concatenate(reduced)
        if rows.shape[0] > cfg.ap_max_rows:
            pick = np.random.default_rng([cfg.seed, 0]).choice(rows.shape[0], cfg.ap_max_rows, replace=False)
            rows = rows[np.sort(pick)]
        ap = fit_codebook(rows, cfg.ap)
        codebook = ap.codebook
        log.codebook_size, log.ap_iterations, log.ap_converged = codebook.size, ap.iterations, ap.converged
        symbols = [codebook.assign(r) for r in reduced]
    with _stage("hmm training"):
        hmms = []
        for k, label in enumerate(labels):
            data = [sym for sym, s in zip(symbols, train_seqs) if s.label == label]
            model, trace = train_hmm(data, codebook.size, cfg.hmm, seed=cfg.seed * 1000 + k, label=label)
            hmms.append(model)
            log.hmm_histories[label] = trace.histories
            log.chosen_restart[label] = trace.chosen

    bundle = ModelBundle(cfg, topology, angles, profile, normalizer, pca, codebook, tuple(hmms))
    return bundle, log


def train(train_seqs: Sequence[ActionSequence], cfg: PipelineConfig, require_multiple_labels: bool = True) -> ModelBundle:
    return fit(train_seqs, cfg, require_multiple_labels)[0]


def symbols(bundle: ModelBundle, seq: ActionSequence) -> np.ndarray:
    """Codebook symbol per frame of ``seq``."""
    if seq.topology != bundle.topology:
        raise StageError(
            f"input: sequence topology {seq.topology.name!r} does not match bundle topology {bundle.topology.name!r}"
        )
    if seq.n_frames == 0:
        raise StageError("input: sequence has no frames")
    with _stage("feature extraction"):
        feats = _features(seq, bundle.profile, bundle.config.descriptor, bundle.angles)
    reduced = bundle.pca.project(bundle.normalizer.apply(feats))
    return bundle.codebook.assign(reduced)


def recognize(bundle: ModelBundle, seq: ActionSequence) -> Classification:
    return classify(bundle.hmms, symbols(bundle, seq))


def detect(bundle: ModelBundle, stream: ActionSequence) -> DetectionResult:
    cfg = bundle.config
    obs = symbols(bundle, stream)
    with _stage("detection"):
        composite = compose_parallel(bundle.hmms, cfg.exit_prob)
        return detect_sliding(composite, obs, cfg.window_width, per_window=cfg.per_window)


def with_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    """Copy of ``cfg`` with non-``None`` overrides applied."""
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
