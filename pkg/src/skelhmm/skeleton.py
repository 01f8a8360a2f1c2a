"""Skeleton data model and actor-invariant bone-length normalization."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import yaml

logger = logging.getLogger(__name__)

_DEGENERATE_LENGTH = 1e-12


def _canonical_joint(name: str) -> str:
    return name.strip().lower().replace(" ", "_").replace("-", "_")


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint names, root joint and the parent->child bones forming a tree.

    Attributes:
        joint_names: ordered joint identifiers; this is the coordinate order
            used by every frame of a sequence.
        root: the tree root. ``None`` picks ``hip_center`` when present,
            otherwise the first joint.
        bones: ``(parent, child)`` pairs.
        name: identifier referenced by canonical files and model bundles.
    """

    joint_names: tuple[str, ...]
    bones: tuple[tuple[str, str], ...]
    root: str | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        names = tuple(self.joint_names)
        bones = tuple((str(p), str(c)) for p, c in self.bones)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "bones", bones)
        if not names:
            raise ValueError("topology has no joints")
        if len(set(names)) != len(names):
            raise ValueError("duplicate joint names in topology")
        root = self.root
        if root is None:
            canon = [_canonical_joint(n) for n in names]
            root = names[canon.index("hip_center")] if "hip_center" in canon else names[0]
            object.__setattr__(self, "root", root)
        if root not in names:
            raise ValueError(f"root joint {root!r} is not a topology joint")

        known = set(names)
        parent_of: dict[str, str] = {}
        for parent, child in bones:
            for joint in (parent, child):
                if joint not in known:
                    raise ValueError(f"bone ({parent}, {child}) names unknown joint {joint!r}")
            if child == root:
                raise ValueError(f"root joint {root!r} cannot be a bone child")
            if child in parent_of:
                raise ValueError(f"joint {child!r} has more than one parent")
            parent_of[child] = parent

        # Reachability from the root rules out cycles and disconnected parts.
        order = self._bfs(root, bones)
        if len(order) != len(names):
            missing = sorted(known - set(order))
            raise ValueError(f"bones do not form a tree rooted at {root!r}; unreachable: {missing}")

    @staticmethod
    def _bfs(root: str, bones: Sequence[tuple[str, str]]) -> list[str]:
        children: dict[str, list[str]] = {}
        for parent, child in bones:
            children.setdefault(parent, []).append(child)
        order, queue, seen = [], deque([root]), {root}
        while queue:
            joint = queue.popleft()
            order.append(joint)
            for child in children.get(joint, []):
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        return order

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def index(self, joint: str) -> int:
        try:
            return self.joint_names.index(joint)
        except ValueError:
            raise KeyError(f"unknown joint {joint!r}") from None

    def traversal_bones(self) -> list[tuple[str, str]]:
        """Bones in breadth-first order from the root (parents before children)."""
        depth = {j: i for i, j in enumerate(self._bfs(self.root, self.bones))}
        return sorted(self.bones, key=lambda b: (depth[b[1]], self.bones.index(b)))

    def bone_index_pairs(self) -> np.ndarray:
        """``(n_bones, 2)`` parent/child joint indices in declaration order."""
        return np.array([[self.index(p), self.index(c)] for p, c in self.bones], dtype=int).reshape(-1, 2)

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonTopology":
        for key in ("joints", "bones"):
            if key not in data:
                raise ValueError(f"topology config is missing key {key!r}")
        return cls(
            joint_names=tuple(data["joints"]),
            bones=tuple(tuple(b) for b in data["bones"]),
            root=data.get("root"),
            name=data.get("name", "custom"),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "root": self.root,
            "joints": list(self.joint_names),
            "bones": [list(b) for b in self.bones],
        }


def load_topology(source: str | Path) -> SkeletonTopology:
    """Load a topology from a YAML file path or the name of a bundled topology."""
    path = Path(source)
    if path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    else:
        try:
            text = resources.files("skelhmm.data").joinpath(f"{source}.yaml").read_text()
        except FileNotFoundError:
            raise ValueError(f"no topology file or bundled topology named {source!r}") from None
    return SkeletonTopology.from_dict(yaml.safe_load(text))


def default_topology() -> SkeletonTopology:
    return load_topology("kinect20")


class Frame(NamedTuple):
    positions: np.ndarray
    timestamp_index: int


@dataclass(frozen=True, eq=False)
class ActionSequence:
    """Frames of 3D joint positions for one actor.

    ``positions`` has shape ``(n_frames, n_joints, 3)``; joints follow
    ``topology.joint_names``. ``frame_labels`` carries optional per-frame
    ground truth (used for unsegmented streams).
    """

    topology: SkeletonTopology
    positions: np.ndarray
    label: int | None = None
    subject: int | None = None
    instance: int | None = None
    timestamps: np.ndarray | None = None
    frame_labels: tuple | None = None

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"positions must have shape (frames, joints, 3), got {pos.shape}")
        if pos.shape[1] != self.topology.joint_count:
            raise ValueError(
                f"frames have {pos.shape[1]} joints, topology {self.topology.name!r} "
                f"has {self.topology.joint_count}"
            )
        if not np.all(np.isfinite(pos)):
            bad = int(np.argwhere(~np.isfinite(pos))[0, 0])
            raise ValueError(f"non-finite coordinate in frame {bad}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

        if self.timestamps is None:
            ts = np.arange(pos.shape[0])
        else:
            ts = np.array(self.timestamps, dtype=np.int64)
            if ts.shape != (pos.shape[0],):
                raise ValueError("timestamps must have one entry per frame")
            if ts.size and (ts[0] < 0 or np.any(np.diff(ts) <= 0)):
                raise ValueError("timestamps must be nonnegative and strictly increasing")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)

        if self.frame_labels is not None:
            labels = tuple(self.frame_labels)
            if len(labels) != pos.shape[0]:
                raise ValueError("frame_labels must have one entry per frame")
            object.__setattr__(self, "frame_labels", labels)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n_frames

    @property
    def frames(self) -> list[Frame]:
        return [Frame(p, int(t)) for p, t in zip(self.positions, self.timestamps)]

    def with_positions(self, positions: np.ndarray) -> "ActionSequence":
        return ActionSequence(
            self.topology, positions, self.label, self.subject, self.instance,
            self.timestamps, self.frame_labels,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ActionSequence):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.label == other.label
            and self.subject == other.subject
            and self.instance == other.instance
            and self.frame_labels == other.frame_labels
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.positions, other.positions)
        )


@dataclass(frozen=True)
class BoneLengthProfile:
    """Target length per bone, aligned with ``bones``."""

    bones: tuple[tuple[str, str], ...]
    lengths: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        bones = tuple((str(p), str(c)) for p, c in self.bones)
        lengths = np.array(self.lengths, dtype=float).reshape(-1)
        if lengths.shape[0] != len(bones):
            raise ValueError("one length per bone required")
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
            raise ValueError("bone lengths must be strictly positive and finite")
        lengths.setflags(write=False)
        object.__setattr__(self, "bones", bones)
        object.__setattr__(self, "lengths", lengths)

    def length(self, bone: tuple[str, str]) -> float:
        try:
            return float(self.lengths[self.bones.index(tuple(bone))])
        except ValueError:
            raise KeyError(f"profile has no bone {bone}") from None

    def to_dict(self) -> dict:
        return {"bones": [list(b) for b in self.bones], "lengths": self.lengths.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "BoneLengthProfile":
        return cls(tuple(tuple(b) for b in data["bones"]), data["lengths"])


def _bone_vectors(positions: np.ndarray, topology: SkeletonTopology) -> np.ndarray:
    pairs = topology.bone_index_pairs()
    return positions[:, pairs[:, 1]] - positions[:, pairs[:, 0]]


def compute_average_bone_lengths(training: Iterable[ActionSequence]) -> BoneLengthProfile:
    """Mean Euclidean length of every bone over all frames of ``training``.

    Frames where a bone has zero length are left out of that bone's mean and
    logged; a bone that is degenerate in every frame is an error.
    """
    training = list(training)
    if not training:
        raise ValueError("empty training set")
    topology = training[0].topology
    for seq in training[1:]:
        if seq.topology != topology:
            raise ValueError(f"topology mismatch: {seq.topology.name!r} vs {topology.name!r}")
    positions = [seq.positions for seq in training if seq.n_frames]
    if not positions:
        raise ValueError("training set contains no frames")

    lengths = np.linalg.norm(_bone_vectors(np.concatenate(positions), topology), axis=2)
    valid = lengths >= _DEGENERATE_LENGTH
    skipped = np.count_nonzero(~valid, axis=0)
    for b in np.flatnonzero(skipped):
        if skipped[b] == lengths.shape[0]:
            raise ValueError(f"bone {topology.bones[b]} has zero length in every training frame")
        logger.warning("skipped %d degenerate frames for bone %s", skipped[b], topology.bones[b])
    # fsum is exactly rounded, so the mean does not depend on sequence order.
    means = np.array([
        math.fsum(lengths[valid[:, b], b].tolist()) / valid[:, b].sum()
        for b in range(lengths.shape[1])
    ])
    return BoneLengthProfile(topology.bones, means)


def normalize_bones(seq: ActionSequence, profile: BoneLengthProfile) -> ActionSequence:
    """Rescale every bone to its profile length, keeping bone directions.

    Joints are rebuilt parent-before-child from the root, so each child moves
    along its original bone direction and carries its subtree with it.
    """
    topology = seq.topology
    targets = {}
    for bone in topology.bones:
        if bone not in profile.bones:
            raise ValueError(f"profile does not cover bone {bone}")
        targets[bone] = profile.length(bone)

    src = seq.positions
    out = np.empty_like(src)
    root = topology.index(topology.root)
    out[:, root] = src[:, root]
    for parent, child in topology.traversal_bones():
        p, c = topology.index(parent), topology.index(child)
        vec = src[:, c] - src[:, p]
        norm = np.linalg.norm(vec, axis=1)
        if np.any(norm < _DEGENERATE_LENGTH):
            frame = int(np.flatnonzero(norm < _DEGENERATE_LENGTH)[0])
            raise ValueError(f"zero-length bone ({parent}, {child}) in frame {frame}")
        out[:, c] = out[:, p] + vec * (targets[(parent, child)] / norm)[:, None]
    return seq.with_positions(out)
