"""Reading skeleton files, the canonical interchange format, manifests and splits."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .skeleton import ActionSequence, SkeletonTopology, load_topology

logger = logging.getLogger(__name__)

CANONICAL_MAGIC = "skelhmm-canonical"
CANONICAL_VERSION = 1

_MSR_NAME = re.compile(r"^a(\d+)_s(\d+)_e(\d+)")


@dataclass(frozen=True)
class LoaderLayout:
    """How joint coordinates sit in a whitespace-separated text file.

    A frame spans ``rows_per_frame`` rows of ``values_per_row`` columns, and
    each row packs ``joints_per_row`` joints. The first joint of a row has its
    coordinates at ``x_column``/``y_column``/``z_column``; each further joint
    is ``joint_stride`` columns to the right.
    """

    rows_per_frame: int
    values_per_row: int
    joints_per_row: int = 1
    x_column: int = 0
    y_column: int = 1
    z_column: int = 2
    joint_stride: int = 3
    header_lines: int = 0
    topology: str = "kinect20"
    name: str = "custom"

    def __post_init__(self) -> None:
        if min(self.rows_per_frame, self.values_per_row, self.joints_per_row) < 1:
            raise ValueError("rows_per_frame, values_per_row and joints_per_row must be positive")
        last = max(self.x_column, self.y_column, self.z_column) + (self.joints_per_row - 1) * self.joint_stride
        if min(self.x_column, self.y_column, self.z_column) < 0 or last >= self.values_per_row:
            raise ValueError(f"layout {self.name!r}: coordinate columns exceed values_per_row")

    @property
    def joints_per_frame(self) -> int:
        return self.rows_per_frame * self.joints_per_row

    @classmethod
    def from_dict(cls, data: dict) -> "LoaderLayout":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown layout keys: {sorted(unknown)}")
        return cls(**data)


def load_layout(source: str | Path) -> LoaderLayout:
    """Layout from a YAML path or a bundled preset name (``msr_action3d``, ``utkinect``)."""
    path = Path(source)
    if path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    else:
        try:
            text = resources.files("skelhmm.data").joinpath("layouts").joinpath(f"{source}.yaml").read_text()
        except FileNotFoundError:
            raise ValueError(f"no layout file or preset named {source!r}") from None
    return LoaderLayout.from_dict(yaml.safe_load(text))


def load_joint_text(
    path: str | Path,
    layout: LoaderLayout,
    topology: SkeletonTopology | None = None,
    **meta,
) -> ActionSequence:
    """Parse a raw skeleton text file; frames are kept in file order.

    Extra keyword arguments (``label``, ``subject``, ``instance``) are stored
    on the returned sequence.
    """
    path = Path(path)
    topology = topology or load_topology(layout.topology)
    if layout.joints_per_frame != topology.joint_count:
        raise ValueError(
            f"layout {layout.name!r} yields {layout.joints_per_frame} joints per frame, "
            f"topology {topology.name!r} has {topology.joint_count}"
        )
    lines = path.read_text().splitlines()
    rows = []
    for lineno, line in enumerate(lines[layout.header_lines:], start=layout.header_lines + 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != layout.values_per_row:
            raise ValueError(f"{path}:{lineno}: expected {layout.values_per_row} values, found {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len(rows) % layout.rows_per_frame:
        raise ValueError(
            f"{path}: {len(rows)} data rows is not a whole number of frames "
            f"({layout.rows_per_frame} rows per frame)"
        )
    table = np.array(rows).reshape(-1, layout.rows_per_frame, layout.values_per_row)
    offsets = np.arange(layout.joints_per_row) * layout.joint_stride
    cols = np.stack([layout.x_column + offsets, layout.y_column + offsets, layout.z_column + offsets], axis=1)
    positions = table[:, :, cols].reshape(table.shape[0], -1, 3)
    return ActionSequence(topology, positions, **meta)


def save_joint_text(seq: ActionSequence, path: str | Path, layout: LoaderLayout) -> None:
    """Write ``seq`` in ``layout``; non-coordinate columns are filled with 1."""
    if layout.joints_per_frame != seq.topology.joint_count:
        raise ValueError(f"layout {layout.name!r} does not fit topology {seq.topology.name!r}")
    table = np.ones((seq.n_frames, layout.rows_per_frame, layout.values_per_row))
    offsets = np.arange(layout.joints_per_row) * layout.joint_stride
    pos = seq.positions.reshape(seq.n_frames, layout.rows_per_frame, layout.joints_per_row, 3)
    for axis, col in enumerate((layout.x_column, layout.y_column, layout.z_column)):
        table[:, :, col + offsets] = pos[..., axis]
    lines = ["header"] * layout.header_lines
    lines += [" ".join(repr(float(v)) for v in row) for row in table.reshape(-1, layout.values_per_row)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_msr_filename(name: str) -> tuple[int, int, int]:
    """``"a02_s03_e02_skeleton3D.txt"`` -> ``(2, 3, 2)`` (action, subject, instance)."""
    match = _MSR_NAME.match(Path(name).name)
    if not match:
        raise ValueError(f"{name!r} does not follow the aNN_sNN_eNN naming scheme")
    return tuple(int(g) for g in match.groups())


def msr_exclusions() -> frozenset[str]:
    """Names of the MSR-Action3D files known to be corrupted."""
    text = resources.files("skelhmm.data").joinpath("msr_action3d_exclusions.txt").read_text()
    return frozenset(l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#"))


def _label_token(value) -> str:
    token = str(value)
    if not token or any(c.isspace() for c in token):
        raise ValueError(f"label {value!r} cannot be written to a canonical file")
    return token


def _parse_label(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def canonical_text(seq: ActionSequence) -> str:
    header = [
        f"{CANONICAL_MAGIC} {CANONICAL_VERSION}",
        f"topology {seq.topology.name}",
        f"joint_count {seq.topology.joint_count}",
        f"frame_count {seq.n_frames}",
    ]
    for key in ("label", "subject", "instance"):
        value = getattr(seq, key)
        if value is not None:
            header.append(f"{key} {_label_token(value)}")
    if not np.array_equal(seq.timestamps, np.arange(seq.n_frames)):
        header.append("timestamps " + " ".join(str(int(t)) for t in seq.timestamps))
    if seq.frame_labels is not None:
        header.append("frame_labels " + " ".join(_label_token(l) for l in seq.frame_labels))
    header.append("end_header")
    # repr() is the shortest decimal that parses back to the same double.
    body = [" ".join(repr(float(v)) for v in frame.reshape(-1)) for frame in seq.positions]
    return "\n".join(header + body) + "\n"


def save_canonical(seq: ActionSequence, path: str | Path) -> None:
    Path(path).write_text(canonical_text(seq))


def load_canonical(path: str | Path, topology: SkeletonTopology | None = None) -> ActionSequence:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].split()[:1] != [CANONICAL_MAGIC]:
        raise ValueError(f"{path}: not a canonical skeleton file")
    version = int(lines[0].split()[1])
    if version != CANONICAL_VERSION:
        raise ValueError(f"{path}: unsupported canonical format version {version}")
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i] != "end_header":
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    if i == len(lines):
        raise ValueError(f"{path}: missing end_header")
    for key in ("topology", "joint_count", "frame_count"):
        if key not in header:
            raise ValueError(f"{path}: header is missing {key!r}")
    if topology is None:
        topology = load_topology(header["topology"])
    elif topology.name != header["topology"]:
        raise ValueError(f"{path}: file topology {header['topology']!r} does not match {topology.name!r}")
    joints, frames = int(header["joint_count"]), int(header["frame_count"])
    if joints != topology.joint_count:
        raise ValueError(f"{path}: {joints} joints but topology {topology.name!r} has {topology.joint_count}")
    body = [l for l in lines[i + 1:] if l.strip()]
    if len(body) != frames:
        raise ValueError(f"{path}: header declares {frames} frames, found {len(body)}")
    for k, line in enumerate(body):
        if len(line.split()) != 3 * joints:
            raise ValueError(f"{path}: frame {k} has {len(line.split())} values, expected {3 * joints}")
    positions = np.array([[float(v) for v in l.split()] for l in body]).reshape(frames, joints, 3)
    meta = {k: _parse_label(header[k]) for k in ("label", "subject", "instance") if k in header}
    timestamps = [int(t) for t in header["timestamps"].split()] if "timestamps" in header else None
    frame_labels = (
        tuple(_parse_label(t) for t in header["frame_labels"].split()) if "frame_labels" in header else None
    )
    return ActionSequence(topology, positions, timestamps=timestamps, frame_labels=frame_labels, **meta)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    subject: int
    instance: int

    def __post_init__(self) -> None:
        for key in ("label", "subject", "instance"):
            if int(getattr(self, key)) < 0:
                raise ValueError(f"{key} must be nonnegative in {self.path}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    topology_ref: str = "kinect20"
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def load(self, entry: ManifestEntry, topology: SkeletonTopology | None = None) -> ActionSequence:
        seq = load_canonical(self.resolve(entry), topology)
        if (seq.label, seq.subject, seq.instance) != (entry.label, entry.subject, entry.instance):
            seq = ActionSequence(
                seq.topology, seq.positions, entry.label, entry.subject, entry.instance,
                seq.timestamps, seq.frame_labels,
            )
        return seq

    def to_json(self) -> str:
        data = {
            "topology": self.topology_ref,
            "entries": [
                {"path": e.path, "label": e.label, "subject": e.subject, "instance": e.instance}
                for e in self.entries
            ],
        }
        return json.dumps(data, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load_file(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        entries = [ManifestEntry(e["path"], e["label"], e["subject"], e["instance"]) for e in data["entries"]]
        return cls(entries, data.get("topology", "kinect20"), root=path.parent)


@dataclass(frozen=True)
class SplitSpec:
    train_subjects: frozenset[int]
    test_subjects: frozenset[int]

    def __post_init__(self) -> None:
        train, test = frozenset(self.train_subjects), frozenset(self.test_subjects)
        if not train or not test:
            raise ValueError("train and test subject sets must both be non-empty")
        if train & test:
            raise ValueError(f"subjects in both train and test: {sorted(train & test)}")
        object.__setattr__(self, "train_subjects", train)
        object.__setattr__(self, "test_subjects", test)

    @classmethod
    def from_dict(cls, data: dict) -> "SplitSpec":
        for key in ("train_subjects", "test_subjects"):
            if key not in data:
                raise ValueError(f"split is missing key {key!r}")
        return cls(frozenset(data["train_subjects"]), frozenset(data["test_subjects"]))

    def to_dict(self) -> dict:
        return {"train_subjects": sorted(self.train_subjects), "test_subjects": sorted(self.test_subjects)}


def _excluded(entry: ManifestEntry, exclusions: Iterable[str]) -> bool:
    p = Path(entry.path)
    return p.name in exclusions or p.stem in exclusions


def make_split(
    manifest: DatasetManifest,
    spec: SplitSpec,
    exclusions: Iterable[str] = frozenset(),
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Partition manifest entries by subject, leaving out excluded files."""
    exclusions = frozenset(exclusions)
    train, test = [], []
    for entry in manifest.entries:
        if _excluded(entry, exclusions):
            continue
        if entry.subject in spec.train_subjects:
            train.append(entry)
        elif entry.subject in spec.test_subjects:
            test.append(entry)
        else:
            logger.warning("subject %s of %s is in neither split; dropped", entry.subject, entry.path)
    return train, test


def concatenate(seqs: Sequence[ActionSequence]) -> ActionSequence:
    """Join segmented instances into one stream with per-frame labels."""
    if not seqs:
        raise ValueError("nothing to concatenate")
    topology = seqs[0].topology
    if any(s.topology != topology for s in seqs):
        raise ValueError("topology mismatch between sequences")
    labels = []
    for s in seqs:
        labels.extend([s.label] * s.n_frames)
    return ActionSequence(
        topology,
        np.concatenate([s.positions for s in seqs]),
        subject=seqs[0].subject if len({s.subject for s in seqs}) == 1 else None,
        frame_labels=tuple(labels),
    )
