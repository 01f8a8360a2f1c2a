"""Stats-Calculus pose descriptors.

Every descriptor family builds a per-frame base vector ``B(t)`` and appends
windowed statistics and finite-difference derivatives over the five frames
``t-2 .. t+2``::

    SC(t) = [B(t), mean, variance, skewness, kurtosis, velocity, acceleration, jerk]

Sequence edges are handled by replicating the first and last frame, so the
descriptor has exactly one vector per input frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .skeleton import ActionSequence, SkeletonTopology

CAMERA = "CAMERA"

# Five-point central stencils at unit time step, ordered t-2 .. t+2, as
# (integer taps, divisor). Dividing after the weighted sum keeps results
# exact for small integer inputs.
VELOCITY_STENCIL = (np.array([1.0, -8.0, 0.0, 8.0, -1.0]), 12.0)
# A +30 centre tap is sometimes printed for this stencil; it does not
# annihilate constants (taps sum to 60). The standard -30 is used.
ACCELERATION_STENCIL = (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]), 12.0)
JERK_STENCIL = (np.array([-1.0, 2.0, 0.0, -2.0, 1.0]), 2.0)

ZERO_VARIANCE = 1e-12
_DEGENERATE_RAY = 1e-12


class Family(str, Enum):
    CARTESIAN = "cartesian"
    ANGULAR = "angular"
    MIXED = "mixed"
    CENTRO = "centro"
    RELA_CENTRO = "rela_centro"
    RELA_CENTRO_DCT = "rela_centro_dct"
    RELA_CENTRO_DCT_AMDF = "rela_centro_dct_amdf"


@dataclass(frozen=True)
class DescriptorKind:
    """Descriptor family plus its parameters.

    ``centroid`` selects the centroid used by the Centro families: ``"frame"``
    averages joints per frame (a trajectory), ``"sequence"`` averages over all
    frames and joints (a constant). ``cartesian_origin`` is ``"camera"`` for
    raw coordinates or ``"root"`` for coordinates relative to the root joint.
    """

    family: Family = Family.CARTESIAN
    dct_keep: int = 100
    amdf_n: int = 45
    centroid: str = "frame"
    cartesian_origin: str = "camera"

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.dct_keep < 1 or self.amdf_n < 1:
            raise ValueError("dct_keep and amdf_n must be positive")
        if self.amdf_n >= self.dct_keep:
            raise ValueError(f"amdf_n ({self.amdf_n}) must be smaller than dct_keep ({self.dct_keep})")
        if self.centroid not in ("frame", "sequence"):
            raise ValueError(f"centroid must be 'frame' or 'sequence', got {self.centroid!r}")
        if self.cartesian_origin not in ("camera", "root"):
            raise ValueError(f"cartesian_origin must be 'camera' or 'root', got {self.cartesian_origin!r}")

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "dct_keep": self.dct_keep,
            "amdf_n": self.amdf_n,
            "centroid": self.centroid,
            "cartesian_origin": self.cartesian_origin,
        }


@dataclass(frozen=True)
class AngleTable:
    """Vertex-angle triples ``(a, vertex, b)`` by joint name; ``CAMERA`` is the origin."""

    triples: tuple[tuple[str, str, str], ...]

    def __post_init__(self) -> None:
        triples = tuple(tuple(str(j) for j in t) for t in self.triples)
        for t in triples:
            if len(t) != 3:
                raise ValueError(f"angle triple must have 3 entries: {t}")
            a, v, b = t
            if a == v or b == v:
                raise ValueError(f"angle triple {t} repeats its vertex")
        object.__setattr__(self, "triples", triples)

    def __len__(self) -> int:
        return len(self.triples)

    def without_camera(self) -> "AngleTable":
        return AngleTable(tuple(t for t in self.triples if CAMERA not in t))

    def indices(self, topology: SkeletonTopology) -> np.ndarray:
        """``(n, 3)`` joint indices; ``-1`` marks the camera origin."""
        def idx(name: str) -> int:
            return -1 if name == CAMERA else topology.index(name)

        return np.array([[idx(j) for j in t] for t in self.triples], dtype=int).reshape(-1, 3)

    @classmethod
    def from_dict(cls, data: dict) -> "AngleTable":
        if "triples" not in data:
            raise ValueError("angle table config is missing key 'triples'")
        return cls(tuple(tuple(t) for t in data["triples"]))

    def to_dict(self) -> dict:
        return {"triples": [list(t) for t in self.triples]}


def load_angle_table(source: str | Path) -> AngleTable:
    path = Path(source)
    if path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    else:
        try:
            text = resources.files("skelhmm.data").joinpath(f"{source}.yaml").read_text()
        except FileNotFoundError:
            raise ValueError(f"no angle table file or bundled table named {source!r}") from None
    return AngleTable.from_dict(yaml.safe_load(text))


def default_angle_table() -> AngleTable:
    return load_angle_table("angles_kinect20")


@dataclass(frozen=True, eq=False)
class DescriptorSequence:
    vectors: np.ndarray
    kind: DescriptorKind

    @property
    def frame_count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def _as_window(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != 5:
        raise ValueError(f"window must hold exactly 5 frames, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise ValueError("window contains non-finite values")
    return w


def window_calculus(w) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Velocity, acceleration and jerk at the centre of a 5-frame window.

    ``w`` has shape ``(5, D)`` (or ``(5,)``), rows ordered ``t-2 .. t+2``.
    """
    w = _as_window(w)
    return tuple((taps @ w) / div for taps, div in (VELOCITY_STENCIL, ACCELERATION_STENCIL, JERK_STENCIL))


def _moments(windows: np.ndarray, axis: int):
    mean = windows.mean(axis=axis)
    dev = windows - np.expand_dims(mean, axis)
    m2 = np.mean(dev**2, axis=axis)
    m3 = np.mean(dev**3, axis=axis)
    m4 = np.mean(dev**4, axis=axis)
    flat = m2 < ZERO_VARIANCE
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe**1.5)
    kurt = np.where(flat, 0.0, m4 / safe**2)
    return mean, m2, skew, kurt


def window_stats(w) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Population mean, variance, skewness and kurtosis per component.

    Skewness and kurtosis are reported as 0 when the variance is below 1e-12.
    """
    return _moments(_as_window(w), axis=0)


def vertex_angle(a, v, b) -> float:
    """Angle at ``v`` between the rays ``v->a`` and ``v->b``, in ``[0, pi]``."""
    a, v, b = (np.asarray(p, dtype=float) for p in (a, v, b))
    return float(_vertex_angles(a[None], v[None], b[None], label=(a, v, b))[0])


def _vertex_angles(a: np.ndarray, v: np.ndarray, b: np.ndarray, label=None) -> np.ndarray:
    u, w = a - v, b - v
    nu, nw = np.linalg.norm(u, axis=-1), np.linalg.norm(w, axis=-1)
    bad = (nu < _DEGENERATE_RAY) | (nw < _DEGENERATE_RAY)
    if np.any(bad):
        frame = int(np.flatnonzero(bad)[0])
        raise ValueError(f"degenerate ray for angle triple {label} at frame {frame}")
    cos = np.sum(u * w, axis=-1) / (nu * nw)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def per_frame_centroid(seq: ActionSequence) -> np.ndarray:
    """Mean joint position of each frame, shape ``(n_frames, 3)``."""
    if seq.n_frames == 0:
        raise ValueError("sequence has no frames")
    return seq.positions.mean(axis=1)


def sequence_centroid(seq: ActionSequence) -> np.ndarray:
    """Centroid over all frames and joints, repeated for every frame."""
    if seq.n_frames == 0:
        raise ValueError("sequence has no frames")
    centre = seq.positions.reshape(-1, 3).mean(axis=0)
    return np.repeat(centre[None], seq.n_frames, axis=0)


def dct_truncate(x, keep: int) -> np.ndarray:
    """First ``keep`` coefficients of the orthonormal DCT-II of ``x`` (no padding)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("cannot transform an empty vector")
    if keep < 1:
        raise ValueError("keep must be positive")
    return dct(x, type=2, norm="ortho", axis=-1)[..., :keep]


def amdf(d, n: int) -> np.ndarray:
    """Average magnitude difference of ``d`` against its lag-``k`` shift.

    Component ``k-1`` is ``mean(|d[0:n] - d[k:k+n]|)`` for ``k = 1 .. len(d) - n``.
    Works along the last axis, so a ``(frames, dim)`` array is handled row-wise.
    """
    d = np.asarray(d, dtype=float)
    length = d.shape[-1]
    if n < 1:
        raise ValueError("n must be positive")
    if length < n + 1:
        raise ValueError(f"AMDF at n={n} needs at least {n + 1} values, got {length}")
    shifted = sliding_window_view(d[..., 1:], n, axis=-1)  # (..., length - n, n)
    return np.mean(np.abs(shifted - d[..., None, :n]), axis=-1)


def _frame_windows(base: np.ndarray) -> np.ndarray:
    """``(F, 5, D)`` windows centred on each frame, edges replicated."""
    padded = np.concatenate([base[:1], base[:1], base, base[-1:], base[-1:]], axis=0)
    return np.moveaxis(sliding_window_view(padded, 5, axis=0), -1, 1)


def stats_calculus(base: np.ndarray) -> np.ndarray:
    """``[B, mean, var, skew, kurt, V, A, J]`` for a ``(F, D)`` base, shape ``(F, 8D)``."""
    base = np.asarray(base, dtype=float)
    windows = _frame_windows(base)
    mean, var, skew, kurt = _moments(windows, axis=1)
    derivs = [np.einsum("k,fkd->fd", taps, windows) / div for taps, div in (VELOCITY_STENCIL, ACCELERATION_STENCIL, JERK_STENCIL)]
    return np.concatenate([base, mean, var, skew, kurt, *derivs], axis=1)


def joint_angles(seq: ActionSequence, angles: AngleTable) -> np.ndarray:
    """``(F, n_triples)`` vertex angles in radians."""
    idx = angles.indices(seq.topology)
    padded = np.concatenate([seq.positions, np.zeros((seq.n_frames, 1, 3))], axis=1)
    out = np.empty((seq.n_frames, len(angles)))
    for k, (ia, iv, ib) in enumerate(idx):
        # index -1 selects the appended zero row, i.e. the camera origin
        out[:, k] = _vertex_angles(padded[:, ia], padded[:, iv], padded[:, ib], label=angles.triples[k])
    return out


def _cartesian_base(seq: ActionSequence, kind: DescriptorKind) -> np.ndarray:
    pos = seq.positions
    if kind.cartesian_origin == "root":
        pos = pos - pos[:, seq.topology.index(seq.topology.root)][:, None]
    return pos.reshape(seq.n_frames, -1)


def _centro_base(seq: ActionSequence, kind: DescriptorKind) -> np.ndarray:
    return per_frame_centroid(seq) if kind.centroid == "frame" else sequence_centroid(seq)


def extract(
    seq: ActionSequence,
    kind: DescriptorKind | Family | str = Family.CARTESIAN,
    angles: AngleTable | None = None,
) -> DescriptorSequence:
    """Compute one descriptor vector per frame of ``seq``."""
    if not isinstance(kind, DescriptorKind):
        kind = DescriptorKind(Family(kind))
    if seq.n_frames == 0:
        raise ValueError("cannot extract descriptors from an empty sequence")
    family = kind.family

    if family in (Family.ANGULAR, Family.MIXED):
        angles = angles if angles is not None else default_angle_table()
    if family is Family.CARTESIAN:
        out = stats_calculus(_cartesian_base(seq, kind))
    elif family is Family.ANGULAR:
        out = stats_calculus(joint_angles(seq, angles))
    elif family is Family.MIXED:
        out = stats_calculus(np.concatenate([_cartesian_base(seq, kind), joint_angles(seq, angles)], axis=1))
    elif family is Family.CENTRO:
        out = stats_calculus(_centro_base(seq, kind))
    else:
        out = np.concatenate(
            [stats_calculus(_centro_base(seq, kind)), stats_calculus(_cartesian_base(seq, kind))], axis=1
        )
        if family in (Family.RELA_CENTRO_DCT, Family.RELA_CENTRO_DCT_AMDF):
            out = dct_truncate(out, kind.dct_keep)
        if family is Family.RELA_CENTRO_DCT_AMDF:
            out = amdf(out, kind.amdf_n)
    return DescriptorSequence(np.ascontiguousarray(out), kind)


def descriptor_dimension(kind: DescriptorKind, n_joints: int, n_angles: int = 35) -> int:
    """Per-frame dimension of ``kind`` for a skeleton of ``n_joints``."""
    family = kind.family
    rela = 8 * 3 + 8 * 3 * n_joints
    return {
        Family.CARTESIAN: 8 * 3 * n_joints,
        Family.ANGULAR: 8 * n_angles,
        Family.MIXED: 8 * (3 * n_joints + n_angles),
        Family.CENTRO: 8 * 3,
        Family.RELA_CENTRO: rela,
        Family.RELA_CENTRO_DCT: min(kind.dct_keep, rela),
        Family.RELA_CENTRO_DCT_AMDF: min(kind.dct_keep, rela) - kind.amdf_n,
    }[family]
