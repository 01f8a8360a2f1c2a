"""Seeded synthetic actions on the 20-joint Kinect skeleton.

Each action drives a few bones with periodic rotations on top of a rest
pose, via forward kinematics. Instances vary in actor size, position,
speed, amplitude and starting phase, and carry small sensor noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import concatenate
from .skeleton import ActionSequence, SkeletonTopology, default_topology

# Rest offsets (metres) of each bone, keyed by child joint. x right, y up, z away from the sensor.
REST_OFFSETS = {
    "spine": (0.0, 0.22, 0.0),
    "shoulder_center": (0.0, 0.25, 0.0),
    "head": (0.0, 0.20, 0.0),
    "shoulder_left": (-0.18, -0.03, 0.0),
    "elbow_left": (0.0, -0.28, 0.0),
    "wrist_left": (0.0, -0.25, 0.0),
    "hand_left": (0.0, -0.08, 0.0),
    "shoulder_right": (0.18, -0.03, 0.0),
    "elbow_right": (0.0, -0.28, 0.0),
    "wrist_right": (0.0, -0.25, 0.0),
    "hand_right": (0.0, -0.08, 0.0),
    "hip_left": (-0.09, -0.05, 0.0),
    "knee_left": (0.0, -0.42, 0.0),
    "ankle_left": (0.0, -0.40, 0.0),
    "foot_left": (0.0, -0.03, -0.10),
    "hip_right": (0.09, -0.05, 0.0),
    "knee_right": (0.0, -0.42, 0.0),
    "ankle_right": (0.0, -0.40, 0.0),
    "foot_right": (0.0, -0.03, -0.10),
}

# action -> list of (bone child joint, axis, static angle, amplitude, phase shift)
ACTIONS: dict[str, list[tuple[str, str, float, float, float]]] = {
    "wave_right": [
        ("elbow_right", "z", 2.3, 0.15, 0.0),
        ("wrist_right", "z", 0.3, 0.7, 0.0),
    ],
    "kick_left": [
        ("knee_left", "x", 0.3, 0.7, 0.0),
        ("ankle_left", "x", -0.4, 0.4, 0.5),
    ],
    "bow": [
        ("spine", "x", -0.2, 0.45, 0.0),
        ("shoulder_center", "x", -0.1, 0.3, 0.0),
    ],
    "clap": [
        ("elbow_left", "x", -1.3, 0.0, 0.0),
        ("elbow_right", "x", -1.3, 0.0, 0.0),
        ("wrist_left", "y", -0.6, 0.5, 0.0),
        ("wrist_right", "y", 0.6, -0.5, 0.0),
    ],
    "squat": [
        ("knee_left", "x", -0.5, 0.5, 0.0),
        ("knee_right", "x", -0.5, 0.5, 0.0),
        ("ankle_left", "x", 0.8, 0.8, 0.0),
        ("ankle_right", "x", 0.8, 0.8, 0.0),
    ],
    "raise_arms": [
        ("elbow_left", "z", -1.2, 0.9, 0.0),
        ("elbow_right", "z", 1.2, -0.9, 0.0),
    ],
}
ACTION_NAMES = tuple(ACTIONS)


def _rotation(axis: str, angle: np.ndarray) -> np.ndarray:
    """``(T, 3, 3)`` rotations about a coordinate axis."""
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(angle), np.zeros_like(angle)
    rows = {
        "x": [[one, zero, zero], [zero, c, -s], [zero, s, c]],
        "y": [[c, zero, s], [zero, one, zero], [-s, zero, c]],
        "z": [[c, -s, zero], [s, c, zero], [zero, zero, one]],
    }[axis]
    return np.moveaxis(np.array(rows), (0, 1), (1, 2))


@dataclass(frozen=True)
class InstanceParams:
    frames: int
    cycles: float
    phase: float
    amplitude: float
    scale: float
    origin: tuple[float, float, float]
    noise: float


def pose_sequence(
    action: str,
    params: InstanceParams,
    topology: SkeletonTopology,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint positions ``(frames, joints, 3)`` for one instance of ``action``."""
    T = params.frames
    t = np.arange(T)
    theta = 2 * np.pi * params.cycles * t / T + params.phase
    local = {bone: np.broadcast_to(np.eye(3), (T, 3, 3)) for bone in REST_OFFSETS}
    for bone, axis, static, amp, shift in ACTIONS[action]:
        angle = static + params.amplitude * amp * np.sin(theta + shift)
        local[bone] = local[bone] @ _rotation(axis, angle)

    pos = np.zeros((T, topology.joint_count, 3))
    world: dict[str, np.ndarray] = {topology.root: np.broadcast_to(np.eye(3), (T, 3, 3))}
    pos[:, topology.index(topology.root)] = params.origin
    for parent, child in topology.traversal_bones():
        rot = world[parent] @ local[child]
        world[child] = rot
        offset = params.scale * np.asarray(REST_OFFSETS[child])
        pos[:, topology.index(child)] = pos[:, topology.index(parent)] + rot @ offset
    return pos + rng.normal(scale=params.noise, size=pos.shape)


def make_instance(
    action_index: int,
    subject: int,
    instance: int,
    seed: int = 0,
    noise: float = 0.005,
    topology: SkeletonTopology | None = None,
) -> ActionSequence:
    """One seeded instance; labels are 1-based action indices."""
    topology = topology or default_topology()
    subject_rng = np.random.default_rng([seed, 1, subject])
    scale = subject_rng.uniform(0.88, 1.12)
    home = (subject_rng.uniform(-0.1, 0.1), subject_rng.uniform(-0.05, 0.05), subject_rng.uniform(2.6, 3.0))
    rng = np.random.default_rng([seed, 2, action_index, subject, instance])
    params = InstanceParams(
        frames=int(rng.integers(32, 49)),
        cycles=rng.uniform(1.5, 2.2),
        phase=rng.uniform(0, 2 * np.pi),
        amplitude=rng.uniform(0.85, 1.15),
        scale=scale,
        origin=tuple(np.add(home, rng.normal(scale=0.02, size=3))),
        noise=noise,
    )
    positions = pose_sequence(ACTION_NAMES[action_index], params, topology, rng)
    return ActionSequence(topology, positions, label=action_index + 1, subject=subject, instance=instance)


def make_dataset(
    n_actions: int = 3,
    subjects: range | list[int] = range(1, 11),
    instances_per_subject: int | dict[int, int] = 2,
    seed: int = 0,
    noise: float = 0.005,
) -> list[ActionSequence]:
    """Every action performed by every subject; ``instances_per_subject``
    may map subject -> count."""
    if not 1 <= n_actions <= len(ACTION_NAMES):
        raise ValueError(f"n_actions must lie in 1..{len(ACTION_NAMES)}")
    topology = default_topology()
    out = []
    for a in range(n_actions):
        for s in subjects:
            count = instances_per_subject[s] if isinstance(instances_per_subject, dict) else instances_per_subject
            for e in range(1, count + 1):
                out.append(make_instance(a, s, e, seed, noise, topology))
    return out


def make_streams(
    pool: list[ActionSequence],
    n_streams: int,
    per_stream: int = 5,
    seed: int = 0,
) -> list[ActionSequence]:
    """Concatenate randomly drawn instances into labelled streams."""
    rng = np.random.default_rng([seed, 3])
    streams = []
    for _ in range(n_streams):
        picks = rng.choice(len(pool), size=per_stream, replace=False)
        streams.append(concatenate([pool[i] for i in picks]))
    return streams
