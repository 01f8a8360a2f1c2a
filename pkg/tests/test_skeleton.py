import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, random_sequence
from oracles import moments
from skelhmm.descriptors import vertex_angle
from skelhmm.skeleton import (
    ActionSequence,
    BoneLengthProfile,
    SkeletonTopology,
    compute_average_bone_lengths,
    load_topology,
    normalize_bones,
)


def seq_of(topology, frames):
    return ActionSequence(topology, np.asarray(frames, dtype=float))


class TestTopology:
    def test_default_has_twenty_joints_rooted_at_hip(self, kinect):
        assert kinect.joint_count == 20
        assert kinect.root == "hip_center"
        assert len(kinect.bones) == 19

    def test_root_defaults_to_first_joint(self):
        topo = SkeletonTopology(("a", "b"), (("a", "b"),))
        assert topo.root == "a"

    def test_rejects_cycle(self):
        with pytest.raises(ValueError):
            SkeletonTopology(("a", "b", "c"), (("a", "b"), ("b", "c"), ("c", "b")), root="a")

    def test_rejects_two_parents(self):
        with pytest.raises(ValueError, match="more than one parent"):
            SkeletonTopology(("a", "b", "c"), (("a", "c"), ("b", "c"), ("a", "b")), root="a")

    def test_rejects_unknown_joint(self):
        with pytest.raises(ValueError, match="unknown joint"):
            SkeletonTopology(("a", "b"), (("a", "z"),))

    def test_rejects_disconnected(self):
        with pytest.raises(ValueError, match="tree"):
            SkeletonTopology(("a", "b", "c"), (("a", "b"),), root="a")

    def test_traversal_visits_parents_first(self, kinect):
        placed = {kinect.root}
        for parent, child in kinect.traversal_bones():
            assert parent in placed
            placed.add(child)
        assert len(placed) == kinect.joint_count

    def test_dict_round_trip(self, kinect):
        assert SkeletonTopology.from_dict(kinect.to_dict()) == kinect

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "t.yaml"
        path.write_text("name: tiny\nroot: a\njoints: [a, b]\nbones:\n  - [a, b]\n")
        topo = load_topology(path)
        assert topo.name == "tiny" and topo.bones == (("a", "b"),)


class TestActionSequence:
    def test_rejects_nonfinite(self, kinect):
        pos = np.zeros((2, 20, 3))
        pos[1, 4, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            ActionSequence(kinect, pos)

    def test_rejects_wrong_joint_count(self, kinect):
        with pytest.raises(ValueError):
            ActionSequence(kinect, np.zeros((2, 19, 3)))

    def test_timestamps_strictly_increasing(self, kinect):
        with pytest.raises(ValueError):
            ActionSequence(kinect, np.zeros((3, 20, 3)), timestamps=[0, 2, 2])

    def test_positions_are_read_only(self, kinect, rng):
        seq = random_sequence(kinect, 2, rng)
        with pytest.raises(ValueError):
            seq.positions[0, 0, 0] = 1.0

    def test_frames_view(self, kinect, rng):
        seq = random_sequence(kinect, 3, rng)
        frames = seq.frames
        assert [f.timestamp_index for f in frames] == [0, 1, 2]
        np.testing.assert_array_equal(frames[2].positions, seq.positions[2])


class TestAverageBoneLengths:
    def test_single_frame(self):
        topo = chain(2)
        profile = compute_average_bone_lengths([seq_of(topo, [[[0, 0, 0], [0, 0, 2]]])])
        assert profile.lengths[0] == 2.0

    def test_mean_of_two_frames(self):
        topo = chain(2)
        seq = seq_of(topo, [[[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [0, 3, 0]]])
        assert compute_average_bone_lengths([seq]).lengths[0] == 2.0

    def test_matches_resummation(self, rng):
        topo = chain(4)
        seq = random_sequence(topo, 10, rng)
        profile = compute_average_bone_lengths([seq])
        for b in range(3):
            norms = [math.dist(seq.positions[f, b], seq.positions[f, b + 1]) for f in range(10)]
            assert abs(profile.lengths[b] - moments(norms)[0]) <= 1e-12

    def test_skips_degenerate_frames(self, caplog):
        topo = chain(2)
        seq = seq_of(topo, [[[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [0, 4, 0]]])
        profile = compute_average_bone_lengths([seq])
        assert profile.lengths[0] == 4.0
        assert "degenerate" in caplog.text

    def test_all_degenerate_is_error(self):
        topo = chain(2)
        with pytest.raises(ValueError, match="every training frame"):
            compute_average_bone_lengths([seq_of(topo, [[[1, 1, 1], [1, 1, 1]]])])

    def test_empty_and_mismatch(self, rng):
        with pytest.raises(ValueError):
            compute_average_bone_lengths([])
        with pytest.raises(ValueError, match="topology"):
            compute_average_bone_lengths([random_sequence(chain(2), 1, rng), random_sequence(chain(3), 1, rng)])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.permutations(range(4)))
    def test_order_invariant(self, seed, order):
        r = np.random.default_rng(seed)
        seqs = [random_sequence(chain(3), int(r.integers(1, 6)), r) for _ in range(4)]
        a = compute_average_bone_lengths(seqs)
        b = compute_average_bone_lengths([seqs[i] for i in order])
        np.testing.assert_array_equal(a.lengths, b.lengths)


class TestNormalizeBones:
    def test_scales_along_axis(self):
        topo = chain(2)
        out = normalize_bones(seq_of(topo, [[[0, 0, 0], [4, 0, 0]]]), BoneLengthProfile(topo.bones, [2.0]))
        np.testing.assert_array_equal(out.positions[0, 1], [2, 0, 0])

    def test_identity_when_lengths_match(self, rng):
        topo = chain(4)
        seq = random_sequence(topo, 1, rng)
        profile = compute_average_bone_lengths([seq])
        np.testing.assert_allclose(normalize_bones(seq, profile).positions, seq.positions, rtol=0, atol=1e-12)

    def test_three_joint_chain(self):
        topo = chain(3)
        seq = seq_of(topo, [[[0, 0, 0], [1, 0, 0], [1, 1, 0]]])
        out = normalize_bones(seq, BoneLengthProfile(topo.bones, [2.0, 2.0])).positions[0]
        np.testing.assert_allclose(out, [[0, 0, 0], [2, 0, 0], [2, 2, 0]], atol=1e-15)
        assert vertex_angle(out[0], out[1], out[2]) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_zero_length_bone_names_frame_and_bone(self):
        topo = chain(2)
        seq = seq_of(topo, [[[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [0, 0, 0]]])
        with pytest.raises(ValueError, match=r"\(j0, j1\) in frame 1"):
            normalize_bones(seq, BoneLengthProfile(topo.bones, [1.0]))

    def test_profile_must_cover_bones(self, rng):
        with pytest.raises(ValueError, match="cover"):
            normalize_bones(random_sequence(chain(3), 1, rng), BoneLengthProfile((("j0", "j1"),), [1.0]))

    def test_subtree_follows_parent(self, kinect, rng):
        seq = random_sequence(kinect, 1, rng)
        lengths = np.ones(len(kinect.bones))
        lengths[kinect.bones.index(("shoulder_center", "shoulder_left"))] = 5.0
        out = normalize_bones(seq, BoneLengthProfile(kinect.bones, lengths)).positions[0]
        # hand_left hangs three bones below shoulder_left; its offset from it keeps unit-length bones
        hl, sl = kinect.index("hand_left"), kinect.index("shoulder_left")
        assert np.linalg.norm(out[hl] - out[sl]) <= 3.0 + 1e-12
        assert out[kinect.index("hip_center")].tolist() == seq.positions[0, kinect.index("hip_center")].tolist()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_normalization_properties(seed, frames):
    from skelhmm.skeleton import default_topology

    topo = default_topology()
    r = np.random.default_rng(seed)
    seq = random_sequence(topo, frames, r)
    profile = BoneLengthProfile(topo.bones, r.uniform(0.05, 0.6, size=len(topo.bones)))
    once = normalize_bones(seq, profile)
    pairs = topo.bone_index_pairs()
    before = seq.positions[:, pairs[:, 1]] - seq.positions[:, pairs[:, 0]]
    after = once.positions[:, pairs[:, 1]] - once.positions[:, pairs[:, 0]]
    lengths = np.linalg.norm(after, axis=2)
    np.testing.assert_allclose(lengths, np.broadcast_to(profile.lengths, lengths.shape), rtol=1e-9)
    unit_before = before / np.linalg.norm(before, axis=2, keepdims=True)
    np.testing.assert_allclose(after / lengths[..., None], unit_before, atol=1e-9)
    np.testing.assert_array_equal(once.positions[:, topo.index(topo.root)], seq.positions[:, topo.index(topo.root)])
    np.testing.assert_allclose(normalize_bones(once, profile).positions, once.positions, rtol=0, atol=1e-12)
