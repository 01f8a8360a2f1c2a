import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_sequence
from skelhmm.dataset_io import (
    DatasetManifest,
    LoaderLayout,
    ManifestEntry,
    SplitSpec,
    canonical_text,
    concatenate,
    load_canonical,
    load_joint_text,
    load_layout,
    make_split,
    msr_exclusions,
    parse_msr_filename,
    save_canonical,
    save_joint_text,
)
from skelhmm.skeleton import ActionSequence, default_topology

MSR = load_layout("msr_action3d")


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadJointText:
    def test_minimal_file_with_header(self, tmp_path):
        layout = LoaderLayout(rows_per_frame=20, values_per_row=4, header_lines=1)
        rows = "\n".join(f"{j} {j + 0.5} {-j} 1.0" for j in range(20))
        seq = load_joint_text(write(tmp_path, "f.txt", "1\n" + rows + "\n"), layout)
        assert seq.n_frames == 1 and seq.positions.shape == (1, 20, 3)
        np.testing.assert_array_equal(seq.positions[0, 3], [3, 3.5, -3])

    def test_direct_parse(self, tmp_path):
        rows = "0.5 1.25 -0.75 1.0\n" + "0 0 0 0\n" * 19
        seq = load_joint_text(write(tmp_path, "f.txt", rows), MSR)
        assert seq.positions[0, 0].tolist() == [0.5, 1.25, -0.75]

    def test_wrong_column_count_reports_line(self, tmp_path):
        rows = "0 0 0 0\n" * 5 + "1 2 3\n" + "0 0 0 0\n" * 14
        with pytest.raises(ValueError, match=":6: expected 4 values"):
            load_joint_text(write(tmp_path, "f.txt", rows), MSR)

    def test_partial_frame(self, tmp_path):
        with pytest.raises(ValueError, match="whole number of frames"):
            load_joint_text(write(tmp_path, "f.txt", "0 0 0 0\n" * 30), MSR)

    def test_empty_file(self, tmp_path):
        with pytest.raises(ValueError, match="no data rows"):
            load_joint_text(write(tmp_path, "f.txt", ""), MSR)

    def test_non_numeric(self, tmp_path):
        with pytest.raises(ValueError, match=":1: non-numeric"):
            load_joint_text(write(tmp_path, "f.txt", "a b c d\n"), MSR)

    def test_keeps_file_order_and_metadata(self, tmp_path, kinect, rng):
        seq = random_sequence(kinect, 4, rng)
        path = tmp_path / "a.txt"
        save_joint_text(seq, path, MSR)
        back = load_joint_text(path, MSR, label=3, subject=2)
        np.testing.assert_array_equal(back.positions, seq.positions)
        assert (back.label, back.subject) == (3, 2)

    def test_utkinect_layout_packs_joints_in_one_row(self, tmp_path, kinect, rng):
        layout = load_layout("utkinect")
        seq = random_sequence(kinect, 3, rng)
        path = tmp_path / "u.txt"
        save_joint_text(seq, path, layout)
        assert len(path.read_text().splitlines()) == 3
        np.testing.assert_array_equal(load_joint_text(path, layout).positions, seq.positions)

    def test_raw_file_to_canonical_is_bit_exact(self, tmp_path, kinect, rng):
        seq = random_sequence(kinect, 7, rng)
        save_joint_text(seq, tmp_path / "raw.txt", MSR)
        loaded = load_joint_text(tmp_path / "raw.txt", MSR)
        save_canonical(loaded, tmp_path / "c.skel")
        np.testing.assert_array_equal(load_canonical(tmp_path / "c.skel").positions, seq.positions)

    def test_layout_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown layout keys"):
            LoaderLayout.from_dict({"rows_per_frame": 1, "values_per_row": 3, "colour": 2})

    def test_layout_mismatch_with_topology(self, tmp_path):
        layout = LoaderLayout(rows_per_frame=3, values_per_row=3)
        with pytest.raises(ValueError, match="joints per frame"):
            load_joint_text(write(tmp_path, "f.txt", "0 0 0\n"), layout)


class TestMsrNames:
    @pytest.mark.parametrize(
        "name, expected",
        [("a02_s03_e02_skeleton3D.txt", (2, 3, 2)), ("a20_s10_e03_skeleton3D.txt", (20, 10, 3))],
    )
    def test_parse(self, name, expected):
        assert parse_msr_filename(name) == expected

    def test_rejects_other_names(self):
        with pytest.raises(ValueError):
            parse_msr_filename("readme.txt")

    def test_exclusion_list(self):
        names = msr_exclusions()
        assert len(names) == 10
        assert "a02_s03_e02_skeleton3D" in names and "a20_s10_e03_skeleton3D" in names
        assert all(parse_msr_filename(n) for n in names)


class TestCanonical:
    def test_unlabelled_sequence_omits_label(self, kinect, rng):
        text = canonical_text(random_sequence(kinect, 2, rng))
        header = text.split("end_header")[0]
        assert "label" not in header
        assert "frame_count 2" in header

    def test_round_trip_with_metadata(self, tmp_path, kinect, rng):
        seq = ActionSequence(
            kinect, rng.normal(size=(3, 20, 3)), label=4, subject=2, instance=1,
            timestamps=[0, 5, 9], frame_labels=(4, 4, "background"),
        )
        save_canonical(seq, tmp_path / "x.skel")
        assert load_canonical(tmp_path / "x.skel") == seq

    def test_rejects_other_versions(self, tmp_path, kinect, rng):
        text = canonical_text(random_sequence(kinect, 1, rng)).replace("skelhmm-canonical 1", "skelhmm-canonical 2")
        with pytest.raises(ValueError, match="version"):
            load_canonical(write(tmp_path, "x.skel", text))

    def test_frame_count_mismatch(self, tmp_path, kinect, rng):
        text = canonical_text(random_sequence(kinect, 2, rng)).replace("frame_count 2", "frame_count 3")
        with pytest.raises(ValueError):
            load_canonical(write(tmp_path, "x.skel", text))

    def test_topology_mismatch(self, tmp_path, rng):
        from conftest import chain

        save_canonical(random_sequence(chain(20), 1, rng), tmp_path / "x.skel")
        with pytest.raises(ValueError, match="topology"):
            load_canonical(tmp_path / "x.skel", default_topology())

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.just(20), st.just(3)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True)))
    def test_round_trip_is_exact(self, positions):
        seq = ActionSequence(default_topology(), positions, label=1)
        back = load_canonical_text(canonical_text(seq))
        np.testing.assert_array_equal(back.positions, seq.positions)
        assert back == seq


def load_canonical_text(text):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "s.skel"
        path.write_text(text)
        return load_canonical(path)


def manifest_of(n_entries, subjects=10):
    entries = [
        ManifestEntry(f"a{k % 3 + 1:02d}_s{k % subjects + 1:02d}_e{k // 30 + 1:02d}.skel", k % 3 + 1, k % subjects + 1, k // 30 + 1)
        for k in range(n_entries)
    ]
    return DatasetManifest(entries)


class TestSplit:
    def test_subject_three_goes_to_train(self):
        m = DatasetManifest([ManifestEntry("x.skel", 1, 3, 1)])
        train, test = make_split(m, SplitSpec(set(range(1, 6)), set(range(6, 11))))
        assert [e.path for e in train] == ["x.skel"] and test == []

    def test_excluded_entry_absent(self):
        m = DatasetManifest([ManifestEntry("a02_s03_e02_skeleton3D.skel", 2, 3, 2), ManifestEntry("b.skel", 1, 7, 1)])
        train, test = make_split(m, SplitSpec({1, 3}, {7}), msr_exclusions())
        assert train == [] and [e.path for e in test] == ["b.skel"]

    def test_counting(self):
        m = manifest_of(100)
        excl = {m.entries[5].path, m.entries[50].path, m.entries[77].path}
        train, test = make_split(m, SplitSpec(set(range(1, 6)), set(range(6, 11))), excl)
        assert len(train) + len(test) == 100 - 3
        assert not set(train) & set(test)
        assert set(train) | set(test) | {e for e in m.entries if e.path in excl} == set(m.entries)

    def test_unlisted_subject_dropped_with_warning(self, caplog):
        m = DatasetManifest([ManifestEntry("x.skel", 1, 11, 1)])
        train, test = make_split(m, SplitSpec({1}, {2}))
        assert train == test == [] and "neither split" in caplog.text

    def test_spec_invariants(self):
        with pytest.raises(ValueError, match="both"):
            SplitSpec({1, 2}, {2, 3})
        with pytest.raises(ValueError):
            SplitSpec(set(), {1})

    def test_manifest_rejects_duplicate_paths(self):
        with pytest.raises(ValueError, match="unique"):
            DatasetManifest([ManifestEntry("x", 1, 1, 1), ManifestEntry("x", 2, 1, 1)])

    def test_manifest_file_round_trip(self, tmp_path, kinect, rng):
        seq = random_sequence(kinect, 2, rng, label=1, subject=1, instance=1)
        save_canonical(seq, tmp_path / "s.skel")
        DatasetManifest([ManifestEntry("s.skel", 1, 1, 1)]).save(tmp_path / "m.json")
        m = DatasetManifest.load_file(tmp_path / "m.json")
        assert m.load(m.entries[0]) == seq


def test_concatenate_builds_frame_labels(kinect, rng):
    a = random_sequence(kinect, 2, rng, label=1)
    b = random_sequence(kinect, 3, rng, label=2)
    stream = concatenate([a, b])
    assert stream.frame_labels == (1, 1, 2, 2, 2)
    np.testing.assert_array_equal(stream.positions[2:], b.positions)
