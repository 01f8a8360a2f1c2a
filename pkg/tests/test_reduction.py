import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelhmm.reduction import Normalizer, PcaModel, apply_normalizer, fit_normalizer, fit_pca, project


class TestNormalizer:
    def test_two_points(self):
        n = fit_normalizer([[0.0], [2.0]])
        assert (n.means[0], n.stds[0]) == (1.0, 1.0)

    def test_constant_column_flagged(self):
        n = fit_normalizer([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]])
        assert n.degenerate.tolist() == [False, True]
        assert n.stds[1] == 1.0
        assert apply_normalizer(n, [3.0, 5.0])[1] == 0.0

    def test_standardizes_by_resummation(self, rng):
        rows = rng.normal(3.0, 2.0, size=(100, 10))
        z = fit_normalizer(rows).apply(rows)
        for c in range(10):
            col = z[:, c].tolist()
            mean = math.fsum(col) / 100
            std = math.sqrt(math.fsum((x - mean) ** 2 for x in col) / 100)
            assert abs(mean) <= 1e-10 and abs(std - 1) <= 1e-10

    def test_apply_cases(self, rng):
        n = fit_normalizer(rng.normal(size=(20, 4)))
        np.testing.assert_array_equal(n.apply(n.means), np.zeros(4))
        ident = Normalizer(np.zeros(4), np.ones(4), np.zeros(4, bool))
        v = rng.normal(size=4)
        np.testing.assert_array_equal(ident.apply(v), v)
        np.testing.assert_allclose(n.invert(n.apply(v)), v, rtol=0, atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_normalizer(np.empty((0, 3)))
        with pytest.raises(ValueError, match="dimension"):
            fit_normalizer([[1.0, 2.0]]).apply([1.0])

    def test_dict_round_trip(self, rng):
        n = fit_normalizer(rng.normal(size=(5, 3)))
        m = Normalizer.from_dict(n.to_dict())
        v = rng.normal(size=3)
        np.testing.assert_array_equal(m.apply(v), n.apply(v))


def projector(components):
    return components.T @ components


class TestPca:
    def test_line(self, rng):
        x = rng.normal(size=200)
        m = fit_pca(np.stack([x, 2 * x], axis=1), 0.99)
        assert m.retained == 1
        u = np.array([1.0, 2.0]) / math.sqrt(5)
        np.testing.assert_allclose(projector(m.components[:1]), np.outer(u, u), atol=1e-10)

    def test_isotropic_cloud(self):
        rows = np.random.default_rng(7).normal(size=(10_000, 2))
        m = fit_pca(rows, 0.95)
        assert m.retained == 2
        np.testing.assert_allclose(m.eigenvalues, [1.0, 1.0], atol=0.1)

    def test_duplicated_column(self, rng):
        x = rng.normal(size=(50, 2))
        m = fit_pca(np.column_stack([x, x[:, 1]]), 1.0)
        assert abs(m.eigenvalues[-1]) <= 1e-9

    def test_projection_cases(self, rng):
        rows = rng.normal(size=(40, 3)) * [3.0, 1.0, 0.2]
        m = fit_pca(rows, 1.0)
        np.testing.assert_allclose(project(m, m.mean), 0, atol=1e-15)
        v = m.mean + math.sqrt(m.eigenvalues[0]) * m.components[0]
        np.testing.assert_allclose(m.project(v), [math.sqrt(m.eigenvalues[0]), 0, 0], atol=1e-12)
        a, b = rng.normal(size=(2, 3))
        assert np.linalg.norm(m.project(a) - m.project(b)) == pytest.approx(np.linalg.norm(a - b), abs=1e-8)

    def test_errors(self):
        with pytest.raises(ValueError, match="2 rows"):
            fit_pca([[1.0, 2.0]])
        with pytest.raises(ValueError):
            fit_pca([[1.0, np.inf], [0.0, 0.0]])
        with pytest.raises(ValueError):
            fit_pca([[1.0], [2.0]], 0.0)

    def test_sign_convention(self, rng):
        m = fit_pca(rng.normal(size=(30, 5)))
        pivots = m.components[np.arange(5), np.argmax(np.abs(m.components), axis=1)]
        assert (pivots > 0).all()

    def test_serialization_keeps_projection(self, rng):
        rows = rng.normal(size=(30, 6))
        m = fit_pca(rows, 0.8)
        back = PcaModel.from_dict(m.to_dict())
        np.testing.assert_array_equal(back.project(rows), m.project(rows))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(1, 8))
def test_pca_invariants(seed, n, d):
    r = np.random.default_rng(seed)
    rows = r.normal(size=(n, d)) @ r.normal(size=(d, d))
    m = fit_pca(rows, 1.0)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(d), atol=1e-8)
    assert np.all(np.diff(m.eigenvalues) <= 1e-12) and m.eigenvalues.min() >= -1e-10
    assert m.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-10)
    full = PcaModel(m.mean, m.components, m.eigenvalues, d)
    recon = full.reconstruct(full.project(rows))
    assert np.linalg.norm(recon - rows) <= 1e-8 * max(1.0, np.linalg.norm(rows))
    coords = full.project(rows)
    scale = max(1.0, m.eigenvalues[0])
    np.testing.assert_allclose(coords.var(axis=0), m.eigenvalues, rtol=1e-8, atol=1e-10 * scale)
