"""Z-score feature normalization and principal component analysis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_STD = 1e-12


def _as_rows(rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D matrix of feature rows")
    if not np.all(np.isfinite(rows)):
        raise ValueError("feature matrix contains non-finite values")
    return rows


def _check_dim(v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[-1]}")
    return v


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-dimension mean and population standard deviation.

    ``degenerate`` flags dimensions whose std fell below 1e-12; those are
    recorded with std 1 so they pass through centred but unscaled.
    """

    means: np.ndarray
    stds: np.ndarray
    degenerate: np.ndarray

    @property
    def dimension(self) -> int:
        return self.means.shape[0]

    def apply(self, v) -> np.ndarray:
        return (_check_dim(v, self.dimension) - self.means) / self.stds

    def invert(self, z) -> np.ndarray:
        return _check_dim(z, self.dimension) * self.stds + self.means

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "degenerate": self.degenerate.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(
            np.array(data["means"], dtype=float),
            np.array(data["stds"], dtype=float),
            np.array(data["degenerate"], dtype=bool),
        )


def fit_normalizer(rows) -> Normalizer:
    rows = _as_rows(rows)
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    degenerate = stds < DEGENERATE_STD
    stds = np.where(degenerate, 1.0, stds)
    return Normalizer(means, stds, degenerate)


def apply_normalizer(n: Normalizer, v) -> np.ndarray:
    return n.apply(v)


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Principal axes of a training matrix.

    ``components`` holds one orthonormal axis per row, in descending
    eigenvalue order; only the first ``retained`` are used by ``project``.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    retained: int

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.full_like(self.eigenvalues, 1.0 / self.eigenvalues.size)
        return self.eigenvalues / total

    def project(self, v) -> np.ndarray:
        v = _check_dim(v, self.dimension)
        return (v - self.mean) @ self.components[: self.retained].T

    def reconstruct(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return coords @ self.components[: coords.shape[-1]] + self.mean

    def to_dict(self) -> dict:
        # Only retained axes are needed to project; eigenvalues kept in full.
        return {
            "mean": self.mean.tolist(),
            "components": self.components[: self.retained].tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "retained": self.retained,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        dim = len(data["mean"])
        components = np.array(data["components"], dtype=float).reshape(-1, dim)
        return cls(
            np.array(data["mean"], dtype=float),
            components,
            np.array(data["eigenvalues"], dtype=float),
            int(data["retained"]),
        )


def fit_pca(rows, variance_fraction: float = 0.95) -> PcaModel:
    """Eigendecomposition of the population covariance of ``rows``.

    Retains the fewest leading components whose eigenvalues account for at
    least ``variance_fraction`` of the total variance (at least one).
    """
    rows = _as_rows(rows)
    if rows.shape[0] < 2:
        raise ValueError("PCA needs at least 2 rows")
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    mean = rows.mean(axis=0)
    centred = rows - mean
    cov = centred.T @ centred / rows.shape[0]
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    components = vectors[:, order].T
    # Largest-magnitude entry of each axis made positive for stable output.
    pivot = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), pivot])
    components = components * np.where(signs == 0, 1.0, signs)[:, None]

    total = eigenvalues.sum()
    if total <= 0:
        retained = 1
    else:
        cumulative = np.cumsum(eigenvalues) / total
        # tiny slack so a fraction of exactly 1.0 is reachable despite rounding
        retained = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
        retained = min(max(retained, 1), len(eigenvalues))
    return PcaModel(mean, components, eigenvalues, retained)


def project(m: PcaModel, v) -> np.ndarray:
    return m.project(v)
