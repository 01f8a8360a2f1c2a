"""Affinity-propagation codebooks and nearest-exemplar symbol assignment."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

MEDIAN = "median"


@dataclass(frozen=True)
class ApConfig:
    damping: float = 0.9
    max_iterations: int = 500
    convergence_window: int = 50
    preference: float | str = MEDIAN

    def __post_init__(self) -> None:
        if not 0.5 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0.5, 1), got {self.damping}")
        if self.max_iterations < 1 or self.convergence_window < 1:
            raise ValueError("max_iterations and convergence_window must be positive")
        if self.convergence_window >= self.max_iterations:
            raise ValueError("convergence_window must be smaller than max_iterations")
        if self.preference != MEDIAN and not np.isfinite(float(self.preference)):
            raise ValueError("preference must be a finite number or 'median'")

    def to_dict(self) -> dict:
        return {
            "damping": self.damping,
            "max_iterations": self.max_iterations,
            "convergence_window": self.convergence_window,
            "preference": self.preference,
        }


@dataclass(frozen=True, eq=False)
class Codebook:
    """Exemplar vectors; symbol ``k`` stands for ``exemplars[k]``."""

    exemplars: np.ndarray

    def __post_init__(self) -> None:
        ex = np.array(self.exemplars, dtype=float)
        if ex.ndim == 1:
            ex = ex[None]
        if ex.ndim != 2 or ex.shape[0] == 0:
            raise ValueError("codebook needs at least one exemplar")
        ex.setflags(write=False)
        object.__setattr__(self, "exemplars", ex)

    @property
    def size(self) -> int:
        return self.exemplars.shape[0]

    @property
    def dimension(self) -> int:
        return self.exemplars.shape[1]

    def assign(self, v) -> np.ndarray | int:
        """Nearest-exemplar symbol for a vector, or for each row of a matrix."""
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        rows = v[None] if single else v
        if rows.shape[1] != self.dimension:
            raise ValueError(f"dimension mismatch: codebook has {self.dimension}, got {rows.shape[1]}")
        d2 = (
            np.sum(rows**2, axis=1)[:, None]
            - 2.0 * rows @ self.exemplars.T
            + np.sum(self.exemplars**2, axis=1)[None]
        )
        # Expanded distances can misorder near-ties; rescore the close ones exactly.
        best = d2.min(axis=1, keepdims=True)
        near = d2 <= best + 1e-9 * (1.0 + np.abs(best))
        out = np.empty(rows.shape[0], dtype=int)
        for i in range(rows.shape[0]):
            cand = np.flatnonzero(near[i])
            if cand.size == 1:
                out[i] = cand[0]
            else:
                exact = np.sum((self.exemplars[cand] - rows[i]) ** 2, axis=1)
                out[i] = cand[np.argmin(exact)]
        return int(out[0]) if single else out

    def to_dict(self) -> dict:
        return {"exemplars": self.exemplars.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Codebook":
        return cls(np.array(data["exemplars"], dtype=float))


def assign_symbol(cb: Codebook, v) -> int:
    return cb.assign(v)


def similarity_matrix(rows, preference: float | str = MEDIAN) -> np.ndarray:
    """Negative squared Euclidean distances; the diagonal holds the preference."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[0] == 0:
        raise ValueError("need at least one row")
    if not np.all(np.isfinite(rows)):
        raise ValueError("rows contain non-finite values")
    sq = np.sum(rows**2, axis=1)
    s = -(sq[:, None] - 2.0 * rows @ rows.T + sq[None])
    np.minimum(s, 0.0, out=s)
    s = 0.5 * (s + s.T)
    n = rows.shape[0]
    if preference == MEDIAN:
        pref = float(np.median(s[~np.eye(n, dtype=bool)])) if n > 1 else 0.0
    else:
        pref = float(preference)
    np.fill_diagonal(s, pref)
    return s


@dataclass(frozen=True, eq=False)
class ApResult:
    codebook: Codebook
    labels: np.ndarray
    exemplar_indices: np.ndarray
    iterations: int
    converged: bool


def affinity_propagation(s, cfg: ApConfig = ApConfig(), rows=None) -> ApResult:
    """Cluster by responsibility/availability message passing.

    ``s`` is a square similarity matrix with preferences on its diagonal.
    ``rows`` are the data vectors the exemplars are taken from; when omitted
    the codebook holds the exemplars' similarity rows instead.
    """
    s = np.array(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise ValueError("similarity matrix must be square and non-empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix contains non-finite values")
    n = s.shape[0]
    source = np.asarray(rows, dtype=float) if rows is not None else s

    def result(exemplars: np.ndarray, iterations: int, converged: bool) -> ApResult:
        labels = exemplars[np.argmax(s[:, exemplars], axis=1)]
        labels[exemplars] = exemplars
        symbols = np.searchsorted(exemplars, labels)
        return ApResult(Codebook(source[exemplars]), symbols, exemplars, iterations, converged)

    off = s[~np.eye(n, dtype=bool)]
    if n == 1 or np.all(off == off[0]) and np.all(np.diag(s) == s[0, 0]):
        # Fully symmetric input: messages cannot single out an exemplar.
        if n > 1 and s[0, 0] > off[0]:
            return result(np.arange(n), 0, True)
        return result(np.array([0]), 0, True)

    # Deterministic tie-break: earlier rows get a marginally higher preference,
    # otherwise mirror-symmetric points oscillate together.
    spread = float(off.max() - off.min())
    s[np.diag_indices(n)] -= spread * 1e-10 * np.arange(n) / n

    lam = cfg.damping
    R = np.zeros_like(s)
    A = np.zeros_like(s)
    tmp = np.empty_like(s)
    idx = np.arange(n)
    history = np.zeros((n, cfg.convergence_window), dtype=bool)
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        # responsibilities
        np.add(A, s, out=tmp)
        first = np.argmax(tmp, axis=1)
        top = tmp[idx, first]
        tmp[idx, first] = -np.inf
        second = tmp.max(axis=1)
        np.subtract(s, top[:, None], out=tmp)
        tmp[idx, first] = s[idx, first] - second
        R *= lam
        R += (1.0 - lam) * tmp

        # availabilities
        np.maximum(R, 0.0, out=tmp)
        tmp[idx, idx] = R[idx, idx]
        tmp -= tmp.sum(axis=0)[None]
        diag = tmp[idx, idx].copy()
        np.clip(tmp, 0.0, np.inf, out=tmp)
        tmp[idx, idx] = diag
        A *= lam
        A -= (1.0 - lam) * tmp

        is_exemplar = (np.diag(A) + np.diag(R)) > 0
        history[:, it % cfg.convergence_window] = is_exemplar
        if it >= cfg.convergence_window:
            stable = history.sum(axis=1)
            if np.all((stable == 0) | (stable == cfg.convergence_window)) and is_exemplar.any():
                converged = True
                break

    exemplars = np.flatnonzero(np.diag(A) + np.diag(R) > 0)
    if exemplars.size == 0:
        raise ValueError("affinity propagation found no exemplar; raise the preference")
    if not converged:
        logger.warning("affinity propagation did not converge in %d iterations", cfg.max_iterations)
    return result(_refine(s, exemplars), it, converged)


def _refine(s: np.ndarray, exemplars: np.ndarray) -> np.ndarray:
    """Re-pick each cluster's exemplar as the member with the largest
    summed similarity to its cluster (preference on the diagonal)."""
    labels = np.argmax(s[:, exemplars], axis=1)
    labels[exemplars] = np.arange(exemplars.size)
    refined = []
    for k in range(exemplars.size):
        members = np.flatnonzero(labels == k)
        refined.append(members[np.argmax(s[np.ix_(members, members)].sum(axis=0))])
    return np.unique(refined)


def fit_codebook(rows, cfg: ApConfig = ApConfig()) -> ApResult:
    """Affinity propagation on ``rows`` with negative squared distances."""
    rows = np.asarray(rows, dtype=float)
    return affinity_propagation(similarity_matrix(rows, cfg.preference), cfg, rows=rows)
