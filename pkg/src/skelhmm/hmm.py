"""Discrete-observation hidden Markov models.

Forward likelihoods use per-step scaling, Viterbi works in log space, and
training is multi-sequence Baum-Welch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-9


class ZeroProbabilityError(ValueError):
    """The observations are impossible under the model (exact zero, not underflow)."""


@dataclass(frozen=True, eq=False)
class DiscreteHmm:
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    label: Hashable = None

    def __post_init__(self) -> None:
        pi = np.array(self.initial, dtype=float)
        a = np.array(self.transition, dtype=float)
        b = np.array(self.emission, dtype=float)
        s = pi.shape[0]
        if pi.ndim != 1 or a.shape != (s, s) or b.ndim != 2 or b.shape[0] != s:
            raise ValueError(f"inconsistent shapes: initial {pi.shape}, transition {a.shape}, emission {b.shape}")
        for name, table in (("initial", pi[None]), ("transition", a), ("emission", b)):
            if not np.all(np.isfinite(table)) or np.any(table < 0):
                raise ValueError(f"{name} probabilities must be finite and nonnegative")
            if np.any(np.abs(table.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
                raise ValueError(f"{name} rows must sum to 1")
        for arr in (pi, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "initial", pi)
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "emission", b)

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emission.shape[1]

    def relabel(self, label: Hashable) -> "DiscreteHmm":
        return DiscreteHmm(self.initial, self.transition, self.emission, label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_states": self.n_states,
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "emission": self.emission.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteHmm":
        return cls(data["initial"], data["transition"], data["emission"], data.get("label"))


def _check_obs(m: DiscreteHmm, obs) -> np.ndarray:
    obs = np.asarray(obs)
    if obs.ndim != 1 or obs.size == 0:
        raise ValueError("observation sequence must be a non-empty 1-D sequence")
    if not np.issubdtype(obs.dtype, np.integer):
        raise ValueError("observation symbols must be integers")
    if obs.min() < 0 or obs.max() >= m.n_symbols:
        bad = int(obs[(obs < 0) | (obs >= m.n_symbols)][0])
        raise ValueError(f"symbol {bad} out of range for alphabet of size {m.n_symbols}")
    return obs.astype(np.intp)


def _forward(m: DiscreteHmm, obs: np.ndarray):
    """Scaled forward pass. Returns ``(alpha_hat, scales)``; a zero scale
    means the prefix up to that step is impossible and later rows are zero."""
    T, S = obs.size, m.n_states
    lik = m.emission[:, obs].T  # (T, S)
    alpha = np.zeros((T, S))
    scales = np.zeros(T)
    a = m.initial * lik[0]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ m.transition) * lik[t]
        c = a.sum()
        scales[t] = c
        if c == 0.0:
            break
        alpha[t] = a / c
    return alpha, scales


def forward_log_likelihood(m: DiscreteHmm, obs) -> float:
    """``log P(obs | m)``; ``-inf`` when the observations are impossible."""
    _, scales = _forward(m, _check_obs(m, obs))
    if np.any(scales == 0.0):
        return -np.inf
    return float(np.sum(np.log(scales)))


def viterbi(m: DiscreteHmm, obs) -> tuple[np.ndarray, float]:
    """Most probable state path and its joint log-probability.

    Ties go to the lower state index. Raises ``ZeroProbabilityError`` when
    every path has probability exactly zero.
    """
    obs = _check_obs(m, obs)
    with np.errstate(divide="ignore"):
        log_pi = np.log(m.initial)
        log_a = np.log(m.transition)
        log_b = np.log(m.emission)
    T, S = obs.size, m.n_states
    back = np.zeros((T, S), dtype=np.intp)
    delta = log_pi + log_b[:, obs[0]]
    for t in range(1, T):
        scores = delta[:, None] + log_a
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(S)] + log_b[:, obs[t]]
    best = float(np.max(delta))
    if best == -np.inf:
        raise ZeroProbabilityError("every state path has zero probability for this observation sequence")
    path = np.empty(T, dtype=np.intp)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def _smooth(rows: np.ndarray, eps: float) -> np.ndarray:
    if eps <= 0:
        return rows
    rows = rows + eps
    return rows / rows.sum(axis=1, keepdims=True)


class _Batch:
    """Sequences padded to a common length so the recursions run once per
    time step for all of them. Padding steps carry likelihood 1."""

    def __init__(self, data: Sequence[np.ndarray]):
        self.lengths = np.array([d.size for d in data])
        self.obs = np.zeros((len(data), self.lengths.max()), dtype=np.intp)
        for i, d in enumerate(data):
            self.obs[i, : d.size] = d
        self.valid = np.arange(self.obs.shape[1])[None] < self.lengths[:, None]  # (N, T)


def _e_step(m: DiscreteHmm, batch: _Batch):
    """Expected counts and total log-likelihood; ``(-inf, None)`` if any
    sequence is impossible under ``m``."""
    N, T = batch.obs.shape
    S = m.n_states
    lik = np.where(batch.valid[..., None], m.emission.T[batch.obs], 1.0)  # (N, T, S)

    alpha = np.empty((N, T, S))
    scales = np.ones((N, T))
    a = m.initial * lik[:, 0]
    for t in range(T):
        if t:
            step = (alpha[:, t - 1] @ m.transition) * lik[:, t]
            a = np.where(batch.valid[:, t, None], step, alpha[:, t - 1])
        c = a.sum(axis=1)
        if np.any(c == 0.0):
            return -np.inf, None
        scales[:, t] = np.where(batch.valid[:, t], c, 1.0)
        alpha[:, t] = a / c[:, None]
    total = float(np.sum(np.log(scales)))

    beta = np.ones((N, T, S))
    for t in range(T - 2, -1, -1):
        step = (lik[:, t + 1] * beta[:, t + 1]) @ m.transition.T / scales[:, t + 1, None]
        beta[:, t] = np.where(batch.valid[:, t + 1, None], step, 1.0)

    gamma = alpha * beta
    gamma /= gamma.sum(axis=2, keepdims=True)
    gamma *= batch.valid[..., None]
    pi_acc = gamma[:, 0].sum(axis=0)
    pair = (lik[:, 1:] * beta[:, 1:] / scales[:, 1:, None]) * batch.valid[:, 1:, None]
    a_acc = m.transition * np.einsum("nti,ntj->ij", alpha[:, :-1], pair)
    b_acc = np.zeros((S, m.n_symbols))
    np.add.at(b_acc.T, batch.obs[batch.valid], gamma[batch.valid])
    return total, (pi_acc, a_acc, b_acc)


def _m_step(m: DiscreteHmm, stats, smoothing: float) -> DiscreteHmm:
    pi_acc, a_acc, b_acc = stats

    def rows(acc: np.ndarray, old: np.ndarray) -> np.ndarray:
        sums = acc.sum(axis=1, keepdims=True)
        # states with no expected visits keep their previous rows
        return np.where(sums > 0, acc / np.where(sums > 0, sums, 1.0), old)

    initial = pi_acc / pi_acc.sum()
    return DiscreteHmm(
        initial,
        rows(a_acc, m.transition),
        _smooth(rows(b_acc, m.emission), smoothing),
        m.label,
    )


def baum_welch(
    init: DiscreteHmm,
    data: Sequence[Sequence[int]],
    max_iters: int = 100,
    tol: float = 1e-4,
    smoothing: float = 0.0,
    return_history: bool = False,
):
    """Re-estimate ``init`` on several symbol sequences by expectation-maximization.

    Stops once the total log-likelihood improves by less than ``tol`` nats or
    after ``max_iters`` re-estimations. ``smoothing`` adds that mass to every
    emission entry after each M-step before renormalizing; with 0 the total
    log-likelihood never decreases.

    Returns the fitted model, or ``(model, history)`` when ``return_history``
    is set, where ``history`` lists the total log-likelihood of every model
    visited, the returned one last.
    """
    if not data:
        raise ValueError("no training sequences")
    batch = _Batch([_check_obs(init, obs) for obs in data])
    model = init
    history: list[float] = []
    for it in range(max_iters + 1):
        ll, stats = _e_step(model, batch)
        if ll == -np.inf:
            raise ZeroProbabilityError(
                "training data has zero probability under the model; enable emission smoothing"
            )
        history.append(ll)
        if it == max_iters or (it > 0 and ll - history[-2] < tol):
            break
        model = _m_step(model, stats, smoothing)
    return (model, history) if return_history else model


class Classification(NamedTuple):
    """Winning label (``None`` when rejected) and every model's log-likelihood."""

    label: Hashable
    log_likelihoods: dict

    @property
    def rejected(self) -> bool:
        return self.label is None


def classify(models: Sequence[DiscreteHmm], obs) -> Classification:
    """Maximum-likelihood label; ties go to the lowest label.

    If every model assigns the observations zero probability the result is
    rejected rather than an arbitrary label.
    """
    if not models:
        raise ValueError("no models to classify with")
    alphabet = {m.n_symbols for m in models}
    if len(alphabet) != 1:
        raise ValueError(f"models disagree on alphabet size: {sorted(alphabet)}")
    scores = {m.label: forward_log_likelihood(m, obs) for m in models}
    best = max(scores.values())
    if best == -np.inf:
        return Classification(None, scores)
    return Classification(min(k for k, v in scores.items() if v == best), scores)


def random_hmm(
    n_states: int,
    n_symbols: int,
    rng: np.random.Generator,
    label: Hashable = None,
    concentration: float = 1.0,
) -> DiscreteHmm:
    """Model with every row drawn from a symmetric Dirichlet."""
    alpha_s = np.full(n_states, concentration)
    return DiscreteHmm(
        rng.dirichlet(alpha_s),
        rng.dirichlet(alpha_s, size=n_states),
        rng.dirichlet(np.full(n_symbols, concentration), size=n_states),
        label,
    )


def sample(m: DiscreteHmm, length: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(states, symbols)`` of the given length."""
    states = np.empty(length, dtype=np.intp)
    symbols = np.empty(length, dtype=np.intp)
    s = rng.choice(m.n_states, p=m.initial)
    for t in range(length):
        if t:
            s = rng.choice(m.n_states, p=m.transition[s])
        states[t] = s
        symbols[t] = rng.choice(m.n_symbols, p=m.emission[s])
    return states, symbols


@dataclass(frozen=True)
class HmmConfig:
    n_states: int = 3
    restarts: int = 3
    smoothing: float = 1e-6
    max_iters: int = 100
    tol: float = 1e-4
    topology: str = "ergodic"

    def __post_init__(self) -> None:
        if self.n_states < 1 or self.restarts < 1 or self.max_iters < 1:
            raise ValueError("n_states, restarts and max_iters must be positive")
        if self.smoothing < 0 or self.tol < 0:
            raise ValueError("smoothing and tol must be nonnegative")
        if self.topology not in ("ergodic", "left_to_right"):
            raise ValueError(f"unknown HMM topology {self.topology!r}")

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "restarts": self.restarts,
            "smoothing": self.smoothing,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "topology": self.topology,
        }


def initial_model(
    data: Sequence[np.ndarray],
    n_symbols: int,
    cfg: HmmConfig,
    rng: np.random.Generator,
    label: Hashable = None,
) -> DiscreteHmm:
    """Dirichlet draws for initial/transition; emissions blend symbol
    frequencies with Dirichlet noise so states start distinct."""
    S = cfg.n_states
    initial = rng.dirichlet(np.ones(S))
    transition = rng.dirichlet(np.ones(S), size=S)
    if cfg.topology == "left_to_right":
        transition = np.triu(transition)
        transition /= transition.sum(axis=1, keepdims=True)
        initial = np.eye(S)[0]
    counts = np.bincount(np.concatenate(data), minlength=n_symbols).astype(float)
    freq = counts / counts.sum()
    emission = 0.5 * freq + 0.5 * rng.dirichlet(np.ones(n_symbols), size=S)
    return DiscreteHmm(initial, transition, _smooth(emission, cfg.smoothing), label)


@dataclass
class TrainingTrace:
    label: Hashable
    histories: list[list[float]] = field(default_factory=list)
    chosen: int = 0


def train_hmm(
    data: Sequence[Sequence[int]],
    n_symbols: int,
    cfg: HmmConfig = HmmConfig(),
    seed: int = 0,
    label: Hashable = None,
) -> tuple[DiscreteHmm, TrainingTrace]:
    """Baum-Welch from ``cfg.restarts`` seeded starts; keeps the best final likelihood."""
    seqs = [np.asarray(d, dtype=np.intp) for d in data]
    if not seqs or any(s.size == 0 for s in seqs):
        raise ValueError(f"label {label!r}: need at least one non-empty symbol sequence")
    rng = np.random.default_rng(seed)
    trace = TrainingTrace(label)
    best, best_ll = None, -np.inf
    for r in range(cfg.restarts):
        init = initial_model(seqs, n_symbols, cfg, rng, label)
        model, history = baum_welch(init, seqs, cfg.max_iters, cfg.tol, cfg.smoothing, return_history=True)
        trace.histories.append(history)
        if best is None or history[-1] > best_ll:
            best, best_ll, trace.chosen = model, history[-1], r
    return best, trace
