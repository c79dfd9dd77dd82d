"""Differential-privacy release of rewards and actions, pseudonym entropy,
and the interference cap on action flips."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ChannelMode(enum.Enum):
    REWARD_NOISE = "RewardNoise"
    ACTION_FLIP = "ActionFlip"


def pseudonym_entropy(probs: Sequence[float]) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


@dataclass(frozen=True)
class PseudonymProfile:
    probs: tuple[float, ...]

    @property
    def entropy_bits(self) -> float:
        return pseudonym_entropy(self.probs)


def interference_bound(lambda_j: float, entropy_h: float) -> float:
    return (lambda_j + entropy_h) / 4.0


def rr_flip_probability(eta: float, n_actions: int) -> float:
    """k-ary randomized response flip mass that is exactly eta-DP."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if n_actions < 2:
        return 0.0
    # (n-1)/(e^eta + n - 1), written to stay finite for huge eta
    return (n_actions - 1) / (math.exp(min(eta, 700.0)) + n_actions - 1)


def flip_probability(eta: float, n_actions: int, entropy_h: float, lambda_j: float) -> float:
    """Randomized-response flip mass clamped by the interference bound.

    A bound <= 0 disables the channel (always truthful).
    """
    bound = interference_bound(lambda_j, entropy_h)
    if bound <= 0:
        return 0.0
    return min(rr_flip_probability(eta, n_actions), bound)


def perturb_reward(true_reward: float, eta: float, rng: np.random.Generator,
                   sensitivity: float = 1.0) -> float:
    """Laplace mechanism with scale sensitivity/eta, clipped to [0, 1]."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    noisy = true_reward + rng.laplace(0.0, sensitivity / eta)
    return float(min(1.0, max(0.0, noisy)))


def _flip(true_action: int, n_actions: int, p_flip: float, rng: np.random.Generator) -> int:
    u = rng.random()
    if u >= p_flip:
        return true_action
    other = int(rng.integers(n_actions - 1))
    return other + 1 if other >= true_action else other


def perturb_action(true_action: int, n_actions: int, eta: float, entropy_h: float,
                   lambda_j: float, rng: np.random.Generator) -> int:
    """Report the true index w.p. 1 - p_flip, else a uniform other index."""
    if n_actions < 2:
        raise ValueError("need at least two actions")
    if not 0 <= true_action < n_actions:
        raise ValueError("true_action out of range")
    return _flip(true_action, n_actions, flip_probability(eta, n_actions, entropy_h, lambda_j), rng)


def perturb_actions(true_actions, n_actions: int, eta: float, entropy_h: float,
                    lambda_j: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``perturb_action`` over an array of true indices."""
    x = np.asarray(true_actions, dtype=np.int64)
    if n_actions < 2:
        raise ValueError("need at least two actions")
    if np.any((x < 0) | (x >= n_actions)):
        raise ValueError("true_action out of range")
    p = flip_probability(eta, n_actions, entropy_h, lambda_j)
    flips = rng.random(x.shape) < p
    other = rng.integers(n_actions - 1, size=x.shape)
    other = np.where(other >= x, other + 1, other)
    return np.where(flips, other, x)


@dataclass
class PrivacyChannel:
    eta: float
    lambda_j: float = 0.5
    mode: ChannelMode = ChannelMode.ACTION_FLIP
    reward_sensitivity: float = 1.0
    entropy_h: float = 1.0
    n_actions: int = 2
    p_flip_override: float | None = None
    disabled: bool = field(init=False, default=False)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        self.disabled = interference_bound(self.lambda_j, self.entropy_h) <= 0

    @property
    def p_flip(self) -> float:
        if self.p_flip_override is not None:
            return self.p_flip_override
        return flip_probability(self.eta, self.n_actions, self.entropy_h, self.lambda_j)

    def release(self, value, rng: np.random.Generator):
        if self.mode is ChannelMode.REWARD_NOISE:
            return perturb_reward(value, self.eta, rng, self.reward_sensitivity)
        return _flip(int(value), self.n_actions, self.p_flip, rng)


# -ln(0.00135): one-sided 3-sigma upper count for an event never observed
_ZERO_COUNT_UPPER = 6.6


@dataclass(frozen=True)
class DpReport:
    passed: bool
    max_log_ratio: float
    margin: float
    eta: float
    n_trials: int


def verify_dp(channel: PrivacyChannel, n_trials: int, rng: np.random.Generator,
              n_bins: int = 10) -> DpReport:
    """Monte-Carlo check of Pr[M(x) in A] <= e^eta Pr[M(x') in A].

    Adjacent inputs are actions 0 and 1 (or rewards 0 and 1). Events are the
    single output values (or ``n_bins`` reward bins). The log-ratio estimate
    carries a 3-sigma delta-method margin.
    """
    if n_trials < 10_000:
        raise ValueError("n_trials must be at least 1e4")
    if channel.mode is ChannelMode.ACTION_FLIP:
        n = channel.n_actions
        p = channel.p_flip
        counts = []
        for x in (0, 1):
            flips = rng.random(n_trials) < p
            others = rng.integers(n - 1, size=n_trials)
            others = np.where(others >= x, others + 1, others)
            out = np.where(flips, others, x)
            counts.append(np.bincount(out, minlength=n))
    else:
        scale = channel.reward_sensitivity / channel.eta
        edges = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
        counts = []
        for x in (0.0, 1.0):
            out = np.clip(x + rng.laplace(0.0, scale, n_trials), 0.0, 1.0)
            counts.append(np.bincount(np.searchsorted(edges, out, side="right"), minlength=n_bins))
    c0, c1 = (np.asarray(c, dtype=float) for c in counts)
    worst = -math.inf
    worst_margin = 0.0
    ok = True
    for a, b in ((c0, c1), (c1, c0)):
        for na, nb in zip(a, b):
            if na == 0 and nb == 0:
                continue
            if nb == 0:
                # unseen under x': compare against the 3-sigma upper bound on its probability
                worst = math.inf
                if math.log(na / _ZERO_COUNT_UPPER) > channel.eta:
                    ok = False
                continue
            if na == 0:
                continue
            lr = math.log(na / nb)
            margin = 3.0 * math.sqrt((1 - na / n_trials) / na + (1 - nb / n_trials) / nb)
            if lr > worst:
                worst, worst_margin = lr, margin
            if lr > channel.eta + margin:
                ok = False
    return DpReport(ok, worst, worst_margin, channel.eta, n_trials)


def adversary_inference(released_actions: Sequence[int], true_actions: Sequence[int],
                        entropy_h, threshold: float = 0.5) -> float | None:
    """Share of attack attempts where the release is truthful and the pseudonym is linkable."""
    rel = np.asarray(released_actions)
    tru = np.asarray(true_actions)
    if rel.shape != tru.shape:
        raise ValueError("sequences must have equal length")
    if rel.size == 0:
        return None
    h = np.broadcast_to(np.asarray(entropy_h, dtype=float), rel.shape)
    return float(np.mean((rel == tru) & (h < threshold)))


def binary_entropy(p: float) -> float:
    return pseudonym_entropy((p, 1.0 - p))


class EntropyTracker:
    """Per-node pseudonym entropy from add-one-smoothed attack frequencies."""

    def __init__(self, n_nodes: int):
        self.attacks = np.zeros(n_nodes)
        self.observed = np.zeros(n_nodes)

    def record(self, node: int, attacked: bool) -> None:
        self.observed[node] += 1
        self.attacks[node] += bool(attacked)

    def entropy(self, node: int) -> float:
        p = (self.attacks[node] + 1.0) / (self.observed[node] + 2.0)
        return binary_entropy(p)
