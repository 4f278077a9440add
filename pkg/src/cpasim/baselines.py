"""Reference schemes (framed ALOHA, scheduled massive MIMO) and downlink delay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig

# E[Delta_k] when p_a' = 0
INFINITE_DELAY = float("inf")


@dataclass
class BaselineReport:
    scheme: str
    gamma: float
    p_a: float | None = None
    params: dict = field(default_factory=dict)


def singleton_probability(p_a: float, K: int, tau: int) -> float:
    """Pr(|A_n^j| = 1) = K (p_a/tau) (1 - p_a/tau)^(K-1)."""
    x = p_a / tau
    return K * x * (1.0 - x) ** (K - 1)


def aloha_optimal_pa(K: int, tau: int) -> float:
    """Maximiser of Pr(|A_n^j| = 1) over p_a in [0, 1]: ``min(1, tau / K)``."""
    if K < 1 or tau < 1:
        raise ValueError("K and tau must be positive")
    return min(1.0, tau / K)


def aloha_optimal_pa_grid(K: int, tau: int, n: int = 200_001) -> float:
    """Grid-search version of :func:`aloha_optimal_pa`, used as a cross-check."""
    grid = np.linspace(0.0, 1.0, n)
    x = grid / tau
    with np.errstate(divide="ignore"):
        obj = np.log(K) + np.log(x) + (K - 1) * np.log1p(-x)
    return float(grid[np.nanargmax(np.where(np.isfinite(obj), obj, -np.inf))])


def aloha_throughput(cfg: SystemConfig, pi1: float) -> float:
    """Singletons only, no SIC: ``tau Pr(|A|=1) pi_1 R D / L`` per channel use."""
    return cfg.tau * singleton_probability(cfg.p_a, cfg.K, cfg.tau) * pi1 * cfg.R * cfg.D / cfg.L


def smm_throughput(cfg: SystemConfig, pi1: float) -> float:
    """Every pilot of every slot carries exactly one scheduled user."""
    return cfg.tau * pi1 * cfg.R * cfg.D / cfg.L


@dataclass(frozen=True)
class DelayModel:
    """Slots until a user is active *and* alone on its pilot.

    ``pmf(d)`` is the geometric law on d = 1, 2, ... (d counts the successful
    slot). ``mean`` is the expected number of slots waited *before* that slot,
    ``(1 - p')/p'``.
    """

    p_success: float

    def pmf(self, delta) -> np.ndarray:
        d = np.asarray(delta)
        p = self.p_success
        return np.where(d >= 1, p * (1.0 - p) ** (np.maximum(d, 1) - 1), 0.0)

    @property
    def mean(self) -> float:
        if self.p_success <= 0:
            return INFINITE_DELAY
        return (1.0 - self.p_success) / self.p_success


def downlink_delay(p_a: float, tau: int, K: int) -> DelayModel:
    if not 0 <= p_a <= 1 or tau < 1 or K < 1:
        raise ValueError("invalid delay parameters")
    return DelayModel(p_a * (1.0 - p_a / tau) ** (K - 1))


def simulate_delay(p_a: float, tau: int, K: int, n_samples: int, rng: np.random.Generator,
                   chunk: int = 2000, oversample: float = 3.0) -> np.ndarray:
    """Waiting times (slots before a collision-free activation) from a full-population run.

    Every slot draws activity and pilots for all K users; a user succeeds when
    active and alone on its pilot. Gaps between consecutive successes of the
    same user are samples of the wait. The run lasts long enough to collect
    ``oversample * n_samples`` gaps, and ``n_samples`` of them are kept at
    random, which keeps the short-gap bias of the finite window small.
    """
    p = downlink_delay(p_a, tau, K).p_success
    if p <= 0:
        raise ValueError("success probability is zero; delay is infinite")
    n_slots = int(np.ceil(oversample * n_samples / (K * p)))
    last = np.full(K, -1, dtype=np.int64)
    gaps = []
    rows = np.repeat(np.arange(chunk), K)
    for t0 in range(0, n_slots, chunk):
        n = min(chunk, n_slots - t0)
        act = rng.random((n, K)) < p_a
        key = np.where(act, rng.integers(0, tau, size=(n, K)), tau)
        counts = np.zeros((n, tau + 1), dtype=np.int64)
        np.add.at(counts, (rows[: n * K], key.ravel()), 1)
        alone = act & (np.take_along_axis(counts, key, axis=1) == 1)
        t, k = np.nonzero(alone)
        order = np.lexsort((t, k))
        t, k = t[order] + t0, k[order]
        prev = np.concatenate(([-1], k[:-1]))
        prev_t = np.where(k == prev, np.concatenate(([0], t[:-1])), last[k])
        fresh = prev_t < 0
        # the very first success counts from the start of the run (memoryless)
        gaps.append(np.where(fresh, t, t - prev_t - 1))
        if t.size:
            ends = np.r_[k[1:] != k[:-1], True]
            last[k[ends]] = t[ends]
    gaps = np.concatenate(gaps)
    if gaps.size < n_samples:
        raise RuntimeError("window too short for the requested number of samples")
    return rng.choice(gaps, size=n_samples, replace=False)
