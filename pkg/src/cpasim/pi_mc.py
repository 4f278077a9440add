"""Monte Carlo estimates of the node recovery probabilities pi_j.

*micro* mode simulates a single degree-j node reduced to degree one: the
target and j-1 interferers share a pilot, each interferer is removed with an
independent power value ``||h'||^2`` taken from another slot, and the users
active on the other pilots of the slot add interference. Given the node,
each of those users contributes ``|phi^H h_l|^2 ~ ||phi||^2 Exp(1)``
independently, so their number N ~ Poisson(beta (tau - 1)) is averaged out
in closed form: with ``x`` the remaining SINR budget in units of
``||phi||^2``, ``Pr(sum_{i<=N} E_i <= x) = Pr(N <= A)``, ``A ~ Poisson(x)``,
a Skellam CDF. One set of draws therefore serves every beta.

*frame* mode tallies, over full SIC runs, how often a node of original
degree j that was tested at residual degree one passed.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammainc
from scipy.stats import skellam

from .analysis import PiTable
from .channel import crandn, trapezoid_sizes
from .config import STREAM_PI, SystemConfig, rng_stream
from .receiver import config_threshold
from .sic import simulate

log = logging.getLogger(__name__)

_CHUNK = 2048


@dataclass(frozen=True)
class PiEstimate:
    degrees: np.ndarray
    pi: np.ndarray
    stderr: np.ndarray
    trials: np.ndarray
    mode: str

    def entry(self, j: int):
        idx = np.flatnonzero(self.degrees == j)
        if idx.size == 0:
            raise KeyError(f"degree {j} not observed")
        i = idx[0]
        return float(self.pi[i]), float(self.stderr[i]), int(self.trials[i])

    def table(self) -> PiTable:
        """PiTable over 1..max observed degree; unobserved degrees copy the previous value."""
        jmax = int(self.degrees.max())
        vals = np.empty(jmax)
        last = 1.0
        lookup = dict(zip(self.degrees.tolist(), self.pi.tolist()))
        for j in range(1, jmax + 1):
            last = lookup.get(j, last)
            vals[j - 1] = last
        return PiTable(np.minimum.accumulate(vals))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["degree", "estimate", "stderr", "trials", "mode"])
            for row in zip(self.degrees, self.pi, self.stderr, self.trials):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3]), self.mode])

    @classmethod
    def from_csv(cls, path) -> "PiEstimate":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([int(r["degree"]) for r in rows]), np.array([float(r["estimate"]) for r in rows]),
                   np.array([float(r["stderr"]) for r in rows]), np.array([int(r["trials"]) for r in rows]),
                   rows[0]["mode"] if rows else "micro")


def binomial_stderr(p, n):
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, np.sqrt(p * (1 - p) / np.maximum(n, 1)), np.nan)


def compound_exp_cdf(x: np.ndarray, mu: float) -> np.ndarray:
    """``Pr(E_1 + ... + E_N <= x)`` for ``N ~ Poisson(mu)``, ``E_i ~ Exp(1)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x >= 0
    if mu <= 0:
        out[pos] = 1.0
        return out
    hi = pos & (x > mu + 40.0 * np.sqrt(mu + 1.0) + 60.0)
    out[hi] = 1.0
    mid = pos & ~hi
    at0 = mid & (x == 0)
    out[at0] = np.exp(-mu)
    mid &= x > 0
    if np.any(mid):
        out[mid] = skellam.cdf(0, mu, x[mid])
    return out


def _fixed_count_cdf(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n <= 0:
        return (x >= 0).astype(float)
    return np.where(x > 0, gammainc(n, np.maximum(x, 0.0)), 0.0)


def _node_budget(j: int, M: int, tau: int, sigma2: float, thr: float, n: int, rng) -> np.ndarray:
    """SINR budget ``x`` (in units of ||phi||^2) left for other-pilot users, per trial."""
    p = j + 1  # j user channels, then the projected pilot noise
    r, n_off = trapezoid_sizes(np.array([p]), M)
    r = int(r[0])
    n_off = int(n_off[0])
    T = np.zeros((n, r, p), dtype=complex)
    ii = np.arange(r)
    T[:, ii, ii] = np.sqrt(rng.gamma((M - ii).astype(float), 1.0, size=(n, r)))
    iu = np.triu_indices(r, 1, p)
    T[:, iu[0], iu[1]] = crandn(rng, (n, n_off))
    T[:, :, j] *= np.sqrt(sigma2 / tau)
    phi = T.sum(axis=2)
    c = np.einsum("ti,til->tl", phi.conj(), T[:, :, :j])
    phi2 = np.sum(np.abs(phi) ** 2, axis=1)
    ghat = rng.gamma(float(M), 1.0, size=(n, j - 1))
    sig = np.abs(c[:, 0]) ** 2
    interf = np.sum(np.abs(c[:, 1:] - ghat) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (sig / thr - interf - phi2 * sigma2) / phi2
    return np.nan_to_num(x, nan=-1.0)


def _micro_success(j, cfg: SystemConfig, trials: int, rng, loads, others: str) -> np.ndarray:
    thr = config_threshold(cfg)
    acc = np.zeros(len(loads))
    done = 0
    while done < trials:
        n = min(_CHUNK, trials - done)
        x = _node_budget(j, cfg.M, cfg.tau, cfg.sigma2, thr, n, rng)
        for i, load in enumerate(loads):
            if others == "fixed":
                acc[i] += _fixed_count_cdf(x, int(load)).sum()
            else:
                acc[i] += compound_exp_cdf(x, float(load)).sum()
        done += n
    return acc / trials


def _loads(cfg, betas, others, cross_pilot):
    if not cross_pilot:
        return [0.0] * len(betas)
    if others == "fixed":
        return [cfg.tau - 1] * len(betas)
    if others != "poisson":
        raise ValueError("others must be 'poisson' or 'fixed'")
    return [b * (cfg.tau - 1) for b in betas]


def pi_micro(j: int, cfg: SystemConfig, trials: int = 10_000, rng: np.random.Generator | None = None, *,
             beta: float | None = None, others: str = "poisson", cross_pilot: bool = True) -> PiEstimate:
    """pi_j for one degree at load ``beta`` (default ``cfg.beta``).

    ``others='fixed'`` puts exactly tau-1 users on the other pilots, as in a
    fully scheduled slot.
    """
    if j < 1:
        raise ValueError("degree must be >= 1")
    rng = rng_stream(cfg.seed, STREAM_PI, j) if rng is None else rng
    beta = cfg.beta if beta is None else beta
    p = float(_micro_success(j, cfg, trials, rng, _loads(cfg, [beta], others, cross_pilot), others)[0])
    return PiEstimate(np.array([j]), np.array([p]), binomial_stderr([p], [trials]), np.array([trials]), "micro")


@dataclass(frozen=True)
class PiGrid:
    """Micro-mode pi_j for j = 1..j_max at each load in ``betas``; ``pi[j-1, b]``."""

    betas: np.ndarray
    pi: np.ndarray
    trials: int
    mode: str = "micro"

    def column(self, beta: float) -> np.ndarray:
        b = np.asarray(self.betas)
        hit = np.flatnonzero(np.isclose(b, beta, rtol=0, atol=1e-9))
        if hit.size:
            return self.pi[:, hit[0]]
        if beta < b.min() or beta > b.max():
            raise KeyError(f"beta={beta} outside the tabulated range")
        return np.array([np.interp(beta, b, row) for row in self.pi])

    def table(self, beta: float) -> PiTable:
        return PiTable(np.minimum.accumulate(self.column(beta)))

    def estimate(self, beta: float) -> PiEstimate:
        col = self.column(beta)
        deg = np.arange(1, col.size + 1)
        n = np.full(col.size, self.trials)
        return PiEstimate(deg, col, binomial_stderr(col, n), n, self.mode)


def pi_micro_grid(cfg: SystemConfig, betas, trials: int = 10_000, j_max: int = 24, *,
                  others: str = "poisson", cross_pilot: bool = True, floor: float = 1e-6,
                  cache: "PiCache | None" = None) -> PiGrid:
    """pi_j for every j <= j_max and every beta, sharing draws across beta.

    Degrees are scanned upward and the scan stops once pi_j < ``floor`` at
    every beta; the remaining entries are set to zero.
    """
    betas = np.asarray(betas, dtype=float)
    key = None
    if cache is not None:
        key = cache.key(cfg, betas=betas.tolist(), trials=trials, j_max=j_max, others=others,
                        cross_pilot=cross_pilot, mode="micro")
        hit = cache.get(key)
        if hit is not None:
            return hit
    loads = _loads(cfg, betas, others, cross_pilot)
    pi = np.zeros((j_max, betas.size))
    for j in range(1, j_max + 1):
        pi[j - 1] = _micro_success(j, cfg, trials, rng_stream(cfg.seed, STREAM_PI, j), loads, others)
        if pi[j - 1].max() < floor:
            break
    grid = PiGrid(betas, pi, trials)
    if cache is not None:
        cache.put(key, grid)
    return grid


def pi_frame(cfg: SystemConfig, trials: int, *, model: str = "gram", threads: int = 1,
             first_trial: int = 0) -> PiEstimate:
    """pi_j tallied from full SIC runs, by original node degree."""
    _, results = simulate(cfg, trials, threads=threads, first_trial=first_trial, keep=True, model=model)
    tested = np.zeros(0, dtype=np.int64)
    passed = np.zeros(0, dtype=np.int64)
    for res in results:
        deg = res.node_degree[res.node_tested]
        ok = res.node_pass[res.node_tested]
        m = int(deg.max()) + 1 if deg.size else 0
        if m > tested.size:
            tested = np.pad(tested, (0, m - tested.size))
            passed = np.pad(passed, (0, m - passed.size))
        np.add.at(tested, deg, 1)
        np.add.at(passed, deg[ok], 1)
    degrees = np.flatnonzero(tested)
    degrees = degrees[degrees >= 1]
    est = passed[degrees] / tested[degrees]
    return PiEstimate(degrees, est, binomial_stderr(est, tested[degrees]), tested[degrees], "frame")


def pi_frame_grid(cfg: SystemConfig, betas, trials: int = 40, alpha: float = 1.6, *,
                  model: str = "gram", threads: int = 1, cache: "PiCache | None" = None) -> PiGrid:
    """Frame-mode pi_j at each beta, measured at frame length ``alpha``.

    ``alpha`` should be large enough for decoding to run to completion over
    the beta range, otherwise high degrees are never reduced to one and the
    table is biased upward. Unobserved degrees follow :meth:`PiEstimate.table`.
    """
    betas = np.asarray(betas, dtype=float)
    key = None
    if cache is not None:
        key = cache.key(cfg, K=cfg.K, betas=betas.tolist(), trials=trials, alpha=alpha, model=model, mode="frame")
        hit = cache.get(key)
        if hit is not None:
            return hit
    tables = [pi_frame(cfg.with_scheme(alpha, b), trials, model=model, threads=threads).table() for b in betas]
    j_max = max(t.j_max for t in tables)
    pi = np.column_stack([t.extended(j_max) for t in tables])
    grid = PiGrid(betas, pi, trials, "frame")
    if cache is not None:
        cache.put(key, grid)
    return grid


class PiCache:
    """Directory of ``.npz`` pi grids keyed by everything that determines them."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, PiGrid] = {}

    @staticmethod
    def key(cfg: SystemConfig, **extra) -> str:
        fields = dict(M=cfg.M, tau=cfg.tau, R=cfg.R, sigma2=cfg.sigma2, bits=cfg.bits, L=cfg.L,
                      margin_db=cfg.margin_db, uncoded_rate1=cfg.uncoded_rate1, seed=cfg.seed, **extra)
        blob = json.dumps(fields, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:20]

    def get(self, key: str) -> PiGrid | None:
        if key in self._mem:
            return self._mem[key]
        path = self.dir / f"pi_{key}.npz"
        if not path.exists():
            return None
        with np.load(path) as z:
            grid = PiGrid(z["betas"], z["pi"], int(z["trials"]), str(z["mode"]))
        log.info("pi cache hit %s", path.name)
        self._mem[key] = grid
        return grid

    def put(self, key: str, grid: PiGrid) -> None:
        self._mem[key] = grid
        np.savez(self.dir / f"pi_{key}.npz", betas=grid.betas, pi=grid.pi, trials=grid.trials, mode=grid.mode)
