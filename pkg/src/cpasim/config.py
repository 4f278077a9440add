"""System parameters, random streams and pilot schedules."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

# stream tags, so the schedule of a trial does not depend on the channel model
STREAM_SCHEDULE = 0
STREAM_CHANNEL = 1
STREAM_SIGNAL = 2
STREAM_PI = 3
STREAM_DELAY = 4


@dataclass(frozen=True)
class SystemConfig:
    """System and scheme parameters of one CPA setup.

    ``Delta`` (frame length in slots) and ``p_a`` are the stored scheme
    parameters; ``alpha`` and ``beta`` are derived from them.
    ``uncoded_rate1`` switches the decodability rule for ``R == 1`` from the
    capacity threshold to the error-free uncoded packet threshold (see
    :func:`cpasim.receiver.sinr_threshold`).
    """

    K: int = 1000
    M: int = 400
    L: int = 64
    tau: int = 4
    sigma2: float = 0.1
    R: float = 1.0
    bits: int = 2
    p_a: float = 0.004
    Delta: int = 275
    seed: int = 0
    margin_db: float = 0.0
    uncoded_rate1: bool = True

    def __post_init__(self):
        if self.K < 1 or self.M < 1 or self.Delta < 1:
            raise ValueError("K, M and Delta must be positive")
        if not 1 <= self.tau < self.L:
            raise ValueError(f"need 1 <= tau < L, got tau={self.tau}, L={self.L}")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if not 0 < self.R <= 1:
            raise ValueError("code rate R must lie in (0, 1]")
        if not 0 <= self.p_a <= 1:
            raise ValueError("p_a must lie in [0, 1]")
        if self.bits < 1:
            raise ValueError("bits per symbol must be positive")

    @property
    def D(self) -> int:
        return self.L - self.tau

    @property
    def alpha(self) -> float:
        return self.tau * self.Delta / self.K

    @property
    def beta(self) -> float:
        return self.p_a * self.K / self.tau

    @classmethod
    def from_scheme(cls, alpha: float, beta: float, tau: int, K: int = 1000, **kwargs) -> "SystemConfig":
        """Build a config from (alpha, beta); Delta is rounded to whole slots."""
        if alpha <= 0 or beta < 0:
            raise ValueError("alpha must be positive and beta non-negative")
        delta = max(1, int(round(alpha * K / tau)))
        p_a = min(1.0, beta * tau / K)
        return cls(K=K, tau=tau, Delta=delta, p_a=p_a, **kwargs)

    def with_scheme(self, alpha: float, beta: float, tau: int | None = None) -> "SystemConfig":
        tau = self.tau if tau is None else tau
        delta = max(1, int(round(alpha * self.K / tau)))
        return replace(self, tau=tau, Delta=delta, p_a=min(1.0, beta * tau / self.K))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known) - {"alpha", "beta"}
        if unknown:
            raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
        base = {k: _coerce(known[k].type, v) for k, v in d.items() if k in known}
        if "alpha" in d or "beta" in d:
            if not ("alpha" in d and "beta" in d):
                raise KeyError("alpha and beta must be given together")
            cfg = cls(**{k: v for k, v in base.items() if k not in ("Delta", "p_a")})
            return cfg.with_scheme(float(d["alpha"]), float(d["beta"]))
        return cls(**base)


def _coerce(type_name, value):
    t = str(type_name)
    if t == "bool":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if t == "int":
        return int(value)
    if t == "float":
        return float(value)
    return value


def load_config(path: str | Path) -> SystemConfig:
    """Read a YAML or JSON file whose keys are SystemConfig field names.

    ``alpha``/``beta`` may replace ``Delta``/``p_a``.
    """
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        import yaml

        data = yaml.safe_load(text) or {}
    return SystemConfig.from_dict(data)


def rng_stream(seed: int, *stream_ids: int) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, *stream_ids)``.

    Philox is counter based; the SeedSequence spawn key makes every id tuple
    its own stream, so trials can run in any order or in parallel.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in stream_ids))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PilotSchedule:
    """Activity and pilot choice of every user in every slot of a frame.

    ``pilots[n, k]`` is the pilot index (0-based) chosen by user ``k`` in slot
    ``n``, or -1 when the user is idle.
    """

    pilots: np.ndarray
    tau: int

    @property
    def n_slots(self) -> int:
        return self.pilots.shape[0]

    @property
    def n_users(self) -> int:
        return self.pilots.shape[1]

    @property
    def active(self) -> np.ndarray:
        return self.pilots >= 0

    def members(self, n: int, j: int) -> np.ndarray:
        """Users in A_n^j (0-based slot and pilot)."""
        return np.flatnonzero(self.pilots[n] == j)

    def active_users(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.pilots[n] >= 0)

    def factor_degrees(self) -> np.ndarray:
        """|A_n^j| as a (n_slots, tau) array."""
        out = np.zeros((self.n_slots, self.tau), dtype=np.int64)
        n, k = np.nonzero(self.pilots >= 0)
        np.add.at(out, (n, self.pilots[n, k]), 1)
        return out

    def variable_degrees(self) -> np.ndarray:
        return self.active.sum(axis=0)


def draw_schedule(cfg: SystemConfig, rng: np.random.Generator) -> PilotSchedule:
    """Independent activation with probability p_a, uniform pilot per activation."""
    shape = (cfg.Delta, cfg.K)
    active = rng.random(shape) < cfg.p_a
    choice = rng.integers(0, cfg.tau, size=shape)
    pilots = np.where(active, choice, -1).astype(np.int32)
    pilots.setflags(write=False)
    return PilotSchedule(pilots=pilots, tau=cfg.tau)


def empirical_degrees(schedule: PilotSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Histograms of factor-node and variable-node degrees.

    Returns ``(factor_hist, variable_hist)`` indexed by degree; the totals are
    ``tau * Delta`` and ``K``.
    """
    fd = schedule.factor_degrees().ravel()
    vd = schedule.variable_degrees()
    return np.bincount(fd), np.bincount(vd)
