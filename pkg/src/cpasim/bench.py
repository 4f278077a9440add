"""Parameter sweeps, grid optimisation and scheme comparison."""
from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ._accel import backend_name
from .analysis import NORMALIZATIONS, PiTable, evaluate
from .baselines import aloha_optimal_pa, aloha_throughput, smm_throughput
from .config import SystemConfig
from .pi_mc import PiCache, PiGrid, pi_frame_grid, pi_micro_grid
from .sic import simulate

log = logging.getLogger(__name__)

ALPHA_GRID = tuple(np.round(np.arange(0.6, 2.0 + 1e-9, 0.05), 2))
BETA_GRID = tuple(np.round(np.arange(0.25, 4.0 + 1e-9, 0.25), 2))
TAU_GRID = (2, 4, 8, 16, 32)
BACKENDS = ("aot", "sim", "both")


@dataclass
class ThroughputRow:
    scheme: str
    M: int
    tau: int
    alpha: float
    beta: float
    R: float
    p_d: float
    gamma: float
    gamma_stderr: float
    backend: str
    normalization: str
    seed: int
    K: int
    L: int
    sigma2: float
    trials: int


REPORT_COLUMNS = tuple(f.name for f in fields(ThroughputRow))
_ROW_TYPES = {f.name: f.type for f in fields(ThroughputRow)}


@dataclass
class ThroughputReport:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def extend(self, rows):
        self.rows.extend(rows)

    def where(self, **kw) -> "ThroughputReport":
        return ThroughputReport([r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())])

    def best(self) -> ThroughputRow:
        return max(self.rows, key=_rank_key)


def _rank_key(row: ThroughputRow):
    # larger gamma wins; ties go to smaller alpha, then beta, then tau
    return (row.gamma, -row.alpha, -row.beta, -row.tau)


@dataclass
class SweepSpec:
    base: SystemConfig
    alphas: tuple = (1.1,)
    betas: tuple = (1.0,)
    taus: tuple | None = None
    Ms: tuple | None = None
    Rs: tuple | None = None
    backend: str = "aot"
    trials: int = 20
    normalization: str = "eq5"
    threads: int = 1
    pi_trials: int = 10_000
    output: str | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        for name in ("alphas", "betas", "taus", "Ms", "Rs"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"{name} grid is empty")
        if self.backend != "aot" and self.trials < 1:
            raise ValueError("simulation backend needs trials >= 1")

    def configs(self):
        taus = self.taus or (self.base.tau,)
        Ms = self.Ms or (self.base.M,)
        Rs = self.Rs or (self.base.R,)
        for M, R, tau in itertools.product(Ms, Rs, taus):
            yield replace(self.base, M=int(M), R=float(R), tau=int(tau))


PI_MODES = ("frame", "micro", "ones")


class PiSource:
    """pi tables per (M, tau, R, ...) on a fixed beta grid, optionally cached on disk.

    ``frame`` (default) tallies full SIC runs at frame length ``frame_alpha``
    with ``frame_trials`` frames per beta. ``micro`` uses the single-node
    model with ``trials`` draws per degree. ``ones`` gives pi = 1 (pure
    peeling). pi_1 for uncancelled singletons is always taken from micro
    mode, which is exact there.
    """

    def __init__(self, betas=BETA_GRID, trials: int = 10_000, cache_dir=None, mode: str = "frame",
                 frame_trials: int = 40, frame_alpha: float = 1.6, threads: int = 1):
        if mode not in PI_MODES:
            raise ValueError(f"mode must be one of {PI_MODES}")
        self.betas = np.unique(np.asarray(betas, dtype=float))
        self.trials = trials
        self.mode = mode
        self.frame_trials = frame_trials
        self.frame_alpha = frame_alpha
        self.threads = threads
        self.cache = PiCache(cache_dir) if cache_dir is not None else None
        self._grids: dict = {}

    def grid(self, cfg: SystemConfig, mode: str | None = None) -> PiGrid:
        mode = mode or self.mode
        key = (mode, cfg.K, cfg.M, cfg.tau, cfg.R, cfg.sigma2, cfg.bits, cfg.L, cfg.margin_db,
               cfg.uncoded_rate1, cfg.seed)
        if key not in self._grids:
            if mode == "frame":
                g = pi_frame_grid(cfg, self.betas, self.frame_trials, self.frame_alpha, threads=self.threads,
                                  cache=self.cache)
            else:
                g = pi_micro_grid(cfg, self.betas, self.trials, cache=self.cache)
            self._grids[key] = g
        return self._grids[key]

    def table(self, cfg: SystemConfig, beta: float) -> PiTable:
        if self.mode == "ones":
            return PiTable.ones()
        return self.grid(cfg).table(beta)

    def pi1(self, cfg: SystemConfig, beta: float) -> float:
        if self.mode == "ones":
            return 1.0
        return float(self.grid(cfg, "micro").table(beta)[1])


def aot_row(cfg: SystemConfig, alpha: float, beta: float, pis: PiSource, normalization: str = "eq5") -> ThroughputRow:
    p_d, gamma = evaluate(alpha, beta, cfg.tau, cfg.L, cfg.R, pis.table(cfg, beta), normalization)
    return ThroughputRow("CPA", cfg.M, cfg.tau, float(alpha), float(beta), cfg.R, p_d, gamma, 0.0, "aot",
                         normalization, cfg.seed, cfg.K, cfg.L, cfg.sigma2, 0)


def sim_row(cfg: SystemConfig, alpha: float, beta: float, trials: int, normalization: str = "eq5",
            threads: int = 1, model: str = "gram", sic: bool = True) -> ThroughputRow:
    """Simulated point; the frame is built from the realised (Delta, p_a) for (alpha, beta)."""
    c = cfg.with_scheme(alpha, beta)
    s = simulate(c, trials, threads=threads, model=model, sic=sic)
    scale = c.L / c.tau if normalization == "sec4" else 1.0
    return ThroughputRow("CPA" if sic else "ALOHA", c.M, c.tau, float(alpha), float(beta), c.R, s.p_d,
                         s.gamma * scale, s.gamma_stderr * scale, "sim", normalization, c.seed, c.K, c.L,
                         c.sigma2, trials)


def sweep(spec: SweepSpec, pis: PiSource | None = None) -> ThroughputReport:
    pis = pis or PiSource(trials=spec.pi_trials, betas=sorted(set(BETA_GRID) | set(spec.betas)))
    report = ThroughputReport()
    points = [(c, a, b) for c in spec.configs() for a in spec.alphas for b in spec.betas]
    if spec.backend in ("aot", "both"):
        report.extend(aot_row(c, a, b, pis, spec.normalization) for c, a, b in points)
    if spec.backend in ("sim", "both"):
        # parallelism goes to the trials inside each point
        report.extend(sim_row(c, a, b, spec.trials, spec.normalization, spec.threads) for c, a, b in points)
    if spec.output:
        emit_csv(report, spec.output)
    return report


@dataclass(frozen=True)
class Optimum:
    alpha: float
    beta: float
    tau: int
    gamma: float
    p_d: float
    row: ThroughputRow


def _as_optimum(row: ThroughputRow) -> Optimum:
    return Optimum(row.alpha, row.beta, row.tau, row.gamma, row.p_d, row)


def optimize(base: SystemConfig, alphas=ALPHA_GRID, betas=BETA_GRID, taus=None, *, pis: PiSource | None = None,
             normalization: str = "eq5", threads: int = 1) -> Optimum:
    """Grid argmax of the analytic throughput over (alpha, beta, tau)."""
    taus = taus or (base.tau,)
    if not len(alphas) or not len(betas) or not len(taus):
        raise ValueError("grids must be non-empty")
    pis = pis or PiSource(betas=betas)
    cfgs = [replace(base, tau=int(t)) for t in taus if t < base.L]
    for c in cfgs:
        pis.table(c, betas[0])  # estimate pi tables before fanning out

    def run(cb):
        c, b = cb
        return [aot_row(c, a, b, pis, normalization) for a in alphas]

    jobs = [(c, b) for c in cfgs for b in betas]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = [r for chunk in ex.map(run, jobs) for r in chunk]
    else:
        rows = [r for job in jobs for r in run(job)]
    return _as_optimum(ThroughputReport(rows).best())


def optimize_sim(base: SystemConfig, alphas, betas, trials: int, *, normalization: str = "eq5",
                 threads: int = 1, model: str = "gram") -> Optimum:
    """Grid argmax of simulated throughput at ``base.tau``."""
    rows = [sim_row(base, a, b, trials, normalization, threads, model) for b in betas for a in alphas]
    return _as_optimum(ThroughputReport(rows).best())


def optimize_aloha(base: SystemConfig, taus=TAU_GRID, *, pis: PiSource | None = None) -> ThroughputRow:
    """Best tau for framed ALOHA at p_a = min(1, tau/K); other pilots carry load beta = p_a K / tau."""
    pis = pis or PiSource()
    best = None
    for t in taus:
        if t >= base.L:
            continue
        p_a = aloha_optimal_pa(base.K, t)
        c = replace(base, tau=int(t), p_a=p_a, Delta=1)
        beta = c.beta
        gamma = aloha_throughput(c, pis.pi1(c, beta))
        row = ThroughputRow("ALOHA", c.M, c.tau, float("nan"), beta, c.R, float("nan"), gamma, 0.0, "aot",
                            "eq5", c.seed, c.K, c.L, c.sigma2, 0)
        if best is None or gamma > best.gamma:
            best = row
    return best


def optimize_smm(base: SystemConfig, taus=TAU_GRID, *, pis: PiSource | None = None) -> ThroughputRow:
    """Best tau for scheduled massive MIMO: tau users per slot, one per pilot."""
    from .pi_mc import pi_micro

    best = None
    for t in taus:
        if t >= base.L:
            continue
        c = replace(base, tau=int(t))
        pi1 = 1.0 if pis is not None and pis.mode == "ones" else \
            pi_micro(1, c, pis.trials if pis else 10_000, others="fixed").pi[0]
        gamma = smm_throughput(c, pi1)
        row = ThroughputRow("SMM", c.M, c.tau, float("nan"), 1.0, c.R, pi1, gamma, 0.0, "aot", "eq5",
                            c.seed, c.K, c.L, c.sigma2, 0)
        if best is None or gamma > best.gamma:
            best = row
    return best


def compare_schemes(base: SystemConfig, Ms, Rs, *, alphas=ALPHA_GRID, betas=BETA_GRID, taus=TAU_GRID,
                    pis: PiSource | None = None, threads: int = 1) -> ThroughputReport:
    """CPA, ALOHA and SMM rows, each at its own optimised parameters, for every (M, R)."""
    pis = pis or PiSource(betas=sorted(set(betas) | {1.0}))
    report = ThroughputReport()
    for M, R in itertools.product(Ms, Rs):
        c = replace(base, M=int(M), R=float(R))
        opt = optimize(c, alphas, betas, taus, pis=pis, threads=threads)
        report.extend([opt.row, optimize_aloha(c, taus, pis=pis), optimize_smm(c, taus, pis=pis)])
    return report


def emit_csv_stream(report: ThroughputReport, fh) -> None:
    w = csv.writer(fh)
    w.writerow(REPORT_COLUMNS)
    for r in report:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def emit_csv(report: ThroughputReport, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        emit_csv_stream(report, fh)


def _parse(name, text):
    t = _ROW_TYPES[name]
    if t in ("int", int):
        return int(text)
    if t in ("float", float):
        return float(text)
    return text


def read_csv(path) -> ThroughputReport:
    with open(path, newline="") as fh:
        rows = [ThroughputRow(**{k: _parse(k, v) for k, v in d.items()}) for d in csv.DictReader(fh)]
    return ThroughputReport(rows)


PLOT_COLUMNS = ("figure", "x", "series", "y")


def emit_plotdata(points, path) -> None:
    """``points``: iterable of (figure, x, series, y)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_COLUMNS)
        for fig, x, series, y in points:
            w.writerow([fig, repr(float(x)), series, repr(float(y))])


def read_plotdata(path) -> list:
    with open(path, newline="") as fh:
        return [(d["figure"], float(d["x"]), d["series"], float(d["y"])) for d in csv.DictReader(fh)]


def rerun_row(row: ThroughputRow, pis: PiSource | None = None, **cfg_extra) -> ThroughputRow:
    """Re-evaluate a recorded row from its own parameters and seed."""
    base = SystemConfig(K=row.K, M=row.M, L=row.L, tau=row.tau, sigma2=row.sigma2, R=row.R, seed=row.seed,
                        **cfg_extra)
    if row.backend == "sim":
        return sim_row(base, row.alpha, row.beta, row.trials, row.normalization, sic=row.scheme != "ALOHA")
    pis = pis or PiSource()
    return aot_row(base, row.alpha, row.beta, pis, row.normalization)


__all__ = [
    "ALPHA_GRID", "BETA_GRID", "TAU_GRID", "SweepSpec", "ThroughputRow", "ThroughputReport", "PiSource",
    "Optimum", "sweep", "optimize", "optimize_sim", "optimize_aloha", "optimize_smm", "compare_schemes",
    "emit_csv", "emit_csv_stream", "read_csv", "emit_plotdata", "read_plotdata", "rerun_row", "aot_row", "sim_row", "backend_name",
]
