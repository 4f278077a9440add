"""And-or tree evaluation of the asymptotic recovery probability."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

NORMALIZATIONS = ("eq5", "sec4")


@dataclass(frozen=True)
class DegreeSpec:
    """Degree distribution as a pmf indexed by degree (``pmf[d] = Pr(degree = d)``)."""

    pmf: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a non-empty vector")
        if np.any(pmf < 0):
            raise ValueError("negative probability in degree distribution")
        if not np.isclose(pmf.sum(), 1.0, atol=1e-9):
            raise ValueError(f"degree pmf sums to {pmf.sum()}, not 1")
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def from_dict(cls, d: dict) -> "DegreeSpec":
        pmf = np.zeros(max(d) + 1)
        for k, v in d.items():
            pmf[int(k)] = v
        return cls(pmf)

    @classmethod
    def poisson(cls, mean: float, truncation: int | None = None, renormalize: bool = True) -> "DegreeSpec":
        """Poisson(mean) truncated at ``max(40, mean + 12 sqrt(mean))`` by default."""
        if mean < 0:
            raise ValueError("Poisson mean must be non-negative")
        if truncation is None:
            truncation = int(np.ceil(max(40.0, mean + 12.0 * np.sqrt(mean))))
        if truncation < 1:
            raise ValueError("truncation must be at least 1")
        pmf = poisson.pmf(np.arange(truncation + 1), mean)
        if renormalize:
            pmf = pmf / pmf.sum()
        else:
            # lump the tail into the last degree
            pmf[-1] += max(0.0, 1.0 - pmf.sum())
        return cls(pmf, kind="poisson")

    @property
    def mean(self) -> float:
        return float(np.arange(self.pmf.size) @ self.pmf)

    def as_dict(self, tol: float = 0.0) -> dict:
        return {d: float(p) for d, p in enumerate(self.pmf) if p > tol}


def edge_perspective(spec: DegreeSpec) -> DegreeSpec:
    """``psi_d = d Psi_d / sum_j j Psi_j``."""
    d = np.arange(spec.pmf.size)
    w = d * spec.pmf
    tot = w.sum()
    if tot <= 0:
        raise ValueError("edge perspective undefined for a distribution with zero mean")
    return DegreeSpec(w / tot, kind=f"edge-{spec.kind}")


def make_poisson_specs(alpha: float, beta: float, truncation: int | None = None):
    """Factor degrees Poisson(beta), variable degrees Poisson(alpha * beta)."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if truncation is not None and truncation < 1:
        raise ValueError("truncation must be at least 1")
    return DegreeSpec.poisson(beta, truncation), DegreeSpec.poisson(alpha * beta, truncation)


@dataclass(frozen=True)
class PiTable:
    """Recovery probabilities ``pi_j`` for j = 1..len(values); flat beyond."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("need at least pi_1")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("pi_j must lie in [0, 1]")
        if np.any(np.diff(v) > 1e-12):
            warnings.warn("pi_j is not non-increasing in j", RuntimeWarning, stacklevel=3)
        object.__setattr__(self, "values", v)

    @classmethod
    def ones(cls) -> "PiTable":
        return cls(np.ones(1))

    @property
    def j_max(self) -> int:
        return self.values.size

    def __getitem__(self, j: int) -> float:
        if j < 1:
            raise IndexError("pi is defined for j >= 1")
        return float(self.values[min(j, self.j_max) - 1])

    def extended(self, n: int) -> np.ndarray:
        """``[pi_1, ..., pi_n]`` with the flat tail applied."""
        out = np.empty(n)
        m = min(n, self.j_max)
        out[:m] = self.values[:m]
        out[m:] = self.values[-1]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["degree", "probability"])
            for j, v in enumerate(self.values, start=1):
                w.writerow([j, repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "PiTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        deg = [int(r["degree"]) for r in rows]
        if deg != list(range(1, len(deg) + 1)):
            raise ValueError("pi table degrees must be 1..n without gaps")
        key = "probability" if "probability" in rows[0] else "estimate"
        return cls(np.array([float(r[key]) for r in rows]))


@dataclass
class AotResult:
    p_d: float
    q_trace: np.ndarray
    r_final: float
    converged: bool
    iterations: int
    extras: dict = field(default_factory=dict)


def aot_iterate(psi: DegreeSpec, lam: DegreeSpec, pi: PiTable | None = None, tol: float = 1e-10,
                max_iter: int = 10_000, recursion: str = "erasure") -> AotResult:
    """Fixed-point iteration of the and-or tree from ``q_0 = 1``.

    ``erasure`` (default): ``r = 1 - sum_j psi_j pi_j (1 - q)^(j-1)`` is the
    probability that an edge is *not* resolved at a factor node and
    ``q = sum_k lam_k r^(k-1)``; with ``pi = 1`` this is plain peeling.
    ``literal`` drops the complement, ``r = sum_j psi_j pi_j (1-q)^(j-1)``,
    and exists only for comparison.
    """
    if recursion not in ("erasure", "literal"):
        raise ValueError("recursion must be 'erasure' or 'literal'")
    pi = PiTable.ones() if pi is None else pi
    jf = np.arange(1, psi.pmf.size)
    wf = psi.pmf[1:] * pi.extended(jf.size)
    ev = np.arange(1, lam.pmf.size)
    wv = lam.pmf[1:]
    q = 1.0
    trace = [q]
    converged = False
    r = 1.0
    for _ in range(max_iter):
        s = float(wf @ (1.0 - q) ** (jf - 1))
        r = 1.0 - s if recursion == "erasure" else s
        r = min(max(r, 0.0), 1.0)
        q_new = float(wv @ r ** (ev - 1))
        q_new = min(max(q_new, 0.0), 1.0)
        trace.append(q_new)
        if recursion == "erasure" and q_new > q + 1e-12:
            raise RuntimeError("and-or iteration is not monotone")
        done = abs(q_new - q) < tol
        q = q_new
        if done:
            converged = True
            break
    return AotResult(p_d=1.0 - q, q_trace=np.array(trace), r_final=r, converged=converged,
                     iterations=len(trace) - 1)


def recovery_fraction(result: AotResult, Lam: DegreeSpec, exclude_inactive: bool = True) -> float:
    """Node-perspective recovery ``1 - sum_k Lam_k r^k``.

    With ``exclude_inactive`` the fraction is over users active at least once
    (the simulator's ``p_d_active``); otherwise over all users. For Poisson
    degrees the latter equals ``AotResult.p_d``.
    """
    k = np.arange(Lam.pmf.size)
    unresolved = float(Lam.pmf[1:] @ result.r_final ** k[1:])
    if exclude_inactive:
        act = 1.0 - Lam.pmf[0]
        return (act - unresolved) / act if act > 0 else 0.0
    return 1.0 - Lam.pmf[0] - unresolved


def expected_throughput(p_d: float, alpha: float, R: float, L: int, tau: int,
                        normalization: str = "eq5") -> float:
    """Expected throughput for recovery probability ``p_d``.

    ``eq5`` counts recovered users per channel use, averaged over the frame:
    ``p_d tau R (L - tau) / (alpha L)``. ``sec4`` is ``p_d R (L - tau) / alpha``,
    larger by exactly ``L / tau``.
    """
    if normalization == "eq5":
        return p_d * tau * R * (L - tau) / (alpha * L)
    if normalization == "sec4":
        return p_d * R * (L - tau) / alpha
    raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


def evaluate(alpha: float, beta: float, tau: int, L: int, R: float, pi: PiTable | None = None,
             normalization: str = "eq5") -> tuple[float, float]:
    """``(p_d, gamma)`` for Poisson degrees."""
    Psi, Lam = make_poisson_specs(alpha, beta)
    res = aot_iterate(edge_perspective(Psi), edge_perspective(Lam), pi)
    return res.p_d, expected_throughput(res.p_d, alpha, R, L, tau, normalization)


def throughput_grid(alphas, beta: float, tau: int, L: int, R: float, pi: PiTable | None = None,
                    normalization: str = "eq5") -> np.ndarray:
    """``[(p_d, gamma)]`` over an alpha grid at fixed beta."""
    return np.array([evaluate(a, beta, tau, L, R, pi, normalization) for a in alphas])


AOT_GRID_COLUMNS = ("alpha", "beta", "tau", "p_d", "gamma")


def write_grid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AOT_GRID_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[0])), repr(float(r[1])), int(r[2]), repr(float(r[3])), repr(float(r[4]))])
