"""Recipes that produce the data behind the throughput figures."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .bench import (ALPHA_GRID, BETA_GRID, TAU_GRID, PiSource, ThroughputReport, aot_row, compare_schemes,
                    optimize, optimize_sim, sim_row)
from .config import SystemConfig

FIGURES = (5, 6, 7, 8, 9)
M_GRID = (100, 200, 400, 1024)


def fig5(base: SystemConfig | None = None, betas=(0.5, 1.0, 1.5), alphas=ALPHA_GRID, *, pis=None,
         sim_trials: int = 0, normalization: str = "eq5"):
    """gamma(alpha) per beta at tau=4, L=64, M=400, R=1."""
    base = base or SystemConfig(M=400, L=64, tau=4, R=1.0)
    pis = pis or PiSource(mode="micro", betas=sorted(set(BETA_GRID) | set(betas)))
    report = ThroughputReport([aot_row(base, a, b, pis, normalization) for b in betas for a in alphas])
    if sim_trials:
        report.extend(sim_row(base, a, b, sim_trials, normalization) for b in betas for a in alphas)
    points = [("fig5", r.alpha, f"{r.backend} beta={r.beta:g}", r.gamma) for r in report]
    return report, points


def fig6(base: SystemConfig | None = None, Ms=M_GRID, *, pis=None, sim_trials: int = 0, sim_window: float = 0.25,
         alphas=ALPHA_GRID, betas=BETA_GRID, normalization: str = "eq5"):
    """Optimal alpha and beta against M at tau=4, L=64, R=1 (analysis, optionally simulation)."""
    base = base or SystemConfig(L=64, tau=4, R=1.0)
    pis = pis or PiSource(betas=betas)
    report = ThroughputReport()
    points = []
    for M in Ms:
        c = replace(base, M=int(M))
        opt = optimize(c, alphas, betas, pis=pis, normalization=normalization)
        report.extend([opt.row])
        points += [("fig6", M, "aot alpha*", opt.alpha), ("fig6", M, "aot beta*", opt.beta),
                   ("fig6", M, "aot gamma*", opt.gamma)]
        if sim_trials:
            window = [a for a in alphas if abs(a - opt.alpha) <= sim_window + 1e-9]
            s = optimize_sim(c, window, betas, sim_trials, normalization=normalization)
            report.extend([s.row])
            points += [("fig6", M, "sim alpha*", s.alpha), ("fig6", M, "sim beta*", s.beta),
                       ("fig6", M, "sim gamma*", s.gamma)]
    return report, points


def fig7(base: SystemConfig | None = None, Ms=M_GRID, taus=TAU_GRID, *, pis=None, alphas=ALPHA_GRID,
         betas=BETA_GRID):
    """Optimised gamma against M for each tau at L=512, R=1."""
    base = base or SystemConfig(L=512, R=1.0)
    pis = pis or PiSource(betas=betas)
    report = ThroughputReport()
    for M in Ms:
        for t in taus:
            c = replace(base, M=int(M))
            report.extend([optimize(c, alphas, betas, (t,), pis=pis).row])
    points = [("fig7", r.M, f"tau={r.tau}", r.gamma) for r in report]
    best = {}
    for r in report:
        if r.M not in best or r.gamma > best[r.M].gamma:
            best[r.M] = r
    points += [("fig7", M, "tau*", r.tau) for M, r in sorted(best.items())]
    return report, points


def fig8(base: SystemConfig | None = None, Ms=M_GRID, Rs=(0.5, 1.0), *, pis=None, alphas=ALPHA_GRID,
         betas=BETA_GRID, taus=TAU_GRID):
    """Optimised CPA gamma against M for each rate at L=512."""
    base = base or SystemConfig(L=512)
    pis = pis or PiSource(betas=betas)
    report = ThroughputReport()
    for M in Ms:
        for R in Rs:
            report.extend([optimize(replace(base, M=int(M), R=float(R)), alphas, betas, taus, pis=pis).row])
    return report, [("fig8", r.M, f"CPA R={r.R:g}", r.gamma) for r in report]


def fig9(base: SystemConfig | None = None, Ms=M_GRID, Rs=(0.5, 1.0), *, pis=None, alphas=ALPHA_GRID,
         betas=BETA_GRID, taus=TAU_GRID):
    """CPA, ALOHA and SMM against M for each rate at L=512."""
    base = base or SystemConfig(L=512)
    report = compare_schemes(base, Ms, Rs, alphas=alphas, betas=betas, taus=taus, pis=pis)
    return report, [("fig9", r.M, f"{r.scheme} R={r.R:g}", r.gamma) for r in report]


RECIPES = {5: fig5, 6: fig6, 7: fig7, 8: fig8, 9: fig9}


def is_unimodal(y, rtol: float = 0.0) -> bool:
    """True when ``y`` rises (weakly) to a single peak and then falls (weakly)."""
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    tol = rtol * float(np.max(np.abs(y))) if y.size else 0.0
    return bool(np.all(np.diff(y[: k + 1]) >= -tol) and np.all(np.diff(y[k:]) <= tol))
