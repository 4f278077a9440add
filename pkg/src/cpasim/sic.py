"""Successive interference cancellation over the pilot-collision graph.

A frame is flattened into arrays. Every active (slot, user) pair is an
*entry*; every occupied (slot, pilot) resource is a *node*. A node stores the
matched-filter coefficient ``phi^H h_l`` of every user active in its slot
(members and users on other pilots alike) because all of them leak into
``f``. Cancelling user ``c`` with power value ``ghat`` subtracts ``ghat``
from ``c``'s coefficient and from ``g`` at every node holding a replica of
``c``.

Channel models:

``gram``    sampled Gram factors (virtual mode, default)
``vectors`` explicit M-dimensional channels, statistics as inner products
``full``    received signals, LS estimation and matched filtering; the
            coefficients are read back from ``f`` by least squares
``ideal``   exactly orthogonal channels with slot-invariant powers
            (validation mode; SIC then reduces to graph peeling)
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import jit
from .channel import crandn, draw_gram_factors, make_pilots, qpsk, slot_coefficients
from .config import (STREAM_CHANNEL, STREAM_SCHEDULE, STREAM_SIGNAL, PilotSchedule, SystemConfig,
                     draw_schedule, rng_stream)
from .receiver import SINR_CAP, config_threshold, ls_estimate, matched_filter, power_sum

CHANNEL_MODELS = ("gram", "vectors", "full", "ideal")


@dataclass
class DecodingGraph:
    """Pristine (pre-SIC) state of one frame."""

    cfg: SystemConfig
    n_slots: int
    slot_entry_ptr: np.ndarray
    slot_node_ptr: np.ndarray
    entry_user: np.ndarray
    entry_node: np.ndarray
    entry_li: np.ndarray
    node_slot: np.ndarray
    node_pilot: np.ndarray
    node_coef_off: np.ndarray
    node_degree: np.ndarray
    coef: np.ndarray
    g: np.ndarray
    phi_pow: np.ndarray
    user_entry_ptr: np.ndarray
    user_entries: np.ndarray
    f: np.ndarray | None = None  # (n_nodes, D), full mode only
    messages: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.node_slot.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_entry_ptr.shape[0] - 1

    def members(self, node: int) -> np.ndarray:
        s = self.node_slot[node]
        e = np.arange(self.slot_entry_ptr[s], self.slot_entry_ptr[s + 1])
        return self.entry_user[e[self.entry_node[e] == node]]

    def node_coefficients(self, node: int) -> dict:
        """user -> coefficient ``phi^H h_user`` for every user active in the node's slot."""
        s = self.node_slot[node]
        e0, e1 = self.slot_entry_ptr[s], self.slot_entry_ptr[s + 1]
        base = self.node_coef_off[node]
        return {int(self.entry_user[e]): self.coef[base + e - e0] for e in range(e0, e1)}


def _topology(schedule: PilotSchedule):
    P = schedule.pilots
    n_slots, K = P.shape
    tau = schedule.tau
    n_idx, k_idx = np.nonzero(P >= 0)
    pil = P[n_idx, k_idx]
    slot_nusers = np.bincount(n_idx, minlength=n_slots)
    slot_entry_ptr = np.concatenate([[0], np.cumsum(slot_nusers)]).astype(np.int64)
    occ = np.zeros((n_slots, tau), dtype=bool)
    occ[n_idx, pil] = True
    slot_nocc = occ.sum(axis=1)
    slot_node_ptr = np.concatenate([[0], np.cumsum(slot_nocc)]).astype(np.int64)
    rank = np.cumsum(occ, axis=1) - 1
    entry_occ = rank[n_idx, pil].astype(np.int64)
    entry_node = slot_node_ptr[n_idx] + entry_occ
    entry_li = np.arange(n_idx.size, dtype=np.int64) - slot_entry_ptr[n_idx]
    node_slot, node_pilot = np.nonzero(occ)
    n_nodes = node_slot.size
    node_degree = np.bincount(entry_node, minlength=n_nodes).astype(np.int64)
    node_na = slot_nusers[node_slot]
    node_coef_off = np.concatenate([[0], np.cumsum(node_na)])[:-1].astype(np.int64)
    order = np.argsort(k_idx, kind="stable")
    user_entry_ptr = np.concatenate([[0], np.cumsum(np.bincount(k_idx, minlength=K))]).astype(np.int64)
    return dict(
        n_slots=n_slots, slot_nusers=slot_nusers.astype(np.int64), slot_nocc=slot_nocc.astype(np.int64),
        slot_entry_ptr=slot_entry_ptr, slot_node_ptr=slot_node_ptr, entry_occ=entry_occ,
        entry_user=k_idx.astype(np.int64), entry_pilot=pil.astype(np.int64), entry_node=entry_node,
        entry_li=entry_li, node_slot=node_slot.astype(np.int64), node_pilot=node_pilot.astype(np.int64),
        node_coef_off=node_coef_off, node_degree=node_degree, user_entry_ptr=user_entry_ptr,
        user_entries=order.astype(np.int64), n_coef=int(node_na.sum()),
    )


def build_graph(cfg: SystemConfig, schedule: PilotSchedule, rng: np.random.Generator,
                model: str = "gram", signal_rng: np.random.Generator | None = None) -> DecodingGraph:
    """Draw the physical layer of a frame and return its decoding graph."""
    if model not in CHANNEL_MODELS:
        raise ValueError(f"unknown channel model {model!r}; choose from {CHANNEL_MODELS}")
    t = _topology(schedule)
    n_nodes = t["node_slot"].size
    coef = np.zeros(t["n_coef"], dtype=np.complex128)
    g = np.zeros(n_nodes)
    f = messages = None
    if model == "gram":
        p = t["slot_nusers"] + t["slot_nocc"]
        diag, off = draw_gram_factors(p, cfg.M, rng)
        slot_coefficients(cfg.M, t["slot_nusers"], t["slot_nocc"], t["entry_occ"], diag, off,
                          np.sqrt(cfg.sigma2 / cfg.tau), coef, g, t["slot_entry_ptr"],
                          t["slot_node_ptr"], t["node_coef_off"])
    elif model == "ideal":
        power = rng.gamma(cfg.M, 1.0, size=cfg.K)
        pw = power[t["entry_user"]]
        coef[t["node_coef_off"][t["entry_node"]] + t["entry_li"]] = pw
        np.add.at(g, t["entry_node"], pw)
    else:
        f, messages = _explicit_slots(cfg, t, rng, signal_rng, model, coef, g)
    return DecodingGraph(
        cfg=cfg, n_slots=t["n_slots"], slot_entry_ptr=t["slot_entry_ptr"], slot_node_ptr=t["slot_node_ptr"],
        entry_user=t["entry_user"], entry_node=t["entry_node"], entry_li=t["entry_li"],
        node_slot=t["node_slot"], node_pilot=t["node_pilot"], node_coef_off=t["node_coef_off"],
        node_degree=t["node_degree"], coef=coef, g=g, phi_pow=g.copy(),
        user_entry_ptr=t["user_entry_ptr"], user_entries=t["user_entries"], f=f, messages=messages,
    )


def _explicit_slots(cfg, t, rng, signal_rng, model, coef, g):
    S = make_pilots(cfg.tau)
    full = model == "full"
    if full:
        signal_rng = signal_rng if signal_rng is not None else rng
        messages = qpsk(signal_rng, (cfg.K, cfg.D))
        f = np.zeros((t["node_slot"].size, cfg.D), dtype=np.complex128)
    else:
        messages = f = None
    for s in range(t["n_slots"]):
        e0, e1 = t["slot_entry_ptr"][s], t["slot_entry_ptr"][s + 1]
        a = e1 - e0
        if a == 0:
            continue
        users = t["entry_user"][e0:e1]
        pil = t["entry_pilot"][e0:e1]
        H = crandn(rng, (cfg.M, a))
        Z_pu = crandn(rng, (cfg.M, cfg.tau), cfg.sigma2)
        nd0 = t["slot_node_ptr"][s]
        occ_pilots = np.unique(pil)
        if full:
            X = messages[users]
            Z_u = crandn(signal_rng, (cfg.M, cfg.D), cfg.sigma2)
            Y_pu = H @ S[pil] + Z_pu
            Y_u = H @ X + Z_u
            if cfg.D < a:
                raise ValueError("full mode needs D >= active users per slot to read back coefficients")
        else:
            z_proj = Z_pu @ S.conj() / cfg.tau
        for c, j in enumerate(occ_pilots):
            node = nd0 + c
            base = t["node_coef_off"][node]
            if full:
                phi = ls_estimate(Y_pu, S[j])
                fn = matched_filter(phi, Y_u)
                f[node] = fn
                g[node] = power_sum(phi)
                # read phi^H h_l back from the noiseless part of f
                clean = fn - phi.conj() @ Z_u
                cvec, *_ = np.linalg.lstsq(X.T, clean, rcond=None)
                coef[base:base + a] = cvec
            else:
                phi = H[:, pil == j].sum(axis=1) + z_proj[:, j]
                g[node] = power_sum(phi)
                coef[base:base + a] = phi.conj() @ H
    return f, messages


@jit
def _sic_kernel(slot_entry_ptr, entry_user, entry_node, entry_li, node_slot, node_coef_off, node_deg,
                coef, g, phi_pow, user_entry_ptr, user_entries, sigma2, thr, sic, capture, max_waves,
                sinr_cap, dec_node, dec_iter, dec_ghat, dec_sinr, node_tested, node_pass, node_sinr):
    n_nodes = node_deg.shape[0]
    failed = np.zeros(n_nodes, dtype=np.bool_)
    cand_node = np.empty(n_nodes, dtype=np.int64)
    cand_entry = np.empty(n_nodes, dtype=np.int64)
    cand_sinr = np.empty(n_nodes, dtype=np.float64)
    waves = 0
    for it in range(max_waves):
        nc = 0
        for nd in range(n_nodes):
            deg = node_deg[nd]
            if deg == 0 or failed[nd]:
                continue
            if deg >= 2 and not capture:
                continue
            s = node_slot[nd]
            e0 = slot_entry_ptr[s]
            e1 = slot_entry_ptr[s + 1]
            base = node_coef_off[nd]
            best = -1
            bestp = -1.0
            tot = 0.0
            for e in range(e0, e1):
                c = coef[base + e - e0]
                pw = c.real * c.real + c.imag * c.imag
                tot += pw
                if entry_node[e] == nd and dec_node[entry_user[e]] < 0 and pw > bestp:
                    best = e
                    bestp = pw
            if best < 0:
                continue
            den = tot - bestp + phi_pow[nd] * sigma2
            if den <= 0.0:
                sinr = sinr_cap if bestp > 0.0 else 0.0
            else:
                sinr = min(bestp / den, sinr_cap)
            passed = sinr >= thr
            if deg == 1:
                node_tested[nd] = True
                node_pass[nd] = passed
                node_sinr[nd] = sinr
                if not passed:
                    failed[nd] = True
            if passed:
                cand_node[nc] = nd
                cand_entry[nc] = best
                cand_sinr[nc] = sinr
                nc += 1
        if nc == 0:
            break
        waves += 1
        for i in range(nc):
            nd = cand_node[i]
            u = entry_user[cand_entry[i]]
            if dec_node[u] >= 0:
                continue
            ghat = g[nd]
            dec_node[u] = nd
            dec_iter[u] = it
            dec_ghat[u] = ghat
            dec_sinr[u] = cand_sinr[i]
            node_deg[nd] -= 1
            if sic:
                for q in range(user_entry_ptr[u], user_entry_ptr[u + 1]):
                    ue = user_entries[q]
                    n2 = entry_node[ue]
                    if n2 == nd:
                        continue
                    coef[node_coef_off[n2] + entry_li[ue]] -= ghat
                    g[n2] -= ghat
                    node_deg[n2] -= 1
        if not sic:
            break
    return waves


@dataclass
class DecodingResult:
    """Outcome of SIC on one frame.

    ``dec_node[k]`` is the node at which user k was decoded (-1 if never);
    together with ``dec_ghat`` it is the cancellation ledger.
    """

    cfg: SystemConfig
    iterations: int
    dec_node: np.ndarray
    dec_iter: np.ndarray
    dec_ghat: np.ndarray
    dec_sinr: np.ndarray
    node_slot: np.ndarray
    node_pilot: np.ndarray
    node_degree: np.ndarray
    node_tested: np.ndarray
    node_pass: np.ndarray
    node_sinr: np.ndarray
    coef: np.ndarray
    g: np.ndarray
    residual_degree: np.ndarray
    n_active: int
    trial: int = 0
    f: np.ndarray | None = field(default=None, repr=False)

    @property
    def decoded(self) -> np.ndarray:
        return np.flatnonzero(self.dec_node >= 0)

    @property
    def n_decoded(self) -> int:
        return int(np.count_nonzero(self.dec_node >= 0))

    @property
    def slot_decoded(self) -> np.ndarray:
        """|S_n| for every slot (a user counts in the slot where it was decoded)."""
        nodes = self.dec_node[self.dec_node >= 0]
        return np.bincount(self.node_slot[nodes], minlength=self.cfg.Delta)

    @property
    def gamma_slots(self) -> np.ndarray:
        cfg = self.cfg
        return self.slot_decoded * cfg.R * cfg.D / cfg.L

    @property
    def gamma(self) -> float:
        """Frame-average sum rate per channel use."""
        cfg = self.cfg
        return self.n_decoded * cfg.R * cfg.D / (cfg.L * cfg.Delta)

    @property
    def p_d(self) -> float:
        return self.n_decoded / self.cfg.K

    @property
    def p_d_active(self) -> float:
        return self.n_decoded / self.n_active if self.n_active else 0.0

    def trace_rows(self):
        dec_by_node = np.full(self.node_slot.size, -1, dtype=np.int64)
        users = self.decoded
        dec_by_node[self.dec_node[users]] = users
        for nd in range(self.node_slot.size):
            u = int(dec_by_node[nd])
            s = self.node_sinr[nd] if self.node_tested[nd] else (self.dec_sinr[u] if u >= 0 else np.nan)
            yield {
                "trial": self.trial,
                "slot": int(self.node_slot[nd]),
                "pilot": int(self.node_pilot[nd]),
                "original_degree": int(self.node_degree[nd]),
                "decoded_user": u if u >= 0 else "",
                "iteration": int(self.dec_iter[u]) if u >= 0 else "",
                "sinr_db": "" if not np.isfinite(s) else f"{10 * np.log10(max(s, 1e-300)):.6f}",
            }


TRACE_COLUMNS = ("trial", "slot", "pilot", "original_degree", "decoded_user", "iteration", "sinr_db")


def write_trace(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        for res in results:
            w.writerows(res.trace_rows())


def sic_decode(graph: DecodingGraph, cfg: SystemConfig | None = None, *, sic: bool = True,
               capture: bool = False, max_waves: int = 100_000) -> DecodingResult:
    """Iterate singleton decoding and cancellation to a fixed point.

    The graph is not modified. ``sic=False`` gives the ALOHA receiver:
    one pass over the original singletons, nothing cancelled.
    """
    cfg = graph.cfg if cfg is None else cfg
    K = graph.n_users
    n_nodes = graph.n_nodes
    coef = graph.coef.copy()
    g = graph.g.copy()
    deg = graph.node_degree.copy()
    dec_node = np.full(K, -1, dtype=np.int64)
    dec_iter = np.full(K, -1, dtype=np.int64)
    dec_ghat = np.zeros(K)
    dec_sinr = np.full(K, np.nan)
    node_tested = np.zeros(n_nodes, dtype=np.bool_)
    node_pass = np.zeros(n_nodes, dtype=np.bool_)
    node_sinr = np.full(n_nodes, np.nan)
    waves = _sic_kernel(graph.slot_entry_ptr, graph.entry_user, graph.entry_node, graph.entry_li,
                        graph.node_slot, graph.node_coef_off, deg, coef, g, graph.phi_pow,
                        graph.user_entry_ptr, graph.user_entries, float(cfg.sigma2),
                        float(config_threshold(cfg)), bool(sic), bool(capture), int(max_waves),
                        SINR_CAP, dec_node, dec_iter, dec_ghat, dec_sinr, node_tested, node_pass,
                        node_sinr)
    f = None
    if graph.f is not None:
        f = replay_f(graph, dec_node, dec_ghat) if sic else graph.f.copy()
    n_active = int(np.count_nonzero(np.diff(graph.user_entry_ptr)))
    return DecodingResult(cfg=cfg, iterations=int(waves), dec_node=dec_node, dec_iter=dec_iter,
                          dec_ghat=dec_ghat, dec_sinr=dec_sinr, node_slot=graph.node_slot,
                          node_pilot=graph.node_pilot, node_degree=graph.node_degree,
                          node_tested=node_tested, node_pass=node_pass, node_sinr=node_sinr,
                          coef=coef, g=g, residual_degree=deg, n_active=n_active, f=f)


def replay_ledger(graph: DecodingGraph, dec_node: np.ndarray, dec_ghat: np.ndarray):
    """Apply the cancellation ledger to pristine coefficients; returns ``(coef, g)``."""
    coef = graph.coef.copy()
    g = graph.g.copy()
    for u in np.flatnonzero(dec_node >= 0):
        ents = graph.user_entries[graph.user_entry_ptr[u]:graph.user_entry_ptr[u + 1]]
        for e in ents:
            nd = graph.entry_node[e]
            if nd == dec_node[u]:
                continue
            coef[graph.node_coef_off[nd] + graph.entry_li[e]] -= dec_ghat[u]
            g[nd] -= dec_ghat[u]
    return coef, g


def replay_f(graph: DecodingGraph, dec_node: np.ndarray, dec_ghat: np.ndarray) -> np.ndarray:
    f = graph.f.copy()
    for u in np.flatnonzero(dec_node >= 0):
        ents = graph.user_entries[graph.user_entry_ptr[u]:graph.user_entry_ptr[u + 1]]
        for e in ents:
            nd = graph.entry_node[e]
            if nd != dec_node[u]:
                f[nd] -= dec_ghat[u] * graph.messages[u]
    return f


def run_trial(cfg: SystemConfig, trial: int, *, model: str = "gram", sic: bool = True,
              capture: bool = False) -> DecodingResult:
    """One frame, deterministic in ``(cfg.seed, trial)``."""
    schedule = draw_schedule(cfg, rng_stream(cfg.seed, trial, STREAM_SCHEDULE))
    graph = build_graph(cfg, schedule, rng_stream(cfg.seed, trial, STREAM_CHANNEL), model,
                        signal_rng=rng_stream(cfg.seed, trial, STREAM_SIGNAL))
    res = sic_decode(graph, cfg, sic=sic, capture=capture)
    res.trial = trial
    return res


@dataclass(frozen=True)
class SimSummary:
    gamma: float
    gamma_stderr: float
    p_d: float
    p_d_stderr: float
    p_d_active: float
    trials: int


def summarize(results) -> SimSummary:
    gam = np.array([r.gamma for r in results])
    pd = np.array([r.p_d for r in results])
    pda = np.array([r.p_d_active for r in results])
    n = len(results)
    se = (lambda x: float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"))
    return SimSummary(float(gam.mean()), se(gam), float(pd.mean()), se(pd), float(pda.mean()), n)


def simulate(cfg: SystemConfig, trials: int, *, threads: int = 1, first_trial: int = 0,
             keep: bool = False, **kwargs):
    """Run ``trials`` frames; results are ordered by trial id whatever ``threads`` is."""
    ids = range(first_trial, first_trial + trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda i: run_trial(cfg, i, **kwargs), ids))
    else:
        results = [run_trial(cfg, i, **kwargs) for i in ids]
    summary = summarize(results)
    return (summary, results) if keep else summary
