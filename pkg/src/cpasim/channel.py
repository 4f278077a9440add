"""Pilots, Rayleigh channels and received uplink/downlink signals.

Two signal representations are supported.

*Full* mode builds the received matrices ``Y_pu`` (M x tau) and ``Y_u``
(M x D) of every slot. *Virtual* mode never forms them: every receiver
statistic (LS estimate power, matched-filter coefficients) is an inner
product between channel vectors and projected pilot noise, so it suffices to
sample the Gram matrix of those vectors. The Gram matrix of ``p`` i.i.d.
CN(0, I_M) vectors is drawn through its upper-trapezoidal QR factor
``T`` (``min(M, p) x p``) with ``|T_ii|^2 ~ Gamma(M - i)`` and i.i.d. CN(0, 1)
entries above the diagonal, which costs O(p^2) instead of O(M p).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import HAS_NUMBA, jit
from .config import PilotSchedule, SystemConfig

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)


def make_pilots(tau: int) -> np.ndarray:
    """DFT pilot book: row ``j`` is pilot ``s_j``; unit-modulus, ``S S^H = tau I``."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    t = np.arange(tau)
    return np.exp(-2j * np.pi * np.outer(t, t) / tau)


def crandn(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def qpsk(rng: np.random.Generator, size) -> np.ndarray:
    return _QPSK[rng.integers(0, 4, size=size)]


@dataclass(frozen=True)
class ChannelRealization:
    """``H[n]`` is the M x K channel matrix of slot n (column k = h_nk)."""

    H: np.ndarray

    def column(self, n: int, k: int) -> np.ndarray:
        return self.H[n, :, k]


def draw_channels(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """i.i.d. CN(0,1) entries, independent across slots. Memory is Delta*M*K."""
    return ChannelRealization(crandn(rng, (cfg.Delta, cfg.M, cfg.K)))


def draw_messages(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """QPSK uplink message of every user, shape (K, D); reused in every replica."""
    return qpsk(rng, (cfg.K, cfg.D))


@dataclass(frozen=True)
class FrameSignals:
    """Received uplink signals of a frame plus the noise that produced them.

    The noise arrays are kept for genie accounting and validation only.
    """

    Y_pu: np.ndarray  # (Delta, M, tau)
    Y_u: np.ndarray  # (Delta, M, D)
    Z_pu: np.ndarray
    Z_u: np.ndarray


def synth_uplink(schedule: PilotSchedule, channels: ChannelRealization, messages: np.ndarray,
                 pilots: np.ndarray, cfg: SystemConfig, rng: np.random.Generator) -> FrameSignals:
    H = channels.H
    n_slots, M, K = H.shape
    if schedule.pilots.shape != (n_slots, K):
        raise ValueError("schedule and channel dimensions disagree")
    if messages.shape[0] != K or pilots.shape[0] != schedule.tau:
        raise ValueError("message or pilot dimensions disagree")
    D = messages.shape[1]
    tau = pilots.shape[1]
    Z_pu = crandn(rng, (n_slots, M, tau), cfg.sigma2)
    Z_u = crandn(rng, (n_slots, M, D), cfg.sigma2)
    Y_pu = Z_pu.copy()
    Y_u = Z_u.copy()
    for n in range(n_slots):
        act = schedule.active_users(n)
        if act.size == 0:
            continue
        Hn = H[n][:, act]
        # rows of Sa are the pilots of the active users
        Sa = pilots[schedule.pilots[n, act]]
        Y_pu[n] += Hn @ Sa
        Y_u[n] += Hn @ messages[act]
    return FrameSignals(Y_pu, Y_u, Z_pu, Z_u)


def synth_downlink(h: np.ndarray, w: np.ndarray, s: np.ndarray, x_d: np.ndarray, sigma2: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Downlink pilot and data observations of one user: ``(y_pd, y_d)``."""
    h = np.asarray(h)
    w = np.asarray(w)
    if h.shape != w.shape or h.ndim != 1:
        raise ValueError("channel and precoder must be vectors of equal length")
    q = h @ w  # h^T w, no conjugation
    y_pd = q * np.asarray(s) + crandn(rng, np.shape(s), sigma2)
    y_d = q * np.asarray(x_d) + crandn(rng, np.shape(x_d), sigma2)
    return y_pd, y_d


# ----------------------------------------------------------------------------
# virtual mode: sampled Gram factors


def trapezoid_sizes(p: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Number of diagonal and strictly-upper entries of each ``min(M,p) x p`` factor."""
    p = np.asarray(p, dtype=np.int64)
    r = np.minimum(p, M)
    # sum_{i<r} (p - 1 - i)
    n_off = r * (p - 1) - r * (r - 1) // 2
    return r, n_off


def draw_gram_factors(p: np.ndarray, M: int, rng: np.random.Generator):
    """Random numbers for one Gram factor per entry of ``p``.

    Returns flat arrays ``(diag, off)`` consumed in order by
    :func:`fill_factor`: ``diag`` holds ``sqrt(Gamma(M - i))`` for
    ``i < min(M, p)`` and ``off`` the CN(0,1) upper entries in row-major order.
    """
    r, n_off = trapezoid_sizes(p, M)
    shapes = np.concatenate([M - np.arange(ri) for ri in r]) if len(r) else np.zeros(0)
    diag = np.sqrt(rng.gamma(shapes.astype(float), 1.0)) if shapes.size else np.zeros(0)
    off = crandn(rng, int(n_off.sum()))
    return diag, off


def fill_factor(T: np.ndarray, diag: np.ndarray, off: np.ndarray) -> None:
    r, p = T.shape
    d = 0
    o = 0
    for i in range(r):
        T[i, i] = diag[d]
        d += 1
        for j in range(i + 1, p):
            T[i, j] = off[o]
            o += 1


def sample_gram(M: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Gram matrix ``V^H V`` of ``p`` i.i.d. CN(0, I_M) vectors (distributional)."""
    diag, off = draw_gram_factors(np.array([p]), M, rng)
    r = min(M, p)
    T = np.zeros((r, p), dtype=complex)
    fill_factor(T, diag, off)
    return T.conj().T @ T


@jit
def _slot_coefficients_kernel(M, slot_nusers, slot_nocc, entry_occ, diag, off, noise_std,
                              coef, g, slot_entry_ptr, slot_node_ptr, node_coef_off):
    """Matched-filter coefficients ``phi_i^H h_l`` and ``||phi_i||^2`` per slot."""
    d = 0
    o = 0
    for s in range(slot_nusers.shape[0]):
        a = slot_nusers[s]
        nocc = slot_nocc[s]
        p = a + nocc
        r = min(M, p)
        T = np.zeros((r, p), dtype=np.complex128)
        for i in range(r):
            T[i, i] = diag[d]
            d += 1
            for j in range(i + 1, p):
                T[i, j] = off[o]
                o += 1
        for j in range(a, p):
            for i in range(r):
                T[i, j] *= noise_std
        phi = np.zeros((r, nocc), dtype=np.complex128)
        e0 = slot_entry_ptr[s]
        for l in range(a):
            c = entry_occ[e0 + l]
            for i in range(r):
                phi[i, c] += T[i, l]
        for c in range(nocc):
            for i in range(r):
                phi[i, c] += T[i, a + c]
        nd0 = slot_node_ptr[s]
        for c in range(nocc):
            node = nd0 + c
            acc = 0.0
            for i in range(r):
                acc += phi[i, c].real ** 2 + phi[i, c].imag ** 2
            g[node] = acc
            base = node_coef_off[node]
            for l in range(a):
                v = 0j
                for i in range(r):
                    v += np.conj(phi[i, c]) * T[i, l]
                coef[base + l] = v


def _slot_coefficients_numpy(M, slot_nusers, slot_nocc, entry_occ, diag, off, noise_std,
                             coef, g, slot_entry_ptr, slot_node_ptr, node_coef_off):
    d = 0
    o = 0
    for s in range(slot_nusers.shape[0]):
        a = int(slot_nusers[s])
        nocc = int(slot_nocc[s])
        p = a + nocc
        r = min(M, p)
        T = np.zeros((r, p), dtype=complex)
        iu = np.triu_indices(r, 1, p)
        T[np.arange(r), np.arange(r)] = diag[d:d + r]
        d += r
        n_off = iu[0].size
        T[iu] = off[o:o + n_off]
        o += n_off
        T[:, a:] *= noise_std
        e0 = slot_entry_ptr[s]
        sel = np.zeros((p, nocc))
        sel[np.arange(a), entry_occ[e0:e0 + a]] = 1.0
        sel[a + np.arange(nocc), np.arange(nocc)] = 1.0
        phi = T @ sel
        nd0 = slot_node_ptr[s]
        g[nd0:nd0 + nocc] = np.sum(np.abs(phi) ** 2, axis=0)
        C = phi.conj().T @ T[:, :a]
        for c in range(nocc):
            base = node_coef_off[nd0 + c]
            coef[base:base + a] = C[c]


slot_coefficients = _slot_coefficients_kernel if HAS_NUMBA else _slot_coefficients_numpy
