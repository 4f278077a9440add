"""Base-station processing of one (slot, pilot) resource.

The estimators act on received signals only. SINR accounting is genie aided:
it uses the true per-slot channels to score what the decoder would see, but
the decoder itself only ever touches ``phi``, ``f`` and ``g``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr

# Reported instead of an infinite SINR when interference and noise vanish.
SINR_CAP = 1e15


def ls_estimate(Y_pu: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Least-squares channel estimate ``phi = Y s^H (s s^H)^-1``."""
    s = np.asarray(s)
    return Y_pu @ s.conj() / np.real(s @ s.conj())


def zf_estimate(phi: np.ndarray, Y_u: np.ndarray) -> np.ndarray:
    """``psi = (phi^H phi)^-1 phi^H Y_u``; a superposition when pilots collide."""
    p = np.real(np.vdot(phi, phi))
    if p == 0:
        raise ZeroDivisionError("zero-norm channel estimate")
    return phi.conj() @ Y_u / p


def matched_filter(phi: np.ndarray, Y_u: np.ndarray) -> np.ndarray:
    """``f = phi^H Y_u`` (1 x D)."""
    return phi.conj() @ Y_u


def power_sum(phi: np.ndarray) -> float:
    """``g = ||phi||^2``, the estimate of the summed channel powers."""
    return float(np.real(np.vdot(phi, phi)))


def downlink_concat_channel(y_pd: np.ndarray, s: np.ndarray) -> complex:
    """User-side estimate of ``q = h^T w`` from the precoded downlink pilot."""
    s = np.asarray(s)
    return complex(y_pd @ s.conj() / np.real(s @ s.conj()))


@dataclass
class FactorNode:
    """One resource (slot, pilot) with its genie bookkeeping.

    ``residual`` maps every not-yet-cancelled member of A_n^j to its true
    channel in this slot; ``cancelled`` maps cancelled members to
    ``(channel, ghat)``; ``others`` holds the users of the same slot on other
    pilots, which leak into ``f`` through non-orthogonal channels.
    """

    slot: int
    pilot: int
    phi: np.ndarray
    g: float
    f: np.ndarray | None = None
    residual: dict = field(default_factory=dict)
    cancelled: dict = field(default_factory=dict)
    others: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return len(self.residual)

    def cancel(self, user: int, ghat: float, x: np.ndarray | None = None) -> None:
        """Subtract ``ghat`` from g (and ``ghat * x`` from f); drop the user."""
        h = self.residual.pop(user)
        self.cancelled[user] = (h, ghat)
        self.g -= ghat
        if self.f is not None and x is not None:
            self.f = self.f - ghat * x


def node_sinr(node: FactorNode, target: int, sigma2: float) -> float:
    """Post-cancellation SINR of ``target`` in ``node``.

    Signal ``|phi^H h_t|^2``; interference from imperfect cancellations
    ``|phi^H h_c - ghat_c|^2``, from uncancelled members and from users on
    other pilots ``|phi^H h_l|^2``; noise ``||phi||^2 sigma2``.
    """
    if target not in node.residual:
        raise KeyError(f"user {target} is not in the residual set of node {(node.slot, node.pilot)}")
    phi = node.phi
    sig = abs(np.vdot(phi, node.residual[target])) ** 2
    interf = 0.0
    for c, (h, ghat) in node.cancelled.items():
        interf += abs(np.vdot(phi, h) - ghat) ** 2
    for u, h in node.residual.items():
        if u != target:
            interf += abs(np.vdot(phi, h)) ** 2
    for h in node.others.values():
        interf += abs(np.vdot(phi, h)) ** 2
    den = interf + power_sum(phi) * sigma2
    return sinr_ratio(sig, den)


def sinr_ratio(sig: float, den: float) -> float:
    if den <= 0.0:
        return SINR_CAP if sig > 0 else 0.0
    return min(sig / den, SINR_CAP)


def _log_packet_success(sinr: float, n_bits: int) -> float:
    # Gray QPSK: independent bit errors with probability Q(sqrt(SINR))
    return n_bits * np.log1p(-np.exp(log_ndtr(-np.sqrt(sinr))))


@lru_cache(maxsize=None)
def uncoded_qpsk_threshold(D: int) -> float:
    """SINR at which an uncoded QPSK packet of ``D`` symbols is error free w.p. 1/2."""
    target = np.log(0.5)
    return brentq(lambda s: _log_packet_success(s, 2 * D) - target, 1e-6, 1e4, xtol=1e-12)


def sinr_threshold(R: float, bits: int = 2, margin_db: float = 0.0, uncoded_rate1: bool = False,
                   D: int | None = None) -> float:
    """Minimum SINR for a rate-R packet to decode.

    Coded packets (and ``R == 1`` unless ``uncoded_rate1``) need
    ``log2(1 + SINR) >= bits * R``. With ``uncoded_rate1`` a rate-1 packet
    carries no code, so it needs every bit right: the threshold is the
    50 % point of the uncoded QPSK packet success curve for ``D`` symbols.
    """
    if uncoded_rate1 and R >= 1.0:
        if bits != 2 or D is None:
            raise ValueError("uncoded threshold is defined for QPSK with a known packet length")
        base = uncoded_qpsk_threshold(int(D))
    else:
        base = 2.0 ** (bits * R) - 1.0
    return base * 10.0 ** (margin_db / 10.0)


def config_threshold(cfg) -> float:
    return sinr_threshold(cfg.R, cfg.bits, cfg.margin_db, cfg.uncoded_rate1, cfg.D)


def decodable(sinr: float, threshold: float) -> bool:
    return bool(sinr >= threshold)


def node_decodable(node: FactorNode, target: int, cfg) -> bool:
    """Whether ``target`` decodes from ``node`` under the rule set by ``cfg``."""
    return decodable(node_sinr(node, target, cfg.sigma2), config_threshold(cfg))
