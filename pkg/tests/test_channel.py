import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cpasim import channel
from cpasim.channel import (crandn, draw_channels, draw_gram_factors, fill_factor, make_pilots, qpsk, sample_gram,
                            synth_downlink, synth_uplink, trapezoid_sizes)
from cpasim.config import PilotSchedule, SystemConfig, rng_stream
from oracles import gram_explicit


def test_pilots_small():
    assert np.allclose(make_pilots(1), [[1]])
    S = make_pilots(2)
    assert abs(np.vdot(S[1], S[0])) < 1e-12
    assert np.allclose(np.sum(np.abs(S) ** 2, axis=1), 2)


def test_pilots_16_orthogonal():
    S = make_pilots(16)
    G = S @ S.conj().T
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-10


@given(st.integers(1, 64))
@settings(max_examples=30, deadline=None)
def test_pilot_gram_property(tau):
    S = make_pilots(tau)
    assert np.allclose(np.abs(S), 1)
    assert np.allclose(S @ S.conj().T, tau * np.eye(tau), atol=1e-9)


def test_channel_statistics():
    cfg = SystemConfig(K=100, M=100, Delta=100)
    H = draw_channels(cfg, rng_stream(0)).H
    assert H.size == 10**6
    assert abs(np.mean(np.abs(H) ** 2) - 1) < 0.01
    norms = np.sum(np.abs(H) ** 2, axis=1).ravel()  # ||h_nk||^2, M=100
    assert abs(norms.mean() - 100) < 3 * np.sqrt(100 / norms.size)
    a = H[:-1].ravel()
    b = H[1:].ravel()
    rho = np.abs(np.mean(a * b.conj())) / np.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(b) ** 2))
    assert rho < 0.01


def _one_slot(pilot_of_user, K, tau):
    P = np.full((1, K), -1, dtype=np.int32)
    for k, j in pilot_of_user.items():
        P[0, k] = j
    return PilotSchedule(P, tau)


def test_uplink_noiseless_single_and_pair():
    cfg = SystemConfig(K=3, M=8, L=10, tau=4, sigma2=0.0, Delta=1)
    S = make_pilots(4)
    ch = draw_channels(cfg, rng_stream(1))
    X = qpsk(rng_stream(2), (3, cfg.D))
    sig = synth_uplink(_one_slot({1: 2}, 3, 4), ch, X, S, cfg, rng_stream(3))
    h = ch.H[0, :, 1]
    assert np.allclose(sig.Y_pu[0], np.outer(h, S[2]))
    assert np.allclose(sig.Y_u[0], np.outer(h, X[1]))
    sig = synth_uplink(_one_slot({0: 3, 2: 3}, 3, 4), ch, X, S, cfg, rng_stream(3))
    assert np.allclose(sig.Y_pu[0], np.outer(ch.H[0, :, 0] + ch.H[0, :, 2], S[3]))


def test_uplink_energy():
    cfg = SystemConfig(K=6, M=32, L=10, tau=4, sigma2=0.1, Delta=1000)
    S = make_pilots(4)
    rng = rng_stream(4)
    P = np.where(rng.random((1000, 6)) < 0.5, rng.integers(0, 4, (1000, 6)), -1).astype(np.int32)
    sched = PilotSchedule(P, 4)
    sig = synth_uplink(sched, draw_channels(cfg, rng_stream(5)), qpsk(rng, (6, 6)), S, cfg, rng_stream(6))
    energy = np.sum(np.abs(sig.Y_pu) ** 2, axis=(1, 2))
    nact = (P >= 0).sum(axis=1)
    expected = cfg.M * cfg.tau * nact + cfg.M * cfg.tau * cfg.sigma2
    assert abs(energy.mean() / expected.mean() - 1) < 0.02


def test_uplink_dimension_checks():
    cfg = SystemConfig(K=3, M=4, L=10, tau=2, Delta=2)
    ch = draw_channels(cfg, rng_stream(0))
    with pytest.raises(ValueError):
        synth_uplink(PilotSchedule(np.zeros((3, 3), dtype=np.int32), 2), ch, np.ones((3, 8)), make_pilots(2), cfg,
                     rng_stream(1))
    with pytest.raises(ValueError):
        synth_uplink(PilotSchedule(np.zeros((2, 3), dtype=np.int32), 2), ch, np.ones((2, 8)), make_pilots(2), cfg,
                     rng_stream(1))


def test_downlink():
    rng = rng_stream(8)
    h = crandn(rng, 64)
    s = make_pilots(4)[1]
    y_pd, _ = synth_downlink(h, h.conj(), s, np.zeros(5), 0.0, rng)
    assert np.allclose(y_pd, np.sum(np.abs(h) ** 2) * s)
    _, y_d = synth_downlink(h, h.conj(), s, np.zeros(200_000), 0.1, rng)
    assert abs(np.var(y_d) - 0.1) < 0.002
    M = 50
    vals = []
    for _ in range(10_000):
        hh = crandn(rng, M)
        y, _ = synth_downlink(hh, hh.conj(), s, np.zeros(1), 0.1, rng)
        vals.append((y[0] / s[0]).real)
    assert abs(np.mean(vals) / M - 1) < 0.02
    with pytest.raises(ValueError):
        synth_downlink(h, h[:3], s, s, 0.1, rng)


def test_trapezoid_sizes():
    r, n = trapezoid_sizes(np.array([1, 3, 5]), 3)
    assert r.tolist() == [1, 3, 3]
    assert n.tolist() == [0, 3, 3 * 4 - 3]


@pytest.mark.parametrize("M,p", [(50, 3), (2, 4)])
def test_gram_sampling_matches_explicit(M, p):
    n = 20_000
    rng = rng_stream(9)
    virt = np.array([sample_gram(M, p, rng) for _ in range(n)])
    expl = np.array([gram_explicit(M, p, rng) for _ in range(n)])
    for stat in (lambda G: G[:, 0, 0].real, lambda G: G[:, p - 1, p - 1].real, lambda G: np.abs(G[:, 0, 1]) ** 2,
                 lambda G: (G[:, 0, 1] * G[:, 1, 2] * G[:, 2, 0]).real):
        assert stats.ks_2samp(stat(virt), stat(expl)).pvalue > 1e-3
    assert np.allclose(virt[0], virt[0].conj().T)


def test_kernel_backends_agree():
    from cpasim.sic import _topology
    from cpasim.config import draw_schedule

    cfg = SystemConfig.from_scheme(1.1, 2.0, 4, K=300, M=64)
    t = _topology(draw_schedule(cfg, rng_stream(1)))
    p = t["slot_nusers"] + t["slot_nocc"]
    diag, off = draw_gram_factors(p, cfg.M, rng_stream(2))
    out = []
    for kern in (channel._slot_coefficients_kernel, channel._slot_coefficients_numpy):
        coef = np.zeros(t["n_coef"], dtype=complex)
        g = np.zeros(t["node_slot"].size)
        kern(cfg.M, t["slot_nusers"], t["slot_nocc"], t["entry_occ"], diag, off, 0.15, coef, g,
             t["slot_entry_ptr"], t["slot_node_ptr"], t["node_coef_off"])
        out.append((coef, g))
    assert np.allclose(out[0][0], out[1][0], rtol=1e-12, atol=1e-9)
    assert np.allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-9)


def test_fill_factor_shape():
    p = np.array([4])
    diag, off = draw_gram_factors(p, 2, rng_stream(0))
    T = np.zeros((2, 4), dtype=complex)
    fill_factor(T, diag, off)
    assert np.all(np.tril(T, -1) == 0)
    assert np.all(np.diag(T).real > 0)
