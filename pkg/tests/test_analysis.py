import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from cpasim.analysis import (DegreeSpec, PiTable, aot_iterate, edge_perspective, evaluate, expected_throughput,
                             make_poisson_specs, recovery_fraction, throughput_grid, write_grid_csv)
from cpasim.config import SystemConfig
from cpasim.sic import simulate
from oracles import poisson_aot_pd


def test_edge_perspective_examples():
    assert edge_perspective(DegreeSpec.from_dict({2: 1.0})).as_dict() == {2: 1.0}
    e = edge_perspective(DegreeSpec.from_dict({1: 0.5, 3: 0.5})).as_dict(1e-15)
    assert e == pytest.approx({1: 0.25, 3: 0.75})
    beta = 1.7
    psi = edge_perspective(DegreeSpec.poisson(beta, renormalize=False))
    d = np.arange(1, 30)
    assert np.allclose(psi.pmf[1:30], poisson.pmf(d - 1, beta), atol=1e-12, rtol=0)
    with pytest.raises(ValueError):
        edge_perspective(DegreeSpec.from_dict({0: 1.0}))


def test_degree_spec_validation():
    with pytest.raises(ValueError):
        DegreeSpec(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DegreeSpec(np.array([-0.1, 1.1]))
    with pytest.raises(ValueError):
        make_poisson_specs(1.0, 1.0, truncation=0)
    Psi, Lam = make_poisson_specs(1.2, 2.0, truncation=40)
    assert abs(Lam.mean - 2.4) < 1e-10
    Psi, _ = make_poisson_specs(1.0, 1.0)
    assert Psi.pmf[0] == pytest.approx(np.exp(-1), abs=1e-6)


def test_aot_degenerate_cases():
    psi, lam = map(edge_perspective, make_poisson_specs(1.1, 1.0))
    zero = PiTable(np.zeros(1))
    lit = aot_iterate(psi, lam, zero, recursion="literal")
    assert lit.p_d == pytest.approx(1 - lam.pmf[1])
    assert aot_iterate(psi, lam, zero).p_d == pytest.approx(0.0)
    single = DegreeSpec.from_dict({1: 1.0})
    assert aot_iterate(psi, single, recursion="literal").p_d == 0.0
    with pytest.raises(ValueError):
        aot_iterate(psi, lam, recursion="other")


@given(alpha=st.floats(0.5, 2.0), beta=st.floats(0.25, 4.0))
@settings(max_examples=60, deadline=None)
def test_aot_matches_closed_form(alpha, beta):
    p_d, _ = evaluate(alpha, beta, 4, 64, 1.0)
    assert p_d == pytest.approx(poisson_aot_pd(alpha, beta), abs=1e-6)


@given(alpha=st.floats(0.5, 2.0), beta=st.floats(0.25, 4.0),
       pis=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12))
@settings(max_examples=60, deadline=None)
def test_aot_properties(alpha, beta, pis):
    psi, lam = map(edge_perspective, make_poisson_specs(alpha, beta))
    table = PiTable(np.sort(pis)[::-1])
    res = aot_iterate(psi, lam, table)
    assert res.q_trace[0] == 1.0
    assert np.all((res.q_trace >= 0) & (res.q_trace <= 1))
    assert np.all(np.diff(res.q_trace) <= 1e-12)
    assert res.converged
    assert aot_iterate(psi, lam).p_d >= res.p_d - 1e-12


def test_aot_vs_peeling_k5000():
    cfg = SystemConfig.from_scheme(1.1, 1.0, 4, K=5000, sigma2=0.0)
    s = simulate(cfg, 20, model="ideal")
    assert abs(s.p_d - evaluate(1.1, 1.0, 4, 64, 1.0)[0]) < 0.02


@pytest.mark.parametrize("K", [500, 2000, 8000])
def test_aot_upper_bounds_finite_k(K):
    alpha, beta = 1.2, 1.5
    cfg = SystemConfig.from_scheme(alpha, beta, 4, K=K, sigma2=0.0)
    s = simulate(cfg, 30, model="ideal")
    assert s.p_d <= evaluate(cfg.alpha, cfg.beta, 4, 64, 1.0)[0] + 3 * s.p_d_stderr


def test_recovery_fraction_flag():
    alpha, beta = 1.1, 1.0
    Psi, Lam = make_poisson_specs(alpha, beta)
    res = aot_iterate(edge_perspective(Psi), edge_perspective(Lam))
    all_users = recovery_fraction(res, Lam, exclude_inactive=False)
    active = recovery_fraction(res, Lam)
    assert all_users == pytest.approx(res.p_d, abs=1e-9)
    assert active == pytest.approx(all_users / (1 - Lam.pmf[0]))
    cfg = SystemConfig.from_scheme(alpha, beta, 4, K=5000, sigma2=0.0)
    s = simulate(cfg, 20, model="ideal")
    assert abs(s.p_d_active - active) < 0.02
    assert abs(s.p_d - all_users) < 0.02


def test_expected_throughput():
    assert expected_throughput(0, 1.3, 1, 64, 4) == 0
    assert expected_throughput(0, 1.3, 1, 64, 4, "sec4") == 0
    assert expected_throughput(1, 1, 1, 64, 4, "sec4") == pytest.approx(60)
    assert expected_throughput(1, 1, 1, 64, 4) == pytest.approx(3.75)
    with pytest.raises(ValueError):
        expected_throughput(1, 1, 1, 64, 4, "bogus")


@given(p=st.floats(0, 1), a=st.floats(0.1, 3), tau=st.integers(1, 63))
@settings(max_examples=40, deadline=None)
def test_normalization_ratio(p, a, tau):
    e = expected_throughput(p, a, 1.0, 64, tau)
    s = expected_throughput(p, a, 1.0, 64, tau, "sec4")
    assert s == pytest.approx(e * 64 / tau)


def test_pi_table(tmp_path):
    t = PiTable(np.array([1.0, 0.9, 0.5]))
    assert t[1] == 1.0 and t[3] == 0.5 and t[10] == 0.5
    assert t.extended(5).tolist() == [1.0, 0.9, 0.5, 0.5, 0.5]
    with pytest.raises(IndexError):
        t[0]
    with pytest.warns(RuntimeWarning):
        PiTable(np.array([0.5, 0.9]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PiTable(np.array([1.0, 1.0, 0.2]))
    with pytest.raises(ValueError):
        PiTable(np.array([1.2]))
    t.to_csv(tmp_path / "pi.csv")
    assert np.array_equal(PiTable.from_csv(tmp_path / "pi.csv").values, t.values)


def test_grid_csv(tmp_path):
    alphas = [0.8, 1.1, 1.4]
    rows = throughput_grid(alphas, 1.0, 4, 64, 1.0)
    out = [(a, 1.0, 4, p, g) for a, (p, g) in zip(alphas, rows)]
    write_grid_csv(out, tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "alpha,beta,tau,p_d,gamma"
    assert len(lines) == 4
