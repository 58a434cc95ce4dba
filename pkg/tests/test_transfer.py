import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randschro.operator_model import (Hamiltonian, PotentialSpec, build_diagonals, density_rho, rescale,
                                      sturm_counts)
from randschro.transfer import (PhaseStepError, DiscretePhaseState, diagonalization, discrete_phase_step,
                                evolve_chain, forward_phase, lift, mobius_X, mobius_X_inv, oscillation_count,
                                oscillation_counts, oscillation_roots, perturbations, secular_roots, sup_trace,
                                sup_trace_statistic, transfer_inverse, transfer_matrix)

S = np.array([[0, 1], [1, 0]])


def critical(n, seed, rows=1, sigma=1.0):
    return build_diagonals(PotentialSpec("critical", sigma, n), seed, np.arange(rows))


def test_transfer_matrix_algebra():
    T0 = transfer_matrix(0.0)
    assert np.array_equal(T0, [[0, -1], [1, 0]])
    assert np.allclose(np.linalg.matrix_power(T0, 4), np.eye(2))
    for x in (-1.7, 0.3, 2.5):
        assert np.linalg.det(transfer_matrix(x)) == pytest.approx(1.0)
        assert np.allclose(transfer_inverse(x) @ transfer_matrix(x), np.eye(2))
    x, y = 0.4, -1.1
    assert np.allclose(transfer_matrix(y) @ transfer_inverse(x), np.eye(2) + np.array([[0, y - x], [0, 0]]))


def test_diagonalization():
    for E in (-1.5, 0.0, 1.0, 1.9):
        d = diagonalization(E)
        assert np.allclose(d.Z @ d.D @ d.Zinv, transfer_matrix(E))
        assert np.allclose(d.Zinv @ d.Z, np.eye(2))
        assert np.linalg.det(d.Zinv) == pytest.approx(0.5j * density_rho(E))


def test_zero_chain_is_trivial():
    ch = evolve_chain(1.0, np.zeros(50), 0.0)
    assert np.allclose(ch.Q, np.eye(2))
    assert np.allclose(ch.X, np.eye(2))


def test_chain_invariants():
    v = critical(300, 5)[0]
    ch = evolve_chain(1.0, v, 4.0)
    assert np.allclose(np.linalg.det(ch.M), 1.0, atol=1e-9)
    # conjugate-swap symmetry of X for real lambda
    assert np.allclose(ch.X, S @ ch.X.conj() @ S, atol=1e-10)
    # Q_l = T^{-l} M_l
    Tinv = transfer_inverse(1.0)
    for ell in (1, 17, 300):
        assert np.allclose(ch.Q[ell], np.linalg.matrix_power(Tinv, ell) @ ch.M[ell], atol=1e-9)
    d = diagonalization(1.0)
    assert np.allclose(ch.X[-1], d.Zinv @ ch.Q[-1] @ d.Z, atol=1e-9)


def test_sup_trace_zero_noise_bounded():
    ch = evolve_chain(1.0, np.zeros(10_000), 0.0)
    tr = np.einsum("lij,lij->l", ch.M, ch.M.conj()).real
    assert tr[0] == pytest.approx(2.0)
    T = transfer_matrix(1.0)
    assert tr.max() == pytest.approx(max(np.sum(np.linalg.matrix_power(T, k) ** 2) for k in range(6)))
    assert sup_trace_statistic([ch]) == pytest.approx(tr.max())
    assert sup_trace(1.0, np.zeros((1, 10_000)), [0.0])[0] == pytest.approx(tr.max())


def test_sup_trace_tail_decreasing():
    v = critical(400, 6, rows=300)
    s = sup_trace(1.0, v, np.linspace(-10, 10, 9))
    p = [np.mean(s >= t) for t in (5, 10, 20)]
    assert p[0] >= p[1] >= p[2]
    assert p[0] > p[2]


@settings(max_examples=50, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-5, 5))
def test_mobius_preserves_circle(a, eps):
    xi = cmath.exp(1j * a)
    rho = density_rho(1.0)
    y = mobius_X(xi, eps, rho)
    assert abs(abs(y) - 1) < 1e-12
    assert abs(mobius_X_inv(y, eps, rho) - xi) < 1e-12


def test_phase_step_identity_and_errors():
    s = DiscretePhaseState.initial()
    s1 = discrete_phase_step(s, 1.0, 0.0)
    assert s1.unit == pytest.approx(s.unit) and s1.lifted == pytest.approx(s.lifted)
    with pytest.raises(PhaseStepError):
        discrete_phase_step(DiscretePhaseState(0, 2.0 + 0j, 0.0), 1.0, 0.1)


def test_phase_steps_match_chain():
    n = 1000
    v = critical(n, 2)[0]
    lam = 3.0
    ch = evolve_chain(1.0, v, lam)
    eps = perturbations(1.0, v, lam)
    s = DiscretePhaseState.initial()
    for e in eps:
        s = discrete_phase_step(s, 1.0, float(e))
    X = ch.X[-1]
    ratio = (X[0, 0] - X[0, 1]) / (X[1, 0] - X[1, 1])
    assert abs(s.unit - ratio / abs(ratio)) < 1e-6
    assert abs(s.lifted - ch.phase()[-1]) < 1e-6
    assert abs(forward_phase(1.0, v, [lam])[0] - s.lifted) < 1e-8


def test_lift():
    a = np.array([3.0, -3.0, -0.2])
    out = lift(a)
    assert np.allclose(np.diff(out), [2 * math.pi - 6.0, 2.8])
    assert lift(a, start=3.0 + 4 * math.pi)[0] == pytest.approx(3.0 + 4 * math.pi)


def test_oscillation_count_edge_cases():
    v = critical(100, 1)[0]
    assert oscillation_count(1.0, v, 2.0, 2.0) == 0
    with pytest.raises(ValueError):
        oscillation_count(1.0, v, 3.0, 2.0)


def test_oscillation_matches_sturm():
    n, E = 500, 1.0
    v = critical(n, 17, rows=100)
    rho = density_rho(E)
    l1, l2 = -13.0, 17.5
    osc = oscillation_counts(E, v, l1, l2)
    mu = np.broadcast_to(E + np.array([l1, l2]) / (rho * n), (100, 2))
    st_ = sturm_counts(v, mu)
    assert np.array_equal(osc, st_[:, 1] - st_[:, 0])


def test_zero_noise_counts_jump_at_closed_form():
    n, E = 200, 1.0
    rho = density_rho(E)
    lam_k = rho * n * (2 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1)) - E)
    inside = np.sort(lam_k[np.abs(lam_k) < 20])
    v = np.zeros(n)
    for lk in inside:
        assert oscillation_count(E, v, lk - 1e-6, lk + 1e-6) == 1
        assert oscillation_count(E, v, lk + 1e-6, lk + 0.5) == 0
    roots = oscillation_roots(E, v, -20, 20, tol=1e-10)[0]
    assert np.allclose(roots, inside, atol=1e-8)
    sec = secular_roots(E, v, (-20, 20), 1e-10)
    assert np.allclose(sec, inside, atol=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.2, 2.0))
def test_secular_roots_agree_with_dense(seed, sigma):
    n, E = 150, 1.0
    v = critical(n, seed, sigma=sigma)[0]
    rho = density_rho(E)
    dense = rescale(np.linalg.eigvalsh(Hamiltonian(v).dense()), E, n)
    ref = dense[(dense >= -15) & (dense <= 15)]
    sec = secular_roots(E, v, (-15, 15), 1e-10)
    assert len(sec) == len(ref) == oscillation_count(E, v, -15, 15)
    assert np.allclose(sec, ref, atol=1e-7)
    # each root maps to an eigenvalue: a shifted solve blows up
    for lam in sec:
        mu = E + lam / (rho * n)
        assert np.min(np.abs(np.linalg.eigvalsh(Hamiltonian(v).dense()) - mu)) < 1e-10 / (rho * n) * 10
