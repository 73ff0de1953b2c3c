import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringbec import fsm
from ringbec.fsm import (CoherenceTriple, FsmParams, FsmState,
                         build_hamiltonian, characteristic_roots,
                         coherence_matrix, coherence_rhs, integrate_fsm,
                         integrate_general, omega_from_root, omega_fsm)

# reference coupling at R=5, g2d=1 (Fig-style working point)
REF = FsmParams(U=0.0127788, mu1=0.5287706, mu3=0.6962775)


def random_state(rng):
    a = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return FsmState(a / np.linalg.norm(a))


# ----------------------------------------------------------------- structure

def test_params_validation():
    with pytest.raises(fsm.FsmError):
        FsmParams(U=0.01, mu1=0.7, mu3=0.5)  # inverted gap
    assert REF.delta == pytest.approx(0.1675069, abs=1e-6)
    assert REF.weak_regime


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hamiltonian_hermitian(seed):
    state = random_state(np.random.default_rng(seed))
    H = build_hamiltonian(state, REF)
    assert np.allclose(H, H.conj().T, atol=1e-14)


def test_hamiltonian_u_zero_is_diagonal():
    state = random_state(np.random.default_rng(0))
    H = build_hamiltonian(state, FsmParams(U=0.0, mu1=0.5, mu3=0.7))
    assert np.allclose(H, np.diag([0.5, 0.5, 0.7, 0.7]))


def test_four_state_matches_general_truncation(rng):
    # the explicit 4x4 form must equal the generic odd-l coupled equations
    # restricted to the same basis
    state = random_state(rng)
    amps = {l: a for l, a in zip(fsm.BASIS, state.amplitudes)}
    mu = {1: REF.mu1, -1: REF.mu1, 3: REF.mu3, -3: REF.mu3}
    general = fsm.general_rhs(amps, REF.U, mu)
    explicit = -1j * (build_hamiltonian(state, REF) @ state.amplitudes)
    for i, l in enumerate(fsm.BASIS):
        assert general[l] == pytest.approx(explicit[i], abs=1e-14)


# ---------------------------------------------------------------- integration

def test_u_zero_evolution_is_pure_phase():
    params = FsmParams(U=0.0, mu1=0.5, mu3=0.7)
    state = FsmState(np.array([0.6, 0.4, 0.5, 0.48], dtype=complex))
    traj = integrate_fsm(state, params, 2.0, dt=1e-3)
    expected = state.amplitudes * np.exp(
        -1j * np.array([0.5, 0.5, 0.7, 0.7]) * 2.0)
    assert np.allclose(traj.amplitudes[-1], expected, atol=1e-10)


def test_norm_conserved_and_populations_bounded():
    state = FsmState.from_imbalance(0.7, 0.3)
    traj = integrate_fsm(state, REF, 100.0, dt=5e-3, store_stride=100)
    assert traj.norm_drift() < 1e-10
    pops = traj.populations()
    assert np.all(pops >= -1e-12) and np.all(pops <= 1 + 1e-12)
    # the |3| populations stay slaved (weak coupling)
    assert np.max(pops[:, 2:]) < 0.02


def test_dt_guard():
    with pytest.raises(fsm.FsmError):
        integrate_fsm(FsmState.from_imbalance(0.7, 0.3), REF, 1.0, dt=0.5)


def test_coherence_oscillates_at_twice_omega():
    state = FsmState.from_imbalance(0.7, 0.3)
    traj = integrate_fsm(state, REF, 400.0, dt=5e-3, store_stride=20)
    phase = np.unwrap(np.angle(traj.coherence_1p1m()))
    slope = np.polyfit(traj.t, phase, 1)[0]
    omega = omega_fsm(REF.U, REF.delta, 0.4)
    assert slope == pytest.approx(2 * omega, rel=2e-2)


# ------------------------------------------------------- characteristic cubic

def test_roots_satisfy_cubic():
    U, D, p1p, p1m = REF.U, REF.delta, 0.8, 0.2
    for k in characteristic_roots(U, D, p1p, p1m):
        resid = 1j * k**3 + 1j * k * (U * D + D**2 - p1p * p1m * U**2) \
            + U * D**2 * (p1p - p1m)
        assert abs(resid) < 1e-12


def test_roots_are_coherence_matrix_eigenvalues():
    # lambda = i k maps the cubic's roots onto eig(-i M)... equivalently
    # the eigenvalues of M are the roots of the same cubic in disguise
    p1p, p1m = 0.7, 0.3
    M = coherence_matrix(REF, p1p, p1m)
    eigs = np.linalg.eigvals(M)
    ks = characteristic_roots(REF.U, REF.delta, p1p, p1m)
    # a normal-mode ansatz e^{kt} in d(rho)/dt = -iM rho gives lambda = i k
    assert abs(np.trace(M)) < 1e-14
    assert np.allclose(np.sort_complex(eigs), np.sort_complex(1j * ks),
                       atol=1e-10)


def test_balanced_case_has_zero_rotation_root():
    ks = characteristic_roots(REF.U, REF.delta, 0.5, 0.5)
    assert ks[0] == 0.0
    assert omega_from_root(ks[0]) == 0.0
    assert omega_fsm(REF.U, REF.delta, 0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 0.02), st.floats(0.1, 0.5), st.floats(0.501, 0.999))
def test_root_and_closed_form_agree_to_second_order(U, D, p1p):
    # weak coupling only (U/Delta <= 0.2): the closed form drops (U/Delta)^2
    ks = characteristic_roots(U, D, p1p, 1 - p1p)
    om_root = omega_from_root(ks[0])
    om_cf = omega_fsm(U, D, 2 * p1p - 1)
    assert om_root == pytest.approx(om_cf, rel=0.05, abs=1e-12)


def test_rotation_sign_follows_imbalance():
    for p1p, sign in ((0.8, 1), (0.2, -1)):
        om = omega_fsm(REF.U, REF.delta, 2 * p1p - 1)
        assert np.sign(om) == sign
        om_root = omega_from_root(
            characteristic_roots(REF.U, REF.delta, p1p, 1 - p1p)[0])
        assert np.sign(om_root) == sign


def test_reference_omega_value():
    # frozen: U = 0.0127788, Delta = 0.1675069, n = 0.4
    om = omega_fsm(REF.U, REF.delta, 0.4)
    assert om == pytest.approx(2.37461e-3, rel=1e-4)


def test_coherence_rhs_matches_matrix():
    c = CoherenceTriple(rho_1p1m=0.1 + 0.2j, rho_1p3p_conj=0.01j,
                        rho_1m3m=0.02, p1p=0.7, p1m=0.3)
    dydt = coherence_rhs(c, REF)
    manual = -1j * (coherence_matrix(REF, 0.7, 0.3) @ c.vector())
    assert np.allclose(dydt, manual, atol=1e-15)


# ------------------------------------------------------------ coupled overlap

def test_fsm_params_from_profile(profile1, profile3):
    params = fsm.fsm_params(profile1, 1.0, profile1.mu, profile3.mu)
    # U = g2d * 2pi * int f^4 r dr, frozen from the reference profile
    assert params.U == pytest.approx(0.0127788, rel=1e-4)
    assert fsm.overlap_integral(profile1) == pytest.approx(params.U, rel=1e-12)


def test_integrate_general_matches_four_state():
    state = FsmState.from_imbalance(0.7, 0.3)
    amps = {l: a for l, a in zip(fsm.BASIS, state.amplitudes)}
    mu = {1: REF.mu1, -1: REF.mu1, 3: REF.mu3, -3: REF.mu3}
    traj4 = integrate_fsm(state, REF, 10.0, dt=1e-3, store_stride=1000)
    ts, dicts = integrate_general(amps, REF.U, mu, 10.0, dt=1e-3,
                                  store_stride=1000)
    final = np.array([dicts[-1][l] for l in fsm.BASIS])
    assert np.allclose(final, traj4.amplitudes[-1], atol=1e-10)
