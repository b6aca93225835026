import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from afc_sim.analysis import detect_revivals
from afc_sim.dynamics import (FOUR_LEVEL_SUPERPOSITION, DensityState, PureState, build_liouvillian, evolve_closed,
                              evolve_lindblad_dense, evolve_trajectories, initial_state, jump_weights,
                              lindblad_superoperator, prepare_cavity_state)
from afc_sim.model import (LossRates, UniformEnvelope, assemble_hamiltonian, build_comb, enumerate_basis,
                           jump_operators, mhz_to_angular)
from afc_sim.spectrum import comb_spectra, spacing_stats


def small_system(omega=30.0, m=1, n_prime=1, pc=1, ec=1):
    comb = build_comb(m, 40.0, 3000.0, n_prime, UniformEnvelope(omega))
    basis = enumerate_basis(comb, pc, ec)
    return comb, basis, assemble_hamiltonian(comb, basis)


# --- state preparation -----------------------------------------------------

def test_coherent_zero_is_vacuum():
    assert np.array_equal(prepare_cavity_state("coherent", 4, alpha=0), [1, 0, 0, 0, 0])


def test_four_level_superposition_weights():
    psi = prepare_cavity_state("superposition")
    assert abs(psi[2]) ** 2 == pytest.approx(15 / 100)
    assert np.sum(np.abs(FOUR_LEVEL_SUPERPOSITION) ** 2) == pytest.approx(100)
    assert np.linalg.norm(psi) == pytest.approx(1)


def test_cat_has_no_odd_amplitudes():
    cat = prepare_cavity_state("cat", 20, beta=2.0)
    assert np.all(cat[1::2] == 0)


def test_tail_tolerance():
    with pytest.raises(ValueError, match="outside"):
        prepare_cavity_state("coherent", 3, alpha=2.0)
    auto = prepare_cavity_state("coherent", alpha=math.sqrt(2), tail_tol=1e-3)
    full = prepare_cavity_state("coherent", 40, alpha=math.sqrt(2))
    assert 1 - np.sum(np.abs(full[:len(auto)]) ** 2) <= 1e-3
    assert 1 - np.sum(np.abs(full[:len(auto) - 1]) ** 2) > 1e-3


def test_fock_coefficients_normalised():
    psi = prepare_cavity_state("fock", coeffs=[0, 1, 1])
    assert np.allclose(psi, [0, 1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_initial_state_beyond_basis():
    _, basis, _ = small_system()
    with pytest.raises(ValueError):
        initial_state(basis, [0, 0, 1])


# --- closed evolution ------------------------------------------------------

def test_uncoupled_state_is_stationary():
    _, basis, H = small_system(omega=0.0, pc=2, ec=2)
    psi0 = initial_state(basis, [0.6, 0, 0.8])
    traj = evolve_closed(H, psi0, np.linspace(0, 50, 11))
    assert np.allclose(traj.photon_number, 0.8 ** 2 * 2, atol=1e-10)


def test_vacuum_rabi_oscillation():
    _, basis, H = small_system(omega=30.0)
    t = np.linspace(0, 60, 121)
    traj = evolve_closed(H, initial_state(basis, [0, 1]), t)
    w = mhz_to_angular(30.0)
    assert np.allclose(traj.photon_number, np.cos(w * t) ** 2, atol=1e-7)
    assert traj.info["norm_drift"] < 1e-7


def test_engineered_comb_revival(engineered_comb):
    basis = enumerate_basis(engineered_comb, 2, 2)
    H = assemble_hamiltonian(engineered_comb, basis)
    t = np.linspace(0, 35, 351)
    traj = evolve_closed(H, initial_state(basis, [0, 1, 1] / np.sqrt(2)), t)
    t_rev = spacing_stats(comb_spectra(engineered_comb, (1,))[1]).t_rev
    rev = detect_revivals(t, traj.photon_number, t_rev, 1)[0]
    assert rev.t_peak == pytest.approx(27.5, abs=0.3)


# --- master equation -------------------------------------------------------

def test_jump_weights_conventions():
    comb, basis, _ = small_system()
    ops = jump_operators(comb, basis)
    rates = LossRates(1.0, 2.0, 3.0)
    lit = jump_weights(ops, rates)
    half = jump_weights(ops, rates, "half")
    k = 2 * math.pi * 1e-3
    assert lit == pytest.approx([k, 2 * k, 12 * k])
    assert half == pytest.approx([k, 2 * k, 6 * k])
    with pytest.raises(ValueError):
        jump_weights(ops, rates, "other")


def test_trace_is_left_null_vector(rng):
    comb, basis, H = small_system(m=3, n_prime=2, pc=2, ec=2)
    L = build_liouvillian(H, jump_operators(comb, basis), LossRates(0.5, 0.3, 0.7))
    vec_eye = np.eye(basis.size).ravel()
    assert np.abs(vec_eye @ L).max() < 1e-12


def test_zero_rates_match_closed_evolution(rng):
    comb, basis, H = small_system(m=3, n_prime=2, pc=2, ec=2)
    v = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    psi0 = PureState(basis, v / np.linalg.norm(v))
    t = np.linspace(0, 40, 41)
    L = build_liouvillian(H, jump_operators(comb, basis), LossRates())
    dense = evolve_lindblad_dense(L, DensityState.from_pure(psi0), t, rtol=1e-10)
    closed = evolve_closed(H, psi0, t, rtol=1e-10)
    assert np.allclose(dense.photon_number, closed.photon_number, atol=1e-8)
    rho = dense.final_state
    assert abs(np.trace(rho @ rho).real - 1) < 1e-8


def test_cavity_decay_envelope():
    comb, basis, H = small_system(omega=0.0, pc=6, ec=6)
    cav = prepare_cavity_state("coherent", 6, alpha=1.0, tail_tol=1e-3)
    n0 = float(np.sum(np.arange(7) * np.abs(cav) ** 2))
    t = np.linspace(0, 150, 31)
    L = build_liouvillian(H, jump_operators(comb, basis), LossRates(kappa=0.4))
    traj = evolve_lindblad_dense(L, DensityState.from_pure(initial_state(basis, cav)), t, rtol=1e-10)
    assert np.allclose(traj.photon_number, n0 * np.exp(-mhz_to_angular(0.4) * t), atol=1e-8)


def test_empty_cavity_stays_empty():
    comb, basis, H = small_system(pc=2, ec=2)
    L = build_liouvillian(H, jump_operators(comb, basis), LossRates(kappa=1.0, gamma_h=1.0, gamma_p=1.0))
    traj = evolve_lindblad_dense(L, DensityState.from_pure(initial_state(basis, [1.0])), np.linspace(0, 20, 5))
    assert np.allclose(traj.photon_number, 0.0, atol=1e-14)


def test_damped_rabi_against_single_excitation_exponential():
    """Single-excitation block: rho' = -i(H_eff rho - rho H_eff^dagger), a 4x4
    exponential in column-stacked form."""
    kappa, omega = 3.0, 20.0
    comb, basis, H = small_system(omega=omega)
    L = build_liouvillian(H, jump_operators(comb, basis), LossRates(kappa=kappa))
    t = np.linspace(0, 60, 61)
    traj = evolve_lindblad_dense(L, DensityState.from_pure(initial_state(basis, [0, 1])), t, rtol=1e-10)

    k, w = mhz_to_angular(kappa), mhz_to_angular(omega)
    H_eff = np.array([[-0.5j * k, w], [w, 0]])   # rows: |1_c,0>, |0_c,1>
    A = -1j * (np.kron(np.eye(2), H_eff) - np.kron(H_eff.conj(), np.eye(2)))
    rho0 = np.array([1, 0, 0, 0], dtype=complex)
    expected = [(expm(A * s) @ rho0)[0].real for s in t]
    assert np.allclose(traj.photon_number, expected, atol=1e-8)


def test_dense_guard():
    comb, basis, H = small_system(m=3, n_prime=3, pc=3, ec=3)
    with pytest.raises(ValueError, match="guard"):
        build_liouvillian(H, jump_operators(comb, basis), LossRates(kappa=1), max_dim=10)


def test_superoperator_matches_direct_generator(rng):
    d = 3
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = H + H.conj().T
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    L = lindblad_superoperator(sp.csr_matrix(H), [(sp.csr_matrix(x), 0.7)])
    direct = (-1j * (H @ rho - rho @ H)
              + 0.7 * (x @ rho @ x.conj().T - 0.5 * (x.conj().T @ x @ rho + rho @ x.conj().T @ x)))
    assert np.allclose((L @ rho.ravel()).reshape(d, d), direct)


# --- trajectories ----------------------------------------------------------

def test_lossless_trajectories_equal_closed():
    comb, basis, H = small_system(m=3, n_prime=2, pc=2, ec=2)
    psi0 = initial_state(basis, [0, 1, 1] / np.sqrt(2))
    t = np.linspace(0, 30, 31)
    traj = evolve_trajectories(H, jump_operators(comb, basis), LossRates(), psi0, t, 5, seed=1)
    closed = evolve_closed(H, psi0, t, rtol=1e-11)
    assert np.allclose(traj.photon_number, closed.photon_number, atol=1e-8)
    assert np.allclose(traj.photon_number_sem, 0, atol=1e-7)
    assert traj.info["jumps"] == 0


def test_trajectories_agree_with_dense():
    comb, basis, H = small_system(omega=10.0, pc=1, ec=2)
    assert basis.size == 4
    rates = LossRates(kappa=3.0, gamma_h=2.0, gamma_p=1.0)
    jumps = jump_operators(comb, basis)
    psi0 = initial_state(basis, [0, 1])
    t = np.linspace(0, 100, 51)
    traj = evolve_trajectories(H, jumps, rates, psi0, t, 2000, seed=11)
    dense = evolve_lindblad_dense(build_liouvillian(H, jumps, rates), DensityState.from_pure(psi0), t, rtol=1e-10)
    assert np.all(np.abs(traj.photon_number - dense.photon_number) <= 3 * traj.photon_number_sem + 1e-6)


def test_trajectory_determinism_across_threads():
    comb, basis, H = small_system(m=3, n_prime=1, pc=2, ec=2)
    jumps = jump_operators(comb, basis)
    rates = LossRates(kappa=2.0, gamma_h=1.0, gamma_p=1.0)
    psi0 = initial_state(basis, [0, 1, 1] / np.sqrt(2))
    t = np.linspace(0, 40, 21)
    one = evolve_trajectories(H, jumps, rates, psi0, t, 250, seed=5, threads=1)
    four = evolve_trajectories(H, jumps, rates, psi0, t, 250, seed=5, threads=4)
    again = evolve_trajectories(H, jumps, rates, psi0, t, 250, seed=5, threads=1)
    assert one.photon_number.tobytes() == four.photon_number.tobytes() == again.photon_number.tobytes()
    assert one.photon_number_sem.tobytes() == four.photon_number_sem.tobytes()
    other = evolve_trajectories(H, jumps, rates, psi0, t, 250, seed=6)
    assert other.photon_number.tobytes() != one.photon_number.tobytes()


def test_trajectories_reject_bad_input():
    comb, basis, H = small_system()
    psi0 = initial_state(basis, [0, 1])
    with pytest.raises(ValueError):
        evolve_trajectories(H, jump_operators(comb, basis), LossRates(), psi0, [0, 1], 0, seed=0)
    with pytest.raises(ValueError):
        evolve_trajectories(H, jump_operators(comb, basis), LossRates(), psi0, [1, 0], 1, seed=0)
