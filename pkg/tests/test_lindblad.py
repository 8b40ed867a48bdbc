"""Unit tests for the joint master-equation integrator.

Oracles: block structure of hand-assembled Hamiltonians, the exactly
solvable driven cavity (g = 0), the conditional-amplitude ODE solution,
and the elementary antiderivative of the pointer product that feeds the
closed-form coherence.
"""

import math

import numpy as np
import pytest

from qndsim.analytic import alpha_of_t, gamma_m, pointer_state
from qndsim.core import (
    DensityMatrix,
    FockSpace,
    NumericsError,
    SystemParams,
    annihilation,
    fock_vacuum,
    number_operator,
    qubit_operator,
    tensor,
)
from qndsim.lindblad import (
    build_liouvillian,
    coherence_solution,
    conditional_amplitude,
    evolve,
    repeatability_experiment,
)

# the weak-drive operating point exercised throughout: conditioned
# detunings 0 and 0.6, about one steady photon in the shifted sector
P_ME = SystemParams(epsilon=0.0, g=0.3, kappa=0.1, f=0.05,
                    delta_omega=0.3, s_ii=20.0)


def plus_vacuum(space):
    plus = 0.5 * np.ones((2, 2), dtype=complex)
    return DensityMatrix(space, tensor(plus, fock_vacuum(space)))


# ---------------------------------------------------------------- generator

def test_sigma_z_hamiltonian_blocks():
    space = FockSpace(6)
    p = SystemParams(epsilon=2.0, g=0.3, kappa=0.1, f=0.7, delta_omega=0.5,
                     s_ii=1.0)
    h = build_liouvillian(p, space).hamiltonian
    n_op = number_operator(space)
    a = annihilation(space)
    drive = p.f * (a + a.conj().T)
    eye = np.eye(6)
    d = space.dim
    # sigma_z = +1 sector sees detuning delta_omega - g
    np.testing.assert_allclose(h[:d, :d],
                               (p.epsilon / 2.0) * eye
                               + (p.delta_omega - p.g) * n_op + drive,
                               atol=1e-14)
    np.testing.assert_allclose(h[d:, d:],
                               -(p.epsilon / 2.0) * eye
                               + (p.delta_omega + p.g) * n_op + drive,
                               atol=1e-14)
    np.testing.assert_allclose(h[:d, d:], np.zeros((d, d)), atol=0)
    assert np.max(np.abs(h - h.conj().T)) < 1e-14


def test_sigma_n_hamiltonian_blocks():
    space = FockSpace(5)
    p = SystemParams(epsilon=1.0, delta=0.1, g=0.02, kappa=0.1, f=0.3,
                     delta_omega=0.4, s_ii=1.0)
    h = build_liouvillian(p, space, coupling_mode="sigma_n").hamiltonian
    eta = math.atan2(p.delta, p.epsilon)
    energy = math.hypot(p.epsilon, p.delta)
    n_op = number_operator(space)
    a = annihilation(space)
    drive = p.f * (a + a.conj().T)
    eye = np.eye(5)
    d = space.dim
    np.testing.assert_allclose(h[:d, :d],
                               (energy / 2.0) * eye
                               + (p.delta_omega - p.g * math.cos(eta)) * n_op
                               + drive, atol=1e-14)
    # the QND-violating piece couples the sectors through -g sin(eta) n
    np.testing.assert_allclose(h[:d, d:], -p.g * math.sin(eta) * n_op,
                               atol=1e-14)


def test_build_liouvillian_validation():
    space = FockSpace(4)
    with pytest.raises(ValueError, match="sigma_n mode undefined"):
        build_liouvillian(SystemParams(epsilon=0.0, delta=0.0, s_ii=1.0),
                          space, coupling_mode="sigma_n")
    with pytest.raises(ValueError, match="coupling_mode must be"):
        build_liouvillian(P_ME, space, coupling_mode="dispersive")


def test_dissipators_only_for_nonzero_rates():
    space = FockSpace(4)
    liou = build_liouvillian(P_ME, space)
    assert len(liou.dissipators) == 1
    assert liou.dissipators[0][0] == P_ME.kappa
    p = SystemParams(epsilon=0.0, g=0.3, kappa=0.1, f=0.05, delta_omega=0.3,
                     gamma1=0.02, gamma2=0.05, s_ii=1.0)
    liou2 = build_liouvillian(p, space)
    assert [c for c, _, _ in liou2.dissipators] == [0.1, 0.02, 0.025]


def test_liouvillian_apply_is_traceless():
    space = FockSpace(5)
    liou = build_liouvillian(P_ME, space)
    rng = np.random.default_rng(3)
    m = rng.normal(size=(10, 10)) + 1j * rng.normal(size=(10, 10))
    rho = m @ m.conj().T
    rho /= rho.trace()
    assert abs(liou.apply(rho).trace()) < 1e-14


# ---------------------------------------------------------------- evolution

def test_driven_cavity_reaches_coherent_steady_state():
    # g = 0: the resonator decouples from the qubit and settles on the
    # coherent state -if/(kappa/2 + i delta_omega)
    p = SystemParams(epsilon=0.0, g=0.0, kappa=0.1, f=0.05, delta_omega=0.2,
                     s_ii=1.0)
    space = FockSpace(12)
    rec = evolve(build_liouvillian(p, space), plus_vacuum(space),
                 np.array([0.0, 400.0]))
    alpha = -1j * p.f / (p.kappa / 2.0 + 1j * p.delta_omega)
    assert rec.a_mean[-1] == pytest.approx(alpha, rel=1e-6)
    assert rec.n_mean[-1] == pytest.approx(abs(alpha) ** 2, rel=1e-6)
    assert rec.valid


def test_evolution_record_observables():
    space = FockSpace(10)
    rec = evolve(build_liouvillian(P_ME, space), plus_vacuum(space),
                 np.linspace(0.0, 10.0, 6))
    # sigma_z commutes with the generator in sigma_z mode
    np.testing.assert_allclose(rec.sigma_z, np.zeros(6), atol=1e-10)
    assert rec.coherence01[0] == pytest.approx(0.5, abs=1e-14)
    assert rec.a_mean[0] == 0.0
    assert np.all(np.diff(rec.n_mean[:3]) > 0.0)
    assert rec.valid
    traces = [abs(st.matrix.trace() - 1.0) for st in rec.states]
    assert max(traces) < 1e-9


def test_evolve_rejects_mismatched_space():
    liou = build_liouvillian(P_ME, FockSpace(8))
    with pytest.raises(ValueError, match="different Fock space"):
        evolve(liou, plus_vacuum(FockSpace(6)), [0.0, 1.0])


def test_truncation_overflow_flags_invalid():
    # one steady photon against a 4-level space: the top levels fill up
    p = SystemParams(epsilon=0.0, g=0.0, kappa=0.1, f=0.05, delta_omega=0.0,
                     s_ii=1.0)
    space = FockSpace(4)
    rec = evolve(build_liouvillian(p, space), plus_vacuum(space),
                 np.array([0.0, 60.0]))
    assert not rec.valid


def test_unstable_step_raises_numerics_error():
    p = SystemParams(epsilon=10.0, g=0.3, kappa=0.1, f=0.05, delta_omega=0.3,
                     s_ii=1.0)
    space = FockSpace(6)
    with pytest.raises(NumericsError):
        evolve(build_liouvillian(p, space), plus_vacuum(space),
               np.array([0.0, 50.0]), step=1.0)


# ---------------------------------------------------------------- conditional amplitudes

def test_conditional_amplitudes_follow_pointer_trajectories():
    space = FockSpace(12)
    tg = np.linspace(0.0, 10.0, 21)
    rec = evolve(build_liouvillian(P_ME, space), plus_vacuum(space), tg)
    for qubit_index, sz in ((0, +1), (1, -1)):
        me = np.array([conditional_amplitude(st, qubit_index)
                       for st in rec.states])
        ref = alpha_of_t(pointer_state(P_ME, sz), P_ME.kappa, tg)
        assert np.max(np.abs(me - ref)) < 1e-6


def test_conditional_amplitude_validation():
    space = FockSpace(6)
    ground = np.zeros((2, 2), dtype=complex)
    ground[0, 0] = 1.0
    rho = DensityMatrix(space, tensor(ground, fock_vacuum(space)))
    assert conditional_amplitude(rho, 0) == 0.0
    with pytest.raises(ValueError, match="no population"):
        conditional_amplitude(rho, 1)
    with pytest.raises(ValueError, match="qubit_index must be"):
        conditional_amplitude(rho, 2)


# ---------------------------------------------------------------- closed-form coherence

def _pointer_integral_closed(p: SystemParams, t: float) -> complex:
    # antiderivative of (f^2/(lam_p lam_m*)) (1 - e^{-lam_p s})(1 - e^{-lam_m* s})
    lam_p = p.kappa / 2.0 + 1j * (p.delta_omega + p.g)
    lam_mc = p.kappa / 2.0 - 1j * (p.delta_omega - p.g)
    pref = p.f ** 2 / (lam_p * lam_mc)

    def ramp(lam):
        return (np.exp(-lam * t) - 1.0) / lam

    return pref * (t + ramp(lam_p) + ramp(lam_mc) - ramp(lam_p + lam_mc))


def test_coherence_solution_matches_closed_integral():
    p = SystemParams(epsilon=0.0, g=0.3, kappa=0.1, f=0.05, delta_omega=0.3,
                     gamma2=0.01, s_ii=20.0)
    for t in (0.5, 3.0, 17.0, 40.0):
        expected = 0.5 * np.exp(-1j * (p.epsilon - 1j * p.gamma2) * t
                                - 2j * p.g * _pointer_integral_closed(p, t))
        got = coherence_solution(p, t, 0.5)
        assert got == pytest.approx(expected, rel=1e-9)
    assert coherence_solution(p, 0.0, 0.5) == 0.5
    with pytest.raises(ValueError):
        coherence_solution(p, -1.0, 0.5)


def test_coherence_solution_matches_master_equation():
    p = SystemParams(epsilon=0.0, g=0.3, kappa=0.1, f=0.05, delta_omega=0.3,
                     gamma2=0.01, s_ii=20.0)
    space = FockSpace(12)
    tg = np.linspace(0.0, 15.0, 16)
    rec = evolve(build_liouvillian(p, space), plus_vacuum(space), tg)
    for k in range(1, len(tg)):
        closed = abs(coherence_solution(p, tg[k], 0.5))
        assert closed == pytest.approx(rec.coherence01[k], rel=1e-6)


def test_coherence_pure_dephasing_limit():
    # g = 0 removes the measurement back-action entirely
    p = SystemParams(epsilon=0.0, g=0.0, kappa=0.1, f=0.05, delta_omega=0.3,
                     gamma2=0.02, s_ii=1.0)
    for t in (1.0, 10.0, 50.0):
        assert abs(coherence_solution(p, t, 0.5)) == pytest.approx(
            0.5 * math.exp(-p.gamma2 * t), rel=1e-12)


def test_long_time_coherence_decays_at_gamma_m():
    # after the pointer transient (kappa t >~ a few) the master-equation
    # coherence decays exponentially at the steady dephasing rate
    space = FockSpace(12)
    tg = np.linspace(0.0, 90.0, 31)
    rec = evolve(build_liouvillian(P_ME, space), plus_vacuum(space), tg)
    mask = tg >= 60.0
    slope = np.polyfit(tg[mask], np.log(rec.coherence01[mask]), 1)[0]
    assert -slope == pytest.approx(gamma_m(P_ME), rel=5e-2)


# ---------------------------------------------------------------- repeatability

def test_repeated_measurements_agree_in_sigma_z_mode():
    space = FockSpace(12)
    liou = build_liouvillian(P_ME, space)
    stats = repeatability_experiment(liou, plus_vacuum(space),
                                     t_meas=20.0, n_meas=3)
    np.testing.assert_allclose(stats.pair_agreement, 1.0, atol=1e-12)
    assert stats.mean_agreement == pytest.approx(1.0, abs=1e-12)
    assert stats.n_branches == 2
    assert stats.valid


def test_repeatability_single_branch_from_pure_sector():
    space = FockSpace(12)
    liou = build_liouvillian(P_ME, space)
    ground = np.zeros((2, 2), dtype=complex)
    ground[0, 0] = 1.0
    rho0 = DensityMatrix(space, tensor(ground, fock_vacuum(space)))
    stats = repeatability_experiment(liou, rho0, t_meas=10.0, n_meas=2)
    assert stats.n_branches == 1
    assert stats.pair_agreement[0] == pytest.approx(1.0, abs=1e-12)


def test_repeatability_validation():
    space = FockSpace(6)
    liou = build_liouvillian(P_ME, space)
    rho0 = plus_vacuum(space)
    with pytest.raises(ValueError, match="t_meas must be > 0"):
        repeatability_experiment(liou, rho0, t_meas=0.0, n_meas=2)
    with pytest.raises(ValueError, match="n_meas must be in 2..6"):
        repeatability_experiment(liou, rho0, t_meas=1.0, n_meas=1)
    with pytest.raises(ValueError, match="n_meas must be in 2..6"):
        repeatability_experiment(liou, rho0, t_meas=1.0, n_meas=7)
