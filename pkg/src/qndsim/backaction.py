"""Detector back-action on the qubit through the photon-number noise.

The qubit is diagonalized to its energy eigenbasis (mixing angle eta,
splitting E); the resonator occupation couples through
sigma_n = cos(eta) sigma_z + sin(eta) sigma_x, and second-order transition
and dephasing rates follow from the Lorentzian number-noise spectrum.

Basis order everywhere in this module: index 0 = ground |down>,
index 1 = excited |up>, so populations[..., 1] relaxes toward
gamma_up / (gamma_up + gamma_down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import NumericsError, SystemParams, integrate

__all__ = [
    "QubitEigenbasis",
    "NoiseSpectrum",
    "RateSet",
    "ReducedRecord",
    "eigenbasis",
    "number_correlator",
    "noise_spectrum",
    "spectral_density",
    "rates",
    "redfield_tensor",
    "evolve_reduced",
]


@dataclass(frozen=True)
class QubitEigenbasis:
    """Energy eigenbasis of (epsilon/2) sigma_z + (delta/2) sigma_x."""

    eta: float
    splitting: float
    up_state: np.ndarray
    down_state: np.ndarray


@dataclass(frozen=True)
class NoiseSpectrum:
    """Lorentzian photon-number noise, peaked at omega = -delta_omega."""

    n_bar: float
    kappa: float
    delta_omega: float

    def __call__(self, omega):
        return (self.n_bar * self.kappa
                / ((np.asarray(omega, dtype=float) + self.delta_omega) ** 2
                   + self.kappa ** 2 / 4.0))


@dataclass(frozen=True)
class RateSet:
    """Second-order back-action rates and the effective temperature.

    gamma_phi = (gamma_up + gamma_down)/2 + gamma_phi_pure by construction;
    t_eff solves gamma_up/gamma_down = exp(-splitting/t_eff), +inf when the
    ratio is 1 and negative under population inversion.
    """

    gamma_up: float
    gamma_down: float
    gamma_phi: float
    gamma_phi_pure: float
    t_eff: float


@dataclass(frozen=True)
class ReducedRecord:
    """Interaction-picture reduced qubit evolution (energy basis)."""

    t_grid: np.ndarray
    matrices: np.ndarray      # (n, 2, 2) complex
    populations: np.ndarray   # (n, 2) real, [ground, excited]
    coherence01: np.ndarray   # |rho_01|
    sigma_z: np.ndarray       # excited minus ground population


def eigenbasis(epsilon: float, delta: float) -> QubitEigenbasis:
    """Mixing angle, splitting and eigenvectors; errors at epsilon = delta = 0."""
    if epsilon == 0.0 and delta == 0.0:
        raise ValueError("eigenbasis undefined for epsilon = delta = 0")
    eta = math.atan2(delta, epsilon)
    e = math.hypot(epsilon, delta)
    up = np.array([math.cos(eta / 2.0), math.sin(eta / 2.0)], dtype=complex)
    down = np.array([-math.sin(eta / 2.0), math.cos(eta / 2.0)], dtype=complex)
    return QubitEigenbasis(eta=eta, splitting=e, up_state=up, down_state=down)


def _n_bar(params: SystemParams) -> float:
    # steady occupation of the bare driven cavity at the operating point
    return params.f ** 2 / (params.kappa ** 2 / 4.0 + params.delta_omega ** 2)


def number_correlator(params: SystemParams, tau):
    """Photon-number fluctuation correlator n_bar e^(i dw tau - kappa|tau|/2).

    Accepts scalar or array tau; C(-tau) = C(tau)* by construction.
    """
    tau = np.asarray(tau, dtype=float)
    out = _n_bar(params) * np.exp(1j * params.delta_omega * tau
                                  - 0.5 * params.kappa * np.abs(tau))
    return complex(out) if out.ndim == 0 else out


def noise_spectrum(params: SystemParams) -> NoiseSpectrum:
    return NoiseSpectrum(n_bar=_n_bar(params), kappa=params.kappa,
                         delta_omega=params.delta_omega)


def spectral_density(params: SystemParams, omega: float) -> float:
    """Full-axis transform of the correlator: n_bar kappa / ((w+dw)^2 + kappa^2/4)."""
    return float(noise_spectrum(params)(omega))


def rates(params: SystemParams, basis: QubitEigenbasis) -> RateSet:
    """Excitation, relaxation and dephasing rates for the sigma_n coupling.

    gamma_down = g^2 sin^2(eta) S(E), gamma_up = g^2 sin^2(eta) S(-E),
    gamma_phi_pure = g^2 cos^2(eta) S(0).
    """
    s = noise_spectrum(params)
    w01 = basis.splitting
    g2 = params.g ** 2
    sin2 = math.sin(basis.eta) ** 2
    cos2 = math.cos(basis.eta) ** 2
    gamma_down = g2 * sin2 * float(s(w01))
    gamma_up = g2 * sin2 * float(s(-w01))
    gamma_phi_pure = g2 * cos2 * float(s(0.0))
    gamma_phi = 0.5 * (gamma_up + gamma_down) + gamma_phi_pure

    if gamma_down == 0.0 and gamma_up > 0.0:
        raise ValueError("gamma_down = 0 with gamma_up > 0: no balance "
                         "temperature exists for this spectrum")
    if gamma_down == 0.0 or gamma_up == gamma_down:
        t_eff = math.inf
    else:
        t_eff = -w01 / math.log(gamma_up / gamma_down)
    return RateSet(gamma_up=gamma_up, gamma_down=gamma_down,
                   gamma_phi=gamma_phi, gamma_phi_pure=gamma_phi_pure,
                   t_eff=t_eff)


def _sigma_n_matrix(basis: QubitEigenbasis) -> np.ndarray:
    # flux operator sigma_z re-expressed in the (down, up) energy basis
    v = np.column_stack([basis.down_state, basis.up_state])
    sz = np.diag([1.0, -1.0]).astype(complex)
    return v.conj().T @ sz @ v


_ENERGY_SIGN = np.array([-0.5, 0.5])  # eigenenergies in units of the splitting


def redfield_tensor(params: SystemParams, basis: QubitEigenbasis,
                    t: float, tau: float) -> np.ndarray:
    """Second-order memory tensor M(t, tau), shape (2, 2, 2, 2).

    rho'_{kk'}(t) = -Integral_0^t dtau Sum_{ll'} M_{kk'll'}(t, tau) rho_{ll'}(t)
    with sigma_n taken to the interaction picture of the qubit splitting and
    the resonator traced against number_correlator.  Sum_k M_{kkll'} = 0
    identically (trace preservation).
    """
    sn = _sigma_n_matrix(basis)
    energies = _ENERGY_SIGN * basis.splitting
    de = energies[:, None] - energies[None, :]
    sig_t = np.exp(1j * de * t) * sn
    sig_tm = np.exp(1j * de * (t - tau)) * sn
    c = complex(number_correlator(params, tau))

    eye = np.eye(2, dtype=complex)
    a_mat = sig_t @ sig_tm
    b_mat = sig_tm @ sig_t
    m = (c * (np.einsum("kl,pq->kplq", a_mat, eye)
              - np.einsum("kl,qp->kplq", sig_tm, sig_t))
         + np.conj(c) * (np.einsum("qp,kl->kplq", b_mat, eye)
                         - np.einsum("kl,qp->kplq", sig_t, sig_tm)))
    return params.g ** 2 * m


def _memory_kernel(params: SystemParams, basis: QubitEigenbasis,
                   t: float) -> np.ndarray:
    """K(t) = Integral_0^t M(t, tau) dtau by composite Simpson, vectorized."""
    if t == 0.0:
        return np.zeros((2, 2, 2, 2), dtype=complex)
    sn = _sigma_n_matrix(basis)
    energies = _ENERGY_SIGN * basis.splitting
    de = energies[:, None] - energies[None, :]
    sig_t = np.exp(1j * de * t) * sn

    w_max = basis.splitting + abs(params.delta_omega) + params.kappa / 2.0
    n = max(16, int(math.ceil(t * w_max / 0.25)))
    n += n % 2
    tau = np.linspace(0.0, t, n + 1)
    weights = np.full(n + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= (t / n) / 3.0

    sig_tm = np.exp(1j * de[None, :, :] * (t - tau)[:, None, None]) * sn
    c = number_correlator(params, tau) * weights
    cbar = np.conj(number_correlator(params, tau)) * weights

    t1 = np.einsum("x,km,xml->kl", c, sig_t, sig_tm)       # int c(tau) sig(t)sig(t-tau)
    t2 = np.einsum("x,xkl->kl", c, sig_tm)                 # int c(tau) sig(t-tau)
    t3 = np.einsum("x,xqm,mp->qp", cbar, sig_tm, sig_t)    # int c* sig(t-tau)sig(t)
    t4 = np.einsum("x,xqp->qp", cbar, sig_tm)              # int c* sig(t-tau)

    eye = np.eye(2, dtype=complex)
    k = (np.einsum("kl,pq->kplq", t1, eye)
         - np.einsum("kl,qp->kplq", t2, sig_t)
         + np.einsum("qp,kl->kplq", t3, eye)
         - np.einsum("kl,qp->kplq", sig_t, t4))
    return params.g ** 2 * k


def _check_rho0(rho0: np.ndarray) -> np.ndarray:
    m = np.asarray(rho0, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"rho0 must be 2x2, got {m.shape}")
    if abs(m.trace() - 1.0) > 1e-9:
        raise ValueError("rho0 trace must be 1")
    if np.max(np.abs(m - m.conj().T)) > 1e-10:
        raise ValueError("rho0 must be Hermitian")
    if np.linalg.eigvalsh(m).min() < -1e-9:
        raise ValueError("rho0 must be positive semidefinite")
    return m


def evolve_reduced(params: SystemParams, basis: QubitEigenbasis,
                   rho0_qubit: np.ndarray, t_grid: Sequence[float],
                   mode: str = "markov",
                   step: Optional[float] = None) -> ReducedRecord:
    """Interaction-picture reduced qubit dynamics under the number noise.

    markov mode: constant-rate equations built from rates() (memory integral
    extended to infinity) -- populations exchange at gamma_up/gamma_down,
    coherence decays at gamma_phi.  time_dependent mode: integrates the
    time-local equation with the finite-memory kernel K(t) recomputed along
    the evolution, exposing the short-time (t < 1/kappa) transient.
    """
    rho0 = _check_rho0(rho0_qubit)
    t = np.asarray(t_grid, dtype=float)

    if mode == "markov":
        rs = rates(params, basis)
        gen = np.zeros((2, 2, 2, 2), dtype=complex)
        gen[1, 1, 1, 1] = -rs.gamma_down
        gen[1, 1, 0, 0] = rs.gamma_up
        gen[0, 0, 1, 1] = rs.gamma_down
        gen[0, 0, 0, 0] = -rs.gamma_up
        gen[0, 1, 0, 1] = -rs.gamma_phi
        gen[1, 0, 1, 0] = -rs.gamma_phi

        def rhs(_t, y):
            return np.einsum("kplq,lq->kp", gen, y)

        if step is None:
            # constant tiny generator: resolve the total rate, not epsilon
            rate_scale = max(rs.gamma_up + rs.gamma_down, rs.gamma_phi, 1e-300)
            step = min(0.02 / rate_scale,
                       float(np.diff(t).min()) if t.size > 1 else math.inf)
            if not math.isfinite(step):
                step = 1.0
    elif mode == "time_dependent":

        cache = {}

        def rhs(tk, y):
            if tk not in cache:
                cache.clear()
                cache[tk] = _memory_kernel(params, basis, tk)
            return -np.einsum("kplq,lq->kp", cache[tk], y)

        if step is None:
            rate_scale = max(basis.splitting, params.kappa,
                             abs(params.delta_omega), 1e-300)
            step = 1.0 / (50.0 * rate_scale)
    else:
        raise ValueError(f"mode must be 'markov' or 'time_dependent', got {mode!r}")

    mats = integrate(rhs, rho0, t, step)
    out = np.stack(mats)
    for tk, m in zip(t, out):
        if abs(m.trace() - 1.0) > 1e-8:
            raise NumericsError(f"reduced trace drifted at t = {tk:.6g}")
        if np.max(np.abs(m - m.conj().T)) > 1e-9:
            raise NumericsError(f"reduced state lost Hermiticity at t = {tk:.6g}")
    pops = out[:, [0, 1], [0, 1]].real
    return ReducedRecord(t_grid=t, matrices=out, populations=pops,
                         coherence01=np.abs(out[:, 0, 1]),
                         sigma_z=pops[:, 1] - pops[:, 0])
