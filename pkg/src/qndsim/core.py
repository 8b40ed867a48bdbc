"""Shared state types, operators and the fixed-step integrator.

Conventions used across the package: hbar = 1 and every frequency, rate
and coupling is an angular frequency in 1/ns (figure-caption values quoted
in GHz are used verbatim, no 2*pi factor).  The qubit basis is {|0>, |1>}
with sigma_z = diag(1, -1), so |0> is the sigma_z = +1 state.  Joint
qubit (x) resonator operators are Kronecker products with the qubit index
slowest-varying: joint index = qubit_index * dim + fock_index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NumericsError",
    "SystemParams",
    "FockSpace",
    "DensityMatrix",
    "annihilation",
    "number_operator",
    "qubit_operator",
    "tensor",
    "partial_trace",
    "expectation",
    "is_hermitian",
    "default_step",
    "integrate",
]


class NumericsError(RuntimeError):
    """An evolution produced a non-finite or inconsistent state."""


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the driven qubit-resonator readout model.

    epsilon      qubit energy bias
    delta        qubit tunneling amplitude (off-diagonal in the flux basis)
    g            qubit-state-dependent resonator frequency shift
    kappa        resonator energy decay rate (> 0)
    gamma1       qubit relaxation rate
    gamma2       qubit pure-dephasing rate
    f            drive amplitude (>= 0)
    delta_omega  resonator-drive detuning at the operating point
    s_ii         white current-noise spectral density of the readout line
    """

    epsilon: float = 10.0
    delta: float = 0.0
    g: float = 0.3
    kappa: float = 0.1
    gamma1: float = 0.0
    gamma2: float = 0.0
    f: float = 1.0
    delta_omega: float = 0.0
    s_ii: float = 20.0

    def __post_init__(self) -> None:
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not self.s_ii > 0.0:
            raise ValueError(f"s_ii must be > 0, got {self.s_ii}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.f < 0.0:
            raise ValueError(f"f must be >= 0, got {self.f}")
        if self.gamma1 < 0.0:
            raise ValueError(f"gamma1 must be >= 0, got {self.gamma1}")
        if self.gamma2 < 0.0:
            raise ValueError(f"gamma2 must be >= 0, got {self.gamma2}")

    @property
    def dispersive_valid(self) -> bool:
        """Whether the bias dominates the tunneling term (delta < epsilon/10).

        delta == 0 keeps the coupling exactly diagonal, so it is always valid.
        """
        return self.delta == 0.0 or self.delta < self.epsilon / 10.0


@dataclass(frozen=True)
class FockSpace:
    """Truncated resonator Hilbert space holding photon numbers 0..dim-1."""

    dim: int
    top_population_threshold: float = 1e-6

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError(f"Fock dimension must be >= 2, got {self.dim}")
        if not self.top_population_threshold > 0.0:
            raise ValueError("top_population_threshold must be > 0")


# Construction-time admissibility tolerances for density matrices.
_TRACE_TOL = 1e-9
_HERM_TOL = 1e-10
_EIG_TOL = 1e-7


@dataclass(frozen=True)
class DensityMatrix:
    """Joint qubit (x) resonator state, validated on construction.

    The matrix is 2*dim x 2*dim complex with unit trace (within 1e-9),
    Hermitian (within 1e-10 entrywise) and no eigenvalue below -1e-7.
    """

    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        n = 2 * self.space.dim
        if m.shape != (n, n):
            raise ValueError(f"expected shape {(n, n)}, got {m.shape}")
        if not np.all(np.isfinite(m.view(float))):
            raise ValueError("density matrix contains non-finite entries")
        tr = m.trace()
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
        if not is_hermitian(m, _HERM_TOL):
            raise ValueError("density matrix is not Hermitian within 1e-10")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -_EIG_TOL:
            raise ValueError(f"negative eigenvalue {lo:.3e} below -1e-7")

    @classmethod
    def from_product(cls, space: FockSpace, qubit: np.ndarray,
                     fock: np.ndarray) -> "DensityMatrix":
        """Build the product state qubit (x) fock."""
        return cls(space, tensor(np.asarray(qubit, dtype=complex),
                                 np.asarray(fock, dtype=complex)))

    def reduced_qubit(self) -> np.ndarray:
        return partial_trace(self, "qubit")

    def reduced_resonator(self) -> np.ndarray:
        return partial_trace(self, "resonator")


def fock_vacuum(space: FockSpace) -> np.ndarray:
    """|0><0| in the truncated resonator space."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[0, 0] = 1.0
    return m


def annihilation(space: FockSpace) -> np.ndarray:
    """Resonator lowering operator: <m|a|n> = sqrt(n) delta_{m,n-1}."""
    return np.diag(np.sqrt(np.arange(1, space.dim, dtype=float)), 1).astype(complex)


def number_operator(space: FockSpace) -> np.ndarray:
    return np.diag(np.arange(space.dim, dtype=float)).astype(complex)


_QUBIT_OPS = {
    "sigma_z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "sigma_x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    # Lowers the sigma_z eigenvalue: |0> -> |1>.
    "sigma_minus": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
    "identity": np.eye(2, dtype=complex),
}


def qubit_operator(which: str) -> np.ndarray:
    try:
        return _QUBIT_OPS[which].copy()
    except KeyError:
        raise ValueError(
            f"unknown qubit operator {which!r}; expected one of "
            f"{sorted(_QUBIT_OPS)}") from None


def tensor(qubit_part: np.ndarray, fock_part: np.ndarray) -> np.ndarray:
    """Kronecker product with the qubit index slowest-varying."""
    q = np.asarray(qubit_part, dtype=complex)
    f = np.asarray(fock_part, dtype=complex)
    if q.shape != (2, 2):
        raise ValueError(f"qubit factor must be 2x2, got {q.shape}")
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError(f"resonator factor must be square, got {f.shape}")
    return np.kron(q, f)


def partial_trace(rho: DensityMatrix, keep: str) -> np.ndarray:
    """Trace out one subsystem; keep is 'qubit' or 'resonator'."""
    dim = rho.space.dim
    blocks = rho.matrix.reshape(2, dim, 2, dim)
    if keep == "qubit":
        return np.einsum("imjm->ij", blocks)
    if keep == "resonator":
        return np.einsum("imin->mn", blocks)
    raise ValueError(f"keep must be 'qubit' or 'resonator', got {keep!r}")


def expectation(rho: DensityMatrix, op: np.ndarray) -> complex:
    """tr(op rho).  For Hermitian op the imaginary part is diagnostic only."""
    op = np.asarray(op, dtype=complex)
    if op.shape != rho.matrix.shape:
        raise ValueError(f"operator shape {op.shape} does not match state "
                         f"shape {rho.matrix.shape}")
    return complex(np.einsum("ij,ji->", op, rho.matrix))


def is_hermitian(m: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def default_step(params: SystemParams) -> float:
    """Default RK4 step: resolve the fastest printed rate 50 times over."""
    max_rate = max(abs(params.epsilon),
                   abs(params.delta_omega) + abs(params.g),
                   params.kappa, params.f)
    return 1.0 / (50.0 * max_rate)


def _rk4_step(rhs: Callable[[float, np.ndarray], np.ndarray],
              t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray],
              y0: np.ndarray,
              t_grid: Sequence[float],
              step: float) -> list[np.ndarray]:
    """Fixed-step RK4 from t_grid[0] = 0, reporting the state at each node.

    Each grid interval is split into ceil(dt/step) equal substeps so the
    integrator lands exactly on every node.  The step never exceeds `step`
    or the local grid spacing.  Raises NumericsError on non-finite values,
    identifying the time at which they appeared.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if t[0] != 0.0:
        raise ValueError(f"t_grid must start at 0, got {t[0]}")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise ValueError("t_grid must be strictly increasing")
    if not step > 0.0:
        raise ValueError(f"step must be > 0, got {step}")

    y = np.array(y0, dtype=complex)
    out = [y.copy()]
    for t0, t1 in zip(t[:-1], t[1:]):
        span = t1 - t0
        n_sub = max(1, math.ceil(span / step))
        h = span / n_sub
        tk = t0
        for _ in range(n_sub):
            y = _rk4_step(rhs, tk, y, h)
            tk += h
            if not np.all(np.isfinite(y.view(float))):
                raise NumericsError(f"non-finite state at t = {tk:.6g}")
        out.append(y.copy())
    return out
