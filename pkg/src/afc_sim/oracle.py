"""Brute-force reference model over the full 2**N spin space.

Used by the test suite to validate the collective-basis construction and to
quantify the collective dissipator approximation. Not exposed on the CLI.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .analysis import CavityDensityMatrix, photon_number
from .dynamics import Trajectory, lindblad_superoperator
from .model import LossRates, mhz_to_angular

MAX_DIM = 2 ** 16
MAX_LINDBLAD_DIM = 64


@dataclass(frozen=True)
class FullSpinSystem:
    """Cavity plus ``N`` individually resolved two-level spins (MHz)."""

    frequencies: tuple
    couplings: tuple
    photon_cutoff: int
    nu_c: float = 0.0

    def __post_init__(self):
        if len(self.frequencies) != len(self.couplings):
            raise ValueError("one frequency and one coupling per spin")
        if not 1 <= self.n_spins <= 12:
            raise ValueError("full-spin oracle supports 1..12 spins")
        if self.dim > MAX_DIM:
            raise ValueError(f"dimension {self.dim} exceeds the oracle guard {MAX_DIM}")

    @property
    def n_spins(self) -> int:
        return len(self.frequencies)

    @property
    def dim(self) -> int:
        return (self.photon_cutoff + 1) * 2 ** self.n_spins

    def excitations(self) -> np.ndarray:
        """Total excitation of each basis state ``n * 2**N + bits``."""
        n_spin = 2 ** self.n_spins
        bits = np.arange(n_spin)
        popcount = np.array([bin(b).count("1") for b in bits])
        return (np.arange(self.photon_cutoff + 1)[:, None] + popcount[None, :]).ravel()


def _spin_op(single: sp.spmatrix, k: int, n: int) -> sp.csr_matrix:
    # spin k is bit k of the spin index, i.e. the (n-1-k)-th kron factor
    out = sp.identity(1, format="csr")
    for j in range(n - 1, -1, -1):
        out = sp.kron(out, single if j == k else sp.identity(2), format="csr")
    return out


def _operators(sys: FullSpinSystem):
    n = sys.n_spins
    cav = sp.diags(np.sqrt(np.arange(1, sys.photon_cutoff + 1)), 1, format="csr")
    a = sp.kron(cav, sp.identity(2 ** n), format="csr")
    lower = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |0><1|, bit 1 = excited
    eye_c = sp.identity(sys.photon_cutoff + 1, format="csr")
    sm = [sp.kron(eye_c, _spin_op(lower, k, n), format="csr") for k in range(n)]
    sz = [sp.kron(eye_c, _spin_op(sp.diags([-1.0, 1.0]), k, n), format="csr") for k in range(n)]
    return a, sm, sz


def full_spin_hamiltonian(sys: FullSpinSystem) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/ns) with the all-down state at zero."""
    a, sm, _ = _operators(sys)
    H = sp.csr_matrix((sys.dim, sys.dim), dtype=complex)
    det = mhz_to_angular(np.asarray(sys.frequencies, dtype=float) - sys.nu_c)
    g = mhz_to_angular(sys.couplings)
    for k in range(sys.n_spins):
        up = sm[k].T @ sm[k]
        H = H + det[k] * up + g[k] * (sm[k].T @ a + a.T @ sm[k])
    return H.toarray()


def sector_eigenvalues(sys: FullSpinSystem, k: int) -> np.ndarray:
    H = full_spin_hamiltonian(sys)
    idx = np.flatnonzero(sys.excitations() == k)
    return np.linalg.eigvalsh(H[np.ix_(idx, idx)])


def vacuum_product(sys: FullSpinSystem, cavity) -> np.ndarray:
    """Cavity amplitudes times all spins down."""
    psi = np.zeros(sys.dim, dtype=complex)
    cavity = np.asarray(cavity, dtype=complex)
    psi[np.arange(len(cavity)) * 2 ** sys.n_spins] = cavity
    return psi


def reduce_full(rho: np.ndarray, sys: FullSpinSystem) -> CavityDensityMatrix:
    c = sys.photon_cutoff + 1
    s = 2 ** sys.n_spins
    return CavityDensityMatrix(np.einsum("isjs->ij", rho.reshape(c, s, c, s)))


def full_spin_lindblad(sys: FullSpinSystem, rates: LossRates, rho0: np.ndarray, t_grid,
                       dephasing_convention: str = "literal") -> Trajectory:
    """Per-spin master equation with ``sigma^-_k`` and ``sigma^z_k`` jumps,
    propagated with the exact exponential on a uniform ``t_grid``."""
    if sys.dim > MAX_LINDBLAD_DIM:
        raise ValueError(f"dimension {sys.dim} exceeds the Lindblad oracle guard {MAX_LINDBLAD_DIM}")
    t_grid = np.asarray(t_grid, dtype=float)
    steps = np.diff(t_grid)
    if len(steps) and np.ptp(steps) > 1e-9 * steps.max():
        raise ValueError("oracle propagation needs a uniform time grid")
    a, sm, sz = _operators(sys)
    dephase = rates.angular("gamma_p") * (1.0 if dephasing_convention == "literal" else 0.5)
    ops = [(a, rates.angular("kappa"))]
    ops += [(x, rates.angular("gamma_h")) for x in sm]
    ops += [(x, dephase) for x in sz]
    L = lindblad_superoperator(full_spin_hamiltonian(sys), ops)
    vecs = expm_multiply(L, np.asarray(rho0, dtype=complex).ravel(), start=t_grid[0], stop=t_grid[-1],
                         num=len(t_grid), endpoint=True)
    vecs = np.atleast_2d(vecs)
    cavities = [reduce_full(v.reshape(sys.dim, sys.dim), sys) for v in vecs]
    photons = np.array([photon_number(c) for c in cavities])
    return Trajectory(t_grid.copy(), photons, cavities)
