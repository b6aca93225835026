"""Cavity-state diagnostics: partial trace, photon number, Wigner function,
parity, fidelity and revival detection.

All quantities here are rotating-frame quantities.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .model import BasisTable


@dataclass(frozen=True, eq=False)
class CavityDensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("cavity density matrix must be square")
        object.__setattr__(self, "matrix", mat)

    @property
    def cutoff(self) -> int:
        """Fock dimension."""
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, amplitudes) -> "CavityDensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    def check(self, tol: float = 1e-8) -> None:
        """Raise if the matrix is not a density matrix within ``tol``."""
        rho = self.matrix
        if np.abs(rho - rho.conj().T).max() > tol:
            raise ValueError("cavity state is not Hermitian")
        if abs(np.trace(rho) - 1) > tol:
            raise ValueError(f"cavity state trace {np.trace(rho).real:.3e} != 1")
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -tol:
            raise ValueError("cavity state is not positive semidefinite")


@dataclass(frozen=True)
class WignerGrid:
    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray  # shape (len(im_axis), len(re_axis))

    @property
    def resolution(self) -> int:
        return len(self.re_axis)

    @property
    def cell_area(self) -> float:
        return float((self.re_axis[1] - self.re_axis[0]) * (self.im_axis[1] - self.im_axis[0]))

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)


# ---------------------------------------------------------------------------
# partial trace


@lru_cache(maxsize=16)
def _cavity_spin_layout(basis: BasisTable):
    """Map basis ordinals onto a (photon, spin-configuration) grid."""
    spins, spin_id = np.unique(basis.states[:, 1:], axis=0, return_inverse=True)
    return basis.photon_cutoff + 1, len(spins), basis.states[:, 0], spin_id.ravel()


def cavity_amplitude_grid(amplitudes: np.ndarray, basis: BasisTable) -> np.ndarray:
    """Rearrange state vector(s) into ``(photon, spin config[, batch])``."""
    n_cav, n_spin, photon, spin = _cavity_spin_layout(basis)
    grid = np.zeros((n_cav, n_spin) + amplitudes.shape[1:], dtype=complex)
    grid[photon, spin] = amplitudes
    return grid


def reduce_cavity(state, basis: BasisTable | None = None) -> CavityDensityMatrix:
    """Trace out the spins of a pure state or density matrix.

    ``state`` may be a ``PureState``/``DensityState`` or a bare array (1-D for
    a state vector, 2-D for a density matrix), in which case ``basis`` is
    required.
    """
    if basis is None:
        basis = state.basis
    if hasattr(state, "amplitudes"):
        data = state.amplitudes
    elif hasattr(state, "matrix"):
        data = state.matrix
    else:
        data = np.asarray(state)
    if data.shape[0] != basis.size:
        raise ValueError(f"state dimension {data.shape[0]} does not match basis size {basis.size}")
    if data.ndim == 1:
        grid = cavity_amplitude_grid(data, basis)
        return CavityDensityMatrix(grid @ grid.conj().T)
    n_cav, _, photon, spin = _cavity_spin_layout(basis)
    rho = np.zeros((n_cav, n_cav), dtype=complex)
    same = spin[:, None] == spin[None, :]
    rows, cols = np.nonzero(same)
    np.add.at(rho, (photon[rows], photon[cols]), data[rows, cols])
    return CavityDensityMatrix(rho)


def photon_number(rho_cav: CavityDensityMatrix) -> float:
    n = np.arange(rho_cav.cutoff)
    return float(np.real(np.diagonal(rho_cav.matrix) @ n))


# ---------------------------------------------------------------------------
# phase space


def _laguerre_table(n_max: int, order: int, x: np.ndarray) -> np.ndarray:
    """``L_n^(order)(x)`` for n = 0..n_max by the three-term recurrence."""
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + order - x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1 + order - x) * out[k] - (k + order) * out[k - 1]) / (k + 1)
    return out


def wigner_values(rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Wigner function of ``rho`` (Fock basis) at complex points ``alpha``,
    normalised to unit phase-space integral."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    alpha = np.asarray(alpha, dtype=complex)
    x = 4 * np.abs(alpha) ** 2
    gauss = (2 / np.pi) * np.exp(-x / 2)
    total = np.zeros(alpha.shape)
    for off in range(d):
        lag = _laguerre_table(d - 1 - off, off, x)
        carrier = (2 * np.conj(alpha)) ** off
        for n in range(d - off):
            mm = n + off
            coeff = rho[mm, n]
            if coeff == 0:
                continue
            pref = (-1) ** n * np.exp(0.5 * (gammaln(n + 1) - gammaln(mm + 1)))
            term = coeff * pref * carrier * lag[n]
            total += term.real if off == 0 else 2 * term.real
    return gauss * total


def wigner(rho_cav: CavityDensityMatrix, re_range=(-4.0, 4.0), im_range=(-4.0, 4.0),
           resolution: int = 81) -> WignerGrid:
    re_axis = np.linspace(re_range[0], re_range[1], resolution)
    im_axis = np.linspace(im_range[0], im_range[1], resolution)
    alpha = re_axis[None, :] + 1j * im_axis[:, None]
    return WignerGrid(re_axis, im_axis, wigner_values(rho_cav.matrix, alpha))


def parity_transform(rho_cav: CavityDensityMatrix) -> CavityDensityMatrix:
    """``Pi rho Pi`` with ``Pi = diag((-1)**n)``."""
    sign = (-1.0) ** np.arange(rho_cav.cutoff)
    return CavityDensityMatrix(rho_cav.matrix * np.outer(sign, sign))


def parity_vector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi * (-1.0) ** np.arange(len(psi))


def fidelity(rho_cav: CavityDensityMatrix, target, convention: str = "root") -> float:
    """Fidelity of a cavity state with a pure target.

    ``"root"`` returns ``sqrt(<psi|rho|psi>)`` (Uhlmann fidelity for a pure
    target); ``"squared"`` returns the overlap ``<psi|rho|psi>`` itself.
    """
    psi = np.asarray(target, dtype=complex).ravel()
    if abs(np.vdot(psi, psi).real - 1) > 1e-8:
        raise ValueError("fidelity target must be normalised")
    rho = rho_cav.matrix
    d = max(len(psi), rho.shape[0])
    psi = np.pad(psi, (0, d - len(psi)))
    rho = np.pad(rho, ((0, d - rho.shape[0]), (0, d - rho.shape[0])))
    overlap = float(np.clip(np.real(np.vdot(psi, rho @ psi)), 0.0, 1.0))
    if convention == "root":
        return float(np.sqrt(overlap))
    if convention == "squared":
        return overlap
    raise ValueError(f"unknown fidelity convention {convention!r}")


# ---------------------------------------------------------------------------
# revivals


class RevivalNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class Revival:
    k: int
    index: int
    t_peak: float
    photon_number: float


def detect_revivals(times, signal, t_rev_hint: float, n_revivals: int = 4,
                    window: float = 0.2, max_half_width: float = 0.45) -> list[Revival]:
    """Photon-number maxima near ``k * t_rev_hint`` for ``k = 1..n_revivals``.

    The search window is ``k * t_rev_hint * (1 -/+ window)``, clipped to at
    most ``max_half_width * t_rev_hint`` on each side so that it never reaches
    the neighbouring revival. The maximum must be a strict interior local
    maximum, otherwise ``RevivalNotFound`` is raised.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if t_rev_hint <= 0:
        raise ValueError("revival time hint must be positive")
    dt = np.diff(times)
    if len(dt) and np.median(dt) > t_rev_hint / 20:
        raise ValueError("time grid too coarse: need at least 20 samples per revival period")
    found = []
    for k in range(1, n_revivals + 1):
        half = min(window * k, max_half_width) * t_rev_hint
        centre = k * t_rev_hint
        inside = np.flatnonzero((times >= centre - half) & (times <= centre + half))
        if len(inside) < 3:
            raise RevivalNotFound(f"revival {k}: window around t = {centre:.3f} is not covered by the time grid")
        i = int(inside[np.argmax(signal[inside])])
        if i in (inside[0], inside[-1]) or not (signal[i] > signal[i - 1] or signal[i] > signal[i + 1]):
            raise RevivalNotFound(f"no revival: photon number has no local maximum near t = {centre:.3f}")
        found.append(Revival(k, i, float(times[i]), float(signal[i])))
    return found


def revival_fidelities(trajectory, psi_in, revivals: list[Revival], convention: str = "root"):
    """Fidelity at each revival: against the parity-flipped initial cavity
    state at odd ``k`` and against the initial state at even ``k``."""
    psi_in = np.asarray(psi_in, dtype=complex)
    rows = []
    for rev in revivals:
        kind = "parity" if rev.k % 2 else "initial"
        target = parity_vector(psi_in) if kind == "parity" else psi_in
        f = fidelity(trajectory.cavity_states[rev.index], target, convention)
        rows.append((rev, f, kind))
    return rows
