"""Fixed-excitation spectra, level spacings and revival time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (BasisTable, CombSpec, SparseHermitian, angular_to_mhz, assemble_hamiltonian,
                    enumerate_basis, mhz_to_angular)


@dataclass(frozen=True)
class SectorSpectrum:
    sector: int
    eigenvalues: np.ndarray  # rad/ns, ascending

    @property
    def eigenvalues_mhz(self) -> np.ndarray:
        return angular_to_mhz(self.eigenvalues)

    @property
    def spacings(self) -> np.ndarray:
        """Consecutive level spacings in linear MHz."""
        return np.diff(self.eigenvalues_mhz)


@dataclass(frozen=True)
class SpacingStats:
    mean: float  # MHz
    std: float  # MHz
    t_rev: float  # ns


def sector_spectrum(H: SparseHermitian, basis: BasisTable, k: int) -> SectorSpectrum:
    """All eigenvalues of the excitation-``k`` block of ``H``."""
    if not 0 <= k <= basis.exc_cutoff:
        raise ValueError(f"sector {k} outside 0..{basis.exc_cutoff}")
    if H.dim != basis.size:
        raise ValueError("operator dimension does not match basis")
    idx = basis.sector(k)
    block = H.matrix[idx][:, idx].toarray()
    return SectorSpectrum(k, np.linalg.eigvalsh(block))


def cluster_levels(levels_mhz: np.ndarray, merge_tol_mhz: float) -> np.ndarray:
    """Collapse runs of levels closer than ``merge_tol_mhz`` into their mean."""
    levels = np.sort(np.asarray(levels_mhz, dtype=float))
    if merge_tol_mhz <= 0 or len(levels) < 2:
        return levels
    breaks = np.flatnonzero(np.diff(levels) >= merge_tol_mhz) + 1
    return np.array([chunk.mean() for chunk in np.split(levels, breaks)])


def spacing_stats(spectrum: SectorSpectrum, merge_tol_mhz: float = 0.0) -> SpacingStats:
    """Mean and standard deviation of consecutive spacings, and ``1/mean``.

    With ``merge_tol_mhz > 0``, near-degenerate levels are first merged into
    one level at their centroid. The default keeps every spacing, including
    zero spacings from exact degeneracies.
    """
    levels = cluster_levels(spectrum.eigenvalues_mhz, merge_tol_mhz)
    if len(levels) < 2:
        raise ValueError("spacing statistics need at least two distinct levels")
    gaps = np.diff(levels)
    mean = float(gaps.mean())
    if mean <= 0:
        raise ValueError("fully degenerate spectrum has no revival time")
    return SpacingStats(mean, float(gaps.std()), 1e3 / mean)


def single_excitation_matrix(comb: CombSpec) -> np.ndarray:
    """Single-excitation block in the rotating frame, written down directly.

    Row/column 0 is ``|1_c, 0>``, then ``|0_c, 1_mu>`` in ascending ``mu``.
    """
    m = comb.m
    H = np.zeros((m + 1, m + 1))
    H[0, 1:] = H[1:, 0] = mhz_to_angular(comb.coupling_array)
    H[np.arange(1, m + 1), np.arange(1, m + 1)] = mhz_to_angular(comb.offsets)
    return H


def comb_spectra(comb: CombSpec, sectors=(1, 2)) -> dict[int, SectorSpectrum]:
    """Rotating-frame spectra of the requested sectors of ``comb``."""
    top = max(sectors)
    basis = enumerate_basis(comb, top, top)
    H = assemble_hamiltonian(comb, basis)
    return {k: sector_spectrum(H, basis, k) for k in sectors}
