"""Gaussian coupling-envelope sweeps and the spacing-uniformity optimum."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import RevivalNotFound, detect_revivals, revival_fidelities
from .dynamics import DensityState, evolve_closed, evolve_lindblad_dense, build_liouvillian, initial_state
from .model import GaussianEnvelope, LossRates, assemble_hamiltonian, build_comb, enumerate_basis, jump_operators
from .spectrum import sector_spectrum, spacing_stats

# Near-degenerate levels closer than this fraction of the tooth spacing are
# merged before spacing statistics are taken.
MERGE_FRACTION = 0.25

DEFAULT_STATE = np.array([0.0, 1.0, 1.0]) / math.sqrt(2)


@dataclass(frozen=True)
class CombTemplate:
    """Comb parameters except the envelope width."""

    m: int = 7
    delta_nu: float = 40.0
    nu_c: float = 3000.0
    n_prime: int = 10
    omega0: float = 30.0

    def comb(self, lambda_mhz: float):
        return build_comb(self.m, self.delta_nu, self.nu_c, self.n_prime, GaussianEnvelope(self.omega0, lambda_mhz))

    @property
    def merge_tol(self) -> float:
        return MERGE_FRACTION * self.delta_nu


@dataclass
class SweepRecord:
    lambda_mhz: float
    mean1_mhz: float
    std1_mhz: float
    std2_mhz: float
    t_rev_ns: float
    fidelities: tuple = ()
    revival_times_ns: tuple = ()
    error: str | None = None


def spacing_profile(template: CombTemplate, lambda_mhz: float, merge_tol: float | None = None):
    """Spacing statistics of the one- and two-excitation sectors."""
    tol = template.merge_tol if merge_tol is None else merge_tol
    comb = template.comb(lambda_mhz)
    basis = enumerate_basis(comb, 2, 2)
    H = assemble_hamiltonian(comb, basis)
    s1 = spacing_stats(sector_spectrum(H, basis, 1), tol)
    s2 = spacing_stats(sector_spectrum(H, basis, 2), tol)
    return s1, s2


def _sweep_row(template, lam, cavity, exc_cutoff, rates, n_revivals, points_per_revival, merge_tol, evolve, rtol):
    s1, s2 = spacing_profile(template, lam, merge_tol)
    t_rev = s1.t_rev
    row = SweepRecord(float(lam), s1.mean, s1.std, s2.std, t_rev)
    if not evolve:
        return row
    comb = template.comb(lam)
    basis = enumerate_basis(comb, exc_cutoff, exc_cutoff)
    H = assemble_hamiltonian(comb, basis)
    span = 1.25 * n_revivals
    t_grid = np.linspace(0.0, span * t_rev, int(round(span * points_per_revival)) + 1)
    psi0 = initial_state(basis, cavity)
    if rates is None or rates.is_lossless:
        traj = evolve_closed(H, psi0, t_grid, rtol=rtol)
    else:
        L = build_liouvillian(H, jump_operators(comb, basis), rates)
        traj = evolve_lindblad_dense(L, DensityState.from_pure(psi0), t_grid)
    try:
        revivals = detect_revivals(traj.times, traj.photon_number, t_rev, n_revivals)
    except RevivalNotFound as exc:
        row.error = str(exc)
        return row
    rows = revival_fidelities(traj, cavity, revivals)
    row.fidelities = tuple(f for _, f, _ in rows)
    row.revival_times_ns = tuple(r.t_peak for r, _, _ in rows)
    return row


def sweep_lambda(template: CombTemplate, lambda_grid, initial_cavity=None, exc_cutoff: int | None = None,
                 rates: LossRates | None = None, n_revivals: int = 4, points_per_revival: int = 200,
                 merge_tol: float | None = None, evolve: bool = True, threads: int = 1,
                 rtol: float = 1e-9) -> list[SweepRecord]:
    """One record per envelope width: spacing statistics, revival period and
    the fidelity at each of the first ``n_revivals`` revivals.

    The default basis cutoff is the highest Fock level of the initial cavity
    state; lossless evolution never leaves that excitation range.
    """
    grid = [float(x) for x in np.atleast_1d(lambda_grid)]
    if not grid:
        raise ValueError("lambda grid is empty")
    if template.omega0 <= 0:
        raise ValueError("omega0 must be positive: an uncoupled comb has no revivals")
    cavity = DEFAULT_STATE if initial_cavity is None else np.asarray(initial_cavity, dtype=complex)
    nz = np.flatnonzero(np.abs(cavity) > 0)
    top = int(nz.max()) if len(nz) else 0
    exc = max(top, 1) if exc_cutoff is None else exc_cutoff
    task = lambda lam: _sweep_row(template, lam, cavity, exc, rates, n_revivals,  # noqa: E731
                                  points_per_revival, merge_tol, evolve, rtol)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(task, grid))
    return [task(lam) for lam in grid]


class NoInteriorMinimum(ValueError):
    pass


def _objective(template, kind, merge_tol):
    if kind not in ("std1", "std1+std2"):
        raise ValueError(f"unknown objective {kind!r}")

    def f(lam):
        s1, s2 = spacing_profile(template, lam, merge_tol)
        return s1.std if kind == "std1" else s1.std + s2.std
    return f


def optimize_lambda(template: CombTemplate, bracket=(100.0, 1000.0), objective: str = "std1",
                    n_scan: int = 46, resolution: float = 1.0, merge_tol: float | None = None) -> float:
    """Envelope width minimising the spacing spread.

    A coarse scan locates the best grid point, which must be interior; a
    golden-section search between its neighbours refines it to
    ``resolution`` MHz.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    f = _objective(template, objective, merge_tol)
    grid = np.linspace(lo, hi, n_scan)
    values = np.array([f(x) for x in grid])
    if np.ptp(values) <= 1e-12 * max(1.0, np.abs(values).max()):
        raise NoInteriorMinimum("no interior minimum: objective is flat over the bracket")
    i = int(np.argmin(values))
    if i in (0, len(grid) - 1):
        raise NoInteriorMinimum(f"no interior minimum: best scan point {grid[i]:.1f} MHz lies on the bracket edge")
    a, b = grid[i - 1], grid[i + 1]
    inv_phi = (math.sqrt(5) - 1) / 2
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > resolution:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return float((a + b) / 2)
