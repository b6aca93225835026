"""Initial states and time evolution: closed, vectorised Lindblad, and
Monte Carlo wave-function trajectories."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.optimize import brentq
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .analysis import CavityDensityMatrix, cavity_amplitude_grid, photon_number, reduce_cavity
from .integrate import rk45_snapshots
from .model import BasisTable, JumpOperator, LossRates, SparseHermitian

FOUR_LEVEL_SUPERPOSITION = np.array([0, 5, -1j * np.sqrt(15), -(np.sqrt(10) - 1j * np.sqrt(15)), 5 - 1j * np.sqrt(10)])


class NumericalError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class PureState:
    basis: BasisTable
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} amplitudes, got {amps.shape}")
        if abs(np.linalg.norm(amps) - 1) > 1e-10:
            raise ValueError("state is not normalised")
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True, eq=False)
class DensityState:
    basis: BasisTable
    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (self.basis.size, self.basis.size):
            raise ValueError("density matrix does not match basis")
        if abs(np.trace(rho) - 1) > 1e-8:
            raise ValueError("density matrix trace differs from one")
        if np.abs(rho - rho.conj().T).max() > 1e-10:
            raise ValueError("density matrix is not Hermitian")
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityState":
        psi = state.amplitudes
        return cls(state.basis, np.outer(psi, psi.conj()))


@dataclass
class Trajectory:
    times: np.ndarray
    photon_number: np.ndarray
    cavity_states: list
    photon_number_sem: np.ndarray | None = None
    info: dict = field(default_factory=dict)
    final_state: object = None


def default_photon_cutoff(amplitude: float) -> int:
    a = abs(amplitude)
    return int(math.ceil(a * a + 6 * a + 4))


def _coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    if alpha == 0:
        out = np.zeros(cutoff + 1, dtype=complex)
        out[0] = 1
        return out
    log_mag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)


def prepare_cavity_state(kind: str, photon_cutoff: int | None = None, *, alpha: complex = 1.0,
                         beta: complex = 2.0, coeffs=None, tail_tol: float = 1e-8) -> np.ndarray:
    """Normalised cavity amplitudes on Fock states ``0..photon_cutoff``.

    kinds: ``coherent`` (``alpha``), ``cat`` (``|beta> + |-beta>``),
    ``superposition`` (the fixed four-level superposition used for the
    parity demonstrations), ``fock`` (explicit ``coeffs``).

    Without an explicit ``photon_cutoff`` the coherent and cat states are
    truncated at the smallest Fock level whose discarded probability is at
    most ``tail_tol``. An explicit cutoff raises if the discarded
    probability exceeds ``tail_tol``.
    """
    # automatic truncation searches a generous range and trims below
    search = lambda amp: 3 * default_photon_cutoff(amp) + 10  # noqa: E731
    if kind == "coherent":
        cutoff = search(alpha) if photon_cutoff is None else photon_cutoff
        amps = _coherent_amplitudes(complex(alpha), cutoff)
        full_norm = 1.0
    elif kind == "cat":
        cutoff = search(beta) if photon_cutoff is None else photon_cutoff
        b = complex(beta)
        # |b> + |-b> keeps the even Fock components twice and cancels the odd ones exactly
        amps = _coherent_amplitudes(b, cutoff) * (1 + (-1.0) ** np.arange(cutoff + 1))
        full_norm = 2 * (1 + math.exp(-2 * abs(b) ** 2))
    elif kind in ("superposition", "fock"):
        c = FOUR_LEVEL_SUPERPOSITION if kind == "superposition" else np.asarray(coeffs, dtype=complex)
        if c is None or len(c) == 0:
            raise ValueError("fock state needs coefficients")
        cutoff = len(c) - 1 if photon_cutoff is None else photon_cutoff
        full = c / np.linalg.norm(c)
        amps = np.zeros(cutoff + 1, dtype=complex)
        keep = min(len(full), cutoff + 1)
        amps[:keep] = full[:keep]
        full_norm = 1.0
    else:
        raise ValueError(f"unknown cavity state kind {kind!r}")
    if cutoff < 0:
        raise ValueError("photon cutoff must be non-negative")
    if photon_cutoff is None and kind in ("coherent", "cat"):
        tails = 1.0 - np.cumsum(np.abs(amps) ** 2) / full_norm
        cutoff = int(np.argmax(tails <= tail_tol)) if np.any(tails <= tail_tol) else cutoff
        amps = amps[:cutoff + 1]
    kept = float(np.vdot(amps, amps).real)
    tail = max(0.0, 1.0 - kept / full_norm)
    if tail > tail_tol:
        raise ValueError(f"photon cutoff {cutoff} leaves probability {tail:.3e} outside (tolerance {tail_tol:.1e})")
    return amps / math.sqrt(kept)


def initial_state(basis: BasisTable, cavity) -> PureState:
    """Cavity amplitudes times the unexcited spin ensemble."""
    cavity = np.asarray(cavity, dtype=complex)
    reach = min(basis.photon_cutoff, basis.exc_cutoff)
    if np.any(np.abs(cavity[reach + 1:]) > 0):
        raise ValueError(f"cavity state reaches Fock level {len(cavity) - 1} beyond basis limit {reach}")
    rows = np.zeros((min(len(cavity), reach + 1), basis.m + 1), dtype=np.int64)
    rows[:, 0] = np.arange(len(rows))
    amps = np.zeros(basis.size, dtype=complex)
    amps[basis.lookup(rows)] = cavity[:len(rows)]
    return PureState(basis, amps)


# ---------------------------------------------------------------------------
# closed evolution


def _photon_numbers(grid: np.ndarray) -> np.ndarray:
    """Mean photon number of each column in a (photon, spin, batch) grid."""
    pops = np.sum(np.abs(grid) ** 2, axis=1)
    n = np.arange(grid.shape[0])
    return (n @ pops) / pops.sum(axis=0)


def evolve_closed(H: SparseHermitian, psi0: PureState, t_grid, rtol: float = 1e-9,
                  atol: float | None = None, keep_states: bool = False) -> Trajectory:
    """Integrate ``i d psi/dt = H psi`` and record the cavity at ``t_grid``."""
    basis = psi0.basis
    if H.dim != basis.size:
        raise ValueError("Hamiltonian and state live on different bases")
    Hm = H.matrix
    atol = rtol * 1e-3 if atol is None else atol
    fun = lambda t, y: -1j * (Hm @ y)  # noqa: E731
    times, photons, cavities, states = [], [], [], []
    norm_drift = 0.0
    for t, y in rk45_snapshots(fun, psi0.amplitudes, t_grid, rtol, atol):
        rho = reduce_cavity(y, basis)
        times.append(t)
        photons.append(photon_number(rho))
        cavities.append(rho)
        norm_drift = max(norm_drift, abs(np.linalg.norm(y) - 1))
        if keep_states:
            states.append(y.copy())
    info = {"norm_drift": norm_drift}
    if keep_states:
        info["states"] = states
    return Trajectory(np.array(times), np.array(photons), cavities, info=info, final_state=y)


# ---------------------------------------------------------------------------
# Lindblad


def jump_weights(jumps: list[JumpOperator], rates: LossRates, dephasing_convention: str = "literal") -> list[float]:
    """Dissipator weight (rad/ns) multiplying ``D[x]`` for each jump carrier.

    ``J^z`` carriers stand in for the per-spin ``sigma^z`` sum, i.e. ``2 J^z``.
    With ``"literal"`` the weight is ``gamma_p`` on ``D[2 J^z]``; ``"half"``
    halves it.
    """
    if dephasing_convention not in ("literal", "half"):
        raise ValueError(f"unknown dephasing convention {dephasing_convention!r}")
    out = []
    for op in jumps:
        w = rates.angular(op.kind)
        if op.kind == "gamma_p":
            w *= 4.0 if dephasing_convention == "literal" else 2.0
        out.append(w)
    return out


def lindblad_superoperator(H, ops_and_weights) -> sp.csr_matrix:
    """Row-major vectorised generator ``d vec(rho)/dt = L vec(rho)``."""
    H = sp.csr_matrix(H, dtype=complex)
    dim = H.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    for x, w in ops_and_weights:
        if w == 0:
            continue
        x = sp.csr_matrix(x, dtype=complex)
        xdx = x.getH() @ x
        L = L + w * (sp.kron(x, x.conj()) - 0.5 * sp.kron(xdx, eye) - 0.5 * sp.kron(eye, xdx.T))
    return sp.csr_matrix(L)


def build_liouvillian(H: SparseHermitian, jumps: list[JumpOperator], rates: LossRates,
                      dephasing_convention: str = "literal", max_dim: int = 200) -> sp.csr_matrix:
    if H.dim > max_dim:
        raise ValueError(f"dimension {H.dim} exceeds the dense-Lindblad guard of {max_dim}")
    weights = jump_weights(jumps, rates, dephasing_convention)
    return lindblad_superoperator(H.matrix, [(op.matrix, w) for op, w in zip(jumps, weights)])


def evolve_lindblad_dense(L, rho0: DensityState, t_grid, rtol: float = 1e-8,
                          atol: float | None = None) -> Trajectory:
    """Integrate the vectorised master equation; snapshots are re-Hermitised."""
    basis = rho0.basis
    dim = basis.size
    if L.shape != (dim * dim, dim * dim):
        raise ValueError("Liouvillian does not match the state dimension")
    atol = rtol * 1e-3 if atol is None else atol
    fun = lambda t, y: L @ y  # noqa: E731
    times, photons, cavities = [], [], []
    trace_drift = herm_drift = 0.0
    min_eig = np.inf
    rho = rho0.matrix
    for t, y in rk45_snapshots(fun, rho0.matrix.ravel(), t_grid, rtol, atol):
        raw = y.reshape(dim, dim)
        herm_drift = max(herm_drift, float(np.abs(raw - raw.conj().T).max()))
        rho = (raw + raw.conj().T) / 2
        drift = abs(np.trace(rho).real - 1)
        trace_drift = max(trace_drift, drift)
        if drift > 1e-6:
            raise NumericalError(f"trace drift {drift:.3e} at t = {t:.4g} ns")
        min_eig = min(min_eig, float(np.linalg.eigvalsh(rho).min()))
        cav = reduce_cavity(rho, basis)
        times.append(t)
        photons.append(photon_number(cav))
        cavities.append(cav)
    info = {"trace_drift": trace_drift, "hermiticity_drift": herm_drift, "min_eigenvalue": min_eig}
    return Trajectory(np.array(times), np.array(photons), cavities, info=info, final_state=rho)


# ---------------------------------------------------------------------------
# Monte Carlo wave functions


class _Propagator:
    """Exact no-jump propagation under the effective non-Hermitian generator.

    Small generators are diagonalised once (when the eigenvector matrix is
    well conditioned); otherwise ``expm_multiply`` is used.
    """

    dense_limit = 2000

    def __init__(self, H_eff: sp.csr_matrix):
        self.A = (-1j * H_eff).tocsc()
        self._cache = {}
        self.eig = None
        if self.A.shape[0] <= self.dense_limit:
            evals, V = np.linalg.eig(self.A.toarray())
            if np.linalg.cond(V) < 1e6:
                self.eig = (evals, V, np.linalg.inv(V))

    def __call__(self, psi: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0:
            return psi.copy()
        if self.eig is None:
            return expm_multiply(self.A * dt, psi)
        key = round(dt, 12)
        if key not in self._cache:
            evals, V, Vinv = self.eig
            self._cache[key] = (V * np.exp(evals * dt)) @ Vinv
        return self._cache[key] @ psi

    def path(self, psi: np.ndarray):
        """Function ``tau -> psi(tau)`` for a single state."""
        if self.eig is None:
            return lambda tau: psi.copy() if tau == 0 else expm_multiply(self.A * tau, psi)
        evals, V, Vinv = self.eig
        coeff = Vinv @ psi
        return lambda tau: V @ (np.exp(evals * tau) * coeff)


def _advance_with_jumps(prop, ops, weights, psi, dt, threshold, rng):
    """Propagate one unnormalised trajectory over ``dt``, applying every jump
    whose waiting-time threshold is crossed. Returns (psi, threshold, n_jumps)."""
    jumps = 0
    while True:
        path = prop.path(psi)
        out = path(dt)
        if np.vdot(out, out).real >= threshold:
            return out, threshold, jumps
        f = lambda tau: np.vdot(w := path(tau), w).real - threshold  # noqa: E731
        tau = brentq(f, 0.0, dt, xtol=1e-12, rtol=1e-12)
        at = path(tau)
        probs = np.array([w * np.vdot(x @ at, x @ at).real for x, w in zip(ops, weights)])
        total = probs.sum()
        if total <= 0:
            raise NumericalError("norm decayed without an available jump channel")
        choice = int(np.searchsorted(np.cumsum(probs) / total, rng.random(), side="right"))
        choice = min(choice, len(ops) - 1)
        psi = ops[choice] @ at
        psi /= np.linalg.norm(psi)
        threshold = rng.random()
        dt -= tau
        jumps += 1


def _shift_diagonal(x: sp.csr_matrix) -> sp.csr_matrix:
    """Remove the smallest eigenvalue from a real diagonal carrier.

    ``D[x + c]`` equals ``D[x]`` for real ``c``, so the averaged dynamics is
    unchanged while the no-excitation states stop producing jumps.
    """
    diag = x.diagonal()
    off = x - sp.diags(diag)
    if off.count_nonzero() or np.any(diag.imag != 0):
        return x
    return sp.diags(diag - diag.real.min(), format="csr").astype(complex)


def evolve_trajectories(H: SparseHermitian, jumps: list[JumpOperator], rates: LossRates, psi0: PureState,
                        t_grid, n_traj: int, seed: int, threads: int = 1, dephasing_convention: str = "literal",
                        chunk_size: int = 100) -> Trajectory:
    """Average of ``n_traj`` quantum-jump trajectories.

    Trajectory ``i`` draws from ``numpy.random.default_rng(seed + i)``.
    Trajectories are processed in fixed chunks whose partial sums are added
    in chunk order, so the output does not depend on ``threads``.
    """
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    basis = psi0.basis
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    weights = jump_weights(jumps, rates, dephasing_convention)
    active = [(_shift_diagonal(op.matrix), w) for op, w in zip(jumps, weights) if w > 0]
    ops = [x for x, _ in active]
    wts = [w for _, w in active]
    H_eff = H.matrix.astype(complex)
    for x, w in active:
        H_eff = H_eff - 0.5j * w * (x.getH() @ x)
    prop = _Propagator(sp.csr_matrix(H_eff))
    n_cav = basis.photon_cutoff + 1
    steps = np.diff(t_grid)

    def run_chunk(start: int):
        idx = range(start, min(start + chunk_size, n_traj))
        rngs = [np.random.default_rng(seed + i) for i in idx]
        psi = np.repeat(psi0.amplitudes[:, None], len(rngs), axis=1)
        thresholds = np.array([r.random() for r in rngs])
        n_sum = np.zeros(len(t_grid))
        n_sq = np.zeros(len(t_grid))
        rho_sum = np.zeros((len(t_grid), n_cav, n_cav), dtype=complex)
        n_jumps = 0

        def record(i):
            grid = cavity_amplitude_grid(psi, basis)
            norms = np.sum(np.abs(grid) ** 2, axis=(0, 1))
            unit = grid / np.sqrt(norms)
            nb = _photon_numbers(grid)
            n_sum[i] = nb.sum()
            n_sq[i] = (nb ** 2).sum()
            rho_sum[i] = np.einsum("asb,csb->ac", unit, unit.conj())

        record(0)
        for i, dt in enumerate(steps, start=1):
            new = prop(psi, dt)
            norms = np.sum(np.abs(new) ** 2, axis=0)
            for b in np.flatnonzero(norms < thresholds):
                col, thresholds[b], k = _advance_with_jumps(prop, ops, wts, psi[:, b], dt, thresholds[b], rngs[b])
                new[:, b] = col
                n_jumps += k
            psi = new
            record(i)
        return n_sum, n_sq, rho_sum, n_jumps

    starts = list(range(0, n_traj, chunk_size))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, starts))
    else:
        parts = [run_chunk(s) for s in starts]

    n_sum = np.zeros(len(t_grid))
    n_sq = np.zeros(len(t_grid))
    rho_sum = np.zeros((len(t_grid), n_cav, n_cav), dtype=complex)
    total_jumps = 0
    for a, b, c, d in parts:
        n_sum += a
        n_sq += b
        rho_sum += c
        total_jumps += d
    mean = n_sum / n_traj
    var = np.maximum(n_sq / n_traj - mean ** 2, 0.0)
    sem = np.sqrt(var / max(n_traj - 1, 1))
    cavities = [CavityDensityMatrix(r / n_traj) for r in rho_sum]
    return Trajectory(t_grid.copy(), mean, cavities, photon_number_sem=sem,
                      info={"n_traj": n_traj, "jumps": total_jumps})
