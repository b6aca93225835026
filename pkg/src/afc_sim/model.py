"""Comb geometry, the excitation-truncated collective basis and the
Tavis-Cummings generator.

Configuration values are linear frequencies in MHz. Everything that leaves
this module as a matrix is in angular units, rad/ns, with time in ns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

MHZ_TO_RAD_PER_NS = 2 * np.pi * 1e-3


def mhz_to_angular(nu_mhz):
    return np.asarray(nu_mhz, dtype=float) * MHZ_TO_RAD_PER_NS


def angular_to_mhz(omega):
    return np.asarray(omega, dtype=float) / MHZ_TO_RAD_PER_NS


class ValidationError(ValueError):
    """Invalid physical parameters. ``field`` names the offending input."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# comb geometry


@dataclass(frozen=True)
class UniformEnvelope:
    omega0: float

    def couplings(self, offsets_mhz: np.ndarray) -> np.ndarray:
        return np.full(offsets_mhz.shape, float(self.omega0))


@dataclass(frozen=True)
class GaussianEnvelope:
    """Coupling amplitude ``omega0 * exp(-offset**2 / (2 * lam**2))``."""

    omega0: float
    lam: float

    def couplings(self, offsets_mhz: np.ndarray) -> np.ndarray:
        if self.lam <= 0:
            raise ValidationError("lambda_mhz", "envelope width must be positive")
        return self.omega0 * np.exp(-(offsets_mhz ** 2) / (2 * self.lam ** 2))


@dataclass(frozen=True)
class CombSpec:
    """Atomic frequency comb with ``m`` teeth of ``n_prime`` spins each.

    Tooth ``mu`` (``-(m-1)/2 .. (m-1)/2``) sits at ``nu_c + mu * delta_nu``
    and couples to the cavity with collective amplitude ``couplings[i]``.
    All frequencies are linear MHz.
    """

    m: int
    delta_nu: float
    nu_c: float
    n_prime: int
    couplings: tuple[float, ...]

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1 or self.m % 2 == 0:
            raise ValidationError("m", f"number of teeth must be a positive odd integer, got {self.m}")
        if int(self.n_prime) != self.n_prime or self.n_prime < 1:
            raise ValidationError("n_prime", f"spins per tooth must be a positive integer, got {self.n_prime}")
        if not self.delta_nu > 0:
            raise ValidationError("delta_nu", f"tooth spacing must be positive, got {self.delta_nu}")
        couplings = tuple(float(c) for c in self.couplings)
        if len(couplings) != self.m:
            raise ValidationError("couplings", f"expected {self.m} couplings, got {len(couplings)}")
        if any(not np.isfinite(c) or c < 0 for c in couplings):
            raise ValidationError("couplings", "couplings must be finite and non-negative")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n_prime", int(self.n_prime))
        object.__setattr__(self, "couplings", couplings)

    @property
    def mu(self) -> np.ndarray:
        half = (self.m - 1) // 2
        return np.arange(-half, half + 1)

    @property
    def offsets(self) -> np.ndarray:
        """Tooth detunings from the cavity, MHz."""
        return self.mu * float(self.delta_nu)

    @property
    def tooth_frequencies(self) -> np.ndarray:
        return self.nu_c + self.offsets

    @property
    def coupling_array(self) -> np.ndarray:
        return np.array(self.couplings)


def build_comb(m: int, delta_nu: float, nu_c: float, n_prime: int, envelope) -> CombSpec:
    """Fill the per-tooth couplings of a comb from a coupling envelope."""
    if int(m) != m or m < 1 or m % 2 == 0:
        raise ValidationError("m", f"number of teeth must be a positive odd integer, got {m}")
    if not delta_nu > 0:
        raise ValidationError("delta_nu", f"tooth spacing must be positive, got {delta_nu}")
    if envelope.omega0 < 0:
        raise ValidationError("omega0", "coupling amplitude must be non-negative")
    half = (int(m) - 1) // 2
    offsets = np.arange(-half, half + 1) * float(delta_nu)
    return CombSpec(int(m), float(delta_nu), float(nu_c), n_prime, tuple(envelope.couplings(offsets)))


@dataclass(frozen=True)
class LossRates:
    """Cavity decay and spin radiative/dephasing rates, linear MHz."""

    kappa: float = 0.0
    gamma_h: float = 0.0
    gamma_p: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma_h", "gamma_p"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(name, f"rate must be non-negative, got {value}")

    def angular(self, kind: str) -> float:
        return float(getattr(self, kind)) * MHZ_TO_RAD_PER_NS

    @property
    def is_lossless(self) -> bool:
        return self.kappa == 0 and self.gamma_h == 0 and self.gamma_p == 0


# ---------------------------------------------------------------------------
# basis


def _compositions(total: int, parts: int, caps: Sequence[int]):
    """Lexicographically ascending tuples of ``parts`` bounded non-negative
    integers summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    rest_cap = sum(caps[1:])
    lo = max(0, total - rest_cap)
    for head in range(lo, min(total, caps[0]) + 1):
        for tail in _compositions(total - head, parts - 1, caps[1:]):
            yield (head,) + tail


@dataclass(frozen=True, eq=False)
class BasisTable:
    """Product basis ``|n_c> (x) |q_mu ...>`` truncated at a photon cutoff and
    a total excitation cutoff.

    ``states`` is an int array with one row per basis state: column 0 is the
    cavity Fock index, the remaining ``m`` columns are tooth occupations in
    ascending ``mu``. Rows are ordered by total excitation, then
    lexicographically.
    """

    m: int
    n_prime: int
    photon_cutoff: int
    exc_cutoff: int
    states: np.ndarray = field(repr=False)
    _codes: np.ndarray = field(repr=False)
    _order: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self):
        return self.size

    @property
    def photons(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def excitations(self) -> np.ndarray:
        return self.states.sum(axis=1)

    @property
    def index(self) -> dict:
        return {tuple(int(v) for v in row): i for i, row in enumerate(self.states)}

    def _radices(self) -> np.ndarray:
        return np.array([self.photon_cutoff + 1] + [self.n_prime + 1] * self.m, dtype=np.int64)

    def encode(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
        radices = self._radices()
        weights = np.ones(self.m + 1, dtype=np.int64)
        for j in range(self.m - 1, -1, -1):
            weights[j] = weights[j + 1] * radices[j + 1]
        return rows @ weights

    def lookup(self, rows) -> np.ndarray:
        """Ordinal of each row, or -1 where the row is not in the table."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
        out = np.full(len(rows), -1, dtype=np.int64)
        radices = self._radices()
        valid = np.all((rows >= 0) & (rows < radices), axis=1)
        if not valid.any():
            return out
        codes = self.encode(rows[valid])
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, len(self._codes) - 1)
        hit = self._codes[pos] == codes
        found = np.where(hit, self._order[pos], -1)
        out[np.flatnonzero(valid)] = found
        return out

    def sector(self, k: int) -> np.ndarray:
        """Indices of the states carrying exactly ``k`` excitations."""
        return np.flatnonzero(self.excitations == k)

    def matches(self, comb: CombSpec) -> bool:
        return self.m == comb.m and self.n_prime == comb.n_prime


def enumerate_basis(comb: CombSpec, photon_cutoff: int, exc_cutoff: int) -> BasisTable:
    if photon_cutoff < 0 or exc_cutoff < 0:
        raise ValidationError("cutoff", "cutoffs must be non-negative")
    caps = [int(photon_cutoff)] + [comb.n_prime] * comb.m
    rows = [c for e in range(int(exc_cutoff) + 1) for c in _compositions(e, comb.m + 1, caps)]
    states = np.array(rows, dtype=np.int64).reshape(-1, comb.m + 1)
    table = BasisTable(comb.m, comb.n_prime, int(photon_cutoff), int(exc_cutoff), states,
                       np.empty(0, np.int64), np.empty(0, np.int64))
    codes = table.encode(states)
    order = np.argsort(codes, kind="stable")
    object.__setattr__(table, "_codes", codes[order])
    object.__setattr__(table, "_order", order)
    return table


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class SparseHermitian:
    """Hermitian operator over a basis table, rad/ns, CSR storage."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=complex)
        mat.sum_duplicates()
        object.__setattr__(self, "matrix", mat)
        scale = max(abs(mat).max(), 1.0) if mat.nnz else 1.0
        dev = abs(mat - mat.getH()).max() if mat.nnz else 0.0
        if dev > 1e-12 * scale:
            raise ValueError(f"operator is not Hermitian (deviation {dev:.3e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def write_coo(matrix, path) -> None:
    """Write a sparse matrix as ``row col re im`` lines, sorted by (row, col)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[2]), int(header[3]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape, dtype=complex)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape)


def _check_basis(comb: CombSpec, basis: BasisTable):
    if not basis.matches(comb):
        raise ValidationError(
            "basis", f"basis built for m={basis.m}, n_prime={basis.n_prime} does not match comb "
                     f"m={comb.m}, n_prime={comb.n_prime}")


def _shifted(basis: BasisTable, column: int, step: int):
    """(source, target) index pairs for states whose ``column`` entry can be
    moved by ``step`` while staying in the table."""
    rows = basis.states.copy()
    rows[:, column] += step
    target = basis.lookup(rows)
    src = np.flatnonzero(target >= 0)
    return src, target[src]


def excitation_operator(basis: BasisTable) -> sp.csr_matrix:
    return sp.diags(basis.excitations.astype(complex), format="csr")


def cavity_lowering(basis: BasisTable) -> sp.csr_matrix:
    src, dst = _shifted(basis, 0, -1)
    vals = np.sqrt(basis.states[src, 0])
    return sp.csr_matrix((vals.astype(complex), (dst, src)), shape=(basis.size, basis.size))


def tooth_lowering(basis: BasisTable, j: int) -> sp.csr_matrix:
    """Collective lowering J^-_mu of tooth column ``j`` (0-based, ascending mu):
    ``J^- |q> = sqrt(q (N' - q + 1)) |q - 1>``."""
    src, dst = _shifted(basis, j + 1, -1)
    q = basis.states[src, j + 1]
    vals = np.sqrt(q * (basis.n_prime - q + 1.0))
    return sp.csr_matrix((vals.astype(complex), (dst, src)), shape=(basis.size, basis.size))


def tooth_jz(basis: BasisTable, j: int) -> sp.csr_matrix:
    return sp.diags(basis.states[:, j + 1] - basis.n_prime / 2.0, format="csr").astype(complex)


def assemble_hamiltonian(comb: CombSpec, basis: BasisTable, rotating_frame: bool = True) -> SparseHermitian:
    """Tavis-Cummings generator on ``basis`` in rad/ns.

    The rotating frame is taken at the cavity frequency; the lab frame adds
    ``2 pi nu_c`` per excitation. The constant ``-(N'/2) sum omega_mu`` is
    dropped.
    """
    _check_basis(comb, basis)
    offsets = mhz_to_angular(comb.offsets)
    carrier = 0.0 if rotating_frame else float(mhz_to_angular(comb.nu_c))
    diag = carrier * basis.excitations + basis.states[:, 1:] @ offsets
    H = sp.diags(diag.astype(complex), format="csr")
    a = cavity_lowering(basis)
    g = mhz_to_angular(comb.coupling_array) / np.sqrt(comb.n_prime)
    for j in range(comb.m):
        if g[j] == 0:
            continue
        jm = tooth_lowering(basis, j)
        # J^+ a is the adjoint of J^- a^dagger
        term = g[j] * (jm.getH() @ a)
        H = H + term + term.getH()
    return SparseHermitian(H.tocsr())


@dataclass(frozen=True, eq=False)
class JumpOperator:
    """Lindblad jump carrier. ``kind`` selects the rate it is weighted with."""

    name: str
    kind: str  # "kappa" | "gamma_h" | "gamma_p"
    matrix: sp.csr_matrix


def jump_operators(comb: CombSpec, basis: BasisTable) -> list[JumpOperator]:
    """Cavity lowering, per-tooth ``J^-/sqrt(N')`` and per-tooth ``J^z``."""
    _check_basis(comb, basis)
    ops = [JumpOperator("a", "kappa", cavity_lowering(basis))]
    norm = 1 / np.sqrt(comb.n_prime)
    for j, mu in enumerate(comb.mu):
        ops.append(JumpOperator(f"J-[{mu}]", "gamma_h", (norm * tooth_lowering(basis, j)).tocsr()))
    for j, mu in enumerate(comb.mu):
        ops.append(JumpOperator(f"Jz[{mu}]", "gamma_p", tooth_jz(basis, j)))
    return ops
