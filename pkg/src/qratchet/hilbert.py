"""Fock spaces, Hamiltonians and observables for the two-species Bose-Hubbard chain.

Sites are labelled 1..L in every public argument (write ports, average
positions); arrays are of course indexed from zero.  Bond ``(i, i+1)`` is an
*odd* bond when ``i`` is odd, so the canonical schedule drives bonds
(1,2), (3,4), ... during the first half-period.  With periodic boundaries the
closing bond ``(L, 1)`` is even (``L`` must be even).

The on-site interaction is spin independent: every pair of atoms sharing a
site costs ``U``, i.e. ``U/2 n_s(n_s - 1)`` per species plus ``U n_up n_down``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_DIMENSION_CAP = 5_000_000
DENSE_DIMENSION_LIMIT = 2000


class CapacityError(RuntimeError):
    """Requested Hilbert space exceeds the configured dimension cap."""


class BasisMismatchError(ValueError):
    pass


class BoundaryCondition(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"


def _compositions(n: int, length: int) -> list[tuple[int, ...]]:
    """All occupation vectors of ``n`` bosons on ``length`` sites, sorted lexicographically."""
    out = []
    for combo in itertools.combinations_with_replacement(range(length), n):
        occ = [0] * length
        for site in combo:
            occ[site] += 1
        out.append(tuple(occ))
    out.sort()
    return out


def multiset_count(n_sites: int, n_particles: int) -> int:
    return math.comb(n_sites + n_particles - 1, n_particles)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation-number basis over one or more ``(N_up, N_down)`` sectors.

    ``states[k]`` is the concatenated vector ``(n_up_1..n_up_L, n_down_1..n_down_L)``.
    """

    L: int
    sectors: tuple[tuple[int, int], ...]
    states: np.ndarray
    index: dict = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.states)

    @property
    def N_up(self) -> int:
        if len(self.sectors) != 1:
            raise AttributeError("N_up is undefined for a multi-sector basis")
        return self.sectors[0][0]

    @property
    def N_down(self) -> int:
        if len(self.sectors) != 1:
            raise AttributeError("N_down is undefined for a multi-sector basis")
        return self.sectors[0][1]

    @property
    def up(self) -> np.ndarray:
        return self.states[:, : self.L]

    @property
    def down(self) -> np.ndarray:
        return self.states[:, self.L :]

    def lookup(self, occupations: np.ndarray) -> np.ndarray:
        """Vectorised inverse of ``states`` for rows of ``occupations`` (-1 if absent)."""
        occupations = np.atleast_2d(occupations)
        return np.array([self.index.get(tuple(row), -1) for row in occupations.tolist()], dtype=np.int64)


def _make_basis(L: int, sectors: Sequence[tuple[int, int]], cap: int) -> FockBasis:
    if L < 1:
        raise ValueError("L must be >= 1")
    for n_up, n_down in sectors:
        if n_up < 0 or n_down < 0:
            raise ValueError("particle numbers must be non-negative")
    dim = sum(multiset_count(L, u) * multiset_count(L, d) for u, d in sectors)
    if dim > cap:
        raise CapacityError(f"basis dimension {dim} exceeds cap {cap}")
    rows = []
    for n_up, n_down in sectors:
        ups = _compositions(n_up, L)
        downs = _compositions(n_down, L)
        rows.extend(u + d for u in ups for d in downs)
    rows.sort()
    states = np.array(rows, dtype=np.int64).reshape(len(rows), 2 * L)
    states.setflags(write=False)
    index = {row: k for k, row in enumerate(rows)}
    return FockBasis(L=L, sectors=tuple(sorted(set(sectors))), states=states, index=index)


def build_basis(L: int, N_up: int, N_down: int, cap: int = DEFAULT_DIMENSION_CAP) -> FockBasis:
    """Basis of ``N_up`` up-bosons and ``N_down`` down-bosons on ``L`` sites."""
    return _make_basis(L, [(N_up, N_down)], cap)


def build_qubit_basis(L: int, cap: int = DEFAULT_DIMENSION_CAP) -> FockBasis:
    """Sectors (0, L) and (1, L-1): one atom per site with at most one qubit excitation."""
    return _make_basis(L, [(0, L), (1, L - 1)], cap)


def bonds(L: int, bc: BoundaryCondition | str) -> list[tuple[int, int, bool]]:
    """Nearest-neighbour bonds as zero-based ``(i, j, is_odd)``."""
    bc = BoundaryCondition(bc)
    if bc is BoundaryCondition.PERIODIC and L % 2:
        raise ValueError("periodic boundaries need an even number of sites")
    out = [(i, i + 1, (i + 1) % 2 == 1) for i in range(L - 1)]
    if bc is BoundaryCondition.PERIODIC and L >= 2:
        out.append((L - 1, 0, False))
    return out


@dataclass(frozen=True)
class HamiltonianAction:
    """``H = -J_odd K_odd - J_even K_even + U D`` applied without assembling H."""

    hop_odd: sp.csr_matrix
    hop_even: sp.csr_matrix
    interaction: np.ndarray
    J_odd: float
    J_even: float
    U: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.hop_odd.shape

    def __matmul__(self, psi: np.ndarray) -> np.ndarray:
        out = self.hop_odd @ psi
        out *= -self.J_odd
        if self.J_even:
            out -= self.J_even * (self.hop_even @ psi)
        if self.U:
            diag = self.U * self.interaction
            out += diag[:, None] * psi if psi.ndim == 2 else diag * psi
        return out

    def norm_bound(self) -> float:
        row = abs(self.J_odd) * abs(self.hop_odd).sum(axis=1) + abs(self.J_even) * abs(self.hop_even).sum(axis=1)
        return float(np.max(np.asarray(row).ravel() + abs(self.U) * self.interaction))

    def toarray(self) -> np.ndarray:
        H = -self.J_odd * self.hop_odd - self.J_even * self.hop_even + sp.diags(self.U * self.interaction)
        return H.toarray()


@dataclass(frozen=True, eq=False)
class ChainHamiltonian:
    """Precomputed hopping generators and interaction diagonal on a basis."""

    basis: FockBasis
    bc: BoundaryCondition
    hop_odd: sp.csr_matrix
    hop_even: sp.csr_matrix
    interaction: np.ndarray

    def at(self, J_odd: float, J_even: float, U: float) -> HamiltonianAction:
        return HamiltonianAction(self.hop_odd, self.hop_even, self.interaction, J_odd, J_even, U)

    def dense(self, J_odd: float, J_even: float, U: float) -> np.ndarray:
        if self.basis.dimension > DENSE_DIMENSION_LIMIT:
            raise CapacityError(
                f"dense path limited to dimension {DENSE_DIMENSION_LIMIT}, got {self.basis.dimension}"
            )
        return self.at(J_odd, J_even, U).toarray()


def _hopping_matrix(basis: FockBasis, bond_list: list[tuple[int, int]]) -> sp.csr_matrix:
    D, L = basis.dimension, basis.L
    rows, cols, vals = [], [], []
    states = basis.states
    for species in (0, 1):
        offset = species * L
        for i, j in bond_list:
            si, sj = offset + i, offset + j
            # a_i^dag a_j and its conjugate
            for src, dst in ((sj, si), (si, sj)):
                occ = states[:, src] > 0
                if not occ.any():
                    continue
                k_from = np.nonzero(occ)[0]
                new = states[k_from].copy()
                amp = np.sqrt(new[:, src] * (new[:, dst] + 1.0))
                new[:, src] -= 1
                new[:, dst] += 1
                k_to = basis.lookup(new)
                keep = k_to >= 0
                rows.append(k_to[keep])
                cols.append(k_from[keep])
                vals.append(amp[keep])
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sp.csr_matrix((v, (r, c)), shape=(D, D))


def interaction_diagonal(basis: FockBasis) -> np.ndarray:
    """Pair count per basis state: sum_i [n_up(n_up-1)/2 + n_dn(n_dn-1)/2 + n_up n_dn]."""
    up, dn = basis.up.astype(float), basis.down.astype(float)
    return (0.5 * up * (up - 1) + 0.5 * dn * (dn - 1) + up * dn).sum(axis=1)


def chain_hamiltonian(basis: FockBasis, bc: BoundaryCondition | str = BoundaryCondition.OPEN) -> ChainHamiltonian:
    return _cached_chain_hamiltonian(basis, BoundaryCondition(bc))


@lru_cache(maxsize=32)
def _cached_chain_hamiltonian(basis: FockBasis, bc: BoundaryCondition) -> ChainHamiltonian:
    blist = bonds(basis.L, bc)
    odd = [(i, j) for i, j, is_odd in blist if is_odd]
    even = [(i, j) for i, j, is_odd in blist if not is_odd]
    return ChainHamiltonian(
        basis=basis,
        bc=bc,
        hop_odd=_hopping_matrix(basis, odd),
        hop_even=_hopping_matrix(basis, even),
        interaction=interaction_diagonal(basis),
    )


@dataclass
class ChainState:
    """Amplitudes over a Fock basis (``basis`` set) or over ``L`` single-particle sites."""

    amplitudes: np.ndarray
    basis: FockBasis | None = None
    n_sites: int | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.basis is not None:
            self.n_sites = self.basis.L
            if self.amplitudes.shape != (self.basis.dimension,):
                raise BasisMismatchError("amplitude vector does not match basis dimension")
        elif self.n_sites is None:
            self.n_sites = len(self.amplitudes)

    @property
    def basis_tag(self) -> str:
        return "fock" if self.basis is not None else "single"

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def check_normalized(self, tol: float = 1e-10) -> "ChainState":
        if abs(self.norm - 1.0) > tol:
            raise ValueError(f"state norm {self.norm!r} deviates from 1")
        return self

    def with_amplitudes(self, amplitudes: np.ndarray) -> "ChainState":
        return ChainState(amplitudes, basis=self.basis, n_sites=self.n_sites)

    def overlap(self, other: "ChainState") -> complex:
        if self.basis is not other.basis or self.n_sites != other.n_sites:
            raise BasisMismatchError("states live in different bases")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def apply_hamiltonian(
    basis: FockBasis,
    bc: BoundaryCondition | str,
    J_odd: float,
    J_even: float,
    U: float,
    psi: ChainState,
) -> ChainState:
    """Return ``H psi`` (not normalised)."""
    if psi.basis is not basis:
        raise BasisMismatchError("psi is not indexed by this basis")
    H = chain_hamiltonian(basis, bc).at(J_odd, J_even, U)
    return psi.with_amplitudes(H @ psi.amplitudes)


def build_single_particle_hamiltonian(
    L: int, bc: BoundaryCondition | str, J_odd: float, J_even: float
) -> np.ndarray:
    if L < 2:
        raise ValueError("need at least two sites")
    H = np.zeros((L, L))
    for i, j, is_odd in bonds(L, bc):
        J = J_odd if is_odd else J_even
        H[i, j] -= J
        H[j, i] -= J
    return H


def fock_state(basis: FockBasis, up: Sequence[int], down: Sequence[int]) -> ChainState:
    """Single occupation-number state; ``up``/``down`` are full occupation vectors."""
    key = tuple(int(n) for n in up) + tuple(int(n) for n in down)
    if key not in basis.index:
        raise BasisMismatchError(f"occupation {key} not in basis")
    amps = np.zeros(basis.dimension, dtype=complex)
    amps[basis.index[key]] = 1.0
    return ChainState(amps, basis=basis)


def single_particle_state(L: int, site: int) -> ChainState:
    amps = np.zeros(L, dtype=complex)
    amps[site - 1] = 1.0
    return ChainState(amps, n_sites=L)


def product_state_with_qubit(basis: FockBasis, write_port: int, alpha: complex, beta: complex) -> ChainState:
    """``(alpha a+_up,in + beta a+_dn,in) prod_{j != in} a+_dn,j |vac>`` on ``basis``."""
    L = basis.L
    if not 1 <= write_port <= L:
        raise ValueError(f"write port {write_port} outside 1..{L}")
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-10:
        raise ValueError("|alpha|^2 + |beta|^2 must equal 1")
    amps = np.zeros(basis.dimension, dtype=complex)
    down_all = (1,) * L
    for coeff, n_up in ((alpha, 1), (beta, 0)):
        if coeff == 0:
            continue
        up = [0] * L
        down = list(down_all)
        if n_up:
            up[write_port - 1] = 1
            down[write_port - 1] = 0
        key = tuple(up) + tuple(down)
        if key not in basis.index:
            raise BasisMismatchError(
                f"basis sectors {basis.sectors} cannot hold the ({n_up}, {L - n_up}) component"
            )
        amps[basis.index[key]] = coeff
    return ChainState(amps, basis=basis).check_normalized()


def swapped_product_state(basis: FockBasis, read_port: int, alpha: complex, beta: complex) -> ChainState:
    return product_state_with_qubit(basis, read_port, alpha, beta)


@dataclass(frozen=True)
class Observables:
    density_up: np.ndarray
    density_down: np.ndarray
    average_position: float | None
    overlap: float | None

    @property
    def density(self) -> np.ndarray:
        return self.density_up + self.density_down


def densities(psi: ChainState) -> tuple[np.ndarray, np.ndarray]:
    prob = np.abs(psi.amplitudes) ** 2
    if psi.basis is None:
        return prob, np.zeros_like(prob)
    return prob @ psi.basis.up, prob @ psi.basis.down


def average_position(psi: ChainState) -> float:
    """Mean 1-based site of the up component (the single particle for site states)."""
    n_up, _ = densities(psi)
    total = n_up.sum()
    if total <= 1e-14:
        raise ValueError("state has no up population")
    return float(np.arange(1, len(n_up) + 1) @ n_up / total)


def observables(psi: ChainState, reference: ChainState | None = None, position: bool = True) -> Observables:
    n_up, n_dn = densities(psi)
    pos = average_position(psi) if position else None
    ov = abs(reference.overlap(psi)) ** 2 if reference is not None else None
    return Observables(n_up, n_dn, pos, ov)


def number_operators(basis: FockBasis) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of total N_up and N_down."""
    return basis.up.sum(axis=1).astype(float), basis.down.sum(axis=1).astype(float)


def translation_permutation(basis: FockBasis, shift: int) -> np.ndarray:
    """Index map ``k -> k'`` for translating every occupation by ``shift`` sites (periodic)."""
    L = basis.L
    up = np.roll(basis.up, shift, axis=1)
    dn = np.roll(basis.down, shift, axis=1)
    perm = basis.lookup(np.hstack([up, dn]))
    if (perm < 0).any():
        raise BasisMismatchError("basis is not closed under translation")
    return perm


@dataclass(frozen=True)
class HoppingSchedule:
    """Half-period couplings; roles of ``J1`` and ``J2`` swap every ``T``.

    ``J1`` drives odd bonds during even-numbered half-periods (0, 2, ...), and
    even bonds during odd-numbered ones.
    """

    J1: Callable[[float], float]
    J2: Callable[[float], float]
    U: float
    T: float
    n_half_periods: int = 1

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_half_periods < 1:
            raise ValueError("need at least one half-period")
        probe = np.linspace(0.0, self.T, 65)[:-1]
        for name, fn in (("J1", self.J1), ("J2", self.J2)):
            if min(float(fn(t)) for t in probe) < 0:
                raise ValueError(f"{name}(t) must be non-negative")

    @classmethod
    def canonical(cls, J: Callable[[float], float], U: float, T: float, n_half_periods: int = 1) -> "HoppingSchedule":
        return cls(J1=J, J2=lambda t: 0.0, U=U, T=T, n_half_periods=n_half_periods)

    @property
    def duration(self) -> float:
        return self.T * self.n_half_periods

    def breakpoints(self) -> list[float]:
        return [k * self.T for k in range(1, self.n_half_periods)]

    def half_period(self, t: float) -> int:
        # a few ulps of slack so that t = k T lands in half-period k, while
        # samples nudged just below a boundary stay in the earlier one
        k = int(np.floor(t / self.T * (1.0 + 4.0 * np.finfo(float).eps)))
        return min(max(k, 0), self.n_half_periods - 1)

    def couplings(self, t: float) -> tuple[float, float]:
        """``(J_odd, J_even)`` at global time ``t``."""
        k = self.half_period(t)
        tau = t - k * self.T
        a, b = float(self.J1(tau)), float(self.J2(tau))
        return (a, b) if k % 2 == 0 else (b, a)
