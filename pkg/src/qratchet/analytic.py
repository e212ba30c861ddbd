"""Closed-form swaps, the two-atom three-level reduction and square-pulse families.

Energies and times use hbar = 1.  In the double well, ``|ij>`` means the up
atom sits in well ``i`` and the down atom in well ``j`` (wells 0, 1 are
sites 1, 2 of the chain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .bands import superlattice_force
from .hilbert import FockBasis, build_basis, chain_hamiltonian
from .propagate import IntegratorConfig, propagate_unitary

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])

PulseFn = Callable[[float], float]


def noninteracting_rotation(theta: float) -> np.ndarray:
    """Single-particle double-well propagator ``cos(theta) I + i sin(theta) sigma_x``."""
    return math.cos(theta) * np.eye(2) + 1j * math.sin(theta) * SIGMA_X


def pulse_area(J_pulse: PulseFn, T: float) -> float:
    val, _ = integrate.quad(J_pulse, 0.0, T, limit=200, epsabs=1e-13, epsrel=1e-12)
    return val


def noninteracting_swap_time(J1_pulse: PulseFn, t_max: float = 1e4, target: float = math.pi / 2) -> float:
    """Earliest ``T`` with ``int_0^T J1 = target`` (pi/2 is a perfect swap).

    The accumulated area is bracketed on a growing window and the crossing is
    refined with Brent's method on adaptive quadrature.
    """
    def area(t: float) -> float:
        return pulse_area(J1_pulse, t)

    lo, hi = 0.0, min(1.0, t_max)
    while area(hi) < target:
        if hi >= t_max:
            raise ValueError(f"pulse area never reaches {target:.6g} before t_max={t_max:g}")
        lo, hi = hi, min(2.0 * hi, t_max)
    # the area is monotone for J >= 0; narrow the bracket to the first crossing
    grid = np.linspace(lo, hi, 65)
    vals = np.array([area(t) for t in grid])
    j = int(np.argmax(vals >= target))
    a, b = (grid[j - 1], grid[j]) if j > 0 else (grid[0], grid[0])
    if a == b:
        return float(a)
    return float(optimize.brentq(lambda t: area(t) - target, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps))


# -- three-level reduction ------------------------------------------------------

_S2 = 1.0 / math.sqrt(2.0)
# columns: psi-, psi+, phi+ in the |00>, |01>, |10>, |11> basis
THREE_LEVEL_BASIS = np.array(
    [
        [0.0, 0.0, _S2],
        [_S2, _S2, 0.0],
        [-_S2, _S2, 0.0],
        [0.0, 0.0, _S2],
    ]
)
KET_01 = np.array([0.0, 1.0, 0.0, 0.0])
KET_10 = np.array([0.0, 0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ThreeLevelHamiltonian:
    """Effective Hamiltonian on ``(|psi->, |psi+>, |phi+>)``."""

    J: float
    U: float

    @property
    def matrix(self) -> np.ndarray:
        return three_level_matrix(self.J, self.U)


def three_level_matrix(J: float, U: float) -> np.ndarray:
    return np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -2.0 * J], [0.0, -2.0 * J, U]])


THREE_LEVEL_HOPPING = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -2.0], [0.0, -2.0, 0.0]])
THREE_LEVEL_INTERACTION = np.diag([0.0, 0.0, 1.0])


def two_well_pauli_hamiltonian(J: float, U: float) -> np.ndarray:
    """``-J (sx x 1 + 1 x sx) + U/2 (sz x sz + 1)`` on ``|00>, |01>, |10>, |11>``."""
    sx = SIGMA_X
    sz = np.diag([1.0, -1.0])
    return -J * (np.kron(sx, np.eye(2)) + np.kron(np.eye(2), sx)) + 0.5 * U * (np.kron(sz, sz) + np.eye(4))


def swap_amplitude(U3: np.ndarray) -> complex:
    """``<01| U |10>`` from a three-level unitary."""
    U4 = THREE_LEVEL_BASIS @ U3 @ THREE_LEVEL_BASIS.T
    return complex(KET_01 @ U4 @ KET_10)


def swap_fidelity(U3: np.ndarray) -> float:
    return abs(swap_amplitude(U3)) ** 2


@dataclass(frozen=True)
class ThreeLevelResult:
    unitary: np.ndarray
    fidelity: float
    nu: float

    @property
    def dark_element(self) -> complex:
        return complex(self.unitary[0, 0])


def three_level_propagate(
    J_pulse: PulseFn,
    U: float,
    T: float,
    cfg: IntegratorConfig | None = None,
    breakpoints=(),
) -> ThreeLevelResult:
    """Propagate the three-level model over ``[0, T]``; report swap fidelity and phase ``nu``."""
    cfg = cfg or IntegratorConfig.for_half_period(T)
    Hu = U * THREE_LEVEL_INTERACTION

    def H(t):
        return Hu + float(J_pulse(t)) * THREE_LEVEL_HOPPING

    U3 = propagate_unitary(H, 3, 0.0, T, cfg, breakpoints)
    return ThreeLevelResult(U3, swap_fidelity(U3), float(np.angle(U3[2, 2])))


def fock_two_site_map(basis: FockBasis) -> np.ndarray:
    """Isometry from ``|00>, |01>, |10>, |11>`` to the (L=2, 1 up, 1 down) Fock basis."""
    if basis.L != 2 or basis.sectors != ((1, 1),):
        raise ValueError("need the L=2, N_up=N_down=1 basis")
    M = np.zeros((basis.dimension, 4))
    for i in (0, 1):
        for j in (0, 1):
            up = [0, 0]
            dn = [0, 0]
            up[i] = 1
            dn[j] = 1
            M[basis.index[tuple(up + dn)], 2 * i + j] = 1.0
    return M


def fock_three_level_block(
    J_pulse: PulseFn, U: float, T: float, cfg: IntegratorConfig | None = None, breakpoints=()
) -> np.ndarray:
    """Full two-site two-species propagation, projected on ``(psi-, psi+, phi+)``."""
    cfg = cfg or IntegratorConfig.for_half_period(T)
    basis = build_basis(2, 1, 1)
    ham = chain_hamiltonian(basis, "open")
    Hd = ham.dense(1.0, 0.0, 0.0)
    Di = np.diag(ham.interaction)

    def H(t):
        return float(J_pulse(t)) * Hd + U * Di

    Uf = propagate_unitary(H, basis.dimension, 0.0, T, cfg, breakpoints)
    V = fock_two_site_map(basis) @ THREE_LEVEL_BASIS
    return V.T @ Uf @ V


# -- square-signal families ---------------------------------------------------


def square_eigenvalues(J: float, U: float) -> tuple[float, float]:
    root = math.sqrt(16.0 * J * J + U * U)
    return 0.5 * (U + root), 0.5 * (U - root)


@dataclass(frozen=True)
class SquareSolution:
    """Constant-hopping perfect swap; times are in units of ``1/U``."""

    n_plus: int
    n_minus: int
    on_min_J_frontier: bool = False
    is_min_time: bool = False

    @property
    def x(self) -> float:
        return (2 * self.n_plus + 1) / (2 * self.n_minus + 1)

    @property
    def U_over_J(self) -> float:
        x = self.x
        return 2.0 * (x - 1.0) / math.sqrt(x)

    @property
    def U_T(self) -> float:
        return 2.0 * math.pi * (self.n_plus - self.n_minus)

    @property
    def J_T(self) -> float:
        return 0.5 * math.pi * math.sqrt((2 * self.n_plus + 1) * (2 * self.n_minus + 1))

    def J(self, U: float = 1.0) -> float:
        return U / self.U_over_J

    def T(self, U: float = 1.0) -> float:
        return self.U_T / U


def square_solution_family(n_max: int) -> list[SquareSolution]:
    """All ``(n+, n-)`` with ``max <= n_max`` and ``x > 1``, ordered by ``(U T, J T)``.

    ``on_min_J_frontier`` marks, for each swap time, the member with the
    smallest hopping; ``is_min_time`` marks members with ``U T = 2 pi``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    pairs = [(p, m) for p in range(n_max + 1) for m in range(n_max + 1) if p > m]
    raw = [SquareSolution(p, m) for p, m in pairs]
    if not raw:
        return []
    min_ut = min(s.U_T for s in raw)
    best_j = {}
    for s in raw:
        key = s.n_plus - s.n_minus
        if key not in best_j or s.J_T < best_j[key].J_T:
            best_j[key] = s
    out = [
        SquareSolution(
            s.n_plus,
            s.n_minus,
            on_min_J_frontier=best_j[s.n_plus - s.n_minus] is s,
            is_min_time=math.isclose(s.U_T, min_ut),
        )
        for s in raw
    ]
    out.sort(key=lambda s: (s.U_T, s.J_T))
    return out


def fastest_square_solution(family: list[SquareSolution]) -> SquareSolution:
    return min((s for s in family if s.is_min_time), key=lambda s: s.J_T)


# -- holes --------------------------------------------------------------------


@dataclass(frozen=True)
class HolePhaseReport:
    phase: float
    is_hole_safe: bool
    return_probability: float


def hole_phase_check(J_pulse: PulseFn, T: float, cfg: IntegratorConfig | None = None, tol: float = 1e-3) -> HolePhaseReport:
    """Pulse area against ``2 pi Z`` plus the propagated particle-next-to-hole return probability."""
    phase = pulse_area(J_pulse, T)
    m = round(phase / (2.0 * math.pi))
    safe = abs(phase - 2.0 * math.pi * m) <= tol
    cfg = cfg or IntegratorConfig.for_half_period(T)
    U2 = propagate_unitary(lambda t: -float(J_pulse(t)) * SIGMA_X, 2, 0.0, T, cfg)
    return HolePhaseReport(phase, safe, float(abs(U2[0, 0]) ** 2))


# -- force average --------------------------------------------------------------


@dataclass(frozen=True)
class SuperlatticeSchedule:
    """Depths and phases over one full period ``2T``.

    ``phi`` shifts the short lattice, ``phi_x`` the long one
    (``V_x cos^2(x + phi_x) + V_2 cos^2(2x + phi)``, lengths in ``1/k``).
    """

    V_x: PulseFn
    V_2: PulseFn
    period: float
    phi: PulseFn = lambda t: 0.0
    phi_x: PulseFn = lambda t: 0.0


def role_swapped_schedule(V_x_half: PulseFn, V_2_half: PulseFn, T: float) -> SuperlatticeSchedule:
    """Repeat the half-period depths with the whole potential translated by one site.

    Translating by ``pi/2k`` leaves the short lattice unchanged and shifts the
    long lattice by half its period, which exchanges the odd and even bonds.
    """
    def wrap(fn):
        return lambda t: fn(t if t < T else t - T)

    return SuperlatticeSchedule(
        V_x=wrap(V_x_half),
        V_2=wrap(V_2_half),
        period=2.0 * T,
        phi_x=lambda t: 0.0 if t < T else math.pi / 2,
    )


def zero_force_average(modulation: SuperlatticeSchedule, site_width: float = math.pi / 2) -> float:
    """``int_0^{2T} dt int_0^{pi/2k} dx dV/dx`` by nested adaptive quadrature."""
    def spatial(t: float) -> float:
        vx, v2 = float(modulation.V_x(t)), float(modulation.V_2(t))
        ph, phx = float(modulation.phi(t)), float(modulation.phi_x(t))
        val, _ = integrate.quad(
            lambda x: superlattice_force(x, vx, v2, ph, phx), 0.0, site_width, epsabs=1e-12, epsrel=1e-12
        )
        return val

    half = 0.5 * modulation.period
    total = 0.0
    for a, b in ((0.0, half), (half, modulation.period)):
        val, _ = integrate.quad(spatial, a, b, epsabs=1e-10, epsrel=1e-10, limit=200)
        total += val
    return total
