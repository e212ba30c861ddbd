"""Double-well band structure of the 1D superlattice and hopping-to-depth conversion.

Units: lengths in ``1/k``, energies in the recoil energy ``E_r``, so the
single-particle Hamiltonian is ``-d^2/dx^2 + V(x)`` with

    V(x) = V_x cos^2(x + phi_x) + V_2 cos^2(2x + phi).

At ``phi = 0`` one superlattice period ``[0, pi]`` holds two wells at
``pi/4`` and ``3pi/4``.  The barrier at ``pi/2`` has height ``V_2 - V_x/2``
above the wells and controls the modulated hopping; the barrier at ``0``
(height ``V_2 + V_x/2``) is the suppressed one.  Under the fixed total
``V_x + V_2 = 70`` the modulation variable is ``deltaV = V_2``, so the
hopping decays as ``deltaV`` grows.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh

DEFAULT_TOTAL_DEPTH = 70.0
DEFAULT_AS_OVER_A = 0.01
SUPERLATTICE_PERIOD = math.pi


class ConvergenceError(RuntimeError):
    pass


class LocalizationError(RuntimeError):
    pass


def superlattice_potential(x, V_x: float, V_2: float, phi: float = 0.0, phi_x: float = 0.0):
    return V_x * np.cos(x + phi_x) ** 2 + V_2 * np.cos(2.0 * x + phi) ** 2


def superlattice_force(x, V_x: float, V_2: float, phi: float = 0.0, phi_x: float = 0.0):
    """``dV/dx``."""
    return -V_x * np.sin(2.0 * (x + phi_x)) - 2.0 * V_2 * np.sin(2.0 * (2.0 * x + phi))


@dataclass(frozen=True)
class SuperlatticeConfig:
    V_x: float
    V_2: float
    phi: float = 0.0

    def __post_init__(self):
        if self.V_x < 0 or self.V_2 < 0:
            raise ValueError("lattice depths must be non-negative")
        q = self.phi / (math.pi / 2)
        if abs(q - round(q)) > 1e-12:
            raise ValueError("phi must be a multiple of pi/2")

    @classmethod
    def from_delta_v(cls, delta_v: float, total: float = DEFAULT_TOTAL_DEPTH) -> "SuperlatticeConfig":
        if not 0.0 <= delta_v <= total:
            raise ValueError(f"deltaV must lie in [0, {total}]")
        return cls(V_x=total - delta_v, V_2=delta_v)

    @property
    def delta_v(self) -> float:
        return self.V_2

    def potential(self, x):
        return superlattice_potential(x, self.V_x, self.V_2, self.phi)


@dataclass(frozen=True)
class DoubleWellSolution:
    x: np.ndarray
    energies: np.ndarray
    wavefunctions: np.ndarray  # columns, normalised so sum |psi|^2 dx = 1
    boundary: str

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def _fourier_kinetic(n: int, length: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    F = np.fft.fft(np.eye(n), axis=0)
    T = np.fft.ifft(F * (k**2)[:, None], axis=0).real
    return 0.5 * (T + T.T)


def _sine_kinetic(n: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(1, n + 1)
    S = math.sqrt(2.0 / (n + 1)) * np.sin(np.outer(j, j) * np.pi / (n + 1))
    # box of length pi: sin(m x) has -d^2/dx^2 eigenvalue m^2
    return S @ np.diag(j.astype(float) ** 2) @ S, j * np.pi / (n + 1)


def _solve_grid(config: SuperlatticeConfig, n: int, boundary: str, n_states: int):
    if boundary == "periodic":
        x = np.arange(n) * SUPERLATTICE_PERIOD / n
        T = _fourier_kinetic(n, SUPERLATTICE_PERIOD)
    elif boundary == "isolated":
        T, x = _sine_kinetic(n)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    E, vecs = eigh(T + np.diag(config.potential(x)), subset_by_index=[0, n_states - 1])
    dx = x[1] - x[0]
    return x, E, vecs / math.sqrt(dx)


def solve_double_well(
    config: SuperlatticeConfig,
    grid_points: int = 256,
    boundary: str = "isolated",
    n_states: int = 4,
    tol: float = 1e-6,
) -> DoubleWellSolution:
    """Lowest eigenpairs on one superlattice period.

    ``boundary="isolated"`` puts hard walls on the tops of the suppressed
    barrier (``x = 0, pi``) and uses a sine discrete-variable grid;
    ``"periodic"`` uses a Fourier grid with periodic wrap-around.  Both are
    re-solved on a doubled grid and must agree to ``tol``.
    """
    if config.phi != 0.0:
        raise ValueError("double-well solver requires phi = 0")
    if grid_points < 256:
        raise ValueError("grid_points must be >= 256")
    x, E, psi = _solve_grid(config, grid_points, boundary, n_states)
    _, E2, _ = _solve_grid(config, 2 * grid_points, boundary, n_states)
    if np.max(np.abs(E - E2)) > tol:
        raise ConvergenceError(f"eigenvalues moved by {np.max(np.abs(E - E2)):.3g} under grid doubling")
    # fix the global sign: each eigenfunction positive where it is largest on the left half
    left = x < SUPERLATTICE_PERIOD / 2
    for k in range(psi.shape[1]):
        i = np.argmax(np.abs(psi[:, k]) * left)
        if psi[i, k] < 0:
            psi[:, k] *= -1
    return DoubleWellSolution(x, E, psi, boundary)


@dataclass(frozen=True)
class BandPoint:
    deltaV: float
    J: float
    u: float
    gap: float
    E0: float
    E1: float
    E2: float
    localization: float = 1.0

    def interaction(self, a_s_over_a: float = DEFAULT_AS_OVER_A) -> float:
        """On-site interaction ``U / E_r = (a_s/a) u``."""
        return a_s_over_a * self.u

    def bose_hubbard_valid(self, a_s_over_a: float = DEFAULT_AS_OVER_A) -> bool:
        return self.interaction(a_s_over_a) < self.gap


def wannier_function(sol: DoubleWellSolution) -> tuple[np.ndarray, float]:
    """``(psi0 + psi1)/sqrt 2`` localised in one well and the weight of that well."""
    left = sol.x < SUPERLATTICE_PERIOD / 2
    best = None
    for s in (1.0, -1.0):
        w = (sol.wavefunctions[:, 0] + s * sol.wavefunctions[:, 1]) / math.sqrt(2.0)
        weight = float(np.sum(np.abs(w[left]) ** 2) * sol.dx)
        if best is None or weight > best[1]:
            best = (w, weight)
    return best


def extract_band_point(
    config: SuperlatticeConfig,
    grid_points: int = 256,
    boundary: str = "isolated",
    min_localization: float = 0.9,
) -> BandPoint:
    sol = solve_double_well(config, grid_points, boundary)
    E0, E1, E2 = (float(e) for e in sol.energies[:3])
    w, weight = wannier_function(sol)
    if weight < min_localization:
        raise LocalizationError(
            f"Wannier function only {weight:.3f} localised at deltaV={config.delta_v:g}; two-level reduction fails"
        )
    u = SUPERLATTICE_PERIOD * float(np.sum(np.abs(w) ** 4) * sol.dx)
    return BandPoint(
        deltaV=config.delta_v,
        J=0.5 * (E1 - E0),
        u=u,
        gap=E2 - 0.5 * (E0 + E1),
        E0=E0,
        E1=E1,
        E2=E2,
        localization=weight,
    )


@dataclass(frozen=True)
class ExponentialFit:
    """``log J = alpha - beta * deltaV`` on ``[dv_lo, dv_hi]``."""

    alpha: float
    beta: float
    rms_log_residual: float
    dv_lo: float
    dv_hi: float

    def J(self, dv):
        return np.exp(self.alpha - self.beta * np.asarray(dv, dtype=float))

    def delta_v(self, J):
        return (self.alpha - np.log(np.asarray(J, dtype=float))) / self.beta


@dataclass(frozen=True)
class BandTable:
    points: list[BandPoint]
    fit: ExponentialFit
    u_coeffs: np.ndarray
    a_s_over_a: float = DEFAULT_AS_OVER_A
    total_depth: float = DEFAULT_TOTAL_DEPTH
    fit_mask: np.ndarray = field(default=None, repr=False)

    @property
    def delta_v(self) -> np.ndarray:
        return np.array([p.deltaV for p in self.points])

    @property
    def J(self) -> np.ndarray:
        return np.array([p.J for p in self.points])

    @property
    def u(self) -> np.ndarray:
        return np.array([p.u for p in self.points])

    @property
    def gap(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])

    def u_fit(self, dv):
        return np.polyval(self.u_coeffs, dv)

    def mean_interaction(self) -> float:
        """Typical ``U / E_r`` over the table."""
        return self.a_s_over_a * float(np.mean(self.u))

    def interpolate_J(self, dv):
        """Table lookup, linear in ``log J``."""
        order = np.argsort(self.delta_v)
        return np.exp(np.interp(dv, self.delta_v[order], np.log(self.J[order])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["deltaV_Er", "J_Er", "u", "gap_Er", "E0", "E1", "E2"])
        for p in self.points:
            w.writerow([f"{v:.12g}" for v in (p.deltaV, p.J, p.u, p.gap, p.E0, p.E1, p.E2)])
        return buf.getvalue()


def _longest_decreasing_run(values: np.ndarray) -> tuple[int, int]:
    best = (0, 1)
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or not values[i] < values[i - 1]:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = i
    return best


def sweep_and_fit(
    dv_min: float,
    dv_max: float,
    samples: int = 40,
    total: float = DEFAULT_TOTAL_DEPTH,
    a_s_over_a: float = DEFAULT_AS_OVER_A,
    grid_points: int = 256,
    boundary: str = "isolated",
) -> BandTable:
    """Band points on an even ``deltaV`` grid plus an exponential fit of ``J``."""
    if not dv_max > dv_min:
        raise ValueError("deltaV range has zero width")
    if dv_min < 0 or dv_max > total:
        raise ValueError(f"deltaV range must lie within [0, {total}]")
    if samples < 2:
        raise ValueError("need at least two samples")
    dvs = np.linspace(dv_min, dv_max, samples)
    points = [extract_band_point(SuperlatticeConfig.from_delta_v(dv, total), grid_points, boundary) for dv in dvs]
    J = np.array([p.J for p in points])
    lo, hi = _longest_decreasing_run(J)
    if hi - lo < len(J):
        warnings.warn(
            f"J(deltaV) not monotone; fitting deltaV in [{dvs[lo]:g}, {dvs[hi - 1]:g}] only", RuntimeWarning
        )
    if hi - lo < 2:
        raise ValueError("no decreasing segment with at least two points")
    seg_dv, seg_logj = dvs[lo:hi], np.log(J[lo:hi])
    slope, intercept = np.polyfit(seg_dv, seg_logj, 1)
    resid = seg_logj - (intercept + slope * seg_dv)
    fit = ExponentialFit(
        alpha=float(intercept),
        beta=float(-slope),
        rms_log_residual=float(np.sqrt(np.mean(resid**2))),
        dv_lo=float(seg_dv[0]),
        dv_hi=float(seg_dv[-1]),
    )
    u = np.array([p.u for p in points])
    u_coeffs = np.polyfit(dvs, u, min(2, samples - 1))
    mask = np.zeros(len(points), dtype=bool)
    mask[lo:hi] = True
    return BandTable(points, fit, u_coeffs, a_s_over_a, total, mask)


@dataclass(frozen=True)
class LatticeSchedule:
    times: np.ndarray
    J: np.ndarray
    delta_v: np.ndarray
    clamped: np.ndarray

    @property
    def V_2(self) -> np.ndarray:
        return self.delta_v

    def V_x(self, total: float = DEFAULT_TOTAL_DEPTH) -> np.ndarray:
        return total - self.delta_v


def pulse_to_lattice_schedule(
    J_pulse: Callable[[float], float] | Sequence[float],
    table: BandTable,
    times: Sequence[float],
) -> LatticeSchedule:
    """Invert the exponential fit; ``J`` (in ``E_r``) below the table saturates at the deepest barrier."""
    times = np.asarray(times, dtype=float)
    if callable(J_pulse):
        J = np.array([float(J_pulse(t)) for t in times])
    else:
        J = np.asarray(J_pulse, dtype=float)
        if J.shape != times.shape:
            raise ValueError("J samples and times differ in length")
    seg = table.fit_mask if table.fit_mask is not None else np.ones(len(table.points), dtype=bool)
    J_tab = table.J[seg]
    j_min, j_max = float(J_tab.min()), float(J_tab.max())
    if np.any(J > j_max * (1 + 1e-9)):
        raise ValueError(f"J up to {J.max():.4g} E_r exceeds the fitted maximum {j_max:.4g} E_r")
    clamped = J < j_min
    dv = np.empty_like(J)
    dv[clamped] = table.fit.dv_hi
    dv[~clamped] = np.clip(table.fit.delta_v(J[~clamped]), table.fit.dv_lo, table.fit.dv_hi)
    return LatticeSchedule(times, J, dv, clamped)
