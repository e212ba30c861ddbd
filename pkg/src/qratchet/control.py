"""Gradient-based design of smooth swap pulses.

The fidelity of a propagated unitary against a target on a set of control
vectors is differentiated exactly (to integrator accuracy) by integrating a
backward copy of the target states, then co-integrating forward states,
backward-seeded states and the per-parameter accumulators on one RK4 grid.
Pulse energy ``sum c_n^2`` is then minimised at unit fidelity with an
augmented-Lagrangian outer loop around bound-constrained L-BFGS-B.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from .analytic import THREE_LEVEL_HOPPING, THREE_LEVEL_INTERACTION, swap_fidelity
from .propagate import IntegratorConfig, NumericalError, TimeGrid, chain_apply, rk4_step_matrices

log = logging.getLogger(__name__)

TabulateFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def sin2_modes(t, M: int, T: float) -> np.ndarray:
    """``f_n(t) = sin^2(pi n t / T)`` for ``n = 1..M``; shape ``(M, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = np.arange(1, M + 1)[:, None]
    return np.sin(np.pi * n * t[None, :] / T) ** 2


@dataclass(frozen=True)
class PulseAnsatz:
    c: np.ndarray
    T: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if np.any(c < 0):
            raise ValueError("ansatz coefficients must be non-negative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "c", c)

    @property
    def M(self) -> int:
        return len(self.c)

    def __call__(self, t):
        vals = self.c @ sin2_modes(t, self.M, self.T)
        return float(vals[0]) if np.ndim(t) == 0 else vals

    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = np.arange(1, self.M + 1)[:, None]
        w = np.pi * n / self.T
        vals = self.c @ (w * np.sin(2.0 * w * t[None, :]))
        return vals

    @property
    def area(self) -> float:
        return 0.5 * self.T * float(self.c.sum())

    @property
    def energy(self) -> float:
        return float(self.c @ self.c)


@dataclass(frozen=True)
class Constraints:
    fidelity_target: float = 1.0 - 1e-4
    nonnegative: bool = True
    hole_phase: int | None = None
    hole_tol: float = 1e-3
    c_max: float | None = None


@dataclass
class ControlProblem:
    """Parametrised Hamiltonian, target and controlled subspace.

    ``hamiltonian(times, x)`` returns ``H`` sampled at ``times`` with shape
    ``(nt, d, d)``; ``dhamiltonian(times, x)`` returns ``dH/dx_i`` with shape
    ``(nt, P, d, d)``.  ``control_basis`` holds the controlled vectors as
    columns; the fidelity is normalised by their number.
    """

    hamiltonian: TabulateFn
    dhamiltonian: TabulateFn
    target: np.ndarray
    control_basis: np.ndarray
    T: float
    n_params: int
    integrator: IntegratorConfig
    constraints: Constraints = field(default_factory=Constraints)
    area_weights: np.ndarray | None = None
    min_time: float | None = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=complex)
        self.control_basis = np.asarray(self.control_basis, dtype=complex)
        d = self.target.shape[0]
        if np.max(np.abs(self.target.conj().T @ self.target - np.eye(d))) > 1e-12:
            raise ValueError("target is not unitary")
        B = self.control_basis
        if B.ndim != 2 or B.shape[0] != d:
            raise ValueError("control basis must be a (d, m) array")
        if np.max(np.abs(B.conj().T @ B - np.eye(B.shape[1]))) > 1e-12:
            raise ValueError("control basis is not orthonormal")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dimension(self) -> int:
        return self.target.shape[0]

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_dt(self.T, self.integrator.dt)

    def c_max(self) -> float:
        if self.constraints.c_max is not None:
            return self.constraints.c_max
        # keeps dt * ||H|| small for any admissible pulse
        return 0.025 / self.grid.h

    def hole_residual(self, x) -> float | None:
        if self.constraints.hole_phase is None or self.area_weights is None:
            return None
        return float(self.area_weights @ x - 2.0 * math.pi * self.constraints.hole_phase)


def three_level_problem(
    U: float = 1.0,
    T: float | None = None,
    M: int = 3,
    steps: int = 2000,
    dt: float | None = None,
    fidelity_target: float = 1.0 - 1e-4,
    hole_phase: int | None = None,
    target_phase: float = 0.0,
    c_max: float | None = None,
) -> ControlProblem:
    """Swap problem on ``(psi-, psi+, phi+)`` with ``J(t) = sum_n c_n sin^2(pi n t/T)``.

    The controlled vectors are ``psi-`` and ``psi+``; ``phi+`` picks up a free
    phase, so ``target_phase`` does not change the fidelity.
    """
    T = 2.0 * math.pi / U if T is None else T
    if M < 0:
        raise ValueError("M must be >= 0")
    dt = T / steps if dt is None else dt
    drift = U * THREE_LEVEL_INTERACTION
    cache: dict = {}

    def modes(times):
        key = (len(times), float(times[0]), float(times[-1]))
        if key not in cache:
            cache.clear()
            cache[key] = sin2_modes(times, M, T)
        return cache[key]

    def hamiltonian(times, x):
        J = np.asarray(x, dtype=float) @ modes(times) if M else np.zeros(len(times))
        return drift[None, :, :] + J[:, None, None] * THREE_LEVEL_HOPPING[None, :, :]

    def dhamiltonian(times, x):
        return modes(times).T[:, :, None, None] * THREE_LEVEL_HOPPING[None, None, :, :]

    target = np.diag([1.0, -1.0, np.exp(1j * target_phase)])
    basis = np.eye(3)[:, :2]
    return ControlProblem(
        hamiltonian=hamiltonian,
        dhamiltonian=dhamiltonian,
        target=target,
        control_basis=basis,
        T=T,
        n_params=M,
        integrator=IntegratorConfig(dt=dt),
        constraints=Constraints(fidelity_target=fidelity_target, hole_phase=hole_phase, c_max=c_max),
        area_weights=np.full(M, 0.5 * T),
        min_time=2.0 * math.pi / U,
    )


# -- fidelity and gradient ----------------------------------------------------


def _sample_times(grid: TimeGrid) -> np.ndarray:
    return 0.5 * grid.h * np.arange(2 * grid.n_steps + 1)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite values in fidelity/gradient evaluation")


def _forward_steps(problem: ControlProblem, x: np.ndarray, grid: TimeGrid):
    times = _sample_times(grid)
    H = problem.hamiltonian(times, x)
    _check_finite(H)
    steps = rk4_step_matrices(grid.h, H[0:-1:2], H[1::2], H[2::2])
    return times, H, steps


def _fidelity_from_final(problem: ControlProblem, final: np.ndarray) -> float:
    B = problem.control_basis
    m = B.shape[1]
    return float(np.real(np.trace(B.conj().T @ problem.target.conj().T @ final)) / m)


def fidelity(problem: ControlProblem, x) -> float:
    """``(1/m) Re sum_n <psi_n| U_g^dag U(T; x) |psi_n>`` over the ``m`` control vectors."""
    x = np.asarray(x, dtype=float)
    grid = problem.grid
    _, _, steps = _forward_steps(problem, x, grid)
    final = chain_apply(steps.step, problem.control_basis)
    _check_finite(final)
    return _fidelity_from_final(problem, final)


def final_unitary(problem: ControlProblem, x) -> np.ndarray:
    grid = problem.grid
    _, _, steps = _forward_steps(problem, np.asarray(x, dtype=float), grid)
    return chain_apply(steps.step, np.eye(problem.dimension, dtype=complex))


def unitary_trajectory(problem: ControlProblem, x) -> tuple[np.ndarray, np.ndarray]:
    """Grid times and ``U(t_k)`` for every RK4 step boundary."""
    grid = problem.grid
    _, _, steps = _forward_steps(problem, np.asarray(x, dtype=float), grid)
    Us = chain_apply(steps.step, np.eye(problem.dimension, dtype=complex), keep=True)
    return grid.h * np.arange(grid.n_steps + 1), Us


@dataclass(frozen=True)
class GradientResult:
    F: float
    dF_dx: np.ndarray
    contributions: np.ndarray  # f_{n,i}(T), shape (m, P)


def gradient(problem: ControlProblem, x) -> GradientResult:
    """Fidelity and its exact parameter gradient.

    1. integrate ``i d xi/dt = H xi`` backwards from ``xi_n(T) = U_g psi_n``;
    2. co-integrate ``psi_n``, ``xi_n`` and ``f_{n,i}`` forward with
       ``df_{n,i}/dt = (1/m) Im <xi_n| dH/dx_i |psi_n>``;
    3. ``dF/dx_i = sum_n f_{n,i}(T)``.
    """
    x = np.asarray(x, dtype=float)
    P = problem.n_params
    grid = problem.grid
    h = grid.h
    times, H, fwd = _forward_steps(problem, x, grid)
    B = problem.control_basis
    m = B.shape[1]
    if P == 0:
        final = chain_apply(fwd.step, B)
        return GradientResult(_fidelity_from_final(problem, final), np.zeros(0), np.zeros((m, 0)))

    # backward pass: step k maps xi(t_{k+1}) -> xi(t_k)
    bwd = rk4_step_matrices(-h, H[2::2], H[1::2], H[0:-1:2])
    xi = chain_apply(bwd.step[::-1], problem.target @ B)

    # psi and xi share the forward maps, so run them as one stack of columns
    both = chain_apply(fwd.step, np.concatenate([B, xi], axis=1), keep=True)
    _check_finite(both)
    psi_path, xi_path = both[..., :m], both[..., m:]

    dH = problem.dhamiltonian(times, x)  # (2n+1, P, d, d)
    dH_at = (dH[0:-1:2], dH[1::2], dH[1::2], dH[2::2])
    weights = (1.0, 2.0, 2.0, 1.0)
    acc = np.zeros((m, P))
    for P_j, dH_j, w in zip(fwd.stages, dH_at, weights):
        stage = P_j @ both[:-1]
        ys, xs = stage[..., :m], stage[..., m:]
        # Im <xi_n| dH_i |psi_n> for every step, control vector and parameter
        val = (xs.conj()[:, None] * (dH_j @ ys[:, None])).sum(axis=(0, 2))
        acc += w * val.imag.T
    contributions = (h / 6.0) * acc / m
    F = _fidelity_from_final(problem, psi_path[-1])
    grad = contributions.sum(axis=0)
    _check_finite(grad)
    return GradientResult(F, grad, contributions)


@dataclass(frozen=True)
class FiniteDifferenceReport:
    max_relative_error: float
    gradient: np.ndarray
    finite_difference: np.ndarray
    step: float


def finite_difference_check(
    problem: ControlProblem,
    x,
    h: float | None = None,
    gradient_fn: Callable[[ControlProblem, np.ndarray], GradientResult] = gradient,
) -> FiniteDifferenceReport:
    """Central differences of the fidelity against ``gradient_fn``.

    The error is ``max_i |g_i - fd_i| / max_i |fd_i|`` so that components
    that happen to vanish do not dominate.  ``h`` defaults to ``1e-6 |x|``.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return FiniteDifferenceReport(0.0, np.zeros(0), np.zeros(0), 0.0)
    if h is None:
        h = 1e-6 * max(float(np.linalg.norm(x)), 1.0)
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    g = gradient_fn(problem, x).dF_dx
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (fidelity(problem, x + e) - fidelity(problem, x - e)) / (2.0 * h)
    scale = float(np.max(np.abs(fd)))
    err = float(np.max(np.abs(g - fd)) / scale) if scale > 0 else float(np.max(np.abs(g - fd)))
    return FiniteDifferenceReport(err, g, fd, h)


# -- constrained optimisation ---------------------------------------------------


@dataclass
class RestartSummary:
    restart: int
    x0: np.ndarray
    x: np.ndarray
    F: float
    E: float
    feasible: bool
    outer_iterations: int


@dataclass
class OptimizationResult:
    x: np.ndarray
    F: float
    E: float
    feasible: bool
    trace: list[dict]
    restarts: list[RestartSummary]
    seed: int
    diagnosis: dict | None = None
    hole_residual: float | None = None

    def ansatz(self, T: float) -> PulseAnsatz:
        return PulseAnsatz(np.clip(self.x, 0.0, None), T)


class _Evaluator:
    """Caches fidelity/gradient for the last few parameter vectors."""

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.cache: dict[bytes, GradientResult] = {}
        self.calls = 0

    def __call__(self, x) -> GradientResult:
        key = np.asarray(x, dtype=float).tobytes()
        res = self.cache.get(key)
        if res is None:
            self.calls += 1
            res = gradient(self.problem, x)
            if len(self.cache) > 64:
                self.cache.clear()
            self.cache[key] = res
        return res


def default_initial_guess(problem: ControlProblem) -> np.ndarray:
    """First mode only, with area pi/2 (the non-interacting swap)."""
    x = np.zeros(problem.n_params)
    if problem.n_params:
        x[0] = math.pi / problem.T
    return x


def _random_start(problem: ControlProblem, rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(0.0, 1.0, problem.n_params)
    target_area = 0.5 * math.pi * rng.uniform(0.5, 4.0)
    if problem.area_weights is not None and problem.area_weights @ x > 0:
        x *= target_area / float(problem.area_weights @ x)
    else:
        x *= math.pi / problem.T
    return np.minimum(x, problem.c_max())


def _bounds(problem: ControlProblem):
    lo = 0.0 if problem.constraints.nonnegative else -problem.c_max()
    return [(lo, problem.c_max())] * problem.n_params


def _feasible(problem: ControlProblem, F: float, x: np.ndarray) -> bool:
    r = problem.hole_residual(x)
    return F >= problem.constraints.fidelity_target and (r is None or abs(r) <= problem.constraints.hole_tol)


def _maximise_fidelity(problem, ev, x0, restart, trace, maxiter=300):
    """Maximise ``F``; with a hole constraint the area residual is penalised with growing weight."""
    bounds = _bounds(problem)
    hole = problem.constraints.hole_phase is not None and problem.area_weights is not None
    weights = (1.0, 1e2, 1e4) if hole else (0.0,)
    x = np.asarray(x0, dtype=float)
    for outer, rho in enumerate(weights):

        def fun(x, rho=rho):
            res = ev(x)
            val, grad = 1.0 - res.F, -res.dF_dx
            if hole:
                a = problem.hole_residual(x)
                val += 0.5 * rho * a * a
                grad = grad + rho * a * problem.area_weights
            return val, grad

        it = [0]

        def cb(xk, outer=outer, fun=fun):
            it[0] += 1
            res = ev(xk)
            trace.append(
                dict(restart=restart, stage="fidelity", outer=outer, iteration=it[0], F=res.F,
                     E=float(xk @ xk), objective=float(fun(xk)[0]))
            )

        out = sopt.minimize(
            fun, x, jac=True, method="L-BFGS-B", bounds=bounds, callback=cb,
            options=dict(maxiter=maxiter, ftol=1e-15, gtol=1e-10),
        )
        x = out.x
    return x


def _augmented_lagrangian(problem, ev, x0, restart, trace, max_outer=30, inner_maxiter=200):
    """Minimise ``|x|^2`` with ``1 - F <= eps`` and (optionally) an area equality.

    ``1 - F`` is stationary wherever ``F = 1``, so an equality on it is
    degenerate and its multiplier never settles.  A slightly relaxed
    inequality (``eps`` is a fraction of the allowed infidelity) has an
    active constraint with a non-vanishing gradient instead.
    """
    bounds = _bounds(problem)
    eps = 0.5 * (1.0 - problem.constraints.fidelity_target)
    g_tol = 0.1 * eps
    a_tol = 0.1 * problem.constraints.hole_tol
    hole = problem.constraints.hole_phase is not None and problem.area_weights is not None
    w = problem.area_weights if hole else None
    lam_f, lam_a, mu = 0.0, 0.0, 10.0 / max(eps, 1e-12)
    x = np.array(x0, dtype=float)
    prev_viol, prev_E = None, None
    outer = 0
    for outer in range(1, max_outer + 1):

        def fun(x, lam_f=lam_f, lam_a=lam_a, mu=mu):
            res = ev(x)
            g = (1.0 - res.F) - eps
            shifted = max(0.0, lam_f + mu * g)
            val = x @ x + (shifted**2 - lam_f**2) / (2.0 * mu)
            grad = 2.0 * x - shifted * res.dF_dx
            if hole:
                a = problem.hole_residual(x)
                val += lam_a * a + 0.5 * mu * a**2
                grad = grad + (lam_a + mu * a) * w
            return val, grad

        it = [0]

        def cb(xk, outer=outer, fun=fun):
            it[0] += 1
            res = ev(xk)
            trace.append(
                dict(restart=restart, stage="energy", outer=outer, iteration=it[0], F=res.F,
                     E=float(xk @ xk), objective=float(fun(xk)[0]))
            )

        out = sopt.minimize(
            fun, x, jac=True, method="L-BFGS-B", bounds=bounds, callback=cb,
            options=dict(maxiter=inner_maxiter, ftol=1e-13, gtol=1e-9),
        )
        x = out.x
        res = ev(x)
        g = (1.0 - res.F) - eps
        a = problem.hole_residual(x) if hole else 0.0
        E = float(x @ x)
        lam_f = max(0.0, lam_f + mu * g)
        lam_a += mu * a
        viol = max(g / eps, abs(a) / problem.constraints.hole_tol if hole else 0.0, 0.0)
        if g <= g_tol and abs(a) <= a_tol and prev_E is not None and abs(E - prev_E) <= 1e-8 * max(1.0, E):
            break
        if prev_viol is not None and viol > 0.25 * prev_viol and viol > 0.1:
            mu = min(mu * 10.0, 1e14)
        prev_viol, prev_E = viol, E
    return x, outer


def optimize(
    problem: ControlProblem,
    x0=None,
    restarts: int = 8,
    seed: int = 0,
    max_outer: int = 30,
) -> OptimizationResult:
    """Minimise ``sum x_i^2`` subject to unit fidelity, bounds and the optional hole phase.

    Each restart first maximises the fidelity from its starting point; if
    that reaches the target, an augmented-Lagrangian loop trades pulse
    energy against the fidelity and hole-phase equalities.  The lowest-energy
    feasible restart wins.  When no restart reaches the fidelity target the
    result carries ``feasible=False`` and a diagnosis instead of raising.
    """
    if problem.n_params < 1:
        raise ValueError("need at least one control parameter")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    starts = [np.asarray(x0, dtype=float) if x0 is not None else default_initial_guess(problem)]
    starts += [_random_start(problem, rng) for _ in range(restarts - 1)]
    ev = _Evaluator(problem)
    trace: list[dict] = []
    summaries: list[RestartSummary] = []
    target = problem.constraints.fidelity_target
    for r, start in enumerate(starts):
        start = np.clip(start, *(_bounds(problem)[0]))
        x = _maximise_fidelity(problem, ev, start, r, trace)
        F = ev(x).F
        outer = 0
        if F >= target or (1.0 - F) <= 10.0 * (1.0 - target):
            x, outer = _augmented_lagrangian(problem, ev, x, r, trace, max_outer=max_outer)
            F = ev(x).F
        summaries.append(
            RestartSummary(r, start, x, F, float(x @ x), _feasible(problem, F, x), outer)
        )
        log.debug("restart %d: F=%.10f E=%.6g feasible=%s", r, F, x @ x, summaries[-1].feasible)

    feasible = [s for s in summaries if s.feasible]
    if feasible:
        best = min(feasible, key=lambda s: (round(s.E, 10), s.restart))
        diagnosis = None
    else:
        best = max(summaries, key=lambda s: (s.F, -s.restart))
        diagnosis = {
            "status": "infeasible",
            "best_F": best.F,
            "fidelity_target": target,
            "T": problem.T,
            "min_time": problem.min_time,
            "below_min_time": bool(problem.min_time is not None and problem.T < problem.min_time * (1 - 1e-12)),
            "message": "no restart reached the fidelity target"
            + (" (duration below the minimal swap time 2 pi / U)" if problem.min_time and problem.T < problem.min_time else ""),
        }
    return OptimizationResult(
        x=best.x,
        F=best.F,
        E=best.E,
        feasible=bool(feasible),
        trace=trace,
        restarts=summaries,
        seed=seed,
        diagnosis=diagnosis,
        hole_residual=problem.hole_residual(best.x),
    )


def swap_fidelity_trajectory(problem: ControlProblem, x) -> tuple[np.ndarray, np.ndarray]:
    """``|<01|U(t)|10>|^2`` on the integration grid of a three-level problem."""
    times, Us = unitary_trajectory(problem, x)
    return times, np.array([swap_fidelity(U) for U in Us])


def timing_robustness(problem: ControlProblem, x, rel: float = 0.02) -> tuple[float, float]:
    """Swap fidelity when the gate is stopped at ``(1 - rel) T`` and ``(1 + rel) T``.

    Beyond ``T`` the hopping stays at zero, which only adds a phase to
    ``phi+``.
    """
    times, F = swap_fidelity_trajectory(problem, x)
    early = float(np.interp((1.0 - rel) * problem.T, times, F))
    late = float(F[-1])
    return early, late
