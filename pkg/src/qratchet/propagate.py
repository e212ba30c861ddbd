"""Fixed-step RK4 integration of ``i d/dt psi = H(t) psi`` (hbar = 1).

Time may run backwards (``t1 < t0``).  The interval is split at user-supplied
breakpoints so that no step straddles a discontinuity of ``H``; Hamiltonians
are sampled just inside each segment so one-sided limits are used at the
edges.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

HamiltonianFn = Callable[[float], object]

# relative inward shift of segment-edge samples; keeps square pulses one-sided
_EDGE_NUDGE = 1e-12


class NumericalError(RuntimeError):
    pass


class NormDriftError(NumericalError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    renormalize: bool = False
    norm_tol: float = 1e-7
    method: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")

    @classmethod
    def for_half_period(cls, T: float, steps: int = 2000, **kw) -> "IntegratorConfig":
        return cls(dt=T / steps, **kw)

    def halved(self) -> "IntegratorConfig":
        return IntegratorConfig(self.dt / 2, self.renormalize, self.norm_tol, self.method)


@dataclass
class PropagationRecord:
    times: np.ndarray
    states: list[np.ndarray]
    norm_drift: float
    n_steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def segment_grid(t0: float, t1: float, dt: float, breakpoints: Iterable[float] = ()) -> list[tuple[float, float, int]]:
    """Split ``[t0, t1]`` (either orientation) into ``(a, b, n_steps)`` segments."""
    lo, hi = min(t0, t1), max(t0, t1)
    cuts = sorted({float(b) for b in breakpoints if lo < b < hi})
    edges = [lo, *cuts, hi]
    if t1 < t0:
        edges = edges[::-1]
    segs = []
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil(abs(b - a) / dt - 1e-9))
        segs.append((a, b, n))
    return segs


def _norm_bound(H) -> float:
    if hasattr(H, "norm_bound"):
        return H.norm_bound()
    if hasattr(H, "toarray") and not isinstance(H, np.ndarray):
        H = H.toarray()
    H = np.asarray(H)
    return float(np.abs(H).sum(axis=1).max())


def _rk4_segment(H_of_t: HamiltonianFn, y: np.ndarray, a: float, b: float, n: int, on_step=None) -> np.ndarray:
    h = (b - a) / n
    nudge = _EDGE_NUDGE * (b - a)
    for k in range(n):
        t = a + k * h
        ta = t + nudge if k == 0 else t
        tb = t + h - nudge if k == n - 1 else t + h
        Ha, Hm, Hb = H_of_t(ta), H_of_t(t + 0.5 * h), H_of_t(tb)
        k1 = -1j * (Ha @ y)
        k2 = -1j * (Hm @ (y + 0.5 * h * k1))
        k3 = -1j * (Hm @ (y + 0.5 * h * k2))
        k4 = -1j * (Hb @ (y + h * k3))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if on_step is not None:
            y = on_step(y)
    return y


def _integrate(
    H_of_t: HamiltonianFn,
    y0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    breakpoints: Sequence[float] = (),
    sample_times: Sequence[float] | None = None,
) -> PropagationRecord:
    y = np.array(y0, dtype=complex)
    norms0 = np.linalg.norm(y, axis=0)
    H0 = H_of_t(t0)
    if cfg.dt * _norm_bound(H0) > 0.1:
        warnings.warn(
            f"dt*||H|| = {cfg.dt * _norm_bound(H0):.3g} exceeds 0.1; RK4 accuracy will suffer",
            RuntimeWarning,
            stacklevel=3,
        )
    samples = sorted(set(float(s) for s in sample_times)) if sample_times is not None else []
    if t1 < t0:
        samples = samples[::-1]
    cuts = list(breakpoints) + samples
    drift = 0.0

    def on_step(v):
        nonlocal drift
        norms = np.linalg.norm(v, axis=0)
        drift = max(drift, float(np.max(np.abs(norms - norms0))))
        if cfg.renormalize:
            v = v * (norms0 / norms)
        return v

    times, states = [t0], [y.copy()]
    total = 0
    for a, b, n in segment_grid(t0, t1, cfg.dt, cuts):
        y = _rk4_segment(H_of_t, y, a, b, n, on_step)
        total += n
        if not np.all(np.isfinite(y)):
            raise NumericalError("non-finite amplitudes during propagation")
        if sample_times is None or any(abs(b - s) <= 1e-12 * max(1.0, abs(s)) for s in samples) or b == t1:
            times.append(b)
            states.append(y.copy())
    if drift > cfg.norm_tol and not cfg.renormalize:
        raise NormDriftError(f"norm drift {drift:.3g} exceeds tolerance {cfg.norm_tol:.3g}; reduce dt")
    return PropagationRecord(np.array(times), states, drift, total)


def propagate_state(
    H_of_t: HamiltonianFn,
    psi0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    breakpoints: Sequence[float] = (),
    sample_times: Sequence[float] | None = None,
) -> PropagationRecord:
    """Integrate a state (or a stack of column states) from ``t0`` to ``t1``.

    ``H_of_t(t)`` must return anything supporting ``H @ psi``.  States are
    recorded at ``t0``, at every breakpoint/sample time and at ``t1``; pass
    ``sample_times`` to choose the recording grid explicitly.
    """
    return _integrate(H_of_t, psi0, t0, t1, cfg, breakpoints, sample_times)


def unitarity_defect(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[1]))))


def propagate_unitary(
    H_of_t: HamiltonianFn,
    dimension: int,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    rec = _integrate(H_of_t, np.eye(dimension, dtype=complex), t0, t1, cfg, breakpoints, sample_times=())
    U = rec.final
    defect = unitarity_defect(U)
    if defect > cfg.norm_tol and not cfg.renormalize:
        raise NormDriftError(f"unitarity defect {defect:.3g} exceeds tolerance {cfg.norm_tol:.3g}")
    return U


@dataclass(frozen=True)
class ConvergenceReport:
    dt: float
    differences: tuple[float, float]
    ratio: float

    @property
    def order(self) -> float:
        return math.log2(self.ratio) if self.ratio > 0 else float("nan")


def convergence_check(
    H_of_t: HamiltonianFn,
    psi0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    breakpoints: Sequence[float] = (),
) -> ConvergenceReport:
    """Richardson ratio ``|y(dt) - y(dt/2)| / |y(dt/2) - y(dt/4)|``; about 16 for RK4."""
    loose = IntegratorConfig(cfg.dt, cfg.renormalize, norm_tol=np.inf)
    finals = []
    for c in (loose, loose.halved(), loose.halved().halved()):
        finals.append(_integrate(H_of_t, psi0, t0, t1, c, breakpoints, sample_times=()).final)
    d1 = float(np.linalg.norm(finals[0] - finals[1]))
    d2 = float(np.linalg.norm(finals[1] - finals[2]))
    return ConvergenceReport(cfg.dt, (d1, d2), d1 / d2 if d2 > 0 else float("inf"))


# -- batched form used by the gradient engine ---------------------------------


@dataclass(frozen=True)
class StepMatrices:
    """RK4 one-step maps for a linear system, one ``d x d`` matrix per step.

    ``step[k]`` advances ``y_k`` to ``y_{k+1}``; ``stages[j][k]`` maps ``y_k``
    to the ``j``-th RK4 stage state (``j = 0..3``, stage 0 is the identity).
    """

    step: np.ndarray
    stages: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    h: float


def rk4_step_matrices(h: float, H_start: np.ndarray, H_mid: np.ndarray, H_end: np.ndarray) -> StepMatrices:
    """Batched RK4 maps for ``y' = -i H(t) y``; Hamiltonians have shape ``(n, d, d)``."""
    A1, A2, A4 = -1j * H_start, -1j * H_mid, -1j * H_end
    d = A1.shape[-1]
    eye = np.broadcast_to(np.eye(d, dtype=complex), A1.shape)
    P2 = eye + 0.5 * h * A1
    K2 = A2 @ P2
    P3 = eye + 0.5 * h * K2
    K3 = A2 @ P3
    P4 = eye + h * K3
    K4 = A4 @ P4
    S = eye + (h / 6.0) * (A1 + 2.0 * K2 + 2.0 * K3 + K4)
    return StepMatrices(S, (np.array(eye), P2, P3, P4), h)


def _blocked_chain(step: np.ndarray, y: np.ndarray, keep: bool) -> np.ndarray:
    # prefix products inside blocks of ~sqrt(n) steps, batched over blocks,
    # then one short sequential pass over block boundaries
    n, d = step.shape[0], step.shape[-1]
    b = max(1, int(math.isqrt(n)))
    nb = -(-n // b)
    padded = np.empty((nb * b, d, d), dtype=complex)
    padded[:n] = step
    padded[n:] = np.eye(d)
    blocks = padded.reshape(nb, b, d, d)
    prefix = np.empty_like(blocks)
    prefix[:, 0] = blocks[:, 0]
    for j in range(1, b):
        prefix[:, j] = blocks[:, j] @ prefix[:, j - 1]
    starts = np.empty((nb,) + y.shape, dtype=complex)
    for i in range(nb):
        starts[i] = y
        y = prefix[i, -1] @ y
    if not keep:
        return y
    inner = prefix @ starts[:, None]
    out = np.empty((n + 1,) + y.shape, dtype=complex)
    out[0] = starts[0]
    out[1:] = inner.reshape((nb * b,) + y.shape)[:n]
    return out


def chain_apply(step: np.ndarray, y0: np.ndarray, keep: bool = False) -> np.ndarray:
    """Apply ``step[0], step[1], ...`` in order; optionally keep every iterate."""
    y = np.array(y0, dtype=complex)
    if len(step) > 64 and step.shape[-1] <= 8:
        return _blocked_chain(np.asarray(step), y, keep)
    if keep:
        out = np.empty((len(step) + 1,) + y.shape, dtype=complex)
        out[0] = y
        for k, S in enumerate(step):
            y = S @ y
            out[k + 1] = y
        return out
    for S in step:
        y = S @ y
    return y


@dataclass(frozen=True)
class TimeGrid:
    """Uniform RK4 grid on ``[0, T]`` with start/mid/end sample times per step."""

    T: float
    n_steps: int
    t_start: np.ndarray = field(init=False)
    t_mid: np.ndarray = field(init=False)
    t_end: np.ndarray = field(init=False)

    def __post_init__(self):
        h = self.T / self.n_steps
        k = np.arange(self.n_steps)
        object.__setattr__(self, "t_start", k * h)
        object.__setattr__(self, "t_mid", (k + 0.5) * h)
        object.__setattr__(self, "t_end", (k + 1) * h)

    @property
    def h(self) -> float:
        return self.T / self.n_steps

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        return cls(T, max(1, math.ceil(T / dt - 1e-9)))
