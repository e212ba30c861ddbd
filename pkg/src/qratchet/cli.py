"""Command-line driver: YAML scenario configs in, CSV tables and JSON reports out.

Exit codes: 0 success, 2 configuration error, 3 infeasible optimisation,
4 numerical failure.  Time-like fields are in units of ``1/U`` (``hbar = 1``),
hoppings in units of ``U`` and lattice depths in recoil energies.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
import tempfile
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import analytic, bands, control, transport
from .hilbert import CapacityError
from .propagate import IntegratorConfig, NumericalError

log = logging.getLogger("qratchet")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# -- configs --------------------------------------------------------------------


@dataclass(frozen=True)
class SwapFamilyConfig:
    n_max: int = 3
    steps_per_swap: int = 2000

    def validate(self):
        _require(self.n_max >= 0, "n_max must be >= 0")
        _require(self.steps_per_swap >= 10, "steps_per_swap must be >= 10")


@dataclass(frozen=True)
class OptimizeConfig:
    T_times_U: float = 2.0 * math.pi
    n_modes: int = 3
    fidelity_target: float = 1.0 - 1e-4
    restarts: int = 8
    seed: int = 0
    steps: int = 2000
    dt_times_U: float | None = None
    hole_phase: bool = False
    output_samples: int = 400

    def validate(self):
        _require(self.T_times_U > 0, "T_times_U must be positive")
        _require(self.n_modes >= 1, "n_modes must be >= 1")
        _require(0 < self.fidelity_target < 1, "fidelity_target must lie in (0, 1)")
        _require(self.restarts >= 1, "restarts must be >= 1")
        _require(self.steps >= 10, "steps must be >= 10")
        _require(self.dt_times_U is None or self.dt_times_U > 0, "dt_times_U must be positive")
        _require(self.output_samples >= 2, "output_samples must be >= 2")

    def problem(self) -> control.ControlProblem:
        return control.three_level_problem(
            U=1.0,
            T=self.T_times_U,
            M=self.n_modes,
            steps=self.steps,
            dt=self.dt_times_U,
            fidelity_target=self.fidelity_target,
            hole_phase=1 if self.hole_phase else None,
        )


@dataclass(frozen=True)
class TransportConfig:
    L_sites: int = 6
    write_port: int = 2
    n_half_periods: int = 6
    T_times_U: float = 4.0 * math.pi
    model: str = "fock"
    pulse: str = "optimized"
    n_modes: int = 2
    restarts: int = 8
    seed: int = 0
    boundary: str = "open"
    alpha_up: float = 1.0 / math.sqrt(2.0)
    beta_down: float = 1.0 / math.sqrt(2.0)
    steps_per_half_period: int = 2000
    dt_times_U: float | None = None
    samples_per_half_period: int = 40
    dimension_cap: int = 5_000_000

    def validate(self):
        _require(self.L_sites >= 2, "L_sites must be >= 2")
        _require(1 <= self.write_port <= self.L_sites, "write_port must lie in 1..L_sites")
        _require(self.n_half_periods >= 1, "n_half_periods must be >= 1")
        _require(self.T_times_U > 0, "T_times_U must be positive")
        _require(self.model in ("fock", "single"), "model must be 'fock' or 'single'")
        _require(self.pulse in ("square", "optimized"), "pulse must be 'square' or 'optimized'")
        _require(not (self.model == "single" and self.pulse == "optimized"),
                 "the single-particle model (U = 0) only supports square pulses")
        _require(self.boundary in ("open", "periodic"), "boundary must be 'open' or 'periodic'")
        _require(abs(self.alpha_up**2 + self.beta_down**2 - 1.0) < 1e-9, "alpha_up^2 + beta_down^2 must be 1")
        _require(self.n_modes >= 1 and self.restarts >= 1, "n_modes and restarts must be >= 1")
        _require(self.steps_per_half_period >= 10, "steps_per_half_period must be >= 10")
        _require(self.samples_per_half_period >= 1, "samples_per_half_period must be >= 1")
        _require(self.dt_times_U is None or self.dt_times_U > 0, "dt_times_U must be positive")


@dataclass(frozen=True)
class BandsConfig:
    deltaV_min_Er: float = 35.0
    deltaV_max_Er: float = 70.0
    samples: int = 40
    total_depth_Er: float = 70.0
    a_s_over_a: float = 0.01
    grid_points: int = 256
    boundary: str = "isolated"
    pulse_file: str | None = None

    def validate(self):
        _require(self.deltaV_max_Er > self.deltaV_min_Er, "empty deltaV range")
        _require(0 <= self.deltaV_min_Er and self.deltaV_max_Er <= self.total_depth_Er,
                 "deltaV range must lie within [0, total_depth_Er]")
        _require(self.samples >= 2, "samples must be >= 2")
        _require(self.a_s_over_a > 0, "a_s_over_a must be positive")
        _require(self.grid_points >= 16, "grid_points must be >= 16")
        _require(self.boundary in ("isolated", "periodic"), "boundary must be 'isolated' or 'periodic'")


@dataclass(frozen=True)
class GradCheckConfig:
    n_problems: int = 50
    max_modes: int = 5
    steps: int = 400
    seed: int = 0
    tolerance: float = 1e-5
    dt_times_U: float | None = None
    corrupt_gradient: bool = False  # test hook: perturbs the analytic gradient

    def validate(self):
        _require(self.n_problems >= 0, "n_problems must be >= 0")
        _require(self.max_modes >= 0, "max_modes must be >= 0")
        _require(self.steps >= 10, "steps must be >= 10")
        _require(self.tolerance > 0, "tolerance must be positive")
        _require(self.dt_times_U is None or self.dt_times_U > 0, "dt_times_U must be positive")


CONFIGS = {
    "swap-family": SwapFamilyConfig,
    "optimize": OptimizeConfig,
    "transport": TransportConfig,
    "bands": BandsConfig,
    "grad-check": GradCheckConfig,
}


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _coerce(name: str, value, annotation):
    hints = [a for a in typing.get_args(annotation)] or [annotation]
    if value is None:
        if type(None) in hints:
            return None
        raise ConfigError(f"{name} may not be null")
    for tp in hints:
        if tp is bool:
            if isinstance(value, bool):
                return value
        elif tp is int:
            if isinstance(value, int) and not isinstance(value, bool):
                return value
        elif tp is float:
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
        elif tp is str:
            if isinstance(value, str):
                return value
    raise ConfigError(f"{name}: expected {annotation}, got {value!r}")


def load_config(command: str, text: str | None = None, overrides: dict | None = None):
    """Parse a YAML mapping into the command's dataclass, rejecting unknown fields."""
    cls = CONFIGS[command]
    try:
        data = yaml.safe_load(text) if text else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of field names to values")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown field(s) for {command}: {', '.join(unknown)}")
    values = {k: _coerce(k, v, hints[k]) for k, v in data.items()}
    cfg = cls(**values)
    cfg.validate()
    return cfg


def _overrides(command: str, args) -> dict:
    known = {f.name for f in fields(CONFIGS[command])}
    out = {}
    if args.seed is not None:
        if "seed" not in known:
            raise ConfigError(f"{command} does not take a seed")
        out["seed"] = args.seed
    if args.dt is not None:
        if "dt_times_U" not in known:
            raise ConfigError(f"{command} does not take a time step")
        out["dt_times_U"] = args.dt
    return out


# -- output helpers ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def json_text(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _report(command: str, cfg, **body) -> dict:
    return {"command": command, "config": dataclasses.asdict(cfg), **body}


# -- commands ---------------------------------------------------------------------


def cmd_swap_family(cfg: SwapFamilyConfig, out: Path) -> int:
    family = analytic.square_solution_family(cfg.n_max)
    rows = []
    for s in family:
        J = s.J(1.0)
        res = analytic.three_level_propagate(
            lambda t, J=J: J, 1.0, s.T(1.0), IntegratorConfig.for_half_period(s.T(1.0), cfg.steps_per_swap)
        )
        rows.append((s.n_plus, s.n_minus, s.x, s.U_over_J, s.J_T, s.U_T, s.on_min_J_frontier, res.fidelity))
    header = ["n_plus", "n_minus", "x", "U_over_J", "J_T_product", "U_T_product", "on_min_J_frontier", "fidelity_check"]
    write_atomic(out / "swap_family.csv", csv_text(header, rows))
    log.info("swap-family: %d solutions", len(rows))
    return EXIT_OK


def cmd_optimize(cfg: OptimizeConfig, out: Path) -> int:
    problem = cfg.problem()
    result = control.optimize(problem, restarts=cfg.restarts, seed=cfg.seed)
    report = _report(
        "optimize",
        cfg,
        feasible=result.feasible,
        c=result.x,
        F=result.F,
        E=result.E,
        hole_residual=result.hole_residual,
        diagnosis=result.diagnosis,
        restarts=[
            dict(restart=s.restart, x0=s.x0, x=s.x, F=s.F, E=s.E, feasible=s.feasible, outer_iterations=s.outer_iterations)
            for s in result.restarts
        ],
        trace=result.trace,
    )
    if result.feasible:
        early, late = control.timing_robustness(problem, result.x)
        report["timing_robustness"] = {"F_at_0.98T": early, "F_at_1.02T": late}
        report["pulse_area"] = result.ansatz(problem.T).area
    times, F = control.swap_fidelity_trajectory(problem, result.x)
    stride = max(1, (len(times) - 1) // cfg.output_samples)
    idx = np.arange(0, len(times) - 1, stride)  # [0, T)
    J = result.ansatz(problem.T)(times[idx])
    write_atomic(out / "optimize_pulse.csv", csv_text(["t_times_U", "J_over_U", "F_swap"], zip(times[idx], J, F[idx])))
    write_atomic(out / "optimize.json", json_text(report))
    if not result.feasible:
        log.error("optimize: infeasible, best F = %.6f", result.F)
        return EXIT_INFEASIBLE
    log.info("optimize: F = %.8f, E = %.6g", result.F, result.E)
    return EXIT_OK


def cmd_transport(cfg: TransportConfig, out: Path) -> int:
    T = cfg.T_times_U
    U = 0.0 if cfg.model == "single" else 1.0
    extra = {}
    if cfg.pulse == "square":
        pulse = transport.square_transport_pulse(U, T)
    else:
        problem = control.three_level_problem(U=1.0, T=T, M=cfg.n_modes, steps=cfg.steps_per_half_period, dt=cfg.dt_times_U)
        result = control.optimize(problem, restarts=cfg.restarts, seed=cfg.seed)
        extra = dict(pulse_c=result.x, pulse_F=result.F, pulse_feasible=result.feasible)
        if not result.feasible:
            write_atomic(out / "transport.json", json_text(_report("transport", cfg, diagnosis=result.diagnosis, **extra)))
            return EXIT_INFEASIBLE
        pulse = result.ansatz(T)
    dt = cfg.dt_times_U if cfg.dt_times_U is not None else T / cfg.steps_per_half_period
    res = transport.run_transport(
        pulse,
        T,
        U,
        L=cfg.L_sites,
        write_port=cfg.write_port,
        n_half_periods=cfg.n_half_periods,
        model=cfg.model,
        bc=cfg.boundary,
        alpha=cfg.alpha_up,
        beta=cfg.beta_down,
        cfg=IntegratorConfig(dt=dt),
        samples_per_half_period=cfg.samples_per_half_period,
        dimension_cap=cfg.dimension_cap,
    )
    L = cfg.L_sites
    header = (["t_times_U", "average_position_sites"] + [f"n_up_site{j}" for j in range(1, L + 1)]
              + [f"n_down_site{j}" for j in range(1, L + 1)] + ["target_fidelity"])
    rows = (
        [t, x, *nu, *nd, f]
        for t, x, nu, nd, f in zip(res.times, res.average_position, res.density_up, res.density_down, res.target_fidelity)
    )
    write_atomic(out / "transport.csv", csv_text(header, rows))
    summary = _report(
        "transport",
        cfg,
        net_displacement_sites=res.net_displacement,
        half_period_positions=res.steps,
        half_period_fidelity=res.half_period_fidelity,
        final_fidelity=res.final_fidelity,
        **extra,
    )
    write_atomic(out / "transport.json", json_text(summary))
    log.info("transport: net displacement %.4f sites, final fidelity %.6f", res.net_displacement, res.final_fidelity)
    return EXIT_OK


def _read_pulse_file(path: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read pulse file: {exc}") from exc
    if not rows or not {"t_times_U", "J_over_U"} <= set(rows[0]):
        raise ConfigError("pulse file needs columns t_times_U and J_over_U")
    try:
        t = np.array([float(r["t_times_U"]) for r in rows])
        J = np.array([float(r["J_over_U"]) for r in rows])
    except ValueError as exc:
        raise ConfigError(f"bad number in pulse file: {exc}") from exc
    return t, J


def cmd_bands(cfg: BandsConfig, out: Path) -> int:
    pulse = _read_pulse_file(cfg.pulse_file) if cfg.pulse_file else None
    table = bands.sweep_and_fit(
        cfg.deltaV_min_Er,
        cfg.deltaV_max_Er,
        samples=cfg.samples,
        total=cfg.total_depth_Er,
        a_s_over_a=cfg.a_s_over_a,
        grid_points=cfg.grid_points,
        boundary=cfg.boundary,
    )
    header = ["deltaV_Er", "V_x_Er", "V_2_Er", "J_Er", "u", "gap_Er", "U_Er", "bose_hubbard_valid", "in_fit"]
    rows = [
        (p.deltaV, cfg.total_depth_Er - p.deltaV, p.deltaV, p.J, p.u, p.gap, p.interaction(cfg.a_s_over_a),
         p.bose_hubbard_valid(cfg.a_s_over_a), m)
        for p, m in zip(table.points, table.fit_mask)
    ]
    write_atomic(out / "bands.csv", csv_text(header, rows))
    fit = table.fit
    report = _report(
        "bands",
        cfg,
        fit=dict(log_J_intercept=fit.alpha, decay_per_Er=fit.beta, rms_log_residual=fit.rms_log_residual,
                 deltaV_lo_Er=fit.dv_lo, deltaV_hi_Er=fit.dv_hi),
        u_max_over_min=float(table.u.max() / table.u.min()),
        J_strictly_decreasing=bool(np.all(np.diff(table.J) < 0)),
        all_valid=bool(all(p.bose_hubbard_valid(cfg.a_s_over_a) for p in table.points)),
    )
    if pulse is not None:
        t, J_over_U = pulse
        U_Er = table.mean_interaction()
        sched = bands.pulse_to_lattice_schedule(J_over_U * U_Er, table, t / U_Er)
        # J(deltaV) read back from the computed table, not from the fit it was inverted with
        back = table.interpolate_J(sched.delta_v[~sched.clamped])
        resid = np.log(back) - np.log(sched.J[~sched.clamped])
        report["conversion"] = dict(
            U_Er=U_Er,
            clamped_samples=int(sched.clamped.sum()),
            round_trip_rms_log_residual=float(np.sqrt(np.mean(resid**2))) if resid.size else 0.0,
        )
        write_atomic(
            out / "lattice_schedule.csv",
            csv_text(
                ["t_hbar_over_Er", "J_Er", "deltaV_Er", "V_x_Er", "V_2_Er", "clamped"],
                zip(sched.times, sched.J, sched.delta_v, sched.V_x(cfg.total_depth_Er), sched.V_2, sched.clamped),
            ),
        )
    write_atomic(out / "bands.json", json_text(report))
    log.info("bands: %d points, decay %.4g per E_r", len(table.points), fit.beta)
    return EXIT_OK


def cmd_gradcheck(cfg: GradCheckConfig, out: Path) -> int:
    rng = np.random.default_rng(cfg.seed)
    gradient_fn = control.gradient
    if cfg.corrupt_gradient:
        def gradient_fn(problem, x):
            res = control.gradient(problem, x)
            return control.GradientResult(res.F, res.dF_dx * 1.01 + 1e-3, res.contributions)

    checks = []
    if cfg.max_modes > 0:
        for k in range(cfg.n_problems):
            M = int(rng.integers(1, cfg.max_modes + 1))
            U = float(rng.uniform(0.5, 2.0))
            T = float(rng.uniform(math.pi, 4.0 * math.pi)) / U
            x = rng.uniform(0.0, 1.0, M) * math.pi / T
            problem = control.three_level_problem(U=U, T=T, M=M, steps=cfg.steps, dt=cfg.dt_times_U)
            rep = control.finite_difference_check(problem, x, gradient_fn=gradient_fn)
            checks.append(dict(problem=k, M=M, U=U, T=T, x=x, max_relative_error=rep.max_relative_error))
    worst = max((c["max_relative_error"] for c in checks), default=0.0)
    passed = worst <= cfg.tolerance
    write_atomic(out / "gradcheck.json", json_text(_report("grad-check", cfg, passed=passed, max_relative_error=worst, checks=checks)))
    log.info("grad-check: %d problems, worst relative error %.3g", len(checks), worst)
    return EXIT_OK if passed else 1


COMMANDS = {
    "swap-family": cmd_swap_family,
    "optimize": cmd_optimize,
    "transport": cmd_transport,
    "bands": cmd_bands,
    "grad-check": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qratchet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML scenario file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, help="override the random seed")
        p.add_argument("--dt", type=float, help="override the integration step (units of 1/U)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text() if args.config else None
        cfg = load_config(args.command, text, _overrides(args.command, args))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"dimension cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, bands.ConvergenceError, bands.LocalizationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
