"""Experiment drivers behind the CLI: single runs, grid-refinement
studies on the manufactured solution, and the sealed-barrier case."""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..coupling import (
    BiotCase,
    CoupledSystem,
    SimulationResult,
    global_mass_check,
    run_fixed_stress,
    run_lagged,
)
from ..errors import ConfigurationError
from ..mesh import Mesh, build_cartesian
from .config import CaseConfig, SchemeSpec
from .output import dump_matrix, save_source_history, write_csv, write_vtk

log = logging.getLogger("biotfv")

__all__ = [
    "scheme_from_token",
    "run_with_scheme",
    "relative_l2",
    "RunArtifacts",
    "run_case",
    "ErrorReport",
    "ConvergenceStudy",
    "fit_orders",
    "run_convergence_study",
    "BarrierRun",
    "compartment_masks",
    "run_barrier_case",
]

VARIABLES = ("dp", "u", "r", "p_hat")


def scheme_from_token(token: str, base: SchemeSpec) -> SchemeSpec:
    """Map a CLI scheme name onto concrete iteration settings."""
    token = token.strip().lower()
    if token == "lagged":
        return replace(base, kind="lagged")
    if token in ("fixed", "fixed_stress"):
        return replace(base, kind="fixed_stress", anderson_m0=0)
    if token == "anderson":
        m0 = base.anderson_m0 if base.anderson_m0 >= 1 else 5
        return replace(base, kind="fixed_stress", anderson_m0=m0)
    raise ConfigurationError(f"unknown scheme '{token}'")


def run_with_scheme(case: BiotCase, scheme: SchemeSpec, solver=None) -> SimulationResult:
    if scheme.kind == "lagged":
        return run_lagged(case, solver)
    return run_fixed_stress(
        case,
        tol=scheme.tol,
        max_iter=scheme.max_iter,
        anderson_m0=scheme.anderson_m0,
        solver=solver,
    )


def relative_l2(mesh: Mesh, approx: np.ndarray, exact: np.ndarray) -> float:
    """Volume-weighted relative L2 distance; absolute when exact is zero."""
    w = mesh.cell_volumes
    diff = np.asarray(approx) - np.asarray(exact)
    if diff.ndim == 2:
        w = w[:, None]
    num = float(np.sum(w * diff**2))
    den = float(np.sum(w * np.asarray(exact) ** 2))
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


@dataclass
class RunArtifacts:
    case: BiotCase
    result: SimulationResult
    mass_defect: float
    paths: list[Path] = field(default_factory=list)


def run_case(
    config: CaseConfig, out_dir=None, dump_system: bool = False
) -> RunArtifacts:
    """Run one case per its configured scheme and write the outputs."""
    case = config.build_case()
    out = Path(out_dir if out_dir is not None else config.output.directory)
    log.info(
        "running case '%s': %d cells, %d steps, scheme %s",
        case.name,
        case.mesh.n_cells,
        case.time.n_steps,
        config.scheme.kind,
    )
    result = run_with_scheme(case, config.scheme, config.solver)
    mass = global_mass_check(case, result.states)
    log.info(
        "finished: %d coupling iterations, mass defect %.3e",
        result.report.iterations,
        mass,
    )
    paths: list[Path] = []
    name = case.name or "case"
    if config.output.csv:
        series = out / f"{name}_series.csv"
        rows = [
            (
                i,
                state.t,
                float(np.mean(state.dp)),
                float(np.min(state.dp)),
                float(np.max(state.dp)),
                float(np.mean(state.p_hat)),
            )
            for i, state in enumerate(result.states)
        ]
        write_csv(
            series,
            ["step", "time", "mean_dp", "min_dp", "max_dp", "mean_p_hat"],
            rows,
        )
        psi_path = out / f"{name}_psi.csv"
        save_source_history(psi_path, result.history.psi)
        paths += [series, psi_path]
    if config.output.vtk:
        vtk_path = out / f"{name}_final.vtk"
        write_vtk(vtk_path, case.mesh, result.final, title=name)
        paths.append(vtk_path)
    if dump_system:
        engine = CoupledSystem(case, config.solver)
        paths += dump_matrix(out / f"{name}_mech", engine.system.matrix)
    return RunArtifacts(case=case, result=result, mass_defect=mass, paths=paths)


@dataclass
class ErrorReport:
    """Errors against the closed-form solution on one grid."""

    n: int
    h: float
    n_cells: int
    errors: dict[str, float]
    probe_iterations: int
    probe_trace: list[float]


@dataclass
class ConvergenceStudy:
    reports: list[ErrorReport]
    orders: dict[str, float]
    elapsed: float


def fit_orders(reports: list[ErrorReport]) -> dict[str, float]:
    """Least-squares slope of log(error) against log(h) per variable."""
    h = np.log([r.h for r in reports])
    return {
        var: float(np.polyfit(h, np.log([r.errors[var] for r in reports]), 1)[0])
        for var in VARIABLES
    }


def run_convergence_study(
    config: CaseConfig, grids, out_dir=None
) -> ConvergenceStudy:
    """Grid-refinement study of the coupled scheme on the unit cube.

    Each grid solves the full transient with the lagged scheme starting
    from the exact solution, so the measured error is pure discretization
    error.  One additional mechanics solve per grid is forced through the
    preconditioned Krylov path to record its residual trace.
    """
    grids = [int(n) for n in grids]
    if len(grids) < 3:
        raise ConfigurationError("convergence study needs at least 3 grids")
    if any(n < 2 for n in grids):
        raise ConfigurationError("convergence grids must have at least 2 cells")
    if config.problem != "manufactured":
        raise ConfigurationError(
            "convergence study needs a manufactured-problem config"
        )
    start = _time.perf_counter()
    reports = []
    for n in grids:
        t0 = _time.perf_counter()
        mesh = build_cartesian(n, n, n)
        case = config.build_case(mesh=mesh)
        result = run_with_scheme(case, replace(config.scheme, kind="lagged"), config.solver)
        exact = case.initial_state()  # steady solution, exact at t0
        final = result.final
        errors = {
            "dp": relative_l2(mesh, final.dp, exact.dp),
            "u": relative_l2(mesh, final.u, exact.u),
            "r": relative_l2(mesh, final.r, exact.r),
            "p_hat": relative_l2(mesh, final.p_hat, exact.p_hat),
        }
        probe = CoupledSystem(case, replace(config.solver, method="iterative"))
        _, probe_report = probe.mech_solve(final.dp, case.time.n_steps)
        reports.append(
            ErrorReport(
                n=n,
                h=1.0 / n,
                n_cells=mesh.n_cells,
                errors=errors,
                probe_iterations=probe_report.iterations,
                probe_trace=list(probe_report.trace),
            )
        )
        log.info(
            "grid %d^3: err_dp %.3e, err_u %.3e, probe iterations %d (%.1f s)",
            n,
            errors["dp"],
            errors["u"],
            probe_report.iterations,
            _time.perf_counter() - t0,
        )
    orders = fit_orders(reports)
    study = ConvergenceStudy(
        reports=reports, orders=orders, elapsed=_time.perf_counter() - start
    )
    log.info(
        "fitted orders: %s",
        ", ".join(f"{k} {v:.2f}" for k, v in orders.items()),
    )
    if config.output.csv:
        out = Path(out_dir if out_dir is not None else config.output.directory)
        write_csv(
            out / "convergence_errors.csv",
            ["n", "h", "n_cells"] + [f"err_{v}" for v in VARIABLES],
            [
                (r.n, r.h, r.n_cells, *[r.errors[v] for v in VARIABLES])
                for r in reports
            ],
        )
        write_csv(
            out / "convergence_orders.csv",
            ["variable", "order"],
            [(v, orders[v]) for v in VARIABLES],
        )
        write_csv(
            out / "convergence_iterations.csv",
            ["n", "iteration", "residual"],
            [
                (r.n, i, res)
                for r in reports
                for i, res in enumerate(r.probe_trace)
            ],
        )
    return study


@dataclass
class BarrierRun:
    scheme: str
    result: SimulationResult
    avg_dp_omega1: np.ndarray
    avg_dp_omega2: np.ndarray
    mass_defect: float


def compartment_masks(case: BiotCase) -> tuple[np.ndarray, np.ndarray]:
    """Flow compartments; omega1 is the one holding the first well."""
    labels = case.mesh.flow_components()
    if len(np.unique(labels)) != 2:
        raise ConfigurationError("barrier study needs exactly two flow compartments")
    lab1 = labels[case.wells[0].cell] if case.wells else 0
    return labels == lab1, labels != lab1


def run_barrier_case(
    config: CaseConfig, schemes=("lagged", "fixed", "anderson"), out_dir=None
) -> list[BarrierRun]:
    """Run the sealed-barrier case under several coupling schemes.

    Writes one CSV of per-step compartment-average pressure deviations per
    scheme plus a summary table with iteration counts and the global mass
    defect of each scheme.
    """
    case = config.build_case()
    masks = compartment_masks(case)
    vol = case.mesh.cell_volumes
    out = Path(out_dir if out_dir is not None else config.output.directory)
    runs = []
    for token in schemes:
        scheme = scheme_from_token(token, config.scheme)
        log.info("barrier case, scheme %s", token)
        result = run_with_scheme(case, scheme, config.solver)
        averages = []
        for mask in masks:
            w = vol[mask]
            averages.append(
                np.array([float(w @ s.dp[mask] / w.sum()) for s in result.states])
            )
        run = BarrierRun(
            scheme=token,
            result=result,
            avg_dp_omega1=averages[0],
            avg_dp_omega2=averages[1],
            mass_defect=global_mass_check(case, result.states),
        )
        runs.append(run)
        if config.output.csv:
            write_csv(
                out / f"barrier_{token}.csv",
                ["step", "time", "avg_dp_omega1", "avg_dp_omega2"],
                [
                    (i, s.t, run.avg_dp_omega1[i], run.avg_dp_omega2[i])
                    for i, s in enumerate(result.states)
                ],
            )
            save_source_history(out / f"barrier_{token}_psi.csv", result.history.psi)
        if config.output.vtk:
            write_vtk(
                out / f"barrier_{token}_final.vtk",
                case.mesh,
                result.final,
                title=f"{case.name}:{token}",
            )
        log.info(
            "scheme %s: %d iterations, mass defect %.3e, final averages %.4g / %.4g",
            token,
            result.report.iterations,
            run.mass_defect,
            run.avg_dp_omega1[-1],
            run.avg_dp_omega2[-1],
        )
    if config.output.csv:
        write_csv(
            out / "barrier_summary.csv",
            [
                "scheme",
                "iterations",
                "converged",
                "mass_defect",
                "final_avg_dp_omega1",
                "final_avg_dp_omega2",
            ],
            [
                (
                    r.scheme,
                    r.result.report.iterations,
                    int(r.result.report.converged),
                    r.mass_defect,
                    r.avg_dp_omega1[-1],
                    r.avg_dp_omega2[-1],
                )
                for r in runs
            ],
        )
    return runs
