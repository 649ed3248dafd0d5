"""Splitting schemes coupling the flow and mechanics discretizations.

The mechanics solve exposes the effective pressure p_hat = lam*div(u) -
alpha*dp, which feeds the flow equation through the source psi =
-(alpha/lam) * d(p_hat)/dt.  Two couplings are implemented:

* lagged: one flow step and one mechanics solve per time step, with psi
  built from the two previous mechanics states (no inner iterations);
* fixed stress: a fixed-point iteration on the whole space-time source
  field psi, where one evaluation F(psi) runs the full flow transient
  followed by a mechanics solve at every step, optionally accelerated by
  Anderson mixing of previous evaluations.

Both couplings reuse a single flow factorization and a single mechanics
factorization/preconditioner, since the operators are constant in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SolverError
from .linsolve.precond import SolveReport, SolverOptions, TpsaSolver
from .mesh import Mesh
from .tpfa import FlowProperties, FlowSources, FlowSystem
from .tpsa import (
    ElasticProperties,
    MechBoundary,
    assemble_rhs,
    assemble_tpsa,
    mean_shear_modulus,
)

__all__ = [
    "PoroelasticProperties",
    "Well",
    "TimeGrid",
    "BiotCase",
    "BiotState",
    "SourceHistory",
    "CouplingReport",
    "SimulationResult",
    "AndersonState",
    "anderson_weights",
    "anderson_step",
    "mech_rhs_from_pressure",
    "flow_source_from_mech",
    "CoupledSystem",
    "run_lagged",
    "run_fixed_stress",
    "global_mass_check",
]


def _per_cell(value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected scalar or ({n},) array, got shape {arr.shape}")
    return arr


@dataclass
class PoroelasticProperties:
    """Per-cell material data of the coupled problem (scalars broadcast).

    Units: mu, lam in Pa; alpha dimensionless; c0 in 1/Pa; perm in m^2;
    fluid_viscosity in Pa s; rho in kg/m^3; gravity in m/s^2.  rho, gravity
    and p0 document the hydrostatic reference only; the unknown is the
    pressure deviation, so they never enter the discretization.
    """

    mu: np.ndarray | float
    lam: np.ndarray | float
    alpha: np.ndarray | float
    c0: np.ndarray | float
    perm: np.ndarray | float
    fluid_viscosity: float = 1e-3
    boundary: MechBoundary | None = None
    f_u: np.ndarray | None = None
    rho: float = 1000.0
    gravity: float = 0.0
    p0: np.ndarray | None = None

    def validate(self, mesh: Mesh) -> None:
        n = mesh.n_cells
        if np.any(_per_cell(self.mu, n) <= 0):
            raise ConfigurationError("shear modulus must be positive")
        if np.any(_per_cell(self.lam, n) <= 0):
            raise ConfigurationError("Lame parameter lambda must be positive")
        if np.any(_per_cell(self.alpha, n) < 0):
            raise ConfigurationError("Biot coefficient must be nonnegative")
        if np.any(_per_cell(self.c0, n) < 0):
            raise ConfigurationError("storativity must be nonnegative")
        if np.any(_per_cell(self.perm, n) < 0):
            raise ConfigurationError("permeability must be nonnegative")
        if self.fluid_viscosity <= 0:
            raise ConfigurationError("fluid viscosity must be positive")

    def flow_properties(self, mesh: Mesh) -> FlowProperties:
        n = mesh.n_cells
        alpha = _per_cell(self.alpha, n)
        lam = _per_cell(self.lam, n)
        return FlowProperties(
            perm=_per_cell(self.perm, n),
            viscosity=self.fluid_viscosity,
            c0=_per_cell(self.c0, n),
            biot_storage=alpha**2 / lam,
            rho=self.rho,
            gravity=self.gravity,
            p0=self.p0,
        )

    def elastic_properties(self, mesh: Mesh) -> ElasticProperties:
        boundary = self.boundary or MechBoundary.fixed(mesh)
        return ElasticProperties(
            mu=_per_cell(self.mu, mesh.n_cells),
            lam=_per_cell(self.lam, mesh.n_cells),
            boundary=boundary,
            f_u=self.f_u,
        )


@dataclass
class Well:
    """Constant-rate source attached to one cell, active on (start, end]."""

    cell: int
    rate: float  # m^3/s
    t_start: float = 0.0
    t_end: float = math.inf

    def active_at(self, t: float) -> bool:
        # backward Euler evaluates sources at the end of the step; a small
        # relative slack absorbs float accumulation of the grid times
        slack = 1e-9 * max(abs(t), 1.0)
        return self.t_start + slack < t <= self.t_end + slack


@dataclass
class TimeGrid:
    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("time step must be positive")
        if self.n_steps < 1:
            raise ConfigurationError("need at least one time step")

    @property
    def times(self) -> np.ndarray:
        """The N+1 time points including t0."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps


@dataclass
class BiotState:
    """Coupled fields at one time point."""

    dp: np.ndarray  # fluid pressure deviation (n,) [Pa]
    u: np.ndarray  # displacement (n, 3) [m]
    r: np.ndarray  # rotation (n, 3) [Pa]
    p_hat: np.ndarray  # effective pressure lam*div(u) - alpha*dp (n,) [Pa]
    t: float = 0.0

    @classmethod
    def equilibrium(cls, n: int, t: float = 0.0) -> "BiotState":
        return cls(
            dp=np.zeros(n), u=np.zeros((n, 3)), r=np.zeros((n, 3)),
            p_hat=np.zeros(n), t=t,
        )


@dataclass
class BiotCase:
    """A complete coupled problem: geometry, materials, sources, time grid."""

    mesh: Mesh
    props: PoroelasticProperties
    time: TimeGrid
    wells: list[Well] = field(default_factory=list)
    f_p: np.ndarray | None = None  # volumetric rate density [1/s]
    initial: BiotState | None = None
    name: str = ""

    def __post_init__(self):
        self.props.validate(self.mesh)
        for well in self.wells:
            if not 0 <= well.cell < self.mesh.n_cells:
                raise ConfigurationError(f"well cell {well.cell} out of range")

    def initial_state(self) -> BiotState:
        if self.initial is not None:
            return self.initial
        return BiotState.equilibrium(self.mesh.n_cells, t=self.time.t0)

    def flow_sources_at(self, t: float, psi: np.ndarray | None) -> FlowSources:
        wells = [(w.cell, w.rate) for w in self.wells if w.active_at(t)]
        return FlowSources(f_p=self.f_p, wells=wells, psi=psi)

    def injected_volume(self) -> float:
        """Cumulative non-coupling source volume over the simulation [m^3]."""
        total = 0.0
        for t in self.time.times[1:]:
            rates = self.flow_sources_at(t, None).rate_vector(self.mesh)
            total += self.time.dt * rates.sum()
        return total


@dataclass
class SourceHistory:
    """Per-step coupling source and effective pressure, shapes (N, n)."""

    psi: np.ndarray
    p_hat: np.ndarray

    def __post_init__(self):
        if self.psi.shape != self.p_hat.shape:
            raise ValueError("psi and p_hat histories must have equal shapes")


@dataclass
class CouplingReport:
    scheme: str
    residuals: list[float] = field(default_factory=list)
    converged: bool = True

    def __post_init__(self):
        if not all(np.isfinite(r) for r in self.residuals):
            raise SolverError("coupling residual diverged", trace=self.residuals)

    @property
    def iterations(self) -> int:
        return len(self.residuals)


@dataclass
class SimulationResult:
    states: list[BiotState]
    history: SourceHistory
    report: CouplingReport
    mech_reports: list[SolveReport] = field(default_factory=list)

    @property
    def final(self) -> BiotState:
        return self.states[-1]


def mech_rhs_from_pressure(
    dp: np.ndarray, props: PoroelasticProperties, mesh: Mesh
) -> np.ndarray:
    """Effective-pressure row source density -(alpha/lam) * dp per cell."""
    n = mesh.n_cells
    lam = _per_cell(props.lam, n)
    if np.any(lam <= 0):
        raise ConfigurationError("Lame parameter lambda must be positive")
    return -_per_cell(props.alpha, n) / lam * dp


def flow_source_from_mech(
    p_hat_prev: np.ndarray,
    p_hat_now: np.ndarray,
    dt: float,
    props: PoroelasticProperties,
    mesh: Mesh,
) -> np.ndarray:
    """Coupling source psi = -(alpha/lam) * (p_hat_now - p_hat_prev)/dt."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    n = mesh.n_cells
    alpha = _per_cell(props.alpha, n)
    lam = _per_cell(props.lam, n)
    return -alpha / lam * (p_hat_now - p_hat_prev) / dt


# ------------------------------------------------------------- Anderson


def anderson_weights(residuals: list[np.ndarray]) -> np.ndarray:
    """Affine weights minimizing the combined residual, oldest first.

    Solves min ||sum beta_i g_i|| with sum beta_i = 1 through the
    difference reformulation (unconstrained in m-1 variables).  A rank
    deficient or ill-conditioned normal matrix is regularized by a 1e-12
    diagonal shift; if the solve still degenerates, the weights fall back
    to the plain step (all weight on the newest pair).
    """
    m = len(residuals)
    if m < 1:
        raise ValueError("need at least one stored pair")
    if m == 1:
        return np.array([1.0])
    g_new = np.asarray(residuals[-1], dtype=float).ravel()
    diffs = np.stack(
        [np.asarray(g, dtype=float).ravel() - g_new for g in residuals[:-1]], axis=1
    )
    gram = diffs.T @ diffs
    rhs = -diffs.T @ g_new
    scale = float(np.max(np.abs(np.diag(gram)))) if gram.size else 0.0
    if scale == 0.0 or np.linalg.cond(gram) > 1e14:
        gram = gram + 1e-12 * max(scale, 1.0) * np.eye(m - 1)
    try:
        c = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        c = None
    if c is None or not np.all(np.isfinite(c)):
        beta = np.zeros(m)
        beta[-1] = 1.0
        return beta
    return np.append(c, 1.0 - c.sum())


@dataclass
class AndersonState:
    """Sliding window of (psi, F(psi)) pairs and the mixing weights.

    The window used for the next iterate holds min(m0, pushes - 1) of the
    most recent pairs, so the first two accelerated iterates coincide with
    the plain fixed-point iterates exactly.
    """

    m0: int
    psi_history: list[np.ndarray] = field(default_factory=list)
    image_history: list[np.ndarray] = field(default_factory=list)
    beta: np.ndarray | None = None
    pushes: int = 0

    def __post_init__(self):
        if self.m0 < 1:
            raise ConfigurationError("Anderson window must hold at least one pair")

    def push(self, psi: np.ndarray, image: np.ndarray) -> None:
        self.psi_history.append(np.array(psi, dtype=float, copy=True))
        self.image_history.append(np.array(image, dtype=float, copy=True))
        self.pushes += 1
        if len(self.psi_history) > self.m0:
            self.psi_history.pop(0)
            self.image_history.pop(0)

    def next_iterate(self) -> np.ndarray:
        if self.pushes == 0:
            raise ValueError("no stored pairs")
        m = min(self.m0, self.pushes - 1)
        if m < 1:
            self.beta = np.array([1.0])
            return self.image_history[-1].copy()
        psis = self.psi_history[-m:]
        images = self.image_history[-m:]
        self.beta = anderson_weights([f - p for p, f in zip(psis, images)])
        mixed = np.zeros_like(images[0])
        for weight, image in zip(self.beta, images):
            mixed += weight * image
        return mixed


def anderson_step(state: AndersonState) -> np.ndarray:
    return state.next_iterate()


# -------------------------------------------------------------- engine


@dataclass
class EvalResult:
    psi: np.ndarray  # F(psi_in), shape (N, n)
    dp: np.ndarray  # flow trajectory, shape (N+1, n)
    p_hat: np.ndarray  # effective pressure trajectory, shape (N+1, n)
    states: list[BiotState]
    mech_reports: list[SolveReport]


class CoupledSystem:
    """Assembled, factorized operators of one case, reused across solves."""

    def __init__(self, case: BiotCase, solver: SolverOptions | None = None):
        self.case = case
        mesh = case.mesh
        self.flow = FlowSystem(mesh, case.props.flow_properties(mesh), case.time.dt)
        self.elastic = case.props.elastic_properties(mesh)
        system = assemble_tpsa(mesh, self.elastic)
        self.system = system
        self.mech = TpsaSolver(
            system, mean_shear_modulus(mesh, self.elastic), solver
        )
        self.n_cells = mesh.n_cells
        self._mech_warm: list[np.ndarray | None] = [None] * (case.time.n_steps + 1)

    def flow_transient(self, psi: np.ndarray) -> np.ndarray:
        """Run all N backward-Euler steps with the given source history."""
        case = self.case
        times = case.time.times
        dp = np.zeros((case.time.n_steps + 1, self.n_cells))
        dp[0] = case.initial_state().dp
        for i in range(1, case.time.n_steps + 1):
            sources = case.flow_sources_at(times[i], psi[i - 1])
            dp[i] = self.flow.step(dp[i - 1], sources)
        return dp

    def mech_solve(self, dp: np.ndarray, step: int) -> tuple[BiotState, SolveReport]:
        case = self.case
        coupling = mech_rhs_from_pressure(dp, case.props, case.mesh)
        rhs = assemble_rhs(case.mesh, self.elastic, pressure_coupling=coupling)
        x0 = self._mech_warm[step]
        if x0 is None and step > 0:
            x0 = self._mech_warm[step - 1]
        report = self.mech.solve(rhs, x0=x0)
        self._mech_warm[step] = report.x
        u, r, p_hat = self.mech.rescaled.system.split(report.x)
        state = BiotState(
            dp=dp.copy(), u=u, r=r, p_hat=p_hat, t=case.time.times[step]
        )
        return state, report

    def evaluate(self, psi: np.ndarray) -> EvalResult:
        """One whole-simulation pass: flow transient, then mechanics."""
        case = self.case
        n_steps = case.time.n_steps
        dp = self.flow_transient(psi)
        initial = case.initial_state()
        p_hat = np.zeros((n_steps + 1, self.n_cells))
        p_hat[0] = initial.p_hat
        states = [initial]
        reports = []
        for i in range(1, n_steps + 1):
            try:
                state, report = self.mech_solve(dp[i], i)
            except SolverError as err:
                raise SolverError(
                    f"mechanics solve failed at step {i}: {err}", trace=err.trace
                ) from err
            p_hat[i] = state.p_hat
            states.append(state)
            reports.append(report)
        new_psi = np.stack(
            [
                flow_source_from_mech(
                    p_hat[i - 1], p_hat[i], case.time.dt, case.props, case.mesh
                )
                for i in range(1, n_steps + 1)
            ]
        )
        return EvalResult(
            psi=new_psi, dp=dp, p_hat=p_hat, states=states, mech_reports=reports
        )

    def weighted_norm(self, psi: np.ndarray) -> float:
        """Space-time L2 norm with cell-volume and time-step weights."""
        volumes = self.case.mesh.cell_volumes
        return float(
            np.sqrt(self.case.time.dt * np.sum(volumes * psi**2))
        )


# -------------------------------------------------------------- schemes


def run_lagged(
    case: BiotCase, solver: SolverOptions | None = None
) -> SimulationResult:
    """One-way coupling: each flow step sees the previous mechanics state."""
    engine = CoupledSystem(case, solver)
    n_steps, n = case.time.n_steps, engine.n_cells
    times = case.time.times
    initial = case.initial_state()
    states = [initial]
    psi_hist = np.zeros((n_steps, n))
    p_hat_hist = np.zeros((n_steps, n))
    reports = []
    dp_prev = initial.dp
    p_hat_two_back = initial.p_hat  # p_hat(t_{-1}) := p_hat(t_0)
    p_hat_back = initial.p_hat
    for i in range(1, n_steps + 1):
        psi = flow_source_from_mech(
            p_hat_two_back, p_hat_back, case.time.dt, case.props, case.mesh
        )
        try:
            dp = engine.flow.step(dp_prev, case.flow_sources_at(times[i], psi))
            state, report = engine.mech_solve(dp, i)
        except SolverError as err:
            raise SolverError(
                f"step {i} of the lagged scheme failed: {err}", trace=err.trace
            ) from err
        states.append(state)
        reports.append(report)
        psi_hist[i - 1] = psi
        p_hat_hist[i - 1] = state.p_hat
        dp_prev = dp
        p_hat_two_back, p_hat_back = p_hat_back, state.p_hat
    return SimulationResult(
        states=states,
        history=SourceHistory(psi=psi_hist, p_hat=p_hat_hist),
        report=CouplingReport(scheme="lagged"),
        mech_reports=reports,
    )


def run_fixed_stress(
    case: BiotCase,
    tol: float = 1e-6,
    max_iter: int = 25,
    anderson_m0: int = 0,
    solver: SolverOptions | None = None,
) -> SimulationResult:
    """Whole-simulation fixed-point iteration on the coupling source psi.

    Every iteration evaluates F(psi): the full flow transient with the
    current source history, then mechanics at each step.  The iteration
    stops when the fixed-point residual F(psi) - psi, in the volume/dt
    weighted space-time L2 norm relative to F(psi), drops below tol; the
    residual is measured before any mixing, so the converged result is the
    evaluation at an (almost) fixed psi.  anderson_m0 = 0 keeps the plain
    iteration; anderson_m0 >= 1 mixes previous images.
    """
    if tol <= 0:
        raise ConfigurationError("fixed-stress tolerance must be positive")
    if max_iter < 1:
        raise ConfigurationError("fixed-stress iteration cap must be at least 1")
    engine = CoupledSystem(case, solver)
    psi = np.zeros((case.time.n_steps, engine.n_cells))
    anderson = AndersonState(m0=anderson_m0) if anderson_m0 >= 1 else None
    residuals: list[float] = []
    converged = False
    result: EvalResult | None = None
    for _ in range(max_iter):
        result = engine.evaluate(psi)
        change = engine.weighted_norm(result.psi - psi)
        scale = engine.weighted_norm(result.psi)
        residual = change / scale if scale > 0.0 else (0.0 if change == 0.0 else np.inf)
        residuals.append(residual)
        if residual <= tol:
            converged = True
            psi = result.psi
            break
        if anderson is not None:
            anderson.push(psi, result.psi)
            psi = anderson.next_iterate()
        else:
            psi = result.psi
    scheme = "fixed_stress" if anderson is None else f"anderson[{anderson_m0}]"
    report = CouplingReport(scheme=scheme, residuals=residuals, converged=converged)
    return SimulationResult(
        states=result.states,
        history=SourceHistory(psi=result.psi, p_hat=result.p_hat[1:]),
        report=report,
        mech_reports=result.mech_reports,
    )


def global_mass_check(case: BiotCase, states: list[BiotState]) -> float:
    """Defect of c0 * integral(dp(T)) against the injected volume.

    Exact (to solver tolerances) for converged coupled solves on fixed
    mechanical boundaries, where the coupling terms telescope away and the
    boundary volume flux vanishes identically.  Normalized by the injected
    volume when there is one.
    """
    mesh = case.mesh
    c0 = _per_cell(case.props.c0, mesh.n_cells)
    stored = float(
        np.sum(c0 * mesh.cell_volumes * (states[-1].dp - states[0].dp))
    )
    injected = case.injected_volume()
    defect = abs(stored - injected)
    return defect / abs(injected) if injected != 0.0 else defect
