"""Cell-centered two-point flux approximation for single-phase flow.

The unknown is the fluid pressure deviation from a hydrostatic reference,
so gravity never appears in the assembled operator.  All exterior
boundaries are no-flow; sealing barriers are interior faces with zero
transmissibility.  Time integration is backward Euler with the combined
storage coefficient c0 + alpha^2/lambda.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.linalg import splu

from .errors import SolverError
from .mesh import Mesh, face_normal_distances

__all__ = [
    "FlowProperties",
    "FlowState",
    "FlowSources",
    "effective_conductivity",
    "assemble_flow",
    "FlowSystem",
    "step_flow",
]


def _per_cell(value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected scalar or ({n},) array, got shape {arr.shape}")
    return arr


@dataclass
class FlowProperties:
    """Flow material data.

    Attributes:
        perm: per-cell absolute permeability [m^2].
        viscosity: fluid viscosity [Pa s], scalar or per cell.
        c0: storativity [1/Pa], scalar or per cell.
        biot_storage: alpha^2/lambda [1/Pa], scalar or per cell.
        rho: fluid density [kg/m^3], reference bookkeeping only.
        gravity: gravitational acceleration magnitude [m/s^2], bookkeeping.
        p0: per-cell reference pressure [Pa], bookkeeping only.
    """

    perm: np.ndarray
    viscosity: np.ndarray | float = 1.0
    c0: np.ndarray | float = 0.0
    biot_storage: np.ndarray | float = 0.0
    rho: float = 1000.0
    gravity: float = 0.0
    p0: np.ndarray | None = None

    def storage(self, n: int) -> np.ndarray:
        """Combined storage coefficient c0 + alpha^2/lambda per cell."""
        return _per_cell(self.c0, n) + _per_cell(self.biot_storage, n)


@dataclass
class FlowState:
    """Pressure deviation field at one time."""

    dp: np.ndarray
    t: float = 0.0


@dataclass
class FlowSources:
    """Right-hand side of one flow step.

    f_p and psi are volumetric rate densities [1/s]; wells carry absolute
    rates [m^3/s] attached to single cells.
    """

    f_p: np.ndarray | None = None
    wells: list[tuple[int, float]] = field(default_factory=list)
    psi: np.ndarray | None = None

    def rate_vector(self, mesh: Mesh) -> np.ndarray:
        """Total source per cell in m^3/s."""
        rate = np.zeros(mesh.n_cells)
        if self.f_p is not None:
            rate += mesh.cell_volumes * _per_cell(self.f_p, mesh.n_cells)
        if self.psi is not None:
            rate += mesh.cell_volumes * _per_cell(self.psi, mesh.n_cells)
        for cell, q in self.wells:
            rate[cell] += q
        return rate


def effective_conductivity(mesh: Mesh, props: FlowProperties) -> np.ndarray:
    """Distance-weighted harmonic conductivity K/mu_w per face.

    Boundary faces (no-flow) and barrier faces get zero.  A cell with zero
    permeability simply zeroes the conductivity of its faces.
    """
    n = mesh.n_cells
    perm = _per_cell(props.perm, n)
    visc = _per_cell(props.viscosity, n)
    if np.any(perm < 0):
        raise ValueError("negative permeability")
    if np.any(visc <= 0):
        raise ValueError("viscosity must be positive")

    d_in, d_out = face_normal_distances(mesh)
    cond = np.zeros(mesh.n_faces)
    inter = mesh.interior_faces
    i = mesh.face_cells[inter, 0]
    j = mesh.face_cells[inter, 1]
    with np.errstate(divide="ignore"):
        res = d_in[inter] * visc[i] / perm[i] + d_out[inter] * visc[j] / perm[j]
    delta = d_in[inter] + d_out[inter]
    cond[inter] = np.where(np.isfinite(res), delta / res, 0.0)
    cond[mesh.barrier] = 0.0
    return cond


def assemble_flow(mesh: Mesh, props: FlowProperties) -> csr_matrix:
    """Symmetric positive semidefinite TPFA operator (volumetric flux form)."""
    cond = effective_conductivity(mesh, props)
    d_in, d_out = face_normal_distances(mesh)
    inter = mesh.interior_faces
    trans = mesh.face_areas[inter] * cond[inter] / (d_in[inter] + d_out[inter])
    i = mesh.face_cells[inter, 0]
    j = mesh.face_cells[inter, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([trans, trans, -trans, -trans])
    n = mesh.n_cells
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


class FlowSystem:
    """Backward-Euler flow stepper with a reusable factorization.

    The system matrix is constant for a fixed step size, so it is
    factorized once and reused for every step and splitting iteration.
    """

    def __init__(self, mesh: Mesh, props: FlowProperties, dt: float):
        if dt <= 0:
            raise ValueError("time step must be positive")
        self.mesh = mesh
        self.props = props
        self.dt = float(dt)
        self.operator = assemble_flow(mesh, props)
        self.accumulation = props.storage(mesh.n_cells) * mesh.cell_volumes
        if self.accumulation.max() == 0.0:
            raise SolverError(
                "flow system is singular: zero storage everywhere with no-flow "
                "boundaries leaves the constant pressure mode undetermined"
            )
        matrix = (self.operator + diags(self.accumulation / self.dt)).tocsc()
        self._lu = splu(matrix)

    def step(self, dp_old: np.ndarray, sources: FlowSources) -> np.ndarray:
        rhs = self.accumulation / self.dt * dp_old + sources.rate_vector(self.mesh)
        return self._lu.solve(rhs)


def step_flow(
    mesh: Mesh,
    state: FlowState,
    dt: float,
    sources: FlowSources,
    props: FlowProperties,
) -> FlowState:
    """Advance the pressure deviation by one backward-Euler step."""
    system = FlowSystem(mesh, props, dt)
    return FlowState(dp=system.step(state.dp, sources), t=state.t + dt)
