"""Flow discretization tests.

Oracle values are hand-computed from the two-point formulas: the
distance-weighted harmonic conductivity, transmissibility |face| k / d,
and the backward-Euler update on one or two cells.
"""

import numpy as np
import pytest

from biotfv.errors import SolverError
from biotfv.mesh import build_barrier_mesh, build_cartesian
from biotfv.tpfa import (
    FlowProperties,
    FlowSources,
    FlowState,
    FlowSystem,
    assemble_flow,
    effective_conductivity,
    step_flow,
)


def test_uniform_conductivity():
    mesh = build_cartesian(3, 2, 2)
    props = FlowProperties(perm=2.5e-13, viscosity=5e-4)
    cond = effective_conductivity(mesh, props)
    assert np.allclose(cond[mesh.interior_faces], 2.5e-13 / 5e-4)
    assert np.all(cond[mesh.boundary_faces] == 0.0)


def test_harmonic_average_two_cells():
    mesh = build_cartesian(2, 1, 1)
    props = FlowProperties(perm=np.array([1.0, 2.0]), viscosity=1.0)
    cond = effective_conductivity(mesh, props)
    k = mesh.interior_faces[0]
    # 0.5 / (0.25/1 + 0.25/2) = 4/3
    assert cond[k] == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_zero_permeability_cell():
    mesh = build_cartesian(3, 1, 1)
    props = FlowProperties(perm=np.array([1.0, 0.0, 1.0]), viscosity=1.0)
    cond = effective_conductivity(mesh, props)
    assert np.all(cond[mesh.interior_faces] == 0.0)


def test_barrier_face_sealed():
    mesh = build_barrier_mesh(4, 1, 1, axis=0, index=2)
    props = FlowProperties(perm=1.0, viscosity=1.0)
    cond = effective_conductivity(mesh, props)
    assert np.all(cond[mesh.barrier] == 0.0)
    open_faces = mesh.interior_faces[~mesh.barrier[mesh.interior_faces]]
    assert np.all(cond[open_faces] > 0.0)


def test_two_cell_matrix():
    mesh = build_cartesian(2, 1, 1)
    props = FlowProperties(perm=1.0, viscosity=1.0)
    A = assemble_flow(mesh, props).toarray()
    t = 1.0 * 1.0 / 0.5  # area * conductivity / distance
    assert np.allclose(A, [[t, -t], [-t, t]], atol=1e-14)


def test_matrix_symmetric_psd_zero_row_sums():
    mesh = build_cartesian(3, 3, 2, lengths=(1.0, 2.0, 0.5))
    rng = np.random.default_rng(7)
    props = FlowProperties(perm=rng.uniform(0.5, 2.0, mesh.n_cells), viscosity=3e-4)
    A = assemble_flow(mesh, props)
    dense = A.toarray()
    assert np.allclose(dense, dense.T, atol=1e-12 * np.abs(dense).max())
    assert np.allclose(dense.sum(axis=1), 0.0, atol=1e-12 * np.abs(dense).max())
    eigs = np.linalg.eigvalsh(dense)
    assert eigs.min() >= -1e-12 * eigs.max()


def test_permeability_scaling_linearity():
    mesh = build_cartesian(2, 2, 2)
    a1 = assemble_flow(mesh, FlowProperties(perm=1.0, viscosity=1.0)).toarray()
    a2 = assemble_flow(mesh, FlowProperties(perm=2.0, viscosity=1.0)).toarray()
    assert np.allclose(a2, 2.0 * a1, rtol=1e-14)


def test_step_two_cell_oracle():
    # acc|cell|/dt = 1 each, T = 1, dp_old = (1, 0) -> (2/3, 1/3)
    mesh = build_cartesian(2, 1, 1)
    props = FlowProperties(perm=0.5, viscosity=1.0, c0=2.0)
    state = FlowState(dp=np.array([1.0, 0.0]))
    new = step_flow(mesh, state, 1.0, FlowSources(), props)
    assert np.allclose(new.dp, [2.0 / 3.0, 1.0 / 3.0], rtol=1e-13)
    assert new.t == pytest.approx(1.0)


def test_equilibrium_preserved():
    mesh = build_cartesian(3, 2, 2)
    props = FlowProperties(perm=1e-12, viscosity=1e-3, c0=1e-8)
    dp = np.full(mesh.n_cells, 3.25e4)
    new = step_flow(mesh, FlowState(dp=dp), 86400.0, FlowSources(), props)
    # tolerance reflects the conditioning of the storage-vs-flux scales
    assert np.allclose(new.dp, dp, rtol=1e-9)


def test_single_cell_well_closed_form():
    mesh = build_cartesian(1, 1, 1, lengths=(2.0, 2.0, 2.0))
    c0, sb, q, dt = 1e-8, 2e-9, 5e-4, 3600.0
    props = FlowProperties(perm=1e-12, viscosity=1e-3, c0=c0, biot_storage=sb)
    sources = FlowSources(wells=[(0, q)])
    state = FlowState(dp=np.zeros(1))
    system = FlowSystem(mesh, props, dt)
    expected_increment = q * dt / (8.0 * (c0 + sb))
    dp = system.step(state.dp, sources)
    assert dp[0] == pytest.approx(expected_increment, rel=1e-13)
    dp = system.step(dp, sources)
    assert dp[0] == pytest.approx(2 * expected_increment, rel=1e-13)


def test_step_mass_balance_identity():
    mesh = build_cartesian(4, 3, 2, lengths=(2.0, 1.5, 1.0))
    rng = np.random.default_rng(11)
    props = FlowProperties(
        perm=rng.uniform(0.5, 2.0, mesh.n_cells) * 1e-13,
        viscosity=1e-3,
        c0=rng.uniform(1e-9, 1e-8, mesh.n_cells),
        biot_storage=2e-10,
    )
    sources = FlowSources(
        f_p=rng.standard_normal(mesh.n_cells) * 1e-9,
        wells=[(5, 2e-6)],
        psi=rng.standard_normal(mesh.n_cells) * 1e-10,
    )
    dt = 86400.0
    dp_old = rng.standard_normal(mesh.n_cells) * 1e3
    system = FlowSystem(mesh, props, dt)
    dp_new = system.step(dp_old, sources)
    lhs = np.sum(system.accumulation * (dp_new - dp_old))
    rhs = dt * sources.rate_vector(mesh).sum()
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_barrier_compartments_decouple():
    mesh = build_barrier_mesh(4, 2, 1, axis=0, index=2)
    props = FlowProperties(perm=1e-12, viscosity=1e-3, c0=1e-8)
    comp = mesh.flow_components()
    well_cell = int(np.flatnonzero(comp == comp[0])[0])
    sources = FlowSources(wells=[(well_cell, 1e-5)])
    system = FlowSystem(mesh, props, 3600.0)
    dp = system.step(np.zeros(mesh.n_cells), sources)
    other = comp != comp[well_cell]
    assert np.all(dp[~other] > 0)
    assert np.allclose(dp[other], 0.0, atol=1e-30)


def test_singular_system_rejected():
    mesh = build_cartesian(2, 2, 1)
    props = FlowProperties(perm=1e-12, viscosity=1e-3, c0=0.0, biot_storage=0.0)
    with pytest.raises(SolverError, match="constant pressure"):
        FlowSystem(mesh, props, 1.0)


def test_nonpositive_dt_rejected():
    mesh = build_cartesian(2, 1, 1)
    props = FlowProperties(perm=1e-12, viscosity=1e-3, c0=1e-8)
    with pytest.raises(ValueError):
        FlowSystem(mesh, props, 0.0)
