"""Block-triangular preconditioning and the elastic system solver.

The preconditioner is the lower block triangle of the rescaled operator
applied by forward substitution: multigrid V-cycles stand in for the
inverses of the three displacement component blocks and of the pressure
block, the rotation block is inverted exactly (it is diagonal), and the
upper-diagonal coupling blocks are discarded.  Nothing is assembled; the
action is composed from the stored blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from ..errors import ConfigurationError
from .amg import AmgHierarchy, AmgOptions, build_amg
from .blocks import RescaledSystem, SparseBlockSystem, rescale
from .krylov import KrylovResult, bicgstab


@dataclass
class BlockTriangularPreconditioner:
    n_cells: int
    displacement_hierarchies: list[AmgHierarchy]
    rotation_diagonal: np.ndarray
    pressure_hierarchy: AmgHierarchy
    rotation_displacement: "object"
    pressure_displacement: "object"

    @classmethod
    def from_system(
        cls, system: SparseBlockSystem, amg_options: AmgOptions | None = None
    ) -> "BlockTriangularPreconditioner":
        rotation_diagonal = system.rotation_diagonal
        if np.any(rotation_diagonal == 0.0):
            raise ConfigurationError(
                "rotation block has a zero diagonal entry "
                "(shear modulus must be positive)"
            )
        return cls(
            n_cells=system.n_cells,
            displacement_hierarchies=[
                build_amg(block, amg_options) for block in system.displacement_blocks
            ],
            rotation_diagonal=rotation_diagonal,
            pressure_hierarchy=build_amg(system.pressure_block, amg_options),
            rotation_displacement=system.rotation_displacement_block,
            pressure_displacement=system.pressure_displacement_block,
        )

    def apply(self, residual: np.ndarray) -> np.ndarray:
        n = self.n_cells
        r_u, r_r, r_p = residual[: 3 * n], residual[3 * n : 6 * n], residual[6 * n :]
        y_u = np.concatenate(
            [
                hier.apply(r_u[c * n : (c + 1) * n])
                for c, hier in enumerate(self.displacement_hierarchies)
            ]
        )
        y_r = (r_r - self.rotation_displacement @ y_u) / self.rotation_diagonal
        y_p = self.pressure_hierarchy.apply(r_p - self.pressure_displacement @ y_u)
        return np.concatenate([y_u, y_r, y_p])


@dataclass
class SolverOptions:
    rtol: float = 1e-5
    max_iter: int = 500
    direct_threshold: int = 30_000
    method: str = "auto"  # auto | direct | iterative
    amg: AmgOptions = field(default_factory=AmgOptions)


@dataclass
class SolveReport:
    x: np.ndarray
    method: str
    trace: list[float]
    restarted: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


class TpsaSolver:
    """Factorize-or-precondition once, then solve per right-hand side.

    The elastic operator is constant in time, so the sparse LU (small
    systems) or the rescaled preconditioner (large systems) is built a
    single time and reused for every step's solve.
    """

    def __init__(
        self,
        system: SparseBlockSystem,
        mu0: float,
        options: SolverOptions | None = None,
    ):
        self.options = options or SolverOptions()
        if self.options.method not in ("auto", "direct", "iterative"):
            raise ConfigurationError(f"unknown solver method '{self.options.method}'")
        self.rescaled: RescaledSystem = rescale(system, mu0)
        if self.options.method == "direct":
            self.direct = True
        elif self.options.method == "iterative":
            self.direct = False
        else:
            self.direct = system.n_dof <= self.options.direct_threshold
        if self.direct:
            self._lu = splu(self.rescaled.system.matrix.tocsc())
            self._precond = None
        else:
            self._lu = None
            self._precond = BlockTriangularPreconditioner.from_system(
                self.rescaled.system, self.options.amg
            )

    def solve(self, rhs: np.ndarray, x0: np.ndarray | None = None) -> SolveReport:
        scaled_rhs = self.rescaled.scale_rhs(rhs)
        if self.direct:
            x_tilde = self._lu.solve(scaled_rhs)
            x = self.rescaled.unscale_solution(x_tilde)
            scale = max(np.linalg.norm(scaled_rhs), 1e-300)
            res = np.linalg.norm(
                scaled_rhs - self.rescaled.system.matrix @ x_tilde
            )
            return SolveReport(x=x, method="direct", trace=[float(res / scale)])
        matrix = self.rescaled.system.matrix
        x0_tilde = None if x0 is None else np.asarray(x0) / self.rescaled.scale
        result: KrylovResult = bicgstab(
            matrix,
            scaled_rhs,
            preconditioner=self._precond.apply,
            rtol=self.options.rtol,
            max_iter=self.options.max_iter,
            x0=x0_tilde,
        )
        return SolveReport(
            x=self.rescaled.unscale_solution(result.x),
            method="bicgstab",
            trace=result.trace,
            restarted=result.restarted,
        )
