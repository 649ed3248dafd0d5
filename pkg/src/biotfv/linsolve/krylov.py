"""Right-preconditioned BiCGStab with residual tracing.

Convergence is declared on the true residual norm relative to ||b||; the
recursively updated residual only gates when the check runs.  Breakdown
of an inner product triggers one restart from the current iterate before
the solve fails with its trace attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import SolverError

BREAKDOWN = 1e-30


def _as_matvec(operator):
    if callable(operator) and not sp.issparse(operator):
        return operator
    mat = operator if sp.issparse(operator) else np.asarray(operator)
    return lambda v: mat @ v


@dataclass
class KrylovResult:
    x: np.ndarray
    trace: list[float] = field(default_factory=list)
    restarted: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


def bicgstab(
    operator,
    rhs: np.ndarray,
    preconditioner=None,
    rtol: float = 1e-5,
    max_iter: int = 500,
    x0: np.ndarray | None = None,
) -> KrylovResult:
    if rtol <= 0.0:
        raise ValueError("rtol must be positive")
    matvec = _as_matvec(operator)
    apply_m = preconditioner if preconditioner is not None else (lambda v: v)
    rhs = np.asarray(rhs, dtype=float)
    norm_b = np.linalg.norm(rhs)
    x = np.zeros_like(rhs) if x0 is None else np.asarray(x0, dtype=float).copy()
    if norm_b == 0.0:
        return KrylovResult(x=np.zeros_like(rhs), trace=[0.0])

    r = rhs - matvec(x)
    trace = [float(np.linalg.norm(r))]
    if trace[0] <= rtol * norm_b:
        return KrylovResult(x=x, trace=trace)

    shadow = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(rhs)
    p = np.zeros_like(rhs)
    restarted = False

    def restart_or_fail(reason: str):
        nonlocal r, shadow, rho, alpha, omega, v, p, restarted
        if restarted:
            raise SolverError(
                f"second breakdown after restart: {reason} "
                f"(relative residual {trace[-1] / norm_b:.3e})",
                trace=trace,
            )
        restarted = True
        r = rhs - matvec(x)
        shadow = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(rhs)
        p = np.zeros_like(rhs)

    def converged() -> bool:
        # accept only on the true residual, refreshing r against drift
        nonlocal r
        true_res = rhs - matvec(x)
        norm = float(np.linalg.norm(true_res))
        trace[-1] = norm
        if norm <= rtol * norm_b:
            return True
        r = true_res
        return False

    for _ in range(max_iter):
        rho_next = float(shadow @ r)
        if abs(rho_next) < BREAKDOWN * max(
            np.linalg.norm(shadow) * np.linalg.norm(r), 1e-300
        ):
            restart_or_fail("shadow residual orthogonal to residual")
            continue
        beta = (rho_next / rho) * (alpha / omega)
        rho = rho_next
        p = r + beta * (p - omega * v)
        p_hat = apply_m(p)
        v = matvec(p_hat)
        denom = float(shadow @ v)
        if abs(denom) < BREAKDOWN * max(
            np.linalg.norm(shadow) * np.linalg.norm(v), 1e-300
        ):
            restart_or_fail("search direction collapsed")
            continue
        alpha = rho / denom
        s = r - alpha * v
        x = x + alpha * p_hat
        trace.append(float(np.linalg.norm(s)))
        if trace[-1] <= rtol * norm_b and converged():
            return KrylovResult(x=x, trace=trace, restarted=restarted)
        s_hat = apply_m(s)
        t = matvec(s_hat)
        tt = float(t @ t)
        if tt < BREAKDOWN:
            restart_or_fail("stabilization direction vanished")
            continue
        omega = float(t @ s) / tt
        x = x + omega * s_hat
        r = s - omega * t
        trace[-1] = float(np.linalg.norm(r))
        if trace[-1] <= rtol * norm_b and converged():
            return KrylovResult(x=x, trace=trace, restarted=restarted)

    raise SolverError(
        f"no convergence in {max_iter} iterations "
        f"(relative residual {trace[-1] / norm_b:.3e})",
        trace=trace,
    )
