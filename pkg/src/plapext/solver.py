"""Minimization of the discrete p-Dirichlet energy under Dirichlet data.

The driver continues in the exponent (the p = 2 stage is quadratic and acts
as the initializer), runs a limited-memory quasi-Newton descent with
backtracking, and polishes with exact-Hessian Newton steps so that the very
tight gradient tolerances needed by the comparison checks are reachable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, assemble_energy, assemble_gradient, assemble_hessian
from .operator_model import OperatorSpec, with_exponent


class SolverError(RuntimeError):
    """Line-search failure on a descent direction (assembly inconsistency)."""


@dataclass(frozen=True)
class SolverParams:
    grad_tol: float = 1e-10          # stop when |grad|_inf <= grad_tol * (1 + |E|)
    max_iter: int = 2000
    p_continuation: Optional[tuple] = None   # None: 2, 3, ... up to the target p
    line_search: tuple = (0.5, 1e-4)         # backtracking factor, sufficient decrease
    memory: int = 10
    lbfgs_max_iter: int = 200        # per continuation stage, before Newton polish
    newton_max_iter: int = 60

    def __post_init__(self):
        if not self.grad_tol > 0.0:
            raise ValueError("grad_tol must be positive")
        if self.p_continuation is not None:
            ps = tuple(float(q) for q in self.p_continuation)
            if ps[0] != 2.0 or any(b < a for a, b in zip(ps, ps[1:])):
                raise ValueError("p_continuation must be nondecreasing and start at 2")
            object.__setattr__(self, "p_continuation", ps)

    def to_dict(self) -> dict:
        return {"grad_tol": self.grad_tol, "max_iter": self.max_iter,
                "p_continuation": list(self.p_continuation) if self.p_continuation else None,
                "line_search": list(self.line_search), "memory": self.memory,
                "lbfgs_max_iter": self.lbfgs_max_iter,
                "newton_max_iter": self.newton_max_iter}


def params_from_dict(d: dict) -> SolverParams:
    known = {f for f in SolverParams.__dataclass_fields__}
    kwargs = {k: v for k, v in d.items() if k in known}
    if kwargs.get("p_continuation") is not None:
        kwargs["p_continuation"] = tuple(kwargs["p_continuation"])
    if "line_search" in kwargs:
        kwargs["line_search"] = tuple(kwargs["line_search"])
    return SolverParams(**kwargs)


@dataclass
class DiscreteSolution:
    mesh: Mesh
    values: np.ndarray               # full nodal vector, NaN at excluded nodes
    energy: float
    grad_inf_norm: float
    iterations: int
    trace: list                      # (iteration, energy, grad_inf_norm)
    converged: bool


@dataclass(frozen=True)
class MaxPrincipleReport:
    min_u: float
    max_u: float
    min_dirichlet: float
    max_dirichlet: float
    violation: float

    def to_dict(self) -> dict:
        return {"min_u": self.min_u, "max_u": self.max_u,
                "min_dirichlet": self.min_dirichlet,
                "max_dirichlet": self.max_dirichlet, "violation": self.violation}


def _continuation_exponents(p: float, explicit) -> tuple:
    if explicit is not None:
        ps = tuple(explicit)
        return ps if ps[-1] == p else ps + (p,)
    ps = [2.0]
    q = 3.0
    while q < p:
        ps.append(q)
        q += 1.0
    if p > 2.0:
        ps.append(p)
    return tuple(ps)


def _backtrack(energy_fn, u, e0, g, direction, factor, c1):
    """Armijo backtracking; returns (step, new_u, new_energy) or None."""
    slope = float(np.dot(g, direction))
    if slope >= 0.0:
        return None
    # Near the minimum the predicted decrease drops below the rounding floor
    # of the energy sum; without the allowance the search would stall there.
    rounding = 16.0 * np.finfo(float).eps * (1.0 + abs(e0))
    step = 1.0
    for _ in range(60):
        trial = u + step * direction
        e = energy_fn(trial)
        if e <= e0 + c1 * step * slope + rounding:
            return step, trial, e
        step *= factor
    return None


def solve(mesh: Mesh, spec: OperatorSpec, params: Optional[SolverParams] = None,
          x0: Optional[np.ndarray] = None) -> DiscreteSolution:
    """Minimize the discrete energy; Dirichlet nodes are never touched.

    Returns the best iterate flagged non-converged when the iteration budget
    runs out; raises SolverError if a descent direction fails to decrease the
    energy (which indicates an assembly bug).
    """
    if params is None:
        params = SolverParams()
    values = mesh.initial_values() if x0 is None else np.array(x0, dtype=float)
    free = mesh.free_nodes
    factor, c1 = params.line_search

    trace: list = []
    total_iters = 0
    converged = False
    exponents = _continuation_exponents(spec.p, params.p_continuation)

    for stage, pk in enumerate(exponents):
        stage_spec = with_exponent(spec, pk)
        final = stage == len(exponents) - 1

        def energy_of(u_free, _spec=stage_spec):
            values[free] = u_free
            return assemble_energy(mesh, _spec, values)

        def grad_of(u_free, _spec=stage_spec):
            values[free] = u_free
            return assemble_gradient(mesh, _spec, values)

        u = values[free].copy()
        e = energy_of(u)
        g = grad_of(u)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        tol = params.grad_tol * (1.0 + abs(e))
        stage_tol = tol if final else max(tol, 1e-6 * (1.0 + abs(e)))
        trace.append((total_iters, e, gnorm))

        if gnorm <= stage_tol:
            values[free] = u
            converged = final or converged
            if final:
                converged = True
            continue

        # Quasi-Newton phase: two-loop L-BFGS with Armijo backtracking.
        s_hist: list = []
        y_hist: list = []
        lbfgs_budget = 0 if pk == 2.0 else params.lbfgs_max_iter
        switch_tol = max(stage_tol, 1e-3 * gnorm)
        it = 0
        while it < lbfgs_budget and gnorm > switch_tol and total_iters < params.max_iter:
            d = _lbfgs_direction(g, s_hist, y_hist)
            res = _backtrack(energy_of, u, e, g, d, factor, c1)
            if res is None:
                break  # hand over to the Newton phase
            _, u_new, e_new = res
            g_new = grad_of(u_new)
            s_hist.append(u_new - u)
            y_hist.append(g_new - g)
            if len(s_hist) > params.memory:
                s_hist.pop(0)
                y_hist.pop(0)
            u, e, g = u_new, e_new, g_new
            gnorm = float(np.max(np.abs(g)))
            it += 1
            total_iters += 1
            trace.append((total_iters, e, gnorm))

        # Newton polish with the exact sparse Hessian.
        it = 0
        while gnorm > stage_tol and it < params.newton_max_iter and total_iters < params.max_iter:
            values[free] = u
            H = assemble_hessian(mesh, stage_spec, values)
            d = _newton_direction(H, g)
            res = _backtrack(energy_of, u, e, g, d, factor, c1)
            if res is None:
                res = _backtrack(energy_of, u, e, g, -g, factor, c1)
                if res is None:
                    if gnorm <= 100.0 * np.finfo(float).eps * (1.0 + abs(e)) / max(
                            mesh.config.spacing, 1e-30):
                        break  # energy landscape is flat to rounding
                    raise SolverError(
                        f"line search failed at |grad|_inf = {gnorm:.3e} (stage p = {pk})")
            _, u, e = res
            g = grad_of(u)
            gnorm = float(np.max(np.abs(g)))
            it += 1
            total_iters += 1
            trace.append((total_iters, e, gnorm))

        values[free] = u
        if final:
            converged = gnorm <= stage_tol

    values[free] = values[free]
    e_final = assemble_energy(mesh, spec, values)
    g_final = assemble_gradient(mesh, spec, values)
    gnorm = float(np.max(np.abs(g_final))) if g_final.size else 0.0
    return DiscreteSolution(mesh=mesh, values=values, energy=e_final,
                            grad_inf_norm=gnorm, iterations=total_iters,
                            trace=trace, converged=converged)


def _lbfgs_direction(g, s_hist, y_hist):
    q = -g.copy()
    if not s_hist:
        return q
    alphas = []
    rhos = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        sy = float(np.dot(s, y))
        if sy <= 1e-300:
            alphas.append(0.0)
            rhos.append(0.0)
            continue
        rho = 1.0 / sy
        a = rho * float(np.dot(s, q))
        q -= a * y
        alphas.append(a)
        rhos.append(rho)
    s, y = s_hist[-1], y_hist[-1]
    yy = float(np.dot(y, y))
    if yy > 0.0:
        q *= float(np.dot(s, y)) / yy
    for (s, y), a, rho in zip(zip(s_hist, y_hist), reversed(alphas), reversed(rhos)):
        if rho == 0.0:
            continue
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return q


def _newton_direction(H: sp.csr_matrix, g: np.ndarray) -> np.ndarray:
    """Solve H d = -g directly, regularizing if the factorization degenerates."""
    n = H.shape[0]
    diag_scale = max(float(np.max(H.diagonal())), 1e-300)
    reg = 0.0
    for _ in range(8):
        try:
            M = H if reg == 0.0 else H + sp.identity(n, format="csr") * reg
            lu = spla.splu(M.tocsc())
            d = lu.solve(-g)
            if np.all(np.isfinite(d)) and float(np.dot(g, d)) < 0.0:
                return d
        except RuntimeError:
            pass
        reg = max(reg * 100.0, 1e-12 * diag_scale)
    return -g


def max_principle_report(sol: DiscreteSolution) -> MaxPrincipleReport:
    """Extreme solution values against the extreme Dirichlet data."""
    mesh = sol.mesh
    active = mesh.active
    u = sol.values[active]
    dirich = mesh.dirichlet[~np.isnan(mesh.dirichlet)]
    min_u, max_u = float(np.min(u)), float(np.max(u))
    min_d, max_d = float(np.min(dirich)), float(np.max(dirich))
    violation = max(min_d - min_u, max_u - max_d, 0.0)
    return MaxPrincipleReport(min_u=min_u, max_u=max_u, min_dirichlet=min_d,
                              max_dirichlet=max_d, violation=violation)


def compare_solutions(sol1: DiscreteSolution, sol2: DiscreteSolution) -> float:
    """Signed worst violation of sol1 <= sol2 over shared active nodes."""
    if sol1.mesh is not sol2.mesh and (
            sol1.mesh.nx != sol2.mesh.nx
            or not np.array_equal(sol1.mesh.node_class, sol2.mesh.node_class)):
        raise ValueError("solutions live on different meshes")
    active = sol1.mesh.active
    return float(np.max(sol1.values[active] - sol2.values[active]))
