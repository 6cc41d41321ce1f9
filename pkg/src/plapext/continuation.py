"""Nested-domain limit runs: shrink the holes, grow the outer ball.

Each stage solves the punctured-disk problem, warm-started from the previous
stage, and records how much the solution still moves on a fixed probe box.
On top of the stage results sit the verification checks: the barrier
sandwich around each puncture, the constant-data (Liouville) check, and the
tail of the gradient's p-th power integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .mesh import DomainConfig, Mesh, build_mesh, interpolate, triangle_gradients
from .operator_model import OperatorSpec
from .radial import choose_a_large, radial_interpolant
from .solver import DiscreteSolution, SolverParams, solve


class ContinuationError(ValueError):
    """Invalid schedule or probe configuration."""


@dataclass(frozen=True)
class ContinuationPlan:
    """Hole/outer radius schedules with a fixed probe box for convergence."""

    base: DomainConfig
    r_schedule: tuple
    R_schedule: tuple
    probe_region: tuple               # (xmin, xmax, ymin, ymax)
    h_rule: Optional[Callable[[float, float], float]] = None
    grid_cells_max: int = 80          # default rule: h = min(r/3, R/grid_cells_max)
    mode: str = "diagonal"            # or "two_phase": all r at R_min, then all R

    def __post_init__(self):
        rs = tuple(float(r) for r in self.r_schedule)
        Rs = tuple(float(R) for R in self.R_schedule)
        if not rs or not Rs:
            raise ContinuationError("schedules must be nonempty")
        if any(b >= a for a, b in zip(rs, rs[1:])):
            raise ContinuationError("r_schedule must be strictly decreasing")
        if any(b <= a for a, b in zip(Rs, Rs[1:])):
            raise ContinuationError("R_schedule must be strictly increasing")
        if self.mode not in ("diagonal", "two_phase"):
            raise ContinuationError(f"unknown traversal mode {self.mode!r}")
        object.__setattr__(self, "r_schedule", rs)
        object.__setattr__(self, "R_schedule", Rs)
        xmin, xmax, ymin, ymax = self.probe_region
        if not (xmin < xmax and ymin < ymax):
            raise ContinuationError("empty probe region")
        corner = math.hypot(max(abs(xmin), abs(xmax)), max(abs(ymin), abs(ymax)))
        if corner >= Rs[0]:
            raise ContinuationError("probe region leaves the smallest outer ball")
        for p in self.base.punctures:
            cx, cy = p.center
            dx = max(xmin - cx, cx - xmax, 0.0)
            dy = max(ymin - cy, cy - ymax, 0.0)
            if math.hypot(dx, dy) <= rs[0]:
                raise ContinuationError(f"probe region touches the hole at {p.center}")

    def spacing_for(self, r: float, R: float) -> float:
        h = self.h_rule(r, R) if self.h_rule is not None else min(r / 3.0, R / self.grid_cells_max)
        # snap so the grid covers [-R, R] exactly
        return 2.0 * R / max(int(round(2.0 * R / h)), 2)

    def stages(self):
        if self.mode == "diagonal":
            k = max(len(self.r_schedule), len(self.R_schedule))
            return [(self.r_schedule[min(j, len(self.r_schedule) - 1)],
                     self.R_schedule[min(j, len(self.R_schedule) - 1)]) for j in range(k)]
        first = [(r, self.R_schedule[0]) for r in self.r_schedule]
        second = [(self.r_schedule[-1], R) for R in self.R_schedule[1:]]
        return first + second


def plan_from_dict(base: DomainConfig, d: dict) -> ContinuationPlan:
    try:
        kwargs = dict(base=base,
                      r_schedule=tuple(d["r_schedule"]),
                      R_schedule=tuple(d["R_schedule"]),
                      probe_region=tuple(d["probe_region"]),
                      mode=d.get("mode", "diagonal"))
    except KeyError as exc:
        raise ContinuationError(f"continuation descriptor missing field: {exc}") from exc
    if "h" in d:
        h_fixed = float(d["h"])
        kwargs["h_rule"] = lambda r, R: h_fixed
    if "grid_cells_max" in d:
        kwargs["grid_cells_max"] = int(d["grid_cells_max"])
    return ContinuationPlan(**kwargs)


@dataclass
class StageResult:
    hole_radius: float
    outer_radius: float
    spacing: float
    solution: DiscreteSolution
    probe_delta: float                # NaN on the first stage


def _probe_lattice(region, n: int = 10) -> np.ndarray:
    xmin, xmax, ymin, ymax = region
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def run_continuation(plan: ContinuationPlan, spec: OperatorSpec,
                     params: Optional[SolverParams] = None) -> list:
    """Solve every scheduled stage, warm-starting from the previous one."""
    if params is None:
        params = SolverParams()
    probe_pts = _probe_lattice(plan.probe_region)
    results: list = []
    prev: Optional[DiscreteSolution] = None
    prev_probe = None

    for r, R in plan.stages():
        h = plan.spacing_for(r, R)
        cfg = replace(plan.base, hole_radius=r, outer_radius=R, spacing=h)
        mesh = build_mesh(cfg)

        x0 = None
        if prev is not None:
            x0 = mesh.initial_values()
            warm = interpolate(prev.mesh, prev.values, mesh.coords[mesh.free_nodes])
            ok = np.isfinite(warm)
            idx = mesh.free_nodes[ok]
            x0[idx] = warm[ok]

        sol = solve(mesh, spec, params, x0=x0)
        probe = interpolate(mesh, sol.values, probe_pts)
        if not np.all(np.isfinite(probe)):
            raise ContinuationError("probe lattice hits excluded cells")
        delta = float(np.max(np.abs(probe - prev_probe))) if prev_probe is not None else float("nan")
        results.append(StageResult(hole_radius=r, outer_radius=R, spacing=h,
                                   solution=sol, probe_delta=delta))
        prev, prev_probe = sol, probe
    return results


def _disjointness_radius(cfg: DomainConfig) -> float:
    centers = np.array([p.center for p in cfg.punctures], dtype=float)
    cands = [cfg.outer_radius - float(np.linalg.norm(c)) for c in centers]
    for i in range(len(centers)):
        for j in range(i):
            cands.append(0.5 * float(np.linalg.norm(centers[i] - centers[j])))
    return min(cands)


def barrier_sandwich_check(sol: DiscreteSolution, spec: OperatorSpec,
                           cfg: Optional[DomainConfig] = None,
                           r0: Optional[float] = None) -> float:
    """Worst violation of psi_i^- <= u <= psi_i^+ over all nodes and holes.

    The flux constants are picked so that psi_i^+ clears the largest datum
    and psi_i^- undercuts the smallest beyond the disjointness radius.
    """
    if cfg is None:
        cfg = sol.mesh.config
    if r0 is None:
        r0 = _disjointness_radius(cfg)
    mesh = sol.mesh
    active = mesh.active
    pts = mesh.coords[active]
    u = sol.values[active]
    data = [p.value for p in cfg.punctures] + [cfg.outer_value]
    m, M = min(data), max(data)
    r_max = 2.0 * cfg.outer_radius + max(np.linalg.norm(p.center) for p in cfg.punctures)

    worst = 0.0
    for p in cfg.punctures:
        radii = np.linalg.norm(pts - np.asarray(p.center), axis=1)
        gap_plus = M - p.value
        gap_minus = p.value - m
        a_plus = choose_a_large(spec, r0, gap_plus) if gap_plus > 0.0 else 1.0
        a_minus = choose_a_large(spec, r0, gap_minus) if gap_minus > 0.0 else 1.0
        v_plus = radial_interpolant(spec, a_plus, 0.0, r_max)(radii)
        v_minus = radial_interpolant(spec, a_minus, 0.0, r_max)(radii)
        upper = p.value + v_plus
        lower = p.value - v_minus
        worst = max(worst,
                    float(np.max(u - upper)),
                    float(np.max(lower - u)))
    return max(worst, 0.0)


def lp_gradient_tail(sol: DiscreteSolution, spec: OperatorSpec,
                     U_radius: float, R_list: Sequence[float]) -> list:
    """Tail integrals I(R) = sum over triangles in the annulus of area |grad u|^p."""
    mesh = sol.mesh
    cfg = mesh.config
    for p in cfg.punctures:
        if float(np.linalg.norm(p.center)) + cfg.hole_radius >= U_radius:
            raise ContinuationError("U_radius must cover every hole")
    if max(R_list) > cfg.outer_radius + cfg.spacing:
        raise ContinuationError("tail radius exceeds the mesh")

    g = triangle_gradients(mesh, sol.values)
    t = np.hypot(g[:, 0], g[:, 1])
    centroids = mesh.coords[mesh.triangles].mean(axis=1)
    rad = np.hypot(centroids[:, 0], centroids[:, 1])
    contrib = mesh.tri_area * t ** spec.p

    tails = []
    for R in R_list:
        keep = (rad > U_radius) & (rad <= R)
        if not np.any(keep):
            raise ContinuationError(f"empty annulus ({U_radius:g}, {R:g}]")
        tails.append(float(np.sum(contrib[keep])))
    return tails


def liouville_check(plan: ContinuationPlan, spec: OperatorSpec,
                    params: Optional[SolverParams] = None, c: float = 0.0):
    """Constant boundary data must pin every stage to the constant itself."""
    if params is None:
        params = SolverParams()
    punctures = tuple(replace(p, value=c) for p in plan.base.punctures)
    base = replace(plan.base, punctures=punctures, outer_value=c)
    const_plan = replace(plan, base=base)
    results = run_continuation(const_plan, spec, params)
    threshold = 10.0 * params.grad_tol
    deviations = []
    for res in results:
        active = res.solution.mesh.active
        deviations.append(float(np.max(np.abs(res.solution.values[active] - c))))
    ok = all(d <= threshold for d in deviations)
    report = {"constant": c, "threshold": threshold,
              "stage_deviations": deviations, "passed": ok}
    return ok, report
