"""Discrete geometry of B_R(0) minus k closed holes, on a uniform grid.

Nodes of the grid are classified free / inner-Dirichlet / outer-Dirichlet /
excluded; cells with four active corners split into linear triangles, and the
discrete energy sum_T area_T * G(|grad u|_T) and its exact gradient are
assembled over them.  The curved boundaries are staircase-approximated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .operator_model import OperatorSpec, dphi, energy_density, phi


class MeshError(ValueError):
    """Invalid domain configuration or degenerate discretization."""


FREE = 0
DIR_INNER = 1
DIR_OUTER = 2
EXCLUDED = 3

CLASS_NAMES = {FREE: "free", DIR_INNER: "dir_inner", DIR_OUTER: "dir_outer",
               EXCLUDED: "excluded"}


@dataclass(frozen=True)
class Puncture:
    center: tuple
    value: float


@dataclass(frozen=True)
class DomainConfig:
    """Punctured-disk geometry: holes of radius r inside B_R with grid step h."""

    punctures: tuple
    hole_radius: float
    outer_radius: float
    outer_value: float
    spacing: float
    split: str = "ne"

    def __post_init__(self):
        object.__setattr__(self, "punctures",
                           tuple(p if isinstance(p, Puncture)
                                 else Puncture(tuple(p[0]), float(p[1]))
                                 for p in self.punctures))
        if self.split not in ("ne", "avg"):
            raise MeshError(f"split must be 'ne' or 'avg', got {self.split!r}")
        self.validate()

    def validate(self):
        r, R, h = self.hole_radius, self.outer_radius, self.spacing
        if not (r > 0.0 and R > 0.0 and h > 0.0):
            raise MeshError("hole_radius, outer_radius and spacing must be positive")
        if not h < r:
            raise MeshError(f"spacing h = {h} must be smaller than the hole radius r = {r}")
        centers = [np.asarray(p.center, dtype=float) for p in self.punctures]
        for i, ci in enumerate(centers):
            if np.linalg.norm(ci) + r >= R:
                raise MeshError(f"hole {i} is not contained in the outer ball")
            for j in range(i):
                if np.linalg.norm(ci - centers[j]) <= 2.0 * r:
                    raise MeshError(f"holes {j} and {i} are not disjoint")
        n_cells = 2.0 * R / h
        if abs(n_cells - round(n_cells)) > 1e-8:
            raise MeshError(f"spacing {h} must divide the box width 2R = {2 * R}")

    def to_dict(self) -> dict:
        return {
            "punctures": [{"center": list(p.center), "value": p.value} for p in self.punctures],
            "hole_radius": self.hole_radius,
            "outer_radius": self.outer_radius,
            "outer_value": self.outer_value,
            "spacing": self.spacing,
            "split": self.split,
        }


def domain_from_dict(d: dict) -> DomainConfig:
    try:
        punctures = tuple(Puncture(tuple(q["center"]), float(q["value"]))
                          for q in d["punctures"])
        return DomainConfig(punctures=punctures,
                            hole_radius=float(d["hole_radius"]),
                            outer_radius=float(d["outer_radius"]),
                            outer_value=float(d["outer_value"]),
                            spacing=float(d["spacing"]),
                            split=d.get("split", "ne"))
    except (KeyError, TypeError) as exc:
        raise MeshError(f"bad domain descriptor: {exc}") from exc


@dataclass
class Mesh:
    """Immutable-after-construction triangulated staircase domain."""

    config: DomainConfig
    nx: int                      # grid nodes per side
    coords: np.ndarray           # (N, 2) node positions, row-major in (iy, ix)
    node_class: np.ndarray       # (N,) FREE / DIR_INNER / DIR_OUTER / EXCLUDED
    node_hole: np.ndarray        # (N,) puncture index for DIR_INNER nodes, else -1
    dirichlet: np.ndarray        # (N,) prescribed value at DIR nodes, NaN elsewhere
    triangles: np.ndarray        # (T, 3) node ids, CCW
    tri_area: np.ndarray         # (T,) assembly weights (halved for 'avg' split)
    tri_grad: np.ndarray         # (T, 3, 2) shape-function gradients
    free_nodes: np.ndarray       # (F,) node ids of unknowns
    free_index: np.ndarray       # (N,) unknown index or -1

    @property
    def n_free(self) -> int:
        return int(self.free_nodes.size)

    @property
    def active(self) -> np.ndarray:
        return self.node_class != EXCLUDED

    def initial_values(self) -> np.ndarray:
        """Full nodal vector: Dirichlet data set, free nodes at the data mean."""
        values = np.full(self.coords.shape[0], np.nan)
        dirich = ~np.isnan(self.dirichlet)
        values[dirich] = self.dirichlet[dirich]
        values[self.node_class == FREE] = float(np.mean(self.dirichlet[dirich]))
        return values


def override_dirichlet(mesh: Mesh, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> None:
    """Replace the Dirichlet data with fn(x, y) evaluated at boundary nodes."""
    dirich = np.isin(mesh.node_class, (DIR_INNER, DIR_OUTER))
    mesh.dirichlet[dirich] = fn(mesh.coords[dirich, 0], mesh.coords[dirich, 1])


def build_mesh(cfg: DomainConfig) -> Mesh:
    """Classify grid nodes and triangulate the staircase domain.

    A node is in-domain when strictly inside B_R and strictly outside every
    closed hole.  Out-of-domain nodes 4-adjacent to an in-domain node become
    Dirichlet carriers (hole value or outer value); everything else is
    excluded.  Cells whose four corners are all non-excluded are split into
    triangles: along the same diagonal everywhere for split='ne', or into
    both diagonals at half weight for split='avg' (the orientation-averaged
    energy, symmetric under grid reflections).
    """
    r, R, h = cfg.hole_radius, cfg.outer_radius, cfg.spacing
    n_cells = int(round(2.0 * R / h))
    idx = np.arange(n_cells + 1)
    # (i - n/2) * h keeps the grid exactly reflection-symmetric in floats.
    axis = (idx - n_cells / 2.0) * h
    X, Y = np.meshgrid(axis, axis, indexing="xy")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    nx = n_cells + 1
    n_nodes = coords.shape[0]

    rr = np.hypot(coords[:, 0], coords[:, 1])
    centers = np.array([p.center for p in cfg.punctures], dtype=float)
    if centers.size:
        dists = np.linalg.norm(coords[:, None, :] - centers[None, :, :], axis=2)
        nearest_hole = np.argmin(dists, axis=1)
        min_dist = dists[np.arange(n_nodes), nearest_hole]
    else:
        nearest_hole = np.full(n_nodes, -1)
        min_dist = np.full(n_nodes, np.inf)

    in_domain = (rr < R) & (min_dist > r)
    grid_in = in_domain.reshape(nx, nx)
    adj = np.zeros((nx, nx), dtype=bool)
    adj[:-1, :] |= grid_in[1:, :]
    adj[1:, :] |= grid_in[:-1, :]
    adj[:, :-1] |= grid_in[:, 1:]
    adj[:, 1:] |= grid_in[:, :-1]
    adjacent = adj.ravel()

    node_class = np.full(n_nodes, EXCLUDED, dtype=np.int8)
    node_hole = np.full(n_nodes, -1, dtype=np.int64)
    node_class[in_domain] = FREE
    inner = ~in_domain & adjacent & (min_dist <= r)
    outer = ~in_domain & adjacent & (rr >= R)
    node_class[inner] = DIR_INNER
    node_hole[inner] = nearest_hole[inner]
    node_class[outer] = DIR_OUTER

    dirichlet = np.full(n_nodes, np.nan)
    for i, p in enumerate(cfg.punctures):
        dirichlet[inner & (node_hole == i)] = p.value
        if not np.any(inner & (node_hole == i)):
            raise MeshError(f"hole {i} carries no Dirichlet node; spacing too coarse")
    dirichlet[outer] = cfg.outer_value

    triangles = _triangulate(node_class.reshape(nx, nx), nx, cfg.split)
    if triangles.size == 0:
        raise MeshError("no active cells; domain unresolved at this spacing")
    tri_area, tri_grad = _triangle_geometry(coords, triangles)
    if cfg.split == "avg":
        tri_area = 0.5 * tri_area

    free_nodes = np.flatnonzero(node_class == FREE)
    free_index = np.full(n_nodes, -1, dtype=np.int64)
    free_index[free_nodes] = np.arange(free_nodes.size)
    _check_free_connectivity(triangles, node_class, free_index, free_nodes.size)

    return Mesh(config=cfg, nx=nx, coords=coords, node_class=node_class,
                node_hole=node_hole, dirichlet=dirichlet, triangles=triangles,
                tri_area=tri_area, tri_grad=tri_grad, free_nodes=free_nodes,
                free_index=free_index)


def _triangulate(grid_class: np.ndarray, nx: int, split: str) -> np.ndarray:
    active = grid_class != EXCLUDED
    cell_ok = active[:-1, :-1] & active[:-1, 1:] & active[1:, :-1] & active[1:, 1:]
    iy, ix = np.nonzero(cell_ok)
    v00 = iy * nx + ix
    v10 = v00 + 1
    v01 = v00 + nx
    v11 = v01 + 1
    ne = [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    if split == "ne":
        tris = ne
    else:
        nw = [np.column_stack([v00, v10, v01]), np.column_stack([v10, v11, v01])]
        tris = ne + nw
    return np.vstack(tris) if tris else np.empty((0, 3), dtype=np.int64)


def _triangle_geometry(coords: np.ndarray, triangles: np.ndarray):
    p0 = coords[triangles[:, 0]]
    p1 = coords[triangles[:, 1]]
    p2 = coords[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(signed <= 0.0):
        raise MeshError("degenerate or misoriented triangle")
    area = signed
    grad = np.empty((triangles.shape[0], 3, 2))
    # grad N_k = rot90(edge opposite k) / (2 area), CCW convention
    edges = [p2 - p1, p0 - p2, p1 - p0]
    for k, e in enumerate(edges):
        grad[:, k, 0] = -e[:, 1]
        grad[:, k, 1] = e[:, 0]
    grad /= (2.0 * area)[:, None, None]
    return area, grad


def _check_free_connectivity(triangles, node_class, free_index, n_free):
    if n_free == 0:
        raise MeshError("no free nodes")
    rows, cols = [], []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        fa = free_index[triangles[:, a]]
        fb = free_index[triangles[:, b]]
        keep = (fa >= 0) & (fb >= 0)
        rows.append(fa[keep])
        cols.append(fb[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_free, n_free))
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp != 1:
        raise MeshError(f"free region is disconnected ({n_comp} components)")


# ---------------------------------------------------------------------------
# Energy assembly

def triangle_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-triangle constant gradients of the nodal field, shape (T, 2)."""
    v = values[mesh.triangles]                      # (T, 3)
    return np.einsum("tk,tkd->td", v, mesh.tri_grad)


def assemble_energy(mesh: Mesh, spec: OperatorSpec, values: np.ndarray) -> float:
    """Discrete energy sum_T area_T * G(|grad u|_T)."""
    g = triangle_gradients(mesh, values)
    t = np.hypot(g[:, 0], g[:, 1])
    return float(np.dot(mesh.tri_area, energy_density(spec, t)))


def _slope_weight(spec: OperatorSpec, t: np.ndarray) -> np.ndarray:
    """phi(t)/t with the t -> 0 limit (A(0) for p = 2, zero for p > 2)."""
    tpos = np.where(t > 0.0, t, 1.0)
    w = tpos ** (spec.p - 2.0) * np.asarray(spec.family.A(tpos))
    if spec.p == 2.0:
        limit = float(np.asarray(spec.family.A(0.0)))
    else:
        limit = 0.0
    return np.where(t > 0.0, w, limit)


def assemble_gradient(mesh: Mesh, spec: OperatorSpec, values: np.ndarray) -> np.ndarray:
    """Exact energy gradient with respect to the free nodal values."""
    g = triangle_gradients(mesh, values)
    t = np.hypot(g[:, 0], g[:, 1])
    w = mesh.tri_area * _slope_weight(spec, t)      # (T,)
    contrib = np.einsum("t,td,tkd->tk", w, g, mesh.tri_grad)
    out = np.zeros(values.shape[0])
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out[mesh.free_nodes]


def assemble_hessian(mesh: Mesh, spec: OperatorSpec, values: np.ndarray) -> sp.csr_matrix:
    """Exact energy Hessian over the free nodes (positive semidefinite for p >= 2)."""
    g = triangle_gradients(mesh, values)
    t = np.hypot(g[:, 0], g[:, 1])
    w = _slope_weight(spec, t)
    tpos = np.where(t > 0.0, t, 1.0)
    curv = np.where(t > 0.0, (dphi(spec, tpos) - w) / tpos ** 2, 0.0)

    # Per-triangle 3x3 block: area * (w * gradN_k . gradN_l
    #                                 + curv * (g . gradN_k)(g . gradN_l))
    gn = mesh.tri_grad
    dots = np.einsum("tkd,tld->tkl", gn, gn)
    proj = np.einsum("td,tkd->tk", g, gn)
    block = mesh.tri_area[:, None, None] * (
        w[:, None, None] * dots + curv[:, None, None] * proj[:, :, None] * proj[:, None, :]
    )

    fi = mesh.free_index[mesh.triangles]            # (T, 3)
    rows = np.repeat(fi, 3, axis=1).ravel()
    cols = np.tile(fi, (1, 3)).ravel()
    data = block.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.n_free
    H = sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n))
    return H.tocsr()


# ---------------------------------------------------------------------------
# Grid utilities

def interpolate(mesh: Mesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a nodal field at planar points.

    Cells touching excluded nodes yield NaN; callers probing near holes must
    stay clear of the staircase.
    """
    cfg = mesh.config
    h = cfg.spacing
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    origin = mesh.coords[0]
    fx = (pts[:, 0] - origin[0]) / h
    fy = (pts[:, 1] - origin[1]) / h
    ix = np.clip(np.floor(fx).astype(int), 0, mesh.nx - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, mesh.nx - 2)
    sx = fx - ix
    sy = fy - iy
    base = iy * mesh.nx + ix
    v00 = values[base]
    v10 = values[base + 1]
    v01 = values[base + mesh.nx]
    v11 = values[base + mesh.nx + 1]
    return ((1 - sx) * (1 - sy) * v00 + sx * (1 - sy) * v10
            + (1 - sx) * sy * v01 + sx * sy * v11)


def mesh_rows(mesh: Mesh):
    """CSV-ready rows (node id, x, y, class, dirichlet value) for debugging."""
    for i in range(mesh.coords.shape[0]):
        value = mesh.dirichlet[i]
        yield (i, mesh.coords[i, 0], mesh.coords[i, 1],
               CLASS_NAMES[int(mesh.node_class[i])],
               "" if np.isnan(value) else value)
