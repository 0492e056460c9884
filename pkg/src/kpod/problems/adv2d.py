"""Steady 2-d advection-diffusion benchmark around a circular island.

A Gaussian source on the left boundary of the square [-1, 1]^2 (with a
circular hole of radius 0.3 at the origin) is transported by a potential
flow of average module 10 at a configurable inclination angle and diffused
with nu = 1e-2. Linear triangles, Galerkin assembly without convection
stabilization, Dirichlet inlet handled by lifting.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..kpca import KernelSpec, MasslessTraceError, centroid_1d, fallback_centroid
from ..reduction import SnapshotSet

__all__ = [
    "Mesh2D",
    "MeshFormatError",
    "build_mesh_2d",
    "save_mesh",
    "load_mesh",
    "potential_flow",
    "flow_fields",
    "assemble_2d",
    "solve_full",
    "classify_regime",
    "campaign_2d",
    "kernel_spec_2d",
]

HOLE_RADIUS = 0.3
DIFFUSIVITY = 1e-2
SPEED_SCALE = 10.0

MARKER_INTERIOR = 0
MARKER_DIRICHLET = 1
MARKER_BOTTOM = 2
MARKER_RIGHT = 3
MARKER_TOP = 4
MARKER_CIRCLE = 5
MARKER_LEFT_FREE = 6

_GEOM_TOL = 1e-9


class MeshFormatError(ValueError):
    """Malformed mesh file."""


@dataclass(frozen=True)
class Mesh2D:
    """Linear-triangle mesh of the square-with-island domain.

    ``nodes`` is (n, 2); ``triangles`` is (m, 3) with counterclockwise
    0-based vertex indices; ``markers`` labels boundary nodes; ``h`` is the
    element size the mesh was generated at.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    markers: np.ndarray
    h: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "markers", np.asarray(self.markers, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def element_geometry(self):
        """Areas and hat-function gradients per element.

        Returns (areas, grads) with ``areas`` (m,) and ``grads`` (m, 2, 3);
        ``grads[e, :, l]`` is the gradient of the hat function of local
        vertex l on element e.
        """
        p = self.nodes[self.triangles]         # (m, 3, 2)
        x, y = p[:, :, 0], p[:, :, 1]
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        twice_area = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        areas = 0.5 * twice_area
        grads = np.stack([b, c], axis=1) / twice_area[:, None, None]
        return areas, grads

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges (sorted node pairs) belonging to exactly one triangle."""
        tri = self.triangles
        edges = np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]

    def dirichlet_nodes(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.nodes[:, 0] + 1.0) <= _GEOM_TOL)

    def circle_nodes(self) -> np.ndarray:
        radius = np.hypot(self.nodes[:, 0], self.nodes[:, 1])
        return np.flatnonzero(np.abs(radius - HOLE_RADIUS) <= 1e-6)

    def trace_dirichlet(self, u: np.ndarray):
        """Inlet trace: solution on x = -1 against the y coordinate."""
        idx = self.dirichlet_nodes()
        order = np.argsort(self.nodes[idx, 1], kind="stable")
        idx = idx[order]
        return self.nodes[idx, 1], np.asarray(u)[idx]

    def trace_outlet(self, u: np.ndarray):
        """Outlet trace along the bottom-then-right boundary.

        Arclength runs from (-1, -1) along y = -1 to (1, -1), then up
        x = 1 to (1, 1), so s spans [0, 4] with the corner at s = 2.
        """
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        bottom = np.flatnonzero(np.abs(y + 1.0) <= _GEOM_TOL)
        bottom = bottom[np.argsort(x[bottom], kind="stable")]
        right = np.flatnonzero(np.abs(x - 1.0) <= _GEOM_TOL)
        right = right[np.argsort(y[right], kind="stable")]
        s_bottom = x[bottom] + 1.0
        s_right = 2.0 + (y[right] + 1.0)
        # The corner (1, -1) sits in both segments; keep it once.
        if bottom.size and right.size and bottom[-1] == right[0]:
            right = right[1:]
            s_right = s_right[1:]
        idx = np.concatenate([bottom, right])
        s = np.concatenate([s_bottom, s_right])
        return s, np.asarray(u)[idx]


def _assign_markers(nodes: np.ndarray) -> np.ndarray:
    markers = np.full(nodes.shape[0], MARKER_INTERIOR, dtype=np.int64)
    x, y = nodes[:, 0], nodes[:, 1]
    radius = np.hypot(x, y)
    markers[np.abs(y - 1.0) <= _GEOM_TOL] = MARKER_TOP
    markers[np.abs(x - 1.0) <= _GEOM_TOL] = MARKER_RIGHT
    markers[np.abs(y + 1.0) <= _GEOM_TOL] = MARKER_BOTTOM
    markers[np.abs(radius - HOLE_RADIUS) <= 1e-6] = MARKER_CIRCLE
    markers[np.abs(x + 1.0) <= _GEOM_TOL] = MARKER_DIRICHLET
    return markers


def _signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def _flip_inverted(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Repair inverted triangles by diagonal flips with a neighbor."""
    triangles = [tuple(int(v) for v in t) for t in triangles]
    floor = 1e-14

    def area(t):
        (x0, y0), (x1, y1), (x2, y2) = nodes[list(t)]
        return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))

    for _ in range(256):
        edge_map = {}
        for ti, t in enumerate(triangles):
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                edge_map.setdefault(frozenset((a, b)), []).append(ti)
        bad = [ti for ti, t in enumerate(triangles) if area(t) <= floor]
        if not bad:
            return np.array(triangles, dtype=np.int64)
        flipped = False
        for ti in bad:
            t = triangles[ti]
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                owners = edge_map[frozenset((a, b))]
                if len(owners) != 2:
                    continue
                tj = owners[0] if owners[1] == ti else owners[1]
                c = next(v for v in t if v not in (a, b))
                d = next(v for v in triangles[tj] if v not in (a, b))
                new1, new2 = (a, d, c), (b, c, d)
                if area(new1) > floor and area(new2) > floor:
                    triangles[ti] = new1
                    triangles[tj] = new2
                    flipped = True
                    break
            if flipped:
                break
        if not flipped:
            raise ValueError("mesh repair failed: inverted triangle without a valid flip")
    raise ValueError("mesh repair failed: flip iteration did not converge")


def build_mesh_2d(h: float = 0.02) -> Mesh2D:
    """Structured triangulation of the square with the circular island cut out.

    Splits every grid cell into two triangles, removes triangles whose
    vertices all lie strictly inside the island, projects surviving inside
    nodes radially onto the circle, and repairs any inverted triangles by
    local edge flips.
    """
    if not 0.0 < h < HOLE_RADIUS:
        raise ValueError("element size must lie in (0, 0.3)")
    nx = max(2, round(2.0 / h))
    coords = np.linspace(-1.0, 1.0, nx + 1)
    xx, yy = np.meshgrid(coords, coords)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def node_id(ix, iy):
        return iy * (nx + 1) + ix

    triangles = []
    for iy in range(nx):
        for ix in range(nx):
            a = node_id(ix, iy)
            b = node_id(ix + 1, iy)
            c = node_id(ix + 1, iy + 1)
            d = node_id(ix, iy + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    triangles = np.array(triangles, dtype=np.int64)

    radius = np.hypot(nodes[:, 0], nodes[:, 1])
    inside = radius < HOLE_RADIUS - 1e-12
    keep = ~np.all(inside[triangles], axis=1)
    triangles = triangles[keep]

    used = np.unique(triangles)
    renumber = -np.ones(nodes.shape[0], dtype=np.int64)
    renumber[used] = np.arange(used.size)
    nodes = nodes[used]
    triangles = renumber[triangles]

    radius = np.hypot(nodes[:, 0], nodes[:, 1])
    inside = np.flatnonzero(radius < HOLE_RADIUS - 1e-12)
    for i in inside:
        r = radius[i]
        if r < 1e-12:
            # Projection direction undefined at the origin; use a fixed
            # diagonal so coarse meshes stay free of coincident nodes.
            nodes[i] = HOLE_RADIUS * np.array([1.0, 1.0]) / np.sqrt(2.0)
        else:
            nodes[i] = nodes[i] * (HOLE_RADIUS / r)

    # A projected node can land exactly on an existing circle node (grid
    # nodes collinear with the origin); weld such pairs and drop the
    # triangles they degenerate.
    keys = np.round(nodes / 1e-9).astype(np.int64)
    first: dict = {}
    remap = np.arange(nodes.shape[0])
    for i, key in enumerate(map(tuple, keys)):
        remap[i] = first.setdefault(key, i)
    triangles = remap[triangles]
    degenerate = (
        (triangles[:, 0] == triangles[:, 1])
        | (triangles[:, 1] == triangles[:, 2])
        | (triangles[:, 2] == triangles[:, 0])
    )
    triangles = triangles[~degenerate]
    used = np.unique(triangles)
    renumber = -np.ones(nodes.shape[0], dtype=np.int64)
    renumber[used] = np.arange(used.size)
    nodes = nodes[used]
    triangles = renumber[triangles]

    if np.any(_signed_areas(nodes, triangles) <= 0):
        triangles = _flip_inverted(nodes, triangles)

    mesh = Mesh2D(nodes=nodes, triangles=triangles, markers=_assign_markers(nodes), h=2.0 / nx)
    areas = mesh.element_geometry[0]
    if np.any(areas <= 0):
        raise ValueError("mesh generation produced a nonpositive triangle area")
    return mesh


def save_mesh(mesh: Mesh2D, path) -> None:
    """Plain-text mesh format: header, then nodes `x y marker`, then 1-based triangles."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}\n")
        for (x, y), marker in zip(mesh.nodes, mesh.markers):
            fh.write(f"{x!r} {y!r} {int(marker)}\n")
        for i, j, k in mesh.triangles + 1:
            fh.write(f"{i} {j} {k}\n")


def load_mesh(path, h: float = 0.0) -> Mesh2D:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MeshFormatError("line 1: empty mesh file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "nodes" or header[2] != "triangles":
        raise MeshFormatError("line 1: expected header 'nodes N triangles T'")
    try:
        n_nodes, n_triangles = int(header[1]), int(header[3])
    except ValueError as exc:
        raise MeshFormatError(f"line 1: {exc}") from exc
    if len(lines) < 1 + n_nodes + n_triangles:
        raise MeshFormatError(f"line {len(lines) + 1}: truncated file")
    nodes = np.empty((n_nodes, 2))
    markers = np.empty(n_nodes, dtype=np.int64)
    for row in range(n_nodes):
        parts = lines[1 + row].split()
        try:
            nodes[row] = (float(parts[0]), float(parts[1]))
            markers[row] = int(parts[2])
        except (IndexError, ValueError) as exc:
            raise MeshFormatError(f"line {2 + row}: {exc}") from exc
    triangles = np.empty((n_triangles, 3), dtype=np.int64)
    for row in range(n_triangles):
        parts = lines[1 + n_nodes + row].split()
        try:
            triangles[row] = [int(p) - 1 for p in parts[:3]]
        except (IndexError, ValueError) as exc:
            raise MeshFormatError(f"line {2 + n_nodes + row}: {exc}") from exc
    if triangles.size and (triangles.min() < 0 or triangles.max() >= n_nodes):
        raise MeshFormatError("triangle indices out of range")
    return Mesh2D(nodes=nodes, triangles=triangles, markers=markers, h=h)


def _laplace_matrix(mesh: Mesh2D, diffusivity: float) -> sp.csr_matrix:
    areas, grads = mesh.element_geometry
    tri = mesh.triangles
    local = diffusivity * areas[:, None, None] * np.einsum("eil,eim->elm", grads, grads)
    rows, cols, vals = [], [], []
    for l in range(3):
        for m in range(3):
            rows.append(tri[:, l])
            cols.append(tri[:, m])
            vals.append(local[:, l, m])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )


def _advection_matrix(mesh: Mesh2D, velocity: np.ndarray) -> sp.csr_matrix:
    # Row l: integral of hat_l (v . grad hat_m) = (area/3) (v . grad hat_m).
    areas, grads = mesh.element_geometry
    tri = mesh.triangles
    v_dot_grad = np.einsum("ei,eim->em", velocity, grads)
    rows, cols, vals = [], [], []
    for l in range(3):
        for m in range(3):
            rows.append(tri[:, l])
            cols.append(tri[:, m])
            vals.append(areas / 3.0 * v_dot_grad[:, m])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )


def _side_edges(mesh: Mesh2D, side: str) -> list:
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    tests = {
        "left": np.abs(x + 1.0) <= _GEOM_TOL,
        "right": np.abs(x - 1.0) <= _GEOM_TOL,
        "top": np.abs(y - 1.0) <= _GEOM_TOL,
        "bottom": np.abs(y + 1.0) <= _GEOM_TOL,
    }[side]
    return [edge for edge in mesh.boundary_edges if tests[edge[0]] and tests[edge[1]]]


def potential_flow(mesh: Mesh2D, direction: str) -> np.ndarray:
    """Per-element unit flow field derived from a potential.

    Solves a Laplace problem with unit influx on the left (horizontal flow)
    or top (vertical flow) side, matching outflux on the opposite side, and
    natural conditions elsewhere; the nullspace is fixed by pinning the
    lowest-index node to zero. Returns the per-element velocity
    -grad(potential), shape (n_triangles, 2).
    """
    if direction == "horizontal":
        influx, outflux = "left", "right"
    elif direction == "vertical":
        influx, outflux = "top", "bottom"
    else:
        raise ValueError(f"unknown flow direction {direction!r}")

    K = _laplace_matrix(mesh, 1.0).tolil()
    f = np.zeros(mesh.n_nodes)
    for sign, side in ((1.0, influx), (-1.0, outflux)):
        for a, b in _side_edges(mesh, side):
            length = float(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]))
            f[a] += sign * 0.5 * length
            f[b] += sign * 0.5 * length
    K[0, :] = 0.0
    K[0, 0] = 1.0
    f[0] = 0.0
    phi = spla.spsolve(K.tocsc(), f)
    if not np.all(np.isfinite(phi)):
        raise ValueError("potential-flow solve failed: singular assembly")
    _, grads = mesh.element_geometry
    phi_local = phi[mesh.triangles]                      # (m, 3)
    return -np.einsum("eim,em->ei", grads, phi_local)


def flow_fields(mesh: Mesh2D):
    """Unit horizontal and vertical potential-flow fields of a mesh."""
    return potential_flow(mesh, "horizontal"), potential_flow(mesh, "vertical")


def dirichlet_profile(y: np.ndarray, mu_src: float, sigma: float) -> np.ndarray:
    """Gaussian source profile imposed on the inlet boundary."""
    return np.exp(-((y - mu_src) ** 2) / (2.0 * sigma**2)) / (sigma * np.sqrt(2.0 * np.pi))


def assemble_2d(
    mesh: Mesh2D,
    alpha_deg: float,
    mu_src: float,
    nu: float = DIFFUSIVITY,
    flows=None,
    dirichlet_values=None,
):
    """Assemble the steady advection-diffusion system.

    The advection field is ``10 (v_x cos(alpha) + v_y sin(alpha))`` built
    from the unit potential flows. Inlet values are the Gaussian source of
    width ``sigma = 2 h`` centered at ``mu_src`` (or explicit
    ``dirichlet_values``, a callable of y or an array over the inlet
    nodes). Dirichlet rows and columns are eliminated by lifting: the known
    values move to the right-hand side and the rows become identities, so
    the returned sparse ``K`` and ``f`` keep the full nodal dimension and
    the solution vector carries the inlet values.
    """
    if flows is None:
        flows = flow_fields(mesh)
    vx, vy = flows
    alpha = np.deg2rad(alpha_deg)
    velocity = SPEED_SCALE * (vx * np.cos(alpha) + vy * np.sin(alpha))
    K = _laplace_matrix(mesh, nu) + _advection_matrix(mesh, velocity)

    dirichlet = mesh.dirichlet_nodes()
    y_d = mesh.nodes[dirichlet, 1]
    if dirichlet_values is None:
        values = dirichlet_profile(y_d, mu_src, 2.0 * mesh.h)
    elif callable(dirichlet_values):
        values = np.asarray(dirichlet_values(y_d), dtype=float)
    else:
        values = np.asarray(dirichlet_values, dtype=float)

    lifted = np.zeros(mesh.n_nodes)
    lifted[dirichlet] = values
    f = -np.asarray(K @ lifted)
    K = K.tolil()
    K[dirichlet, :] = 0.0
    K[:, dirichlet] = 0.0
    for node in dirichlet:
        K[node, node] = 1.0
    f[dirichlet] = values
    return K.tocsr(), f


def solve_full(K, f: np.ndarray) -> np.ndarray:
    """Sparse direct solve of the assembled system."""
    return spla.spsolve(K.tocsc(), f)


def classify_regime(u: np.ndarray, mesh: Mesh2D) -> str:
    """Wake classification: crossing, above, or below the island.

    Crossing means the solution exceeds 0.1 at some island node. Otherwise
    the wake is above when the outlet-trace centroid sits on the upper half
    of the right segment (arclength s > 3), and below in any other case.
    """
    circle = mesh.circle_nodes()
    if circle.size and float(np.max(np.asarray(u)[circle])) > 0.1:
        return "crossing"
    s, trace = mesh.trace_outlet(u)
    try:
        centroid = centroid_1d(trace, s)
    except MasslessTraceError:
        centroid = fallback_centroid(s[0], s[-1])
    return "above" if centroid.position > 3.0 else "below"


def campaign_2d(
    n_snapshots: int,
    seed: int,
    mesh: Mesh2D | None = None,
    h: float = 0.02,
    nu: float = DIFFUSIVITY,
    jobs: int = 1,
) -> SnapshotSet:
    """Random snapshot campaign over source position and flow angle.

    Draws ``n_snapshots`` parameter pairs uniformly from
    [-0.8, 0.8] x [10, 80] degrees with the given seed and solves the full
    system for each. Solves are independent and run on up to ``jobs``
    threads; results are ordered by draw index either way.
    """
    if n_snapshots < 3:
        raise ValueError("campaign needs at least 3 snapshots")
    if mesh is None:
        mesh = build_mesh_2d(h)
    rng = np.random.default_rng(seed)
    mu_src = rng.uniform(-0.8, 0.8, size=n_snapshots)
    alpha = rng.uniform(10.0, 80.0, size=n_snapshots)
    flows = flow_fields(mesh)

    def solve_one(i):
        K, f = assemble_2d(mesh, alpha[i], mu_src[i], nu, flows)
        return solve_full(K, f)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            columns = list(pool.map(solve_one, range(n_snapshots)))
    else:
        columns = [solve_one(i) for i in range(n_snapshots)]
    return SnapshotSet(
        X=np.column_stack(columns),
        params=np.column_stack([mu_src, alpha]),
        param_names=("mu_src", "alpha_deg"),
    )


def kernel_spec_2d(mesh: Mesh2D, beta: float = 1e-3) -> KernelSpec:
    """Boundary-trace centroid kernel over the benchmark mesh."""
    return KernelSpec(kind="centroid-2d", beta=beta, geometry=mesh)
