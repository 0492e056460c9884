"""Delaunay adjacency and patch extraction in the reduced space.

Sites are the columns of the reduced snapshot matrix Z. Dimension 1 uses
sorted-order adjacency; dimensions 2 and 3 run an incremental
Bowyer-Watson insertion over a super-simplex, on coordinates perturbed by
a tiny deterministic jitter that resolves cocircular and collinear input.
Voronoi membership is nearest-site search, never an explicit diagram.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReducedGeometry",
    "Patch",
    "build_geometry",
    "locate_cell",
    "patch",
    "min_patch_size",
]

JITTER_SCALE = 1e-9
MAX_DIM = 3


@dataclass(frozen=True)
class ReducedGeometry:
    """Sites in the reduced space plus their Delaunay 1-ring adjacency."""

    Z: np.ndarray                       # (k, n_S)
    adjacency: tuple                    # tuple of sorted neighbor tuples

    def __post_init__(self):
        object.__setattr__(self, "Z", np.asarray(self.Z, dtype=float))

    @property
    def dim(self) -> int:
        return self.Z.shape[0]

    @property
    def n_sites(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class Patch:
    """Index set around a center site at a given connectivity level."""

    center: int
    level: int
    indices: tuple

    def __len__(self) -> int:
        return len(self.indices)


def min_patch_size(dim: int, level: int) -> int:
    """Minimum enforced patch size for a reduced dimension and level."""
    if dim == 1:
        return 2 * level + 1
    return (2 * level + 1) * dim + 1


def _jittered(points: np.ndarray) -> np.ndarray:
    # Deterministic per-index jitter breaks cocircular/collinear ties while
    # leaving the stored sites untouched.
    diameter = float(np.max(points.max(axis=0) - points.min(axis=0)))
    if diameter == 0.0:
        raise ValueError("degenerate reduced cloud: all sites coincide")
    out = points.copy()
    for i in range(points.shape[0]):
        rng = np.random.default_rng(i)
        out[i] += JITTER_SCALE * diameter * rng.uniform(-1.0, 1.0, size=points.shape[1])
    return out


def _circumsphere(vertices: np.ndarray):
    """Circumcenter and squared radius of a d-simplex in d dimensions."""
    p0 = vertices[0]
    A = 2.0 * (vertices[1:] - p0)
    b = np.sum(vertices[1:] ** 2, axis=1) - np.sum(p0**2)
    center = np.linalg.solve(A, b)
    radius_sq = float(np.sum((p0 - center) ** 2))
    return center, radius_sq


def _bowyer_watson(points: np.ndarray, margin: float):
    """One insertion pass over a super-simplex of the given margin."""
    n, dim = points.shape
    mid = 0.5 * (points.min(axis=0) + points.max(axis=0))

    # Super-simplex far outside the cloud; its vertices use indices
    # n .. n+dim and are stripped at the end.
    super_vertices = np.vstack(
        [mid - margin, *(mid + margin * (dim + 1) * np.eye(dim)[i] for i in range(dim))]
    )
    coords = np.vstack([points, super_vertices])

    simplices = {}
    first = tuple(range(n, n + dim + 1))
    simplices[first] = _circumsphere(coords[list(first)])

    for p in range(n):
        point = coords[p]
        bad = [
            s
            for s, (center, radius_sq) in simplices.items()
            if np.sum((point - center) ** 2) < radius_sq
        ]
        # Facets of the cavity: those not shared by two bad simplices.
        facet_count = {}
        for s in bad:
            for facet in itertools.combinations(s, dim):
                facet_count[facet] = facet_count.get(facet, 0) + 1
            del simplices[s]
        for facet, count in facet_count.items():
            if count != 1:
                continue
            new_simplex = tuple(sorted(facet + (p,)))
            simplices[new_simplex] = _circumsphere(coords[list(new_simplex)])

    return [s for s in simplices if all(v < n for v in s)]


def _hull_is_convex(points: np.ndarray, simplices, tol: float) -> bool:
    """Every facet owned by exactly one simplex must support the whole cloud.

    A finite super-simplex steals hull caps whose circumspheres are larger
    than the margin; the stolen region shows up as a non-convex boundary.
    """
    dim = points.shape[1]
    facet_count = {}
    for s in simplices:
        for facet in itertools.combinations(s, dim):
            facet_count[facet] = facet_count.get(facet, 0) + 1
    for facet, count in facet_count.items():
        if count != 1:
            continue
        vertices = points[list(facet)]
        if dim == 2:
            tangent = vertices[1] - vertices[0]
            normal = np.array([-tangent[1], tangent[0]])
        else:
            normal = np.cross(vertices[1] - vertices[0], vertices[2] - vertices[0])
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            return False
        distances = (points - vertices[0]) @ (normal / norm)
        if min(distances.max(), -distances.min()) > tol:
            return False
    return True


def _delaunay_simplices(points: np.ndarray):
    """Bowyer-Watson insertion; returns simplices as vertex-index tuples.

    Near-degenerate hull caps have circumspheres that can swallow the
    super-simplex vertices, which silently deletes hull simplices; the
    margin is enlarged until the resulting boundary is convex.
    """
    span = float(np.max(points.max(axis=0) - points.min(axis=0)))
    for factor in (1e5, 1e7, 1e9):
        simplices = _bowyer_watson(points, factor * span)
        if _hull_is_convex(points, simplices, 1e-9 * span):
            return simplices
    raise ValueError(
        "tessellation failed: hull not resolved at the largest super-simplex margin"
    )


def build_geometry(Z: np.ndarray) -> ReducedGeometry:
    """Delaunay adjacency over the columns of Z.

    Supports reduced dimensions 1 through 3. Requires at least dim + 1
    distinct sites; a fully coincident cloud is rejected.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Z must be a k x n_S matrix")
    dim, n = Z.shape
    if dim > MAX_DIM:
        raise ValueError(
            f"reduced dimension {dim} not supported: the tessellation is "
            f"implemented for dimensions 1 to {MAX_DIM}"
        )
    points = Z.T.copy()
    distinct = np.unique(points, axis=0).shape[0]
    if distinct < dim + 1:
        if distinct <= 1:
            raise ValueError("degenerate reduced cloud: all sites coincide")
        raise ValueError(
            f"need at least {dim + 1} distinct sites in dimension {dim}, got {distinct}"
        )

    neighbors = [set() for _ in range(n)]
    if dim == 1:
        order = np.argsort(points[:, 0], kind="stable")
        for a, b in zip(order[:-1], order[1:]):
            neighbors[a].add(int(b))
            neighbors[b].add(int(a))
    else:
        for simplex in _delaunay_simplices(_jittered(points)):
            for a, b in itertools.combinations(simplex, 2):
                neighbors[a].add(int(b))
                neighbors[b].add(int(a))

    adjacency = tuple(tuple(sorted(s)) for s in neighbors)
    return ReducedGeometry(Z=Z, adjacency=adjacency)


def locate_cell(z: np.ndarray, geom: ReducedGeometry) -> int:
    """Index of the nearest site (Voronoi membership); ties take the lowest index."""
    z = np.asarray(z, dtype=float)
    distances = np.sum((geom.Z - z[:, None]) ** 2, axis=0)
    return int(np.argmin(distances))


def patch(center: int, level: int, geom: ReducedGeometry) -> Patch:
    """Sites within Delaunay graph distance ``level`` of ``center``.

    When the closure is smaller than the enforced minimum for the reduced
    dimension and level, the nearest remaining sites (by reduced-space
    distance to the center) are added until the minimum is met.
    """
    if level < 1:
        raise ValueError("connectivity level must be >= 1")
    members = {center}
    frontier = {center}
    for _ in range(level):
        frontier = {
            n for site in frontier for n in geom.adjacency[site]
        } - members
        members |= frontier
    minimum = min(min_patch_size(geom.dim, level), geom.n_sites)
    if len(members) < minimum:
        outside = [i for i in range(geom.n_sites) if i not in members]
        z_center = geom.Z[:, center]
        outside.sort(key=lambda i: (float(np.sum((geom.Z[:, i] - z_center) ** 2)), i))
        members.update(outside[: minimum - len(members)])
    return Patch(center=center, level=level, indices=tuple(sorted(members)))
