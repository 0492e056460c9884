"""Online phase: local reduced solves and the optimal-path iteration.

Each query walks the reduced space cell by cell. In the current cell a
patch of neighboring snapshots defines a locally centered, quadratically
enriched basis; a Galerkin solve on it yields a candidate state whose
forward image decides the next cell. When the image stays in the current
cell (or returns to an already visited one), the solve is repeated once
with an extra connectivity level; if the image still does not move, that
escalated solution is final.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Patch, ReducedGeometry, locate_cell, patch
from .kpca import KpcaModel, forward_map
from .reduction import (
    ReducedBasis,
    SingularReducedSystem,
    SnapshotSet,
    quadratic_basis,
    rb_solve_galerkin,
    svd_truncate,
)

__all__ = [
    "LocalModel",
    "PathIterate",
    "PathTrace",
    "LocalSolveError",
    "local_model",
    "kpod_iterate",
    "optimal_path",
    "init_guess",
    "qpod_solve",
]

MAX_PATH_ITERATIONS = 25


class LocalSolveError(RuntimeError):
    """Reduced solve failed inside a patch; carries cell and local rank."""

    def __init__(self, cell: int, ktilde: int, cause: Exception):
        self.cell = cell
        self.ktilde = ktilde
        super().__init__(f"local solve failed in cell {cell} (ktilde={ktilde}): {cause}")


@dataclass(frozen=True)
class LocalModel:
    """Local mean and truncated basis of one patch."""

    patch: Patch
    basis: ReducedBasis     # offset = local snapshot mean

    @property
    def ktilde(self) -> int:
        return self.basis.rank


@dataclass(frozen=True)
class PathIterate:
    """One solve along the optimal path."""

    z: np.ndarray
    cell: int
    level: int
    ktilde: int
    residual: float


@dataclass(frozen=True)
class PathTrace:
    """Sequence of solves of one query plus the termination status."""

    iterates: tuple
    status: str             # "converged" | "max-iterations"

    def __len__(self) -> int:
        return len(self.iterates)

    def as_rows(self):
        """Rows (step, cell, level, ktilde, residual) for CSV export."""
        return [
            (nu, it.cell, it.level, it.ktilde, it.residual)
            for nu, it in enumerate(self.iterates)
        ]


def local_model(
    patch_: Patch,
    snapshots: SnapshotSet,
    eps: float,
    quadratic: bool = True,
) -> LocalModel:
    """Centered local basis of a patch, truncated at tolerance ``eps``.

    The local snapshots are centered at their unweighted mean; with
    ``quadratic`` enabled the centered columns are enriched with their
    pairwise Hadamard products before truncation.
    """
    X_local = snapshots.subset(patch_.indices)
    center = X_local.mean(axis=1)
    if quadratic:
        B = quadratic_basis(X_local, center)
    else:
        B = X_local - center[:, None]
    basis = svd_truncate(B, eps).with_offset(center)
    return LocalModel(patch=patch_, basis=basis)


def _model_for_cell(cell, level, geom, snapshots, eps, quadratic, cache, all_snapshots):
    if all_snapshots:
        key = ("all", quadratic)
        patch_ = Patch(center=cell, level=level, indices=tuple(range(geom.n_sites)))
    else:
        key = (cell, level, quadratic)
        patch_ = patch(cell, level, geom)
    if cache is not None and key in cache:
        return cache[key]
    lm = local_model(patch_, snapshots, eps, quadratic)
    if cache is not None:
        cache[key] = lm
    return lm


def kpod_iterate(
    z: np.ndarray,
    level: int,
    K,
    f: np.ndarray,
    geom: ReducedGeometry,
    model: KpcaModel,
    snapshots: SnapshotSet,
    eps: float,
    *,
    quadratic: bool = True,
    cache: dict | None = None,
):
    """One local solve at a reduced-space point.

    Locates the cell of ``z``, builds the local model of its patch at the
    given connectivity level, solves the projected system and maps the
    solution forward. Returns ``(x, z_new, cell, ktilde)``.
    """
    cell = locate_cell(z, geom)
    lm = _model_for_cell(cell, level, geom, snapshots, eps, quadratic, cache, False)
    try:
        x = rb_solve_galerkin(K, f, lm.basis)
    except SingularReducedSystem as exc:
        raise LocalSolveError(cell, lm.ktilde, exc) from exc
    return x, forward_map(x, model), cell, lm.ktilde


def optimal_path(
    z0: np.ndarray,
    level: int,
    K,
    f: np.ndarray,
    geom: ReducedGeometry,
    model: KpcaModel,
    snapshots: SnapshotSet,
    eps: float,
    *,
    quadratic: bool = True,
    cache: dict | None = None,
    max_iterations: int = MAX_PATH_ITERATIONS,
    all_snapshots: bool = False,
):
    """Optimal-path query starting from the reduced point ``z0``.

    Iterates local solves at base connectivity ``level``. When the forward
    image of a solution lands in the cell just solved, or in a cell already
    visited, one extra solve at ``level + 1`` is performed there; if its
    image stays put the iteration stops and that escalated solution is
    returned. Non-convergent queries terminate with the best-residual
    iterate and status ``"max-iterations"``, either at the hard iteration
    cap or as soon as a (cell, level) solve would repeat, which would cycle
    deterministically forever.

    With ``all_snapshots`` the patch is forced to the whole training set at
    every step, which turns the query into a quadratic POD solve.
    """
    iterates = []
    visited: set = set()
    performed: set = set()
    best = None     # (residual, x)

    def solve(cell: int, lvl: int):
        nonlocal best
        if (cell, lvl) in performed:
            return None
        performed.add((cell, lvl))
        lm = _model_for_cell(cell, lvl, geom, snapshots, eps, quadratic, cache, all_snapshots)
        try:
            x = rb_solve_galerkin(K, f, lm.basis)
        except SingularReducedSystem as exc:
            raise LocalSolveError(cell, lm.ktilde, exc) from exc
        z_new = forward_map(x, model)
        residual = float(np.linalg.norm(f - K @ x))
        iterates.append(
            PathIterate(z=z_new, cell=cell, level=lvl, ktilde=lm.ktilde, residual=residual)
        )
        if best is None or residual < best[0]:
            best = (residual, x)
        return x, z_new

    cell = locate_cell(np.asarray(z0, dtype=float), geom)
    while len(iterates) < max_iterations:
        visited.add(cell)
        out = solve(cell, level)
        if out is None:
            break
        x, z_new = out
        landed = locate_cell(z_new, geom)
        if landed != cell and landed not in visited:
            cell = landed
            continue
        # Stagnation or revisit: one extra solve with an additional level.
        if len(iterates) >= max_iterations:
            break
        out = solve(landed, level + 1)
        if out is None:
            break
        x, z_new = out
        visited.add(landed)
        settled = locate_cell(z_new, geom)
        if settled == landed:
            return x, PathTrace(iterates=tuple(iterates), status="converged")
        cell = settled

    return best[1], PathTrace(iterates=tuple(iterates), status="max-iterations")


def init_guess(
    mode: str,
    *,
    model: KpcaModel,
    previous_state: np.ndarray | None = None,
    pod_basis: ReducedBasis | None = None,
    K=None,
    f: np.ndarray | None = None,
) -> np.ndarray:
    """Initial reduced-space point for an optimal-path query.

    ``"from-previous-step"`` maps the previous time-step state forward;
    ``"from-pod"`` solves the global POD system and maps its solution.
    """
    if mode == "from-previous-step":
        if previous_state is None:
            raise ValueError("from-previous-step requires the previous state")
        return forward_map(previous_state, model)
    if mode == "from-pod":
        if pod_basis is None or K is None or f is None:
            raise ValueError("from-pod requires a global basis and the system (K, f)")
        return forward_map(rb_solve_galerkin(K, f, pod_basis), model)
    raise ValueError(f"unknown initial-guess mode {mode!r}")


def qpod_solve(K, f: np.ndarray, snapshots: SnapshotSet, eps: float) -> np.ndarray:
    """Quadratic POD baseline: one Galerkin solve on the global enriched basis."""
    all_indices = Patch(center=0, level=1, indices=tuple(range(snapshots.n_snapshots)))
    lm = local_model(all_indices, snapshots, eps, quadratic=True)
    return rb_solve_galerkin(K, f, lm.basis)
