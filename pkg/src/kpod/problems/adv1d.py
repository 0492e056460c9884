"""Transient 1-d advection-diffusion benchmark.

A Gaussian bump on (0, 4) is advected to the right and diffused, with
homogeneous Dirichlet ends. Space is discretized by centered finite
differences on a uniform grid, time by Crank-Nicolson, so each step solves
``A(v) u^{n+1} = D(v) u^n`` with tridiagonal A and D acting on the
interior unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..kpca import KernelSpec, forward_map
from ..reduction import ReducedBasis, SnapshotSet, rb_solve_galerkin

__all__ = [
    "Grid1D",
    "MarchResult",
    "assemble_1d",
    "integrate_1d",
    "campaign_1d",
    "kernel_spec_1d",
    "relative_errors",
]

DIFFUSIVITY = 5e-3
SOURCE_CENTER = 0.6
SOURCE_WIDTH = 0.02


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [0, 4] with Dirichlet ends eliminated.

    The interior unknowns number ``n_intervals - 1``; full nodal profiles
    (including the zero boundary values) are recovered with
    :meth:`pad_dirichlet`.
    """

    interval: tuple = (0.0, 4.0)
    n_intervals: int = 2000
    dt: float = 0.005
    n_steps: int = 250

    def __post_init__(self):
        if self.n_intervals < 2:
            raise ValueError("need at least two intervals")
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("invalid time discretization")

    @property
    def h(self) -> float:
        a, b = self.interval
        return (b - a) / self.n_intervals

    @property
    def nodes(self) -> np.ndarray:
        a, b = self.interval
        return np.linspace(a, b, self.n_intervals + 1)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def n_interior(self) -> int:
        return self.n_intervals - 1

    def pad_dirichlet(self, u: np.ndarray) -> np.ndarray:
        """Interior state extended by the homogeneous boundary values."""
        padded = np.zeros(self.n_intervals + 1)
        padded[1:-1] = u
        return padded

    def initial_condition(self) -> np.ndarray:
        """Gaussian bump (amplitude 1, width 0.02, centered at 0.6), interior values."""
        x = self.interior_nodes
        return np.exp(-0.5 * ((x - SOURCE_CENTER) / SOURCE_WIDTH) ** 2)


def assemble_1d(v: float, grid: Grid1D, nu: float = DIFFUSIVITY):
    """Crank-Nicolson step matrices for ``u_t + v u_x - nu u_xx = 0``.

    Returns the pair (A, D) of sparse tridiagonal operators on the interior
    unknowns such that ``A u^{n+1} = D u^n``, with
    ``A = I + (dt/2)(v C - nu L)`` and ``D = I - (dt/2)(v C - nu L)``,
    where C is the centered first difference and L the second difference.
    """
    n = grid.n_interior
    h = grid.h
    main = np.ones(n)
    C = sp.diags([-np.ones(n - 1), np.zeros(n), np.ones(n - 1)], [-1, 0, 1]) / (2 * h)
    L = sp.diags([np.ones(n - 1), -2 * main, np.ones(n - 1)], [-1, 0, 1]) / h**2
    transport = v * C - nu * L
    identity = sp.identity(n)
    A = (identity + 0.5 * grid.dt * transport).tocsc()
    D = (identity - 0.5 * grid.dt * transport).tocsr()
    return A, D


@dataclass(frozen=True)
class MarchResult:
    """Time march output: interior states per step plus per-step path traces."""

    states: np.ndarray          # (n_interior, n_steps + 1)
    times: np.ndarray
    v: float
    strategy: str
    traces: tuple = field(default=())

    def state_at_step(self, n: int) -> np.ndarray:
        return self.states[:, n]

    @property
    def mean_path_steps(self) -> float:
        if not self.traces:
            raise ValueError("no path traces recorded")
        return float(np.mean([len(t.iterates) for t in self.traces]))

    @property
    def mean_ktilde(self) -> float:
        if not self.traces:
            raise ValueError("no path traces recorded")
        return float(np.mean([it.ktilde for t in self.traces for it in t.iterates]))


def integrate_1d(
    v: float,
    strategy: str,
    grid: Grid1D,
    *,
    n_steps: int | None = None,
    nu: float = DIFFUSIVITY,
    pod_basis: ReducedBasis | None = None,
    model=None,
    geom=None,
    level: int = 1,
    eps: float = 1e-8,
) -> MarchResult:
    """March the benchmark in time with the requested solution strategy.

    strategy
        ``"full"`` factors A once and solves the full-order system each
        step. ``"pod"`` projects each step onto ``pod_basis`` (a global
        centered basis). ``"kpod"`` solves each step with the optimal-path
        iteration at base connectivity ``level``, seeded with the forward
        image of the previous state; requires ``model`` and ``geom``.
    """
    from ..online import optimal_path

    if n_steps is None:
        n_steps = grid.n_steps
    A, D = assemble_1d(v, grid, nu)
    u = grid.initial_condition()
    states = np.empty((grid.n_interior, n_steps + 1))
    states[:, 0] = u
    traces = []

    if strategy == "full":
        lu = spla.splu(A)
        for n in range(n_steps):
            u = lu.solve(D @ u)
            states[:, n + 1] = u
    elif strategy == "pod":
        if pod_basis is None:
            raise ValueError("pod strategy requires a global basis")
        for n in range(n_steps):
            u = rb_solve_galerkin(A, D @ u, pod_basis)
            states[:, n + 1] = u
    elif strategy == "kpod":
        if model is None or geom is None:
            raise ValueError("kpod strategy requires a fitted model and geometry")
        snapshots = model.snapshots
        cache: dict = {}
        for n in range(n_steps):
            z0 = forward_map(u, model)
            u, trace = optimal_path(
                z0, level, A, D @ u, geom, model, snapshots, eps, cache=cache
            )
            states[:, n + 1] = u
            traces.append(trace)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    times = grid.dt * np.arange(n_steps + 1)
    return MarchResult(
        states=states, times=times, v=v, strategy=strategy, traces=tuple(traces)
    )


def campaign_1d(
    grid: Grid1D | None = None,
    n_velocities: int = 10,
    v_range: tuple = (1.0, 2.0),
    snapshot_stride: int = 5,
    nu: float = DIFFUSIVITY,
) -> SnapshotSet:
    """Offline snapshot campaign over equispaced advection velocities.

    Collects the initial condition once, then for every velocity the
    full-order states at steps ``stride, 2 stride, ..., n_steps``. Each
    snapshot records its (velocity, time) parameters; the shared initial
    condition is stored with parameters (0, 0).
    """
    if grid is None:
        grid = Grid1D()
    velocities = np.linspace(v_range[0], v_range[1], n_velocities)
    columns = [grid.initial_condition()]
    params = [(0.0, 0.0)]
    for v in velocities:
        result = integrate_1d(v, "full", grid, nu=nu)
        for n in range(snapshot_stride, grid.n_steps + 1, snapshot_stride):
            columns.append(result.state_at_step(n))
            params.append((float(v), float(n * grid.dt)))
    return SnapshotSet(
        X=np.column_stack(columns),
        params=np.array(params),
        param_names=("v", "t"),
    )


def kernel_spec_1d(grid: Grid1D, beta: float = 1e-4) -> KernelSpec:
    """Centroid kernel over the benchmark grid."""
    return KernelSpec(kind="centroid-1d", beta=beta, geometry=grid)


def relative_errors(result: MarchResult, reference: MarchResult, steps) -> np.ndarray:
    """Euclidean relative errors against a reference march at given steps."""
    errors = []
    for n in steps:
        ref = reference.state_at_step(n)
        errors.append(
            float(np.linalg.norm(result.state_at_step(n) - ref) / np.linalg.norm(ref))
        )
    return np.array(errors)
