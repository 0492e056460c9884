"""Truncated-SVD bases and small dense reduced solves.

This module holds the linear algebra shared by every reduction strategy in
the package: energy-criterion truncation of a singular spectrum, Galerkin
and least-squares solves projected onto a reduced basis, and the quadratic
(Hadamard-product) enrichment of a snapshot family.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

__all__ = [
    "Spectrum",
    "ReducedBasis",
    "SnapshotSet",
    "SingularReducedSystem",
    "truncation_rank",
    "svd_truncate",
    "rb_solve_galerkin",
    "rb_solve_least_squares",
    "energy_norm",
    "quadratic_basis",
]

#: Condition-number ceiling for the small dense reduced systems.
CONDITION_LIMIT = 1e14

#: Per-entry tolerance for the orthonormality check of a ReducedBasis.
ORTHONORMALITY_TOL = 1e-10


class SingularReducedSystem(ValueError):
    """Reduced system matrix is singular or numerically unusable.

    Carries the 1-norm condition estimate of the offending matrix in
    ``condition`` (``inf`` for an exactly singular factorization).
    """

    def __init__(self, condition: float, context: str = "reduced system"):
        self.condition = float(condition)
        super().__init__(
            f"{context} is ill-conditioned: condition estimate "
            f"{condition:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )


@dataclass(frozen=True)
class Spectrum:
    """A nonnegative, descending spectrum together with its truncation.

    Parameters
    ----------
    values : ndarray
        Singular values (or Gram eigenvalues), sorted descending, all >= 0.
    rank : int
        Retained rank: the smallest k with
        ``sum(values[:k]) >= (1 - tolerance) * sum(values)``.
    tolerance : float
        Truncation tolerance in (0, 1).
    """

    values: np.ndarray
    rank: int
    tolerance: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("spectrum must be a nonempty 1-d array")
        if np.any(values < 0):
            raise ValueError("spectrum values must be nonnegative")
        if np.any(np.diff(values) > 0):
            raise ValueError("spectrum values must be sorted descending")
        if not 0.0 < self.tolerance < 1.0:
            raise ValueError("tolerance must lie in (0, 1)")
        if not 1 <= self.rank <= values.size:
            raise ValueError("retained rank out of range")

    @property
    def cumulative_fractions(self) -> np.ndarray:
        """Cumulative sums of the values normalized by the total."""
        total = float(np.sum(self.values))
        return np.cumsum(self.values) / total


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal basis of a reduced subspace, with an affine offset.

    ``columns`` is n_d x k with orthonormal columns; ``offset`` is the
    full-order vector the basis is centered at (zero for global bases).
    """

    columns: np.ndarray
    offset: np.ndarray
    spectrum: Spectrum

    def __post_init__(self):
        columns = np.asarray(self.columns, dtype=float)
        offset = np.asarray(self.offset, dtype=float)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "offset", offset)
        if columns.ndim != 2:
            raise ValueError("basis columns must form a 2-d matrix")
        if offset.shape != (columns.shape[0],):
            raise ValueError("offset length must match basis rows")
        gram = columns.T @ columns
        if np.max(np.abs(gram - np.eye(columns.shape[1]))) > ORTHONORMALITY_TOL:
            raise ValueError("basis columns are not orthonormal")

    @property
    def rank(self) -> int:
        return self.columns.shape[1]

    def with_offset(self, offset: np.ndarray) -> "ReducedBasis":
        """Same basis re-centered at ``offset``."""
        return replace(self, offset=np.asarray(offset, dtype=float))

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        """Map reduced coefficients back to a full-order vector."""
        return self.offset + self.columns @ coeffs


@dataclass(frozen=True)
class SnapshotSet:
    """Full-order training states and the parameters that produced them.

    ``X`` stores one snapshot per column (n_d x n_S); ``params`` holds one
    parameter vector per snapshot, row-aligned with the columns of ``X``.
    """

    X: np.ndarray
    params: np.ndarray
    param_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        params = np.asarray(self.params, dtype=float)
        if params.ndim == 1:
            params = params.reshape(-1, 1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "param_names", tuple(self.param_names))
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError("snapshot matrix must be n_d x n_S with n_S >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("snapshots must be finite")
        if params.shape[0] != X.shape[1]:
            raise ValueError("one parameter vector per snapshot is required")

    @property
    def n_dof(self) -> int:
        return self.X.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.X.shape[1]

    def mean(self) -> np.ndarray:
        return self.X.mean(axis=1)

    def subset(self, indices) -> np.ndarray:
        """Columns of X selected by ``indices`` (snapshot-local ordering)."""
        return self.X[:, list(indices)]


def truncation_rank(values: np.ndarray, eps: float) -> int:
    """Smallest k with ``sum(values[:k]) >= (1 - eps) * sum(values)``.

    ``values`` must be nonnegative and sorted descending. Raises on an
    all-zero spectrum, for which the criterion is undefined.
    """
    values = np.asarray(values, dtype=float)
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    total = float(np.sum(values))
    if total <= 0.0:
        raise ValueError("degenerate matrix: all singular values are zero")
    cumulative = np.cumsum(values)
    # First index meeting the threshold; ties at the boundary keep the
    # smaller rank by construction.
    return int(np.searchsorted(cumulative, (1.0 - eps) * total) + 1)


def svd_truncate(M: np.ndarray, eps: float) -> ReducedBasis:
    """Left singular vectors of ``M`` retained by the energy criterion.

    Parameters
    ----------
    M : ndarray
        Matrix n_d x m of finite entries, m >= 1.
    eps : float
        Truncation tolerance in (0, 1).

    Returns
    -------
    ReducedBasis
        First k left singular vectors with k chosen by ``truncation_rank``
        applied to the singular values; offset is zero.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] < 1:
        raise ValueError("expected a 2-d matrix with at least one column")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    U, sigma, _ = np.linalg.svd(M, full_matrices=False)
    k = truncation_rank(sigma, eps)
    spectrum = Spectrum(values=sigma, rank=k, tolerance=eps)
    return ReducedBasis(
        columns=U[:, :k],
        offset=np.zeros(M.shape[0]),
        spectrum=spectrum,
    )


def _project(K, matrix: np.ndarray) -> np.ndarray:
    """K @ matrix for dense or scipy.sparse K, returned dense."""
    product = K @ matrix
    if not isinstance(product, np.ndarray):
        product = np.asarray(product.todense() if hasattr(product, "todense") else product)
    return product


def _solve_dense(A: np.ndarray, b: np.ndarray, context: str) -> np.ndarray:
    """LU solve of a small dense system with a condition-estimate guard."""
    A = np.asarray(A, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A)
    anorm = np.linalg.norm(A, 1)
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0:
        raise SingularReducedSystem(np.inf, context)
    condition = np.inf if rcond == 0.0 else 1.0 / rcond
    if condition > CONDITION_LIMIT:
        raise SingularReducedSystem(condition, context)
    return scipy.linalg.lu_solve((lu, piv), b)


def rb_solve_galerkin(K, f: np.ndarray, basis: ReducedBasis) -> np.ndarray:
    """Galerkin-projected solve of ``K x = f`` on a reduced basis.

    Solves the k x k system ``[U^T K U] w = U^T (f - K offset)`` by dense LU
    with partial pivoting and returns ``offset + U w``. Raises
    :class:`SingularReducedSystem` when the condition estimate of the
    reduced matrix exceeds the guard.
    """
    U = basis.columns
    KU = _project(K, U)
    reduced = U.T @ KU
    rhs = U.T @ (f - _project(K, basis.offset))
    w = _solve_dense(reduced, rhs, "Galerkin reduced matrix")
    return basis.expand(w)


def rb_solve_least_squares(K, f: np.ndarray, basis: ReducedBasis) -> np.ndarray:
    """Residual-minimizing counterpart of :func:`rb_solve_galerkin`.

    Solves ``[U^T K^T K U] w = U^T K^T (f - K offset)``, i.e. the normal
    equations of Euclidean residual minimization over the reduced subspace.
    """
    U = basis.columns
    KU = _project(K, U)
    reduced = KU.T @ KU
    rhs = KU.T @ (f - _project(K, basis.offset))
    w = _solve_dense(reduced, rhs, "least-squares reduced matrix")
    return basis.expand(w)


def energy_norm(x: np.ndarray, K) -> float:
    """sqrt(x^T K x) for symmetric positive definite ``K``.

    Symmetry is checked entrywise to 1e-10 (relative to the largest entry);
    positivity is established by a successful Cholesky factorization.
    """
    x = np.asarray(x, dtype=float)
    K = np.asarray(K.todense() if hasattr(K, "todense") else K, dtype=float)
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise ValueError("energy norm undefined: matrix is not symmetric")
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise ValueError("energy norm undefined: matrix is not positive definite") from exc
    return float(np.sqrt(x @ (K @ x)))


def quadratic_basis(X_local: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Centered snapshots enriched with their pairwise Hadamard products.

    Columns are, in order, the centered snapshots ``x^i - center`` for each
    local snapshot i, followed by the products
    ``(x^i - center) * (x^j - center)`` for i <= j in lexicographic (i, j)
    order (diagonal products included). For m local snapshots the result has
    ``m + m (m + 1) / 2`` columns.
    """
    X_local = np.asarray(X_local, dtype=float)
    if X_local.ndim != 2 or X_local.shape[1] < 1:
        raise ValueError("expected at least one local snapshot column")
    center = np.asarray(center, dtype=float)
    if center.shape != (X_local.shape[0],):
        raise ValueError("center length must match snapshot rows")
    centered = X_local - center[:, None]
    m = centered.shape[1]
    products = [
        centered[:, i] * centered[:, j]
        for i in range(m)
        for j in range(i, m)
    ]
    return np.column_stack([centered] + products)
