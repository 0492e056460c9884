"""Kernel principal component analysis over snapshot families.

Fits a kernel model from a Gram matrix, exposes the explicit forward map
into the reduced space, and ships the physics-aware centroid kernels used
by the built-in advection-diffusion benchmarks plus two explicit
backward-mapping (pre-image) weight strategies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reduction import SnapshotSet, Spectrum, truncation_rank

__all__ = [
    "Centroid",
    "KernelSpec",
    "KpcaModel",
    "MasslessTraceError",
    "centroid_1d",
    "fallback_centroid",
    "kernel_centroid_1d",
    "kernel_centroid_2d",
    "gram_matrix",
    "kvector",
    "kpca_fit",
    "forward_map",
    "preimage_rbf",
    "preimage_pinv",
]

#: Relative eigenvalue floor for the positive-semidefiniteness check.
PSD_TOL = 1e-8

#: Mass-floor prefactor below which a trace is considered massless.
MASS_FLOOR = 1e-12

#: A trace whose signed mass is less than this fraction of its absolute
#: mass is cancellation-dominated and treated as massless too.
CANCELLATION_RATIO = 0.5


class MasslessTraceError(ValueError):
    """Trace integral too small for a well-defined centroid."""


@dataclass(frozen=True)
class Centroid:
    """Centroid of a scalar profile: abscissa along the trace and height."""

    position: float
    height: float

    def as_array(self) -> np.ndarray:
        return np.array([self.position, self.height], dtype=float)


def centroid_1d(values: np.ndarray, coords: np.ndarray) -> Centroid:
    """Centroid of a nodal profile by trapezoidal quadrature.

    position = int(x u) / int(u), height = int(u^2 / 2) / int(u), on the
    strictly increasing nodal grid ``coords``. Raises
    :class:`MasslessTraceError` when ``|int(u)|`` falls below the mass
    floor ``1e-12 * (length) * max(max|u|, 1e-30)``, or when the signed
    mass is dominated by cancellation, ``|int(u)| < 0.5 int(|u|)``, in
    which case the centroid would amplify oscillation artifacts instead of
    locating the profile.
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 1 or coords.size < 2:
        raise ValueError("trace grid needs at least two nodes")
    if np.any(np.diff(coords) <= 0):
        raise ValueError("trace grid must be strictly increasing")
    if values.shape != coords.shape:
        raise ValueError("values and grid must have matching length")
    mass = float(np.trapezoid(values, coords))
    length = float(coords[-1] - coords[0])
    floor = MASS_FLOOR * length * max(float(np.max(np.abs(values))), 1e-30)
    if abs(mass) < floor:
        raise MasslessTraceError("massless trace: centroid undefined")
    if abs(mass) < CANCELLATION_RATIO * float(np.trapezoid(np.abs(values), coords)):
        raise MasslessTraceError("massless trace: signed mass cancels")
    position = float(np.trapezoid(coords * values, coords)) / mass
    height = float(np.trapezoid(0.5 * values**2, coords)) / mass
    return Centroid(position=position, height=height)


def fallback_centroid(a: float, b: float) -> Centroid:
    """Centroid substituted for a massless trace on [a, b]: midpoint, zero height."""
    return Centroid(position=0.5 * (a + b), height=0.0)


def _squared_distances(features: np.ndarray, probe: np.ndarray) -> np.ndarray:
    # Shared arithmetic path for Gram rows and out-of-sample evaluations:
    # elementwise squares keep the kernel exactly symmetric.
    delta = features - probe[None, :]
    return np.sum(delta * delta, axis=1)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel on a feature map extracted from full-order states.

    kind
        ``"centroid-1d"``: features are the (position, height) centroid of
        the padded nodal profile; ``geometry`` is the 1-d grid.
        ``"centroid-2d"``: features stack the inlet-trace centroid scaled
        by 1/2 and the outlet-trace centroid scaled by 1/4; ``geometry`` is
        the triangular mesh. Massless traces fall back to the midpoint
        centroid so the kernel stays defined in early or blocked regimes.
        ``"gaussian-euclidean"``: features are the state itself.
    beta
        Inverse squared-distance scale, > 0.
    """

    kind: str
    beta: float
    geometry: object = None

    def __post_init__(self):
        if self.kind not in ("centroid-1d", "centroid-2d", "gaussian-euclidean"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.kind != "gaussian-euclidean" and self.geometry is None:
            raise ValueError(f"{self.kind} kernel requires a geometry handle")

    def features(self, x: np.ndarray) -> np.ndarray:
        """Feature vector whose Euclidean distance drives the kernel."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian-euclidean":
            return x
        if self.kind == "centroid-1d":
            grid = self.geometry
            return centroid_1d(grid.pad_dirichlet(x), grid.nodes).as_array()
        mesh = self.geometry
        s_in, trace_in = mesh.trace_dirichlet(x)
        s_out, trace_out = mesh.trace_outlet(x)
        try:
            c_in = centroid_1d(trace_in, s_in)
        except MasslessTraceError:
            c_in = fallback_centroid(s_in[0], s_in[-1])
        try:
            c_out = centroid_1d(trace_out, s_out)
        except MasslessTraceError:
            c_out = fallback_centroid(s_out[0], s_out[-1])
        # Per-trace scaling by the parametrized lengths (2 and 4).
        return np.concatenate([c_in.as_array() / 2.0, c_out.as_array() / 4.0])

    def feature_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.features(X[:, j]) for j in range(X.shape[1])])

    def values_from_features(self, features: np.ndarray, probe: np.ndarray) -> np.ndarray:
        """Kernel values of one probe feature against a stack of features."""
        return np.exp(-self.beta * _squared_distances(features, probe))

    def __call__(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(self.values_from_features(self.features(u)[None, :], self.features(v))[0])


def kernel_centroid_1d(u: np.ndarray, v: np.ndarray, beta: float, grid) -> float:
    """Gaussian kernel on the centroid distance of two 1-d profiles."""
    return KernelSpec(kind="centroid-1d", beta=beta, geometry=grid)(u, v)


def kernel_centroid_2d(u: np.ndarray, v: np.ndarray, beta: float, mesh) -> float:
    """Gaussian kernel on inlet/outlet boundary-trace centroid distances."""
    return KernelSpec(kind="centroid-2d", beta=beta, geometry=mesh)(u, v)


def gram_matrix(X: SnapshotSet, kernel: KernelSpec) -> np.ndarray:
    """Kernel Gram matrix of a training set.

    The upper triangle is evaluated and mirrored, so the result is exactly
    symmetric. Fails when the positive-semidefiniteness check
    (smallest eigenvalue >= -1e-8 times the largest) does not hold.
    """
    features = kernel.feature_matrix(X.X)
    return _gram_from_features(kernel, features)


def _gram_from_features(kernel: KernelSpec, features: np.ndarray) -> np.ndarray:
    n = features.shape[0]
    G = np.empty((n, n), dtype=float)
    for i in range(n):
        G[i, i:] = kernel.values_from_features(features[i:], features[i])
    upper = np.triu(G)
    G = upper + np.triu(G, 1).T
    eigenvalues = np.linalg.eigvalsh(G)
    largest = float(eigenvalues[-1])
    if eigenvalues[0] < -PSD_TOL * max(largest, 0.0):
        raise ValueError(
            "kernel Gram matrix is not positive semidefinite: "
            f"most negative eigenvalue {eigenvalues[0]:.6e}"
        )
    return G


@dataclass(frozen=True)
class KpcaModel:
    """Fitted kernel-PCA reduction of a snapshot family.

    Holds the kernel, the training set, the raw Gram matrix ``G``, the
    retained spectral directions ``Vstar`` (n_S x k) of the feature-space
    centered Gram, its spectrum, the reduced snapshots ``Z`` (k x n_S, one
    column per training state), the centering statistics of ``G`` and the
    cached training features.
    """

    kernel: KernelSpec
    snapshots: SnapshotSet
    G: np.ndarray
    Vstar: np.ndarray
    spectrum: Spectrum
    Z: np.ndarray
    col_means: np.ndarray = field(repr=False, default=None)
    total_mean: float = 0.0
    training_features: np.ndarray = field(repr=False, default=None)

    @property
    def reduced_dim(self) -> int:
        return self.Vstar.shape[1]


def kvector(x: np.ndarray, model: KpcaModel) -> np.ndarray:
    """Kernel values of a state against every training snapshot.

    For ``x`` equal to training snapshot j this reproduces column j of the
    Gram matrix exactly (same arithmetic path).
    """
    probe = model.kernel.features(np.asarray(x, dtype=float))
    return model.kernel.values_from_features(model.training_features, probe)


def _center_kvec(g: np.ndarray, col_means: np.ndarray, total_mean: float) -> np.ndarray:
    # Feature-space centering of a kernel-value vector against the training
    # Gram statistics; applied to a Gram column this yields the column of
    # the doubly centered Gram matrix.
    return g - np.mean(g) - col_means + total_mean


def kpca_fit(X: SnapshotSet, kernel: KernelSpec, eps: float) -> KpcaModel:
    """Fit a kernel-PCA model on a training set.

    Builds the Gram matrix, centers it in feature space, takes the SVD of
    the centered matrix, retains the reduced dimension k by the energy
    criterion at tolerance ``eps`` applied to the diagonal of the
    singular-value matrix, and maps the training set column by column into
    the reduced space.
    """
    features = kernel.feature_matrix(X.X)
    G = _gram_from_features(kernel, features)
    if np.ptp(G) == 0.0:
        raise ValueError("kernel cannot separate training set")
    col_means = np.mean(G, axis=0)
    total_mean = float(np.mean(G))
    centered = G - col_means[None, :] - col_means[:, None] + total_mean
    V, sigma, _ = np.linalg.svd(centered, hermitian=True)
    k = truncation_rank(sigma, eps)
    spectrum = Spectrum(values=sigma, rank=k, tolerance=eps)
    Vstar = V[:, :k]
    # Column-for-column through the out-of-sample centering path, so that
    # forward_map of a training snapshot is bitwise identical to the stored
    # reduced snapshot.
    Z = np.column_stack(
        [Vstar.T @ _center_kvec(G[:, j], col_means, total_mean) for j in range(G.shape[1])]
    )
    return KpcaModel(
        kernel=kernel,
        snapshots=X,
        G=G,
        Vstar=Vstar,
        spectrum=spectrum,
        Z=Z,
        col_means=col_means,
        total_mean=total_mean,
        training_features=features,
    )


def forward_map(x: np.ndarray, model: KpcaModel) -> np.ndarray:
    """Map a full-order state into the reduced space.

    Applies the training-set feature centering to the kernel-value vector
    of ``x`` and projects it on the retained spectral directions.
    """
    g = _center_kvec(kvector(x, model), model.col_means, model.total_mean)
    return model.Vstar.T @ g


def preimage_rbf(z: np.ndarray, model: KpcaModel, eta) -> np.ndarray:
    """Inverse-squared-distance weights over a neighbor index set.

    ``w_i = (1/d_i^2) / sum_j (1/d_j^2)`` with ``d_i`` the reduced-space
    distance from ``z`` to reduced snapshot i. A zero distance returns the
    indicator weight on that snapshot (limit case).
    """
    eta = list(eta)
    z = np.asarray(z, dtype=float)
    distances = np.linalg.norm(model.Z[:, eta] - z[:, None], axis=0)
    zero = np.flatnonzero(distances == 0.0)
    weights = np.zeros(len(eta))
    if zero.size:
        weights[zero[0]] = 1.0
        return weights
    inverse = 1.0 / distances**2
    return inverse / np.sum(inverse)


def preimage_pinv(z: np.ndarray, Z_local: np.ndarray) -> np.ndarray:
    """Minimal-norm weights solving ``Z_local w = z`` by pseudoinverse.

    Uses a Moore-Penrose pseudoinverse computed via SVD with singular
    values below ``1e-12 * sigma_max`` treated as zero.
    """
    Z_local = np.asarray(Z_local, dtype=float)
    if Z_local.ndim != 2 or not np.any(Z_local):
        raise ValueError("local reduced snapshot matrix must be nonzero")
    return np.linalg.pinv(Z_local, rcond=1e-12) @ np.asarray(z, dtype=float)
