"""Kernel-PCA reduced-order modeling toolkit.

Offline: snapshot campaigns, kernel-PCA reduction, Delaunay tessellation of
the reduced space. Online: optimal-path queries over locally centered,
quadratically enriched bases, next to plain and quadratic POD baselines.
"""

from .geometry import Patch, ReducedGeometry, build_geometry, locate_cell, patch
from .kpca import (
    Centroid,
    KernelSpec,
    KpcaModel,
    MasslessTraceError,
    centroid_1d,
    forward_map,
    gram_matrix,
    kernel_centroid_1d,
    kernel_centroid_2d,
    kpca_fit,
    kvector,
    preimage_pinv,
    preimage_rbf,
)
from .online import LocalModel, PathTrace, init_guess, kpod_iterate, local_model, optimal_path
from .reduction import (
    ReducedBasis,
    SingularReducedSystem,
    SnapshotSet,
    Spectrum,
    energy_norm,
    quadratic_basis,
    rb_solve_galerkin,
    rb_solve_least_squares,
    svd_truncate,
    truncation_rank,
)

__version__ = "0.1.0"
