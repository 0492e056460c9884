"""Persistence of offline artifacts as a model directory.

Layout: ``manifest.json`` (dimensions, tolerances, kernel and problem
descriptors, spectrum, checksums), four little-endian float64 column-major
matrix blobs (``X.f64le``, ``Z.f64le``, ``Vstar.f64le``, ``G.f64le``),
``adjacency.txt`` (1-based neighbor lists, one line per snapshot) and
``params.csv``. Loading verifies per-file checksums, re-derives the fitted
model from the raw Gram matrix and revalidates its invariants.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ReducedGeometry
from .kpca import KernelSpec, KpcaModel, _center_kvec
from .reduction import ReducedBasis, SnapshotSet, Spectrum, svd_truncate

__all__ = [
    "ModelBundle",
    "StoreError",
    "VersionMismatchError",
    "ChecksumMismatchError",
    "DimensionMismatchError",
    "save",
    "load",
]

FORMAT_VERSION = 1

MATRIX_FILES = ("X.f64le", "Z.f64le", "Vstar.f64le", "G.f64le")
TEXT_FILES = ("adjacency.txt", "params.csv")


class StoreError(RuntimeError):
    """Base class for model-directory failures."""


class VersionMismatchError(StoreError):
    pass


class ChecksumMismatchError(StoreError):
    pass


class DimensionMismatchError(StoreError):
    pass


@dataclass(frozen=True)
class ModelBundle:
    """Everything the online phase needs, as produced by the offline phase."""

    model: KpcaModel
    geometry: ReducedGeometry
    problem: dict
    eps: float
    kpca_eps: float

    @property
    def snapshots(self) -> SnapshotSet:
        return self.model.snapshots

    def pod_basis(self) -> ReducedBasis:
        """Global centered basis at the bundle tolerance, derived from X."""
        X = self.snapshots.X
        mean = X.mean(axis=1)
        return svd_truncate(X - mean[:, None], self.eps).with_offset(mean)


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(matrix.T, dtype="<f8").tobytes())


def _read_matrix(path: Path, rows: int, cols: int, name: str) -> np.ndarray:
    data = path.read_bytes()
    if len(data) != 8 * rows * cols:
        raise DimensionMismatchError(
            f"{name}: expected {8 * rows * cols} bytes for {rows}x{cols}, got {len(data)}"
        )
    return np.frombuffer(data, dtype="<f8").reshape((rows, cols), order="F").copy()


def _checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save(bundle: ModelBundle, path) -> None:
    """Write a model bundle to a directory (created if missing)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    model = bundle.model
    snapshots = model.snapshots

    _write_matrix(root / "X.f64le", snapshots.X)
    _write_matrix(root / "Z.f64le", model.Z)
    _write_matrix(root / "Vstar.f64le", model.Vstar)
    _write_matrix(root / "G.f64le", model.G)

    with open(root / "adjacency.txt", "w", encoding="ascii") as fh:
        for neighbors in bundle.geometry.adjacency:
            fh.write(" ".join(str(n + 1) for n in neighbors) + "\n")

    with open(root / "params.csv", "w", encoding="ascii") as fh:
        names = snapshots.param_names or tuple(
            f"p{i}" for i in range(snapshots.params.shape[1])
        )
        fh.write(",".join(names) + "\n")
        for row in snapshots.params:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    manifest = {
        "format_version": FORMAT_VERSION,
        "n_d": snapshots.n_dof,
        "n_S": snapshots.n_snapshots,
        "k": model.reduced_dim,
        "eps": bundle.eps,
        "kpca_eps": bundle.kpca_eps,
        "kernel": {"kind": model.kernel.kind, "beta": model.kernel.beta},
        "problem": bundle.problem,
        "spectrum": [float(v) for v in model.spectrum.values],
        "param_names": list(snapshots.param_names),
        "checksums": {
            name: _checksum(root / name) for name in MATRIX_FILES + TEXT_FILES
        },
    }
    with open(root / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _rebuild_kernel(manifest: dict) -> KernelSpec:
    from .problems import adv1d, adv2d

    kind = manifest["kernel"]["kind"]
    beta = float(manifest["kernel"]["beta"])
    problem = manifest.get("problem", {})
    if kind == "gaussian-euclidean":
        return KernelSpec(kind=kind, beta=beta)
    if kind == "centroid-1d":
        grid = adv1d.Grid1D(
            n_intervals=int(problem["n_intervals"]),
            dt=float(problem.get("dt", 0.005)),
            n_steps=int(problem.get("n_steps", 250)),
        )
        return KernelSpec(kind=kind, beta=beta, geometry=grid)
    if kind == "centroid-2d":
        mesh = adv2d.build_mesh_2d(float(problem["h"]))
        return KernelSpec(kind=kind, beta=beta, geometry=mesh)
    raise StoreError(f"unknown kernel kind {kind!r} in manifest")


def load(path) -> ModelBundle:
    """Load and validate a model directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise StoreError(f"not a model directory: {root} has no manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="ascii"))

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"model directory format {version!r}, this build reads {FORMAT_VERSION}"
        )

    checksums = manifest.get("checksums", {})
    for name in MATRIX_FILES + TEXT_FILES:
        recorded = checksums.get(name)
        if recorded is None:
            continue
        if not (root / name).is_file():
            raise StoreError(f"model directory incomplete: {name} missing")
        if _checksum(root / name) != recorded:
            raise ChecksumMismatchError(f"checksum mismatch for {name}")

    n_d = int(manifest["n_d"])
    n_s = int(manifest["n_S"])
    k = int(manifest["k"])
    if not 1 <= k <= n_s:
        raise DimensionMismatchError(f"manifest k={k} out of range for n_S={n_s}")

    X = _read_matrix(root / "X.f64le", n_d, n_s, "X.f64le")
    Z = _read_matrix(root / "Z.f64le", k, n_s, "Z.f64le")
    Vstar = _read_matrix(root / "Vstar.f64le", n_s, k, "Vstar.f64le")
    G = _read_matrix(root / "G.f64le", n_s, n_s, "G.f64le")

    with open(root / "params.csv", "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    param_names = tuple(lines[0].split(",")) if lines else ()
    params = np.array(
        [[float(v) for v in line.split(",")] for line in lines[1 : n_s + 1]]
    )
    if params.shape[0] != n_s:
        raise DimensionMismatchError("params.csv row count does not match n_S")

    with open(root / "adjacency.txt", "r", encoding="ascii") as fh:
        adj_lines = fh.read().splitlines()
    if len(adj_lines) != n_s:
        raise DimensionMismatchError("adjacency.txt line count does not match n_S")
    adjacency = tuple(
        tuple(int(tok) - 1 for tok in line.split()) for line in adj_lines
    )

    snapshots = SnapshotSet(X=X, params=params, param_names=param_names)
    kernel = _rebuild_kernel(manifest)
    kpca_eps = float(manifest.get("kpca_eps", manifest["eps"]))
    spectrum = Spectrum(
        values=np.array(manifest["spectrum"], dtype=float),
        rank=k,
        tolerance=kpca_eps,
    )

    col_means = np.mean(G, axis=0)
    total_mean = float(np.mean(G))
    model = KpcaModel(
        kernel=kernel,
        snapshots=snapshots,
        G=G,
        Vstar=Vstar,
        spectrum=spectrum,
        Z=Z,
        col_means=col_means,
        total_mean=total_mean,
        training_features=kernel.feature_matrix(X),
    )

    # Revalidate the fitted-model invariants on the loaded data.
    rebuilt = np.column_stack(
        [Vstar.T @ _center_kvec(G[:, j], col_means, total_mean) for j in range(n_s)]
    )
    if not np.array_equal(rebuilt, Z):
        raise DimensionMismatchError(
            "reduced snapshots do not match Vstar^T applied to the centered Gram"
        )
    for i, neighbors in enumerate(adjacency):
        for n in neighbors:
            if not 0 <= n < n_s:
                raise DimensionMismatchError(f"adjacency of snapshot {i + 1} out of range")
            if i not in adjacency[n]:
                raise DimensionMismatchError("adjacency is not symmetric")

    geometry = ReducedGeometry(Z=Z, adjacency=adjacency)
    return ModelBundle(
        model=model,
        geometry=geometry,
        problem=dict(manifest.get("problem", {})),
        eps=float(manifest["eps"]),
        kpca_eps=kpca_eps,
    )
