"""Kernels, centroids, kernel-PCA fitting and pre-image weights."""

import numpy as np
import pytest

from kpod.kpca import (
    KernelSpec,
    MasslessTraceError,
    centroid_1d,
    fallback_centroid,
    forward_map,
    gram_matrix,
    kernel_centroid_1d,
    kernel_centroid_2d,
    kpca_fit,
    kvector,
    preimage_pinv,
    preimage_rbf,
)
from kpod.problems import adv1d
from kpod.reduction import SnapshotSet


def gaussian_kernel(beta):
    return KernelSpec(kind="gaussian-euclidean", beta=beta)


def toy_set(seed, n_dof=8, n_snap=5):
    rng = np.random.default_rng(seed)
    return SnapshotSet(X=rng.normal(size=(n_dof, n_snap)), params=np.arange(n_snap))


class TestCentroid1d:
    def test_constant_profile(self):
        coords = np.linspace(0, 4, 301)
        c = centroid_1d(np.full(301, 2.5), coords)
        assert np.isclose(c.position, 2.0)
        assert np.isclose(c.height, 1.25)

    def test_gaussian_bump_against_fine_quadrature(self, grid_1d):
        u = grid_1d.pad_dirichlet(grid_1d.initial_condition())
        c = centroid_1d(u, grid_1d.nodes)
        # Oracle: 1e6-point quadrature of the analytic profile.
        x = np.linspace(0, 4, 1_000_001)
        g = np.exp(-0.5 * ((x - 0.6) / 0.02) ** 2)
        mass = np.trapezoid(g, x)
        pos = np.trapezoid(x * g, x) / mass
        height = np.trapezoid(0.5 * g**2, x) / mass
        assert np.isclose(c.position, pos, atol=1e-6)
        assert np.isclose(c.height, height, rtol=1e-5)
        assert np.isclose(height, 1 / (2 * np.sqrt(2)), rtol=1e-9)

    def test_mirror_symmetry(self):
        coords = np.linspace(0, 4, 501)
        rng = np.random.default_rng(8)
        u = rng.uniform(0.1, 1.0, size=501)
        a = centroid_1d(u, coords)
        b = centroid_1d(u[::-1], coords)
        assert np.isclose(a.position + b.position, 4.0)
        assert np.isclose(a.height, b.height)

    def test_massless_trace_raises(self):
        coords = np.linspace(0, 4, 11)
        with pytest.raises(MasslessTraceError):
            centroid_1d(np.zeros(11), coords)

    def test_cancellation_dominated_trace_raises(self):
        coords = np.linspace(0, 4, 401)
        wave = np.sin(coords * 40.0)
        with pytest.raises(MasslessTraceError):
            centroid_1d(wave, coords)

    def test_fallback_centroid(self):
        c = fallback_centroid(0.0, 4.0)
        assert (c.position, c.height) == (2.0, 0.0)


class TestKernels1d:
    def test_self_kernel_is_one(self, grid_1d):
        u = grid_1d.initial_condition()
        assert kernel_centroid_1d(u, u, 1e-4, grid_1d) == 1.0

    def test_matches_scalar_formula(self, grid_1d):
        u = grid_1d.initial_condition()
        x = grid_1d.interior_nodes
        v = np.exp(-0.5 * ((x - 2.1) / 0.1) ** 2)
        cu = centroid_1d(grid_1d.pad_dirichlet(u), grid_1d.nodes).as_array()
        cv = centroid_1d(grid_1d.pad_dirichlet(v), grid_1d.nodes).as_array()
        d2 = float(np.sum((cu - cv) ** 2))
        assert np.isclose(kernel_centroid_1d(u, v, 1e-4, grid_1d), np.exp(-1e-4 * d2))

    def test_symmetry_bitwise(self, grid_1d):
        rng = np.random.default_rng(3)
        u = rng.uniform(0.1, 1, size=grid_1d.n_interior)
        v = rng.uniform(0.1, 1, size=grid_1d.n_interior)
        assert kernel_centroid_1d(u, v, 1e-4, grid_1d) == kernel_centroid_1d(
            v, u, 1e-4, grid_1d
        )


class TestKernels2d:
    def test_self_kernel_is_one(self, mesh_2d, snapshots_2d):
        u = snapshots_2d.X[:, 0]
        assert kernel_centroid_2d(u, u, 1e-3, mesh_2d) == 1.0

    def test_interior_is_invisible(self, mesh_2d, snapshots_2d):
        u = snapshots_2d.X[:, 0]
        v = u.copy()
        boundary = set(mesh_2d.dirichlet_nodes())
        x, y = mesh_2d.nodes[:, 0], mesh_2d.nodes[:, 1]
        on_outlet = (np.abs(y + 1) <= 1e-9) | (np.abs(x - 1) <= 1e-9)
        interior = [
            i for i in range(mesh_2d.n_nodes)
            if i not in boundary and not on_outlet[i]
        ]
        v[interior] += 0.37
        assert kernel_centroid_2d(u, v, 1e-3, mesh_2d) == 1.0

    def test_matches_trace_formula(self, mesh_2d, snapshots_2d):
        u, v = snapshots_2d.X[:, 0], snapshots_2d.X[:, 1]
        # Oracle: extract the traces, form the centroids, apply the scalar
        # kernel formula with the per-trace length scalings.
        def feats(w):
            s_in, tr_in = mesh_2d.trace_dirichlet(w)
            s_out, tr_out = mesh_2d.trace_outlet(w)
            return centroid_1d(tr_in, s_in).as_array(), centroid_1d(tr_out, s_out).as_array()

        cu_in, cu_out = feats(u)
        cv_in, cv_out = feats(v)
        d2 = float(np.sum((cu_in - cv_in) ** 2)) / 4 + float(np.sum((cu_out - cv_out) ** 2)) / 16
        assert np.isclose(kernel_centroid_2d(u, v, 1e-3, mesh_2d), np.exp(-1e-3 * d2))

    def test_explicit_centroid_distances(self):
        # Inlet centroids differing by (2, 0), identical outlet centroids.
        spec_value = np.exp(-1e-3 * (2.0**2 / 4.0 + 0.0))
        f1 = np.concatenate([np.array([1.0, 0.5]) / 2, np.array([2.0, 0.3]) / 4])
        f2 = np.concatenate([np.array([-1.0, 0.5]) / 2, np.array([2.0, 0.3]) / 4])
        kernel = gaussian_kernel(1e-3)
        value = float(kernel.values_from_features(f1[None, :], f2)[0])
        assert np.isclose(value, spec_value)
        assert np.isclose(value, np.exp(-1e-3))

    def test_massless_outlet_falls_back(self, mesh_2d):
        # A field supported only on the upper inlet (zero at the corner the
        # outlet shares): the outlet trace is identically zero and the
        # kernel must stay defined through the fallback centroid.
        u = np.zeros(mesh_2d.n_nodes)
        d = mesh_2d.dirichlet_nodes()
        y_d = mesh_2d.nodes[d, 1]
        u[d] = np.where(y_d > -0.5, np.exp(-(y_d**2)), 0.0)
        value = kernel_centroid_2d(u, u, 1e-3, mesh_2d)
        assert value == 1.0
        features = KernelSpec(kind="centroid-2d", beta=1e-3, geometry=mesh_2d).features(u)
        assert np.allclose(features[2:], np.array([2.0, 0.0]) / 4)


class TestGramMatrix:
    def test_unit_diagonal_and_symmetry(self):
        X = toy_set(1)
        G = gram_matrix(X, gaussian_kernel(0.3))
        assert np.allclose(np.diag(G), 1.0)
        assert np.array_equal(G, G.T)

    def test_duplicate_snapshots_duplicate_rows(self):
        X = toy_set(2)
        Xdup = SnapshotSet(
            X=np.column_stack([X.X, X.X[:, 0]]),
            params=np.arange(X.n_snapshots + 1),
        )
        G = gram_matrix(Xdup, gaussian_kernel(0.3))
        assert np.array_equal(G[0], G[-1])

    def test_matches_direct_evaluation(self, grid_1d):
        x = grid_1d.interior_nodes
        profiles = [
            np.exp(-0.5 * ((x - c) / 0.05) ** 2) for c in (0.7, 1.9, 3.0)
        ]
        X = SnapshotSet(X=np.column_stack(profiles), params=np.arange(3))
        kernel = adv1d.kernel_spec_1d(grid_1d, beta=1e-4)
        G = gram_matrix(X, kernel)
        centroids = [
            centroid_1d(grid_1d.pad_dirichlet(p), grid_1d.nodes).as_array()
            for p in profiles
        ]
        for i in range(3):
            for j in range(3):
                d2 = float(np.sum((centroids[i] - centroids[j]) ** 2))
                assert np.isclose(G[i, j], np.exp(-1e-4 * d2))


class TestKpcaFit:
    def test_two_snapshot_shapes(self):
        X = toy_set(4, n_snap=2)
        model = kpca_fit(X, gaussian_kernel(0.3), eps=0.3)
        assert model.reduced_dim in (1, 2)
        assert model.Z.shape == (model.reduced_dim, 2)

    def test_degenerate_gram_rejected(self):
        base = np.ones((6, 4))
        X = SnapshotSet(X=base, params=np.arange(4))
        with pytest.raises(ValueError, match="cannot separate"):
            kpca_fit(X, gaussian_kernel(0.3), eps=0.1)

    def test_forward_map_reproduces_training_columns(self, model_1d, snapshots_1d):
        for j in range(0, snapshots_1d.n_snapshots, 37):
            z = forward_map(snapshots_1d.X[:, j], model_1d)
            assert np.array_equal(z, model_1d.Z[:, j])

    def test_kvector_is_gram_column(self, model_1d, snapshots_1d):
        for j in (0, 100, 500):
            g = kvector(snapshots_1d.X[:, j], model_1d)
            assert np.array_equal(g, model_1d.G[:, j])

    def test_kvector_range(self, model_1d, grid_1d):
        x = np.exp(-0.5 * ((grid_1d.interior_nodes - 1.3) / 0.08) ** 2)
        g = kvector(x, model_1d)
        assert np.all(g > 0) and np.all(g <= 1)

    def test_same_centroid_same_image(self, model_1d, grid_1d, snapshots_1d):
        # A perturbation that preserves both centroid components maps to
        # the same reduced point.
        u = snapshots_1d.X[:, 10]
        z_u = forward_map(u, model_1d)
        v = u[::-1].copy()  # mirrored profile: same height, mirrored position
        cu = centroid_1d(grid_1d.pad_dirichlet(u), grid_1d.nodes)
        cv = centroid_1d(grid_1d.pad_dirichlet(v), grid_1d.nodes)
        assert np.isclose(cu.height, cv.height)
        assert not np.allclose(z_u, forward_map(v, model_1d))

    def test_spectrum_concentration_1d(self, model_1d):
        fractions = model_1d.spectrum.cumulative_fractions
        assert fractions[0] >= 0.99
        assert model_1d.reduced_dim == 1

    def test_gram_psd_on_fitted_sets(self, model_1d, model_2d):
        for model in (model_1d, model_2d):
            eigenvalues = np.linalg.eigvalsh(model.G)
            assert eigenvalues[0] >= -1e-8 * eigenvalues[-1]


class TestPreimages:
    def test_rbf_indicator_on_exact_site(self, model_1d):
        w = preimage_rbf(model_1d.Z[:, 7], model_1d, [5, 6, 7, 8])
        assert np.array_equal(w, [0, 0, 1, 0])

    def test_rbf_equidistant_pair(self, model_1d):
        z = 0.5 * (model_1d.Z[:, 3] + model_1d.Z[:, 4])
        w = preimage_rbf(z, model_1d, [3, 4])
        assert np.allclose(w, [0.5, 0.5])

    def test_rbf_inverse_square_weights(self):
        from dataclasses import replace

        base = kpca_fit(
            SnapshotSet(X=np.random.default_rng(0).normal(size=(3, 4)), params=np.arange(4)),
            gaussian_kernel(0.3),
            eps=0.3,
        )
        model = replace(base, Z=np.array([[0.0, 1.0, 1.0]]), Vstar=base.Vstar[:, :1])
        # probe at -1: distances 1, 2, 2 -> weights proportional to 1, 1/4, 1/4
        w = preimage_rbf(np.array([-1.0]), model, [0, 1, 2])
        assert np.allclose(w, [4 / 6, 1 / 6, 1 / 6])

    def test_rbf_weights_sum_to_one(self, model_1d):
        rng = np.random.default_rng(5)
        for _ in range(10):
            z = np.array([rng.uniform(model_1d.Z.min(), model_1d.Z.max())])
            w = preimage_rbf(z, model_1d, range(0, 50))
            assert np.all(w >= 0)
            assert np.isclose(w.sum(), 1.0, atol=1e-12)

    def test_pinv_orthogonal_square(self):
        q = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))[0]
        z = np.array([0.3, -1.2, 0.8])
        w = preimage_pinv(z, q)
        assert np.allclose(w, q.T @ z)

    def test_pinv_minimal_norm_underdetermined(self):
        w = preimage_pinv(np.array([2.0]), np.array([[1.0, 1.0]]))
        assert np.allclose(w, [1.0, 1.0])

    def test_pinv_residual_in_range(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(3, 6))
        z = Z @ rng.normal(size=6)
        w = preimage_pinv(z, Z)
        assert np.linalg.norm(Z @ w - z) <= 1e-10
