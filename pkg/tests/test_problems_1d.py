"""Transient 1-d benchmark: assembly, marching, campaign."""

import numpy as np
import pytest

from kpod.problems import adv1d
from kpod.problems.adv1d import Grid1D, assemble_1d, campaign_1d, integrate_1d, relative_errors


class TestAssembly:
    def test_no_transport_is_identity(self):
        grid = Grid1D(n_intervals=50, dt=0.01, n_steps=10)
        A, D = assemble_1d(0.0, grid, nu=0.0)
        assert np.allclose(A.toarray(), np.eye(grid.n_interior))
        assert np.allclose(D.toarray(), np.eye(grid.n_interior))

    def test_centered_difference_row_sums(self):
        grid = Grid1D(n_intervals=40, dt=0.01, n_steps=10)
        A, D = assemble_1d(2.0, grid, nu=0.0)
        # A = I + (dt/2) v C: interior rows of C annihilate constants.
        row_sums = np.asarray(A.sum(axis=1)).ravel()
        assert np.allclose(row_sums[1:-1], 1.0)

    def test_tridiagonal_pattern(self, grid_1d):
        A, D = assemble_1d(1.5, grid_1d)
        for M in (A, D):
            coo = M.tocoo()
            assert np.all(np.abs(coo.row - coo.col) <= 1)


class TestMarchAgainstRefinedOracle:
    @pytest.fixture(scope="class")
    def oracle(self):
        # Independent reference: twice the spatial and temporal resolution.
        fine = Grid1D(n_intervals=4000, dt=0.0025, n_steps=400)
        return fine, integrate_1d(1.5, "full", fine, n_steps=400)

    def test_mass_conservation_and_transport(self, grid_1d, oracle):
        march = integrate_1d(1.5, "full", grid_1d, n_steps=200)
        u0 = grid_1d.pad_dirichlet(march.state_at_step(0))
        u1 = grid_1d.pad_dirichlet(march.state_at_step(200))
        mass0 = np.trapezoid(u0, grid_1d.nodes)
        mass1 = np.trapezoid(u1, grid_1d.nodes)
        assert abs(mass1 - mass0) <= 0.01 * mass0
        centroid0 = np.trapezoid(grid_1d.nodes * u0, grid_1d.nodes) / mass0
        centroid1 = np.trapezoid(grid_1d.nodes * u1, grid_1d.nodes) / mass1
        assert abs((centroid1 - centroid0) - 1.5 * 1.0) <= 0.01

    def test_close_to_refined_run(self, grid_1d, oracle):
        fine, fine_march = oracle
        coarse = integrate_1d(1.5, "full", grid_1d, n_steps=200)
        u_c = grid_1d.pad_dirichlet(coarse.state_at_step(200))
        u_f = fine.pad_dirichlet(fine_march.state_at_step(400))
        u_f_on_coarse = np.interp(grid_1d.nodes, fine.nodes, u_f)
        err = np.linalg.norm(u_c - u_f_on_coarse) / np.linalg.norm(u_f_on_coarse)
        # Second-order scheme: the measured coarse-to-refined gap is 7.8e-3.
        assert err <= 1e-2

    def test_unconditional_stability_at_larger_step(self):
        grid = Grid1D(n_intervals=2000, dt=0.02, n_steps=63)
        march = integrate_1d(1.5, "full", grid, n_steps=63)
        initial_max = np.max(np.abs(march.state_at_step(0)))
        assert np.max(np.abs(march.states)) <= 1.05 * initial_max


class TestCampaign:
    def test_snapshot_count(self, snapshots_1d):
        assert snapshots_1d.n_snapshots == 501
        assert snapshots_1d.param_names == ("v", "t")

    def test_snapshot_matches_fresh_march(self, grid_1d, snapshots_1d):
        v = snapshots_1d.params[1, 0]
        march = integrate_1d(v, "full", grid_1d, n_steps=5)
        assert np.array_equal(snapshots_1d.X[:, 1], march.state_at_step(5))

    def test_snapshots_nonnegative(self, snapshots_1d):
        # Diffusive Crank-Nicolson on the resolved bump must not produce
        # undershoots beyond roundoff (verified against the refined run).
        assert snapshots_1d.X.min() >= -1e-8

    def test_velocities_equispaced(self, snapshots_1d):
        velocities = np.unique(snapshots_1d.params[1:, 0])
        assert velocities.shape == (10,)
        assert np.allclose(np.diff(velocities), 1.0 / 9.0)


class TestStrategies:
    def test_pod_march_runs(self, grid_1d, pod_basis_1d, full_march_1d):
        march = integrate_1d(1.5, "pod", grid_1d, n_steps=20, pod_basis=pod_basis_1d)
        err = relative_errors(march, full_march_1d, [20])[0]
        assert err < 1e-2

    def test_kpod_march_traces(self, grid_1d, model_1d, geometry_1d, full_march_1d):
        march = integrate_1d(
            1.5, "kpod", grid_1d, n_steps=10, model=model_1d, geom=geometry_1d, level=1
        )
        assert len(march.traces) == 10
        assert march.mean_path_steps >= 2.0
        err = relative_errors(march, full_march_1d, [10])[0]
        assert err < 1e-2

    def test_missing_context_rejected(self, grid_1d):
        with pytest.raises(ValueError, match="requires"):
            integrate_1d(1.5, "pod", grid_1d, n_steps=2)
        with pytest.raises(ValueError, match="requires"):
            integrate_1d(1.5, "kpod", grid_1d, n_steps=2)
        with pytest.raises(ValueError, match="unknown strategy"):
            integrate_1d(1.5, "nope", grid_1d, n_steps=2)


def test_kernel_spec_carries_grid(grid_1d):
    spec = adv1d.kernel_spec_1d(grid_1d, beta=1e-4)
    assert spec.kind == "centroid-1d"
    assert spec.beta == 1e-4
    features = spec.features(grid_1d.initial_condition())
    assert features.shape == (2,)
    assert abs(features[0] - 0.6) < 1e-3
