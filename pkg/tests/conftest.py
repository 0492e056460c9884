"""Shared fixtures: the expensive offline artifacts are built once per session."""

import numpy as np
import pytest

from kpod.geometry import build_geometry
from kpod.kpca import kpca_fit
from kpod.problems import adv1d, adv2d
from kpod.reduction import svd_truncate


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" in report.nodeid:
                name = report.nodeid.split("::")[-1]
                lines.append(f"{status.upper():6s} {name}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split()[-1]):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid_1d():
    return adv1d.Grid1D()


@pytest.fixture(scope="session")
def snapshots_1d(grid_1d):
    return adv1d.campaign_1d(grid_1d)


@pytest.fixture(scope="session")
def pod_basis_1d(snapshots_1d):
    mean = snapshots_1d.mean()
    return svd_truncate(snapshots_1d.X - mean[:, None], 1e-8).with_offset(mean)


@pytest.fixture(scope="session")
def model_1d(grid_1d, snapshots_1d):
    return kpca_fit(snapshots_1d, adv1d.kernel_spec_1d(grid_1d), eps=1e-2)


@pytest.fixture(scope="session")
def geometry_1d(model_1d):
    return build_geometry(model_1d.Z)


@pytest.fixture(scope="session")
def full_march_1d(grid_1d):
    return adv1d.integrate_1d(1.5, "full", grid_1d, n_steps=200)


@pytest.fixture(scope="session")
def kpod_marches_1d(grid_1d, model_1d, geometry_1d):
    """kPOD marches at v=1.5 for base levels 1, 2, 3 (dict keyed by level)."""
    return {
        level: adv1d.integrate_1d(
            1.5, "kpod", grid_1d, n_steps=200, model=model_1d, geom=geometry_1d,
            level=level,
        )
        for level in (1, 2, 3)
    }


@pytest.fixture(scope="session")
def mesh_2d():
    return adv2d.build_mesh_2d(0.04)


@pytest.fixture(scope="session")
def flows_2d(mesh_2d):
    return adv2d.flow_fields(mesh_2d)


@pytest.fixture(scope="session")
def snapshots_2d(mesh_2d):
    return adv2d.campaign_2d(200, seed=7, mesh=mesh_2d)


@pytest.fixture(scope="session")
def model_2d(mesh_2d, snapshots_2d):
    return kpca_fit(snapshots_2d, adv2d.kernel_spec_2d(mesh_2d), eps=1e-3)


@pytest.fixture(scope="session")
def geometry_2d(model_2d):
    return build_geometry(model_2d.Z)


@pytest.fixture(scope="session")
def pod_basis_2d(snapshots_2d):
    mean = snapshots_2d.mean()
    return svd_truncate(snapshots_2d.X - mean[:, None], 1e-8).with_offset(mean)


@pytest.fixture(scope="session")
def toy_mesh_2d():
    return adv2d.build_mesh_2d(0.25)


@pytest.fixture(scope="session")
def toy_snapshots_2d(toy_mesh_2d):
    return adv2d.campaign_2d(20, seed=3, mesh=toy_mesh_2d)
