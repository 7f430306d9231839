import numpy as np
import pytest

from aee_lab.models.integrators import ModelSpec, SodeDrift, SodeDriftKind, SodeModel
from aee_lab.models.noise import GridSpec, NoiseTable
from aee_lab.models.nonlinearity import NoiseSpec, Nonlinearity, NonlinearityKind
from aee_lab.services.spectral_core import make_dirichlet_laplacian


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-grade Monte Carlo run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def make_model():
    """Factory for small SPDE models; X0 = e_1 unless given."""

    def _make(n=8, kind=NonlinearityKind.SINE, coef=1.0, rho_decay=2.0, T=1.0, X0=None, q=None):
        op = make_dirichlet_laplacian(n)
        noise = NoiseSpec(q=q) if q is not None else NoiseSpec.power_decay(op, rho_decay)
        if X0 is None:
            X0 = np.zeros(n)
            X0[0] = 1.0
        return ModelSpec(op=op, nl=Nonlinearity(kind=kind, coef=coef), noise=noise, T=T, X0=X0)

    return _make


@pytest.fixture
def make_sode():
    def _make(C=((-1.0, 0.0), (0.0, -2.0)), kind=SodeDriftKind.LINEAR, B=((0.3, 0.2), (0.2, 0.3)),
              coef=0.5, T=1.0, Y0=(1.0, 1.0)):
        drift = SodeDrift(kind=kind, B=np.array(B) if kind == SodeDriftKind.LINEAR else None, coef=coef)
        return SodeModel(C=np.array(C), drift=drift, T=T, Y0=np.array(Y0))

    return _make


@pytest.fixture
def small_grid():
    return GridSpec(T=1.0, m=8, refine=4)


@pytest.fixture
def coarsen():
    """Maps a table to the same Brownian path on a grid with twice the step."""

    def _coarsen(table, eigenvalues):
        decay = np.exp(-eigenvalues * table.h)[:, None]
        return NoiseTable(
            db=table.db[..., 0::2] + table.db[..., 1::2],
            conv=decay * table.conv[..., 0::2] + table.conv[..., 1::2],
            h=2.0 * table.h,
            master_seed=table.master_seed,
            stream_ids=table.stream_ids,
            domain=table.domain,
        )

    return _coarsen
