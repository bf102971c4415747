import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from podminn.benchmarks import generate_snapshots
from podminn.fem import P1Space
from podminn.mesh import build_unit_square_mesh

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fine_space():
    return P1Space.from_mesh(build_unit_square_mesh(50))


@pytest.fixture(scope="session")
def snapshots_by_benchmark(fine_space):
    """Full 1000-sample datasets on the 50x50 mesh, generated once per session."""
    cache = {}

    def get(benchmark_id):
        if benchmark_id not in cache:
            cache[benchmark_id] = generate_snapshots(benchmark_id, fine_space, 0, 1000)
        return cache[benchmark_id]

    return get


@pytest.fixture(scope="session")
def small_snapshots():
    """A cheap dataset on a 12x12 mesh for fast pipeline tests."""
    space = P1Space.from_mesh(build_unit_square_mesh(12))
    return generate_snapshots(2, space, 7, 60)
