import pytest
from hypothesis import HealthCheck, settings

from qci_lab import geometry

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def sphere():
    return geometry.sphere()


@pytest.fixture(scope="session")
def spheroid02():
    return geometry.spheroid(0.2)


@pytest.fixture(scope="session")
def perturbed005():
    return geometry.perturbed_sphere(0.05)
