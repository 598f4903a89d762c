import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bitfed import bfv, sampling
from bitfed.ring import RingContext, default_context

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("suite")

# 65537 = 2^16 + 1 supports negacyclic NTTs for every n up to 2^15
TEST_PRIME = 65537


@pytest.fixture(scope="session")
def ctx8() -> RingContext:
    return RingContext.create(8, [TEST_PRIME], 17)


@pytest.fixture(scope="session")
def ctx16() -> RingContext:
    return RingContext.create(16, [TEST_PRIME], 17)


@pytest.fixture(scope="session")
def ctx() -> RingContext:
    return default_context()


@pytest.fixture(scope="session")
def sk(ctx) -> bfv.SecretKey:
    return bfv.keygen(sampling.seed_from_int(2024), ctx)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
