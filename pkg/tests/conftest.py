import pytest

from sil.activations import hard_trunc, quadratic, smooth_trunc
from sil.sampling import SeedStream, sample_instance


@pytest.fixture(scope="session")
def stream():
    return SeedStream(20240817)


@pytest.fixture(scope="session")
def small_hard(stream):
    return sample_instance(30, 300, hard_trunc(8.0), stream.child("small_hard"))


@pytest.fixture(scope="session")
def small_quad(stream):
    return sample_instance(30, 300, quadratic(), stream.child("small_quad"))


@pytest.fixture(scope="session")
def small_smooth(stream):
    return sample_instance(30, 300, smooth_trunc(8.0), stream.child("small_smooth"))

