import numpy as np
import pytest

from quadcurl.forms import SchemeParams, assemble_parts
from quadcurl.mesh import generate_cube_mesh
from quadcurl.spaces import build_hcurl_space, build_lagrange_space


@pytest.fixture(scope="session")
def mesh1():
    return generate_cube_mesh(1)


@pytest.fixture(scope="session")
def mesh2():
    return generate_cube_mesh(2)


@pytest.fixture(scope="session")
def spaces1(mesh1):
    return build_hcurl_space(mesh1, 2), build_lagrange_space(mesh1, 3)


@pytest.fixture(scope="session")
def spaces2(mesh2):
    return build_hcurl_space(mesh2, 2), build_lagrange_space(mesh2, 3)


@pytest.fixture(scope="session")
def parts2(spaces2):
    return assemble_parts(spaces2[0])


@pytest.fixture(scope="session")
def params():
    return SchemeParams(k=1, tau=20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
