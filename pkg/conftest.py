import numpy as np
import pytest

from Components.Mesh import DomainSpec, generate, refine
from Components.NashGame import GameSpec, NashGame, PlayerSpec
from Components.Verification import make_manufactured


def unit_square(n):
    return generate(DomainSpec(kind="unit-square", resolution=n))


def multi_domain(n):
    return generate(DomainSpec(kind="multi-domain", resolution=n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def square2():
    return unit_square(2)


@pytest.fixture(scope="session")
def square4():
    return unit_square(4)


@pytest.fixture(scope="session")
def square8():
    return unit_square(8)


@pytest.fixture(scope="session")
def multidomain8():
    return multi_domain(8)


@pytest.fixture(scope="session")
def nested_squares():
    meshes = [unit_square(8)]
    for _ in range(2):
        meshes.append(refine(meshes[-1]))
    return meshes


@pytest.fixture(scope="session")
def manufactured():
    return make_manufactured(nu=1.0, alpha1=1.0, alpha2=0.5)


@pytest.fixture(scope="session")
def zero_manufactured():
    return make_manufactured(streamfunction=0, pressure=0, adjoint_streamfunction=0, adjoint_pressure=0)


@pytest.fixture(scope="session")
def game4(square4, manufactured):
    return NashGame(square4, manufactured.game_spec(), workers=1)


@pytest.fixture(scope="session")
def game8(square8, manufactured):
    return NashGame(square8, manufactured.game_spec(), workers=1)


@pytest.fixture(scope="session")
def zero_game(square4):
    spec = GameSpec(nu=1.0, players=(PlayerSpec(alpha=1.0), PlayerSpec(alpha=0.5)))
    return NashGame(square4, spec, workers=1)
