import numpy as np
import pytest

from shellmatch import shapes
from shellmatch.mesh import TriMesh
from shellmatch.spectral import compute_basis


@pytest.fixture(scope="session")
def sphere():
    v, f = shapes.icosphere(3)
    return TriMesh.from_arrays(v, f, name="icosphere")


@pytest.fixture(scope="session")
def sphere_basis(sphere):
    return compute_basis(sphere, 60)


@pytest.fixture(scope="session")
def small_sphere():
    v, f = shapes.icosphere(2)
    return TriMesh.from_arrays(v, f)


@pytest.fixture(scope="session")
def grid_mesh():
    v, f = shapes.grid(15, 15)
    return TriMesh.from_arrays(v, f)


@pytest.fixture(scope="session")
def tube():
    a, _ = shapes.tube_pair(60.0, n_around=12, n_along=16)
    return a


@pytest.fixture(scope="session")
def biped_small():
    v, f = shapes.biped(spacing=0.05)
    return TriMesh.from_arrays(v, f, name="biped")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tetrahedron():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return v, f


# one line per acceptance criterion, shown at the end of the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
