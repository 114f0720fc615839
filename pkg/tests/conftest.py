import numpy as np
import pytest

from cornerbie import problems
from cornerbie.assembly import BIEKind, assemble
from cornerbie.corner_basis import build_corner_basis
from cornerbie.geometry import NodeSet, build_mesh
from cornerbie.quadrature import gauss_legendre
from cornerbie.solve import Factorized


@pytest.fixture(scope='session', autouse=True)
def cache_dir(tmp_path_factory):
    """Bases and singular tables go to a per-session cache directory."""
    path = tmp_path_factory.mktemp('cornerbie-cache')
    mp = pytest.MonkeyPatch()
    mp.setenv('CORNERBIE_CACHE', str(path))
    yield path
    mp.undo()


@pytest.fixture(scope='session')
def basis(cache_dir):
    return build_corner_basis()


@pytest.fixture(scope='session')
def square():
    return problems.unit_square()


@pytest.fixture(scope='session')
def triangle():
    return problems.proxy_triangle()


@pytest.fixture(scope='session')
def square_mesh(square, basis):
    return build_mesh(square, basis=basis)


@pytest.fixture(scope='session')
def triangle_mesh(triangle, basis):
    return build_mesh(triangle, basis=basis)


@pytest.fixture(scope='session')
def square_matrix(square_mesh):
    """Interior Dirichlet matrix of the unit square with its LU."""
    matrix = assemble(square_mesh, BIEKind.INTERIOR_DIRICHLET)
    return matrix, Factorized(matrix)


@pytest.fixture(scope='session')
def triangle_matrix(triangle_mesh):
    matrix = assemble(triangle_mesh, BIEKind.INTERIOR_DIRICHLET)
    return matrix, Factorized(matrix)


def _smooth_nodes(polygon, panels_per_edge: int = 4, order: int = 12) -> NodeSet:
    """Uniform Gauss-Legendre panels on every edge, anchored at the edge's start vertex."""
    rule = gauss_legendre(order)
    anchors, offsets, edges, weights = [], [], [], []
    for e, length in enumerate(polygon.edge_lengths):
        cuts = np.linspace(0.0, length, panels_per_edge + 1)
        for a, b in zip(cuts[:-1], cuts[1:]):
            u, w = rule.on(a, b)
            anchors.append(np.full(order, e))
            offsets.append(u)
            edges.append(np.full(order, e))
            weights.append(w)
    return NodeSet(
        polygon, np.concatenate(anchors), np.concatenate(offsets), np.concatenate(edges), np.concatenate(weights)
    )


@pytest.fixture
def smooth_nodes():
    """Node sets without corner panels, for checks that need no singular tables."""
    return _smooth_nodes
