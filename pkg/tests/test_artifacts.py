import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest

from cornerbie import artifacts
from cornerbie.assembly import BIEKind, assemble_direct
from cornerbie import problems
from cornerbie.problems import HarmonicPolynomial
from cornerbie.solve import solve_dirichlet, solve_neumann_adjoint


def _rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def test_mesh_csv(square_mesh, tmp_path):
    path = artifacts.write_mesh_csv(square_mesh, tmp_path / 'mesh.csv')
    rows = _rows(path)
    assert rows[0] == ['panel_id', 'kind', 'a', 'b', 'node_index', 's', 'w']
    assert len(rows) == square_mesh.n + 1
    assert {r[1] for r in rows[1:]} == {'corner', 'smooth'}
    w = np.array([float(r[6]) for r in rows[1:]])
    np.testing.assert_array_equal(w, square_mesh.weights)
    assert b'\r' not in path.read_bytes()


def test_density_csv_marks_weak_nodes(square_mesh, square_matrix, tmp_path):
    matrix, lu = square_matrix
    sigma = solve_neumann_adjoint(matrix, problems.normal_component(0)(square_mesh.nodes), lu)
    rows = _rows(artifacts.write_density_csv(sigma, tmp_path / 'density.csv'))
    assert rows[0] == ['node_index', 's', 'w', 'sigma_sqrt_w', 'weak_only', 'source']
    weak = np.array([r[4] == '1' for r in rows[1:]])
    corner_nodes = sum(p.order for p in square_mesh.panels if p.is_corner)
    assert weak.sum() == corner_nodes
    np.testing.assert_array_equal([float(r[3]) for r in rows[1:]], sigma.values)

    strong = solve_dirichlet(matrix, HarmonicPolynomial(1).dirichlet_data(square_mesh.nodes), lu)
    rows = _rows(artifacts.write_density_csv(strong, tmp_path / 'strong.csv'))
    assert all(r[4] == '0' for r in rows[1:])


def test_eval_csv(tmp_path):
    points = np.array([[0.1, 0.2], [3.0, 4.0]])
    u = np.array([1.0 / 3.0, -2.5])
    path = artifacts.write_eval_csv(points, ['near_smooth', 'far'], u, tmp_path / 'eval.csv', u + 1e-12, ['a', 'b'])
    rows = _rows(path)
    assert rows[0] == ['x', 'y', 'class', 'u', 'reference_u', 'abs_error', 'grid']
    assert rows[1][3] == '0.33333333333333331'
    assert float(rows[1][3]) == u[0]
    assert rows[2][2] == 'far' and rows[2][6] == 'b'
    assert float(rows[2][5]) == pytest.approx(1e-12, rel=1e-3)


def test_json_is_deterministic(tmp_path):
    payload = {'b': np.float64(0.1), 'a': np.arange(3), 'kind': BIEKind.INTERIOR_NEUMANN}
    first = artifacts.write_json(tmp_path / 'one.json', payload).read_bytes()
    second = artifacts.write_json(tmp_path / 'two.json', dict(reversed(list(payload.items())))).read_bytes()
    assert first == second
    doc = json.loads(first)
    assert list(doc) == ['a', 'b', 'kind']
    assert doc['b'] == 0.1


def test_matrix_dump(smooth_nodes, tmp_path):
    matrix = assemble_direct(smooth_nodes(problems.proxy_triangle(), 2, 6), BIEKind.EXTERIOR_NEUMANN)
    path = artifacts.write_matrix(matrix, tmp_path / 'matrix.bin')
    assert path.read_bytes()[:8] == b'CBIEMAT1'
    assert path.stat().st_size == 24 + 8 * matrix.n**2
    values, kind = artifacts.read_matrix(path)
    assert kind is BIEKind.EXTERIOR_NEUMANN
    np.testing.assert_array_equal(values, matrix.values)
    (tmp_path / 'junk.bin').write_bytes(b'nothing here')
    with pytest.raises(ValueError):
        artifacts.read_matrix(tmp_path / 'junk.bin')


def test_resolve_log(tmp_path):
    state = SimpleNamespace(residuals=[1e-15, 2e-15, 4e-15], delta=0.25, layout=SimpleNamespace(nodes=range(90)))
    rows = _rows(artifacts.write_resolve_log(state, tmp_path / 'resolve.csv'))
    assert rows[0] == ['level', 'delta_j', 'n_local', 'residual']
    assert [r[1] for r in rows[1:]] == ['0.25', '0.125', '0.0625']
    assert all(r[2] == '90' for r in rows[1:])


def test_failed_write_leaves_nothing(tmp_path):
    def rows():
        yield [1.0]
        raise RuntimeError('boom')

    with pytest.raises(RuntimeError):
        artifacts._write_csv(tmp_path / 'partial.csv', ['x'], rows())
    assert list(tmp_path.iterdir()) == []
