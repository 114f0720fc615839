import json

import numpy as np
import pytest

from cornerbie import problems
from cornerbie.errors import AtCorner, ConfigError, DegenerateAngle, MeshInfeasible, SelfIntersecting
from cornerbie.geometry import (
    PanelKind,
    TargetPoints,
    build_mesh,
    build_polygon,
    load_polygon,
    panel_distance,
    param_point,
    separation,
)


def test_clockwise_input_is_reversed():
    ccw = build_polygon([[0, 0], [1, 0], [0.3, 0.8]])
    cw = build_polygon([[0, 0], [0.3, 0.8], [1, 0]])
    assert cw.area > 0
    np.testing.assert_allclose(cw.vertices[0], [0, 0])
    np.testing.assert_allclose(cw.vertices, ccw.vertices)


def test_angles_and_lengths():
    square = problems.unit_square()
    np.testing.assert_allclose(square.corner_angles, 0.5)
    assert square.total_length == pytest.approx(4.0)
    np.testing.assert_allclose(square.corner_params, [0, 1, 2, 3])
    np.testing.assert_allclose(square.centroid, [0.5, 0.5])
    assert square.area == pytest.approx(1.0)

    lshape = problems.l_shape()
    assert lshape.corner_angles[3] == pytest.approx(1.5)
    assert np.sum(lshape.corner_angles) == pytest.approx(lshape.n_corners - 2)

    star = problems.star_polygon(4)
    assert np.all(star.corner_angles[1::2] > 1.0)
    assert np.all(star.corner_angles[::2] < 1.0)


def test_normals():
    square = problems.unit_square()
    np.testing.assert_allclose(square.outward_normals[0], [0, -1])
    np.testing.assert_allclose(square.inward_normals[1], [-1, 0])


@pytest.mark.parametrize(
    'vertices, error',
    [
        ([[0, 0], [1, 0]], DegenerateAngle),
        ([[0, 0], [1, 0], [1, 0], [0, 1]], DegenerateAngle),
        ([[0, 0], [1, 0], [2, 0], [1, 1]], DegenerateAngle),
        ([[0, 0], [1, 1], [1, 0], [0, 1]], SelfIntersecting),
        ([[0, 0], [2, 0], [2, 2], [1, 0]], SelfIntersecting),
        ([[0, 0], [2, 0], [2, 2], [0, 2], [2, 1]], SelfIntersecting),
        ([[0, 0], [1, 0], [3, 0]], DegenerateAngle),
        ([[0, 0], [1, 0], [float('nan'), 1]], ConfigError),
    ],
)
def test_invalid_polygons(vertices, error):
    with pytest.raises(error):
        build_polygon(vertices)


def test_geometry_errors_are_config_errors():
    with pytest.raises(ConfigError) as info:
        build_polygon([[0, 0], [1, 1], [1, 0], [0, 1]])
    assert info.value.field == 'vertices'
    assert info.value.exit_code == 2


def test_load_polygon(tmp_path):
    path = tmp_path / 'poly.json'
    path.write_text(json.dumps({'vertices': [[0, 0], [2, 0], [2, 1], [0, 1]]}))
    assert load_polygon(path).total_length == pytest.approx(6.0)
    path.write_text('{"vertices": [[0, 0], ')
    with pytest.raises(ConfigError, match='line 1'):
        load_polygon(path)


def test_param_point():
    square = problems.unit_square()
    point, normal, edge = param_point(square, 1.25)
    np.testing.assert_allclose(point, [1.0, 0.25])
    np.testing.assert_allclose(normal, [-1.0, 0.0])
    assert edge == 1
    point, _, edge = param_point(square, 4.5)
    np.testing.assert_allclose(point, [0.5, 0.0])
    assert edge == 0
    with pytest.raises(AtCorner):
        param_point(square, 2.0)
    with pytest.raises(AtCorner):
        param_point(square, 4.0)


def test_mesh_layout(square_mesh, basis):
    disc = square_mesh
    corners = [p for p in disc.panels if p.kind is PanelKind.CORNER]
    assert len(corners) == 4
    assert all(p.order == 2 * basis.k for p in corners)
    np.testing.assert_allclose(disc.corner_half_length, 1.0 / 16.0)
    assert disc.n == sum(p.order for p in disc.panels)
    assert np.sum(disc.weights) == pytest.approx(4.0, rel=1e-11)
    assert np.all(disc.weights > 0)
    # each corner panel holds K nodes on either leg, symmetric about the vertex
    idx = disc.corner_indices(2)
    offsets = disc.nodes.offset[idx]
    np.testing.assert_allclose(offsets[: basis.k], -offsets[basis.k:][::-1])
    assert np.all(disc.nodes.edge[idx[: basis.k]] == 1)
    assert np.all(disc.nodes.edge[idx[basis.k:]] == 2)


def test_smooth_panels_are_graded_dyadically(square_mesh):
    lengths = sorted({round(p.length, 12) for p in square_mesh.panels if not p.is_corner})
    np.testing.assert_allclose(lengths, [1 / 16, 1 / 8, 1 / 4])


def test_flank_panels(square_mesh):
    left, right = square_mesh.flank_panels(1)
    d = square_mesh.corner_half_length[1]
    assert (left.u0, left.u1) == pytest.approx((-2 * d, -d))
    assert (right.u0, right.u1) == pytest.approx((d, 2 * d))
    li, ri = square_mesh.flank_indices(1)
    assert len(li) == len(ri) == square_mesh.smooth_order


def test_node_parameters_are_increasing_along_the_boundary(triangle_mesh):
    s = triangle_mesh.s
    # the corner panel at vertex 0 wraps; start after it
    start = triangle_mesh.corner_panel(0).order // 2
    rolled = np.roll(s, -start)
    assert np.all(np.diff(rolled[:-start]) > 0)


def test_mesh_infeasible():
    square = problems.unit_square()
    with pytest.raises(MeshInfeasible):
        build_mesh(square, delta=0.3)
    with pytest.raises(ConfigError):
        build_mesh(square, delta=-0.1)
    with pytest.raises(ConfigError):
        build_mesh(square, rho_min=1.0)


def test_corner_order_must_match_basis(square, basis):
    with pytest.raises(ConfigError, match='2K'):
        build_mesh(square, basis=basis, corner_order=2 * basis.k + 2)


def test_corner_relative_separation_is_exact():
    square = problems.unit_square()
    tiny = 2.0**-200
    a = TargetPoints.near_corner(square, 2, [[-tiny, 0.0]])
    b = TargetPoints.near_corner(square, 2, [[0.0, -tiny]])
    dx, dy = separation(a, b)
    assert dx[0, 0] == -tiny
    assert dy[0, 0] == tiny


def test_panel_distance_of_corner_panel():
    square = problems.unit_square()
    targets = TargetPoints.near_corner(square, 0, [[0.1, 0.1], [-0.05, -0.05]])
    d = panel_distance(square, 0, -1, -0.2, 0.2, True, targets)
    np.testing.assert_allclose(d, [0.1, np.hypot(0.05, 0.05)])


def test_contains_excludes_the_boundary():
    ell = build_polygon([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])
    points = [[0.5, 0.5], [1.5, 0.5], [0.5, 1.5], [1.5, 1.5], [1.0, 0.0], [1.0, 1.5], [1.0, 1.0], [3.0, 0.5]]
    assert ell.contains(points).tolist() == [True, True, True, False, False, False, False, False]
    assert ell.contains([0.5, 0.5]).shape == (1,)
