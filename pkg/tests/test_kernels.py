import numpy as np
import pytest

from cornerbie import problems
from cornerbie.errors import AtCorner, CoincidentPoints
from cornerbie.geometry import NodeSet, TargetPoints
from cornerbie.kernels import (
    Layer,
    Side,
    double_layer_matrix,
    dlp_kernel,
    green,
    layer_kernel_on_edge,
    neumann_kernel,
    neumann_matrix,
    single_layer_matrix,
    trace_limits,
    wedge_kernel,
)


def test_green():
    assert green([0, 0], [1, 0]) == 0.0
    assert green([0, 0], [np.e, 0]) == pytest.approx(-1.0 / (2 * np.pi))
    with pytest.raises(CoincidentPoints):
        green([0.5, 0.5], [0.5, 0.5])


def test_dlp_kernel_vanishes_on_a_straight_edge():
    square = problems.unit_square()
    assert dlp_kernel(square, 0.2, 0.7) == 0.0
    with pytest.raises(CoincidentPoints):
        dlp_kernel(square, 1.5, 1.5)


def test_dlp_kernel_across_a_corner():
    # source on edge 1 at (1, 0.5), target on edge 0 at (0.5, 0); inward normal at the source is (-1, 0)
    square = problems.unit_square()
    d = np.array([1.0, 0.5]) - np.array([0.5, 0.0])
    expected = -(np.array([-1.0, 0.0]) @ d) / (2 * np.pi * (d @ d))
    assert dlp_kernel(square, 1.5, 0.5) == pytest.approx(expected)


def test_neumann_kernel_is_the_adjoint_pointwise():
    square = problems.unit_square()
    for s, t in [(1.5, 0.5), (0.25, 2.75), (3.1, 1.9)]:
        assert neumann_kernel(square, s, t) == pytest.approx(dlp_kernel(square, t, s), rel=1e-14)


def test_dlp_kernel_accepts_a_corner_source():
    square = problems.unit_square()
    # t = 1 is the corner (1, 0); s = 2.5 sits on edge 2 at (0.5, 1)
    d = np.array([0.5, 1.0]) - np.array([1.0, 0.0])
    expected = -(np.array([0.0, -1.0]) @ d) / (2 * np.pi * (d @ d))
    assert dlp_kernel(square, 2.5, 1.0) == pytest.approx(expected, rel=1e-14)
    assert dlp_kernel(square, 2.5, 1.0) == pytest.approx(dlp_kernel(square, 2.5, 1.0 + 1e-9), rel=1e-7)
    assert neumann_kernel(square, 1.0, 2.5) == pytest.approx(expected, rel=1e-14)


def test_dlp_kernel_is_zero_for_a_corner_on_the_same_edge():
    square = problems.unit_square()
    assert dlp_kernel(square, 0.5, 1.0) == 0.0
    assert dlp_kernel(square, 1.5, 1.0) == 0.0
    assert dlp_kernel(square, 0.5, 4.0) == 0.0


def test_the_normal_point_must_avoid_the_corners():
    square = problems.unit_square()
    with pytest.raises(AtCorner):
        dlp_kernel(square, 1.0, 2.5)


@pytest.mark.parametrize(
    'layer, side, derivative, expected',
    [
        (Layer.DOUBLE, Side.INTERIOR, False, 1.0),
        (Layer.DOUBLE, Side.EXTERIOR, False, 3.0),
        (Layer.SINGLE, Side.INTERIOR, True, 3.0),
        (Layer.SINGLE, Side.EXTERIOR, True, 1.0),
        (Layer.SINGLE, Side.INTERIOR, False, 2.0),
        ('single', 'exterior', False, 2.0),
    ],
)
def test_trace_limits(layer, side, derivative, expected):
    assert trace_limits(layer, side, 2.0, 2.0, derivative) == expected


def test_wedge_kernel_matches_double_layer():
    square = problems.unit_square()
    # corner 1 at (1, 0): target on edge 0 at distance x, source on edge 1 at distance u
    x, u = 0.3, np.array([0.01, 0.2, 0.7])
    target = TargetPoints.near_corner(square, 1, [[-x, 0.0]])
    sources = NodeSet.on_corner(square, 1, u, np.ones_like(u))
    np.testing.assert_allclose(double_layer_matrix(target, sources)[0], wedge_kernel(x, u, 0.5), rtol=1e-13)


def test_double_layer_gauss_identity(smooth_nodes):
    triangle = problems.proxy_triangle()
    nodes = smooth_nodes(triangle, panels_per_edge=8, order=16)
    inside = TargetPoints.from_points(triangle, [[0.4, 0.3], [0.45, 0.25]])
    outside = TargetPoints.from_points(triangle, [[2.0, 1.0], [-1.0, -0.5]])
    np.testing.assert_allclose(double_layer_matrix(inside, nodes) @ nodes.weights, -1.0, atol=1e-12)
    np.testing.assert_allclose(double_layer_matrix(outside, nodes) @ nodes.weights, 0.0, atol=1e-12)


def test_neumann_matrix_is_the_transposed_double_layer(smooth_nodes):
    nodes = smooth_nodes(problems.l_shape(), panels_per_edge=3, order=8)
    d = double_layer_matrix(nodes, nodes, on_boundary=True)
    np.testing.assert_allclose(neumann_matrix(nodes, nodes), d.T, rtol=1e-14, atol=0.0)
    same = nodes.edge[:, None] == nodes.edge[None, :]
    assert np.all(d[same] == 0.0)


def test_kernel_on_edge_matches_matrices():
    square = problems.unit_square()
    target = TargetPoints.from_points(square, [[0.4, 0.6]])
    u = np.array([0.1, 0.5, 0.9])
    sources = NodeSet.on_corner(square, 0, u, np.ones_like(u))
    for layer, matrix in ((Layer.DOUBLE, double_layer_matrix), (Layer.SINGLE, single_layer_matrix)):
        on_edge = layer_kernel_on_edge(layer, square, target.anchor[0], target.rel[0], 0, 0, u)
        np.testing.assert_allclose(on_edge, matrix(target, sources)[0], rtol=1e-14)


def test_coincident_target_raises():
    square = problems.unit_square()
    sources = NodeSet.on_corner(square, 0, [0.5], [1.0])
    with pytest.raises(CoincidentPoints):
        single_layer_matrix(TargetPoints.from_points(square, [[0.5, 0.0]]), sources)
