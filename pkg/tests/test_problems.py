import numpy as np
import pytest

from cornerbie import problems
from cornerbie.errors import ConfigError
from cornerbie.problems import HarmonicPolynomial, PointCharges, normal_component


def _fd_gradient(f, points, h=1e-6):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return np.column_stack([(f(points + ex) - f(points - ex)) / (2 * h), (f(points + ey) - f(points - ey)) / (2 * h)])


def test_charge_gradient():
    charges = PointCharges([[0.3, 0.4], [0.6, 0.7]], [1.0, -0.5])
    points = np.array([[1.2, 0.1], [-0.4, 0.9], [0.5, 2.0]])
    np.testing.assert_allclose(charges.gradient(points), _fd_gradient(charges.potential, points), rtol=1e-6, atol=1e-8)


def test_charge_flux_and_total():
    charges = PointCharges([[0.3, 0.4], [0.6, 0.7]], [1.0, -0.25])
    assert charges.total == 0.75
    assert charges.flux() == pytest.approx(-1.5 * np.pi)


def test_charge_shape_mismatch():
    with pytest.raises(ConfigError) as info:
        PointCharges([[0.3, 0.4], [0.6, 0.7]], [1.0])
    assert info.value.field == 'data.charges'


def test_charges_inside_are_seeded(triangle):
    a = PointCharges.inside(triangle, 4, np.random.default_rng(4))
    b = PointCharges.inside(triangle, 4, np.random.default_rng(4))
    np.testing.assert_array_equal(a.locations, b.locations)
    np.testing.assert_array_equal(a.strengths, b.strengths)
    assert np.all(triangle.contains(a.locations))
    assert np.all(triangle.boundary_distance(a.locations) >= 0.1)


def test_charges_outside(square):
    charges = PointCharges.outside(square, 20, np.random.default_rng(1), zero_mean=True)
    radius = np.max(np.hypot(*(square.vertices - square.centroid).T))
    r = np.hypot(*(charges.locations - square.centroid).T)
    assert np.all((r >= 1.5 * radius) & (r <= 3.0 * radius))
    assert charges.total == pytest.approx(0.0, abs=1e-14)


def test_no_room_for_charges(triangle):
    with pytest.raises(ConfigError):
        PointCharges.inside(triangle, 1, np.random.default_rng(0), margin=1.0)


@pytest.mark.parametrize('kind', ['re', 'im'])
def test_harmonic_gradient(kind):
    field = HarmonicPolynomial(4, kind, center=(0.2, -0.1))
    points = np.array([[0.5, 0.5], [1.3, -0.2], [-0.7, 0.4]])
    np.testing.assert_allclose(field.gradient(points), _fd_gradient(field.potential, points), rtol=1e-6, atol=1e-8)


def test_harmonic_validation():
    with pytest.raises(ConfigError):
        HarmonicPolynomial(-1)
    with pytest.raises(ConfigError):
        HarmonicPolynomial(2, 'abs')
    assert np.all(HarmonicPolynomial(0).gradient([[0.3, 0.3], [1.0, 2.0]]) == 0.0)


def test_normal_component(square_mesh):
    nodes = square_mesh.nodes
    np.testing.assert_array_equal(normal_component(1)(nodes), nodes.normals()[:, 1] * nodes.sqrt_weights)
    with pytest.raises(ConfigError):
        normal_component(2)


def test_shapes():
    assert problems.regular_polygon(6).n_corners == 6
    assert problems.star_polygon(5).n_corners == 10
    with pytest.raises(ConfigError):
        problems.regular_polygon(2)
    with pytest.raises(ConfigError):
        problems.star_polygon(4, r_out=0.5, r_in=0.6)
