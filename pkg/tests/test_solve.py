import numpy as np
import pytest

from cornerbie.assembly import BIEKind, assemble
from cornerbie.errors import ConfigError, DimensionMismatch, IncompatibleData
from cornerbie.evaluate import TargetClass, TargetGrid, classify, eval_potential
from cornerbie.problems import HarmonicPolynomial, PointCharges
from cornerbie.solve import (
    Factorized,
    sample_dirichlet_data,
    sample_neumann_data,
    solve_dirichlet,
    solve_neumann_adjoint,
    weak_inner_product,
)

CHARGES = PointCharges([[0.3, 0.4], [0.6, 0.7], [0.55, 0.2]], [1.0, -0.4, 0.25])


@pytest.fixture(scope='module')
def exterior_dirichlet(square_mesh):
    matrix = assemble(square_mesh, BIEKind.EXTERIOR_DIRICHLET)
    return matrix, Factorized(matrix)


def test_interior_dirichlet_harmonic(square_mesh, square_matrix):
    matrix, lu = square_matrix
    field = HarmonicPolynomial(3)
    sigma = solve_dirichlet(matrix, field.dirichlet_data(square_mesh.nodes), lu)
    assert not sigma.weak_only
    assert sigma.kind is BIEKind.INTERIOR_DIRICHLET
    points = np.array([[0.5, 0.5], [0.3, 0.7], [0.5, 0.01], [0.02, 0.03], [1e-4, 2e-4], [0.999, 0.5]])
    grid = TargetGrid.from_points(square_mesh.polygon, points)
    cls = classify(grid, square_mesh)
    assert set(cls.kind) == {TargetClass.FAR.value, TargetClass.NEAR_SMOOTH.value, TargetClass.NEAR_CORNER.value}
    u = eval_potential(sigma, grid, classification=cls)
    err = np.abs(u - field.potential(points))
    assert np.max(err[cls.mask(TargetClass.FAR)]) <= 1e-12
    assert np.max(err) <= 1e-12


def test_exterior_neumann_scattering(square_mesh, square_matrix):
    matrix, lu = square_matrix
    f = CHARGES.scattering_data(square_mesh.nodes)
    sigma = solve_neumann_adjoint(matrix, f, lu)
    assert sigma.kind is BIEKind.EXTERIOR_NEUMANN
    assert sigma.weak_only
    theta = np.linspace(0.0, 2.0 * np.pi, 32, endpoint=False)
    ring = 0.5 + np.column_stack([np.cos(theta), np.sin(theta)]) * 1.2
    u = eval_potential(sigma, TargetGrid.from_points(square_mesh.polygon, ring))
    np.testing.assert_allclose(u, CHARGES.potential(ring), atol=5e-13)


def test_adjoint_density_carries_the_flux(square_mesh, square_matrix):
    # ⟨σ, 1⟩ = -∫ f for the exterior Neumann density, up to the Gauss identity residual
    matrix, lu = square_matrix
    f = CHARGES.scattering_data(square_mesh.nodes)
    sigma = solve_neumann_adjoint(matrix, f, lu)
    total_f = float(f @ square_mesh.sqrt_weights)
    assert total_f == pytest.approx(CHARGES.flux(), rel=1e-10)
    assert weak_inner_product(sigma, np.ones(len(sigma))) == pytest.approx(-total_f, rel=1e-9)
    assert sigma.integral == pytest.approx(-total_f, rel=1e-9)


def test_weak_duality(square_mesh, square_matrix):
    # σᵀ g = fᵀ A⁻¹ g for σ = A⁻ᵀ f
    matrix, lu = square_matrix
    rng = np.random.default_rng(11)
    f = rng.standard_normal(matrix.n)
    g = rng.standard_normal(matrix.n)
    sigma = solve_neumann_adjoint(matrix, f, lu)
    tau = solve_dirichlet(matrix, g, lu)
    lhs = float(sigma.values @ g)
    rhs = float(f @ tau.values)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-9)


def test_weak_inner_product_accepts_callables(square_mesh, square_matrix):
    matrix, lu = square_matrix
    sigma = solve_neumann_adjoint(matrix, CHARGES.scattering_data(square_mesh.nodes), lu)
    x = square_mesh.nodes.points[:, 0]
    assert weak_inner_product(sigma, lambda p: p[:, 0]) == weak_inner_product(sigma, x)
    with pytest.raises(DimensionMismatch):
        weak_inner_product(sigma, np.ones(3))


def test_interior_neumann(square_mesh, exterior_dirichlet):
    matrix, lu = exterior_dirichlet
    field = HarmonicPolynomial(2, 'im', center=(0.5, 0.5))
    f = field.neumann_data(square_mesh.nodes)
    sigma = solve_neumann_adjoint(matrix, f, lu)
    assert sigma.kind is BIEKind.INTERIOR_NEUMANN
    points = np.array([[0.5, 0.5], [0.3, 0.6], [0.7, 0.35], [0.4, 0.3]])
    u = eval_potential(sigma, TargetGrid.from_points(square_mesh.polygon, points))
    diff = u - field.potential(points)
    np.testing.assert_allclose(diff - diff.mean(), 0.0, atol=1e-12)


def test_interior_neumann_rejects_incompatible_data(square_mesh, exterior_dirichlet):
    matrix, lu = exterior_dirichlet
    with pytest.raises(IncompatibleData):
        solve_neumann_adjoint(matrix, square_mesh.sqrt_weights, lu)


def test_kind_checks(square_mesh, square_matrix):
    matrix, lu = square_matrix
    neumann = assemble(square_mesh, BIEKind.EXTERIOR_NEUMANN)
    with pytest.raises(ConfigError):
        solve_dirichlet(neumann, np.zeros(neumann.n))
    with pytest.raises(ConfigError):
        solve_neumann_adjoint(neumann, np.zeros(neumann.n))
    other = assemble(square_mesh, BIEKind.INTERIOR_DIRICHLET)
    with pytest.raises(ConfigError, match='different matrix'):
        solve_dirichlet(other, np.zeros(other.n), lu)


def test_rhs_length_is_checked(square_matrix):
    matrix, lu = square_matrix
    with pytest.raises(DimensionMismatch):
        lu.solve(np.zeros(matrix.n - 1))


def test_factorization_reports_conditioning(square_matrix):
    _, lu = square_matrix
    assert 1e-15 < lu.rcond <= 1.0


def test_sampling_helpers(square_mesh):
    field = HarmonicPolynomial(3, 'im')
    nodes = square_mesh.nodes
    np.testing.assert_allclose(sample_dirichlet_data(nodes, field.potential), field.dirichlet_data(nodes))
    np.testing.assert_allclose(sample_neumann_data(nodes, field.gradient), field.neumann_data(nodes))


def test_density_panels(square_mesh, square_matrix):
    matrix, lu = square_matrix
    sigma = solve_dirichlet(matrix, HarmonicPolynomial(1).dirichlet_data(square_mesh.nodes), lu)
    panels = sigma.panels()
    assert len(panels) == len(square_mesh.panels)
    assert sum(len(p.values) for p in panels) == matrix.n
    assert sum(p.is_corner for p in panels) == 4
    assert len(sigma.panels(skip=[0])) == len(panels) - 1
    np.testing.assert_allclose(sigma.pointwise * square_mesh.sqrt_weights, sigma.values)


@pytest.mark.slow
def test_triangle_interior_dirichlet(triangle_mesh, triangle_matrix):
    matrix, lu = triangle_matrix
    field = HarmonicPolynomial(2, center=(0.4, 0.3))
    sigma = solve_dirichlet(matrix, field.dirichlet_data(triangle_mesh.nodes), lu)
    points = np.array([[0.4, 0.3], [0.5, 0.01], [0.05, 0.02], [0.3, 0.78]])
    u = eval_potential(sigma, TargetGrid.from_points(triangle_mesh.polygon, points))
    np.testing.assert_allclose(u, field.potential(points), atol=1e-12)
