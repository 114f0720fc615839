from dataclasses import replace

import numpy as np
import pytest

from cornerbie.corner_basis import (
    PowerFamily,
    build_corner_basis,
    build_power_matrix,
    interpolation_nodes,
    svd_basis,
    two_sided_extend,
)
from cornerbie.errors import ConfigError, IllConditioned


def test_basis_shape(basis):
    assert 10 <= basis.k <= 120
    assert np.all(np.diff(basis.nodes) > 0)
    assert 0.0 < basis.nodes[0] and basis.nodes[-1] < 1.0
    assert np.all(basis.weights > 0)
    assert basis.cond <= 1e4
    assert basis.weights.sum() == pytest.approx(1.0, rel=1e-10)


def test_weights_integrate_the_basis_functions(basis):
    x, w = basis.family.grid
    moments = basis.grid_values.T @ w
    np.testing.assert_allclose(basis.phi_at_nodes @ basis.weights, moments, atol=1e-10 * np.abs(basis.phi_at_nodes).max())


def test_grid_functions_are_orthonormal(basis):
    _, w = basis.family.grid
    gram = basis.grid_values.T @ (w[:, None] * basis.grid_values)
    np.testing.assert_allclose(gram, np.eye(basis.k), atol=1e-12)


def test_random_powers_are_in_the_span(basis):
    rng = np.random.default_rng(3)
    x, _ = basis.family.grid
    for mu in basis.family.sample_exponents(rng, 10):
        assert basis.projection_residual(x**mu) <= 1e-10


def test_interpolation_of_powers(basis):
    rng = np.random.default_rng(5)
    t = np.sort(rng.uniform(1e-6, 1.0, 50))
    for mu in (0.0, 0.5, np.pi, 17.25):
        interp = basis.interpolation_matrix(t) @ basis.nodes**mu
        np.testing.assert_allclose(interp, t**mu, atol=1e-8)


def test_coefficients_roundtrip(basis):
    c = np.zeros(basis.k)
    c[[0, 4]] = [1.0, -2.0]
    values = basis.phi_at_nodes.T @ c
    np.testing.assert_allclose(basis.coefficients(values), c, atol=1e-10)


def test_two_sided_basis(basis):
    two = two_sided_extend(basis, 0.5)
    assert two.k == basis.k
    assert len(two.nodes) == 2 * basis.k
    np.testing.assert_allclose(two.nodes[: basis.k], -two.nodes[basis.k:][::-1])
    assert two.weights.sum() == pytest.approx(1.0, rel=1e-10)
    # |t|^0.5 and sgn(t)|t|^1.5 are both in the span
    t = np.array([-0.4, -1e-3, 2e-5, 0.3])
    for f in (lambda s: np.abs(s) ** 0.5, lambda s: np.sign(s) * np.abs(s) ** 1.5):
        np.testing.assert_allclose(two.interpolation_matrix(t) @ f(two.nodes), f(t), atol=1e-8)
    # the even/odd functions at the nodes give the two-sided U matrix
    np.testing.assert_allclose(two.evaluate(two.nodes).T * np.sqrt(two.weights), two.u_matrix, atol=1e-10)


def test_small_family():
    family = PowerFamily(exponents_override=(0.0, 1.0, 2.0), levels=4, grid_order=8)
    funcs = svd_basis(build_power_matrix(family), 1e-13, family)
    assert funcs.k == 3
    assert funcs.values.shape[1] == 4


def test_eps_is_validated():
    family = PowerFamily(exponents_override=(0.0, 1.0), levels=2, grid_order=4)
    with pytest.raises(ConfigError) as info:
        svd_basis(build_power_matrix(family), 1e-3, family)
    assert info.value.field == 'basis.eps'


def test_condition_bound_is_enforced(basis):
    with pytest.raises(IllConditioned):
        build_corner_basis(basis.eps, basis.family, cond_bound=1.0 + 1e-12)


def test_cache_roundtrip(basis, cache_dir):
    assert any(p.name.startswith('basis-') for p in cache_dir.iterdir())
    again = build_corner_basis(basis.eps, basis.family, basis.cond_bound, False)
    np.testing.assert_allclose(again.nodes, basis.nodes, rtol=1e-12)
    np.testing.assert_allclose(again.weights, basis.weights, rtol=1e-10)


def test_default_family_has_one_root_per_function():
    family = PowerFamily()
    funcs = svd_basis(build_power_matrix(family), 1e-13, family)
    nodes, weights = interpolation_nodes(funcs)
    assert len(nodes) == funcs.k
    assert np.all(np.diff(nodes) > 0)
    assert np.all(weights > 0)


def test_polynomial_family_gives_gauss_legendre():
    # φ_4 is the shifted Legendre P_3, so the nodes are the 3-point Gauss rule on [0, 1]
    family = PowerFamily(exponents_override=(0.0, 1.0, 2.0), levels=4, grid_order=8)
    nodes, weights = interpolation_nodes(svd_basis(build_power_matrix(family), 1e-13, family))
    r = np.sqrt(0.6)
    np.testing.assert_allclose(nodes, [(1 - r) / 2, 0.5, (1 + r) / 2], rtol=1e-12)
    np.testing.assert_allclose(weights, [5 / 18, 8 / 18, 5 / 18], rtol=1e-12)


def test_wrong_root_count_is_an_error():
    family = PowerFamily(exponents_override=(0.0, 1.0, 2.0), levels=4, grid_order=8)
    funcs = svd_basis(build_power_matrix(family), 1e-13, family)
    flat = replace(funcs, values=np.column_stack([funcs.values[:, :3], np.ones(len(funcs.values))]))
    with pytest.raises(IllConditioned):
        interpolation_nodes(flat)
