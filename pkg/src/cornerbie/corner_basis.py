"""
Universal corner basis.

The family {x^μ : μ ∈ {0} ∪ [μ_lo, μ_hi]} is sampled on a grid of Gauss-Legendre
panels on [0, 1], dyadically nested toward 0, and compressed by an SVD. The
left singular vectors give functions φ_1..φ_K orthonormal on [0, 1]; the roots
of φ_{K+1} are the interpolation nodes. The same basis serves every corner angle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from . import cache
from .errors import ConfigError, IllConditioned, RankDeficient
from .log import lg
from .quadrature import barycentric_matrix, gauss_legendre

__all__ = [
    'CornerBasis',
    'PowerFamily',
    'SingularFunctions',
    'TwoSidedBasis',
    'build_corner_basis',
    'build_power_matrix',
    'interpolation_nodes',
    'svd_basis',
    'two_sided_extend',
]

DEFAULT_COND_BOUND = 1e4


@dataclass(frozen=True)
class PowerFamily:
    """
    The powers x^μ to be spanned and the grid they are sampled on.

    `exponents_override` replaces the sampled μ set (for instance (0, 1, 2)).
    """

    mu_lo: float = 0.5
    mu_hi: float = 50.0
    n_mu: int = 200
    levels: int = 60
    grid_order: int = 30
    exponents_override: Optional[tuple] = None

    @cached_property
    def exponents(self) -> np.ndarray:
        if self.exponents_override is not None:
            return np.asarray(self.exponents_override, dtype=float)
        t, _ = np.polynomial.legendre.leggauss(self.n_mu)
        return np.concatenate([[0.0], self.mu_lo + 0.5 * (self.mu_hi - self.mu_lo) * (t + 1.0)])

    @cached_property
    def panel_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], 0.5 ** np.arange(self.levels, -1, -1)])

    @cached_property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Nested-grid nodes (ascending) and weights on [0, 1]."""
        rule = gauss_legendre(self.grid_order)
        edges = self.panel_edges
        parts = [rule.on(a, b) for a, b in zip(edges[:-1], edges[1:])]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def sample_exponents(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.exponents_override is not None:
            return rng.choice(self.exponents, size=n)
        return rng.uniform(self.mu_lo, self.mu_hi, size=n)

    @property
    def key(self) -> tuple:
        return (self.mu_lo, self.mu_hi, self.n_mu, self.levels, self.grid_order, self.exponents_override)


def build_power_matrix(family: PowerFamily) -> np.ndarray:
    """Entry (i, j) = x_i^{μ_j} √w_i on the nested grid."""
    x, w = family.grid
    return x[:, None] ** family.exponents[None, :] * np.sqrt(w)[:, None]


@dataclass(frozen=True, eq=False)
class SingularFunctions:
    """φ_1..φ_{K+1} tabulated on the nested grid."""

    family: PowerFamily
    eps: float
    k: int
    values: np.ndarray  # (n_grid, K + 1)
    singular_values: np.ndarray


def _orthonormalize(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted Cholesky QR, applied twice, acting on function values directly."""
    for _ in range(2):
        gram = values.T @ (w[:, None] * values)
        r = scipy.linalg.cholesky(gram)
        values = scipy.linalg.solve_triangular(r, values.T, trans='T').T
    return values


def svd_basis(matrix: np.ndarray, eps: float, family: PowerFamily) -> SingularFunctions:
    """
    Keep the singular vectors above eps * s_max; one extra function is carried for the nodes.

    φ_m is tabulated as Σ_j x^{μ_j} v_{jm} / s_m, which stays smooth on the deepest
    panels where u_m / √w is dominated by rounding.
    """
    if not 1e-16 < eps < 1e-6:
        raise ConfigError(f'eps must lie in (1e-16, 1e-6), got {eps!r}', 'basis.eps')
    _, s, vt = scipy.linalg.svd(matrix, full_matrices=False)
    k = int(np.sum(s > eps * s[0])) if s.size and s[0] > 0 else 0
    if k == 0:
        raise RankDeficient(f'power matrix has no singular value above eps={eps!r}')
    x, w = family.grid
    powers = x[:, None] ** family.exponents[None, :]
    if k < len(s):
        values = powers @ (vt[: k + 1].T / s[: k + 1])
    else:
        # every column is kept; φ_{K+1} comes from the next integer power
        extra = x ** (np.max(family.exponents) + 1.0)
        values = np.column_stack([powers @ (vt[:k].T / s[:k]), extra])
    values = _orthonormalize(values, w)
    lg.debug('Corner basis rank', eps=eps, k=k, largest=float(s[0]), cutoff=float(s[k - 1]))
    return SingularFunctions(family=family, eps=eps, k=k, values=values, singular_values=s)


def _panel_eval(family: PowerFamily, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric evaluation of grid-tabulated functions at x ∈ [0, 1], shape (len(x), n_funcs)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    edges = family.panel_edges
    m = family.grid_order
    panel = np.clip(np.searchsorted(edges, x, side='right') - 1, 0, len(edges) - 2)
    out = np.empty((len(x), values.shape[1]))
    for p in np.unique(panel):
        sel = panel == p
        a, b = edges[p], edges[p + 1]
        z = (2.0 * x[sel] - (a + b)) / (b - a)
        out[sel] = barycentric_matrix(m, z) @ values[p * m:(p + 1) * m]
    return out


def interpolation_nodes(funcs: SingularFunctions) -> tuple[np.ndarray, np.ndarray]:
    """
    Roots of φ_{K+1} and the weights integrating φ_1..φ_K exactly.

    Roots are bracketed by sign changes between grid values above the noise floor
    eps * max|φ_{K+1}| and refined with Brent's method on the panel interpolant.
    """
    family, k = funcs.family, funcs.k
    x, w = family.grid
    g = funcs.values[:, k]

    def phi_next(t: float) -> float:
        return float(_panel_eval(family, funcs.values[:, k:k + 1], t)[0, 0])

    resolved = np.nonzero(np.abs(g) > funcs.eps * np.max(np.abs(g)))[0]
    gr = g[resolved]
    change = np.nonzero(np.sign(gr[:-1]) != np.sign(gr[1:]))[0]
    nodes = np.array(
        [
            scipy.optimize.brentq(phi_next, x[resolved[i]], x[resolved[i + 1]], xtol=np.finfo(float).tiny, maxiter=200)
            for i in change
        ]
    )
    if len(nodes) != k:
        raise IllConditioned(f'φ_{{K+1}} changes sign {len(nodes)} times on the grid, expected K={k}')

    phi_nodes = _panel_eval(family, funcs.values[:, :k], nodes).T  # [m, j] = φ_m(x_j)
    moments = funcs.values[:, :k].T @ w
    weights = np.linalg.solve(phi_nodes, moments)
    if np.any(weights <= 0.0):
        raise IllConditioned(f'interpolation weights are not all positive (min {weights.min():.3e}); eps/K mismatch')
    return nodes, weights


@dataclass(frozen=True, eq=False)
class CornerBasis:
    """
    Orthonormal singular functions on [0, 1] with K interpolation nodes.

    `u_matrix[i, j] = φ_i(x_j) √w_j`; its condition number is bounded by
    `cond_bound`.
    """

    family: PowerFamily
    eps: float
    k: int
    grid_values: np.ndarray  # (n_grid, K)
    nodes: np.ndarray
    weights: np.ndarray
    singular_values: np.ndarray
    cond_bound: float = DEFAULT_COND_BOUND

    @property
    def panel_edges(self) -> np.ndarray:
        return self.family.panel_edges

    @property
    def n_panels(self) -> int:
        return len(self.family.panel_edges) - 1

    @cached_property
    def phi_at_nodes(self) -> np.ndarray:
        return self.evaluate_all(self.nodes).T

    @cached_property
    def u_matrix(self) -> np.ndarray:
        return self.phi_at_nodes * np.sqrt(self.weights)[None, :]

    @cached_property
    def cond(self) -> float:
        return float(np.linalg.cond(self.u_matrix))

    @cached_property
    def _u_lu(self):
        return scipy.linalg.lu_factor(self.u_matrix.T)

    def panel_values(self, p: int, x: np.ndarray) -> np.ndarray:
        """φ values at points x inside grid panel p, shape (len(x), K)."""
        m = self.family.grid_order
        a, b = self.panel_edges[p], self.panel_edges[p + 1]
        z = (2.0 * np.asarray(x, dtype=float) - (a + b)) / (b - a)
        return barycentric_matrix(m, z) @ self.grid_values[p * m:(p + 1) * m]

    def evaluate_all(self, x) -> np.ndarray:
        return _panel_eval(self.family, self.grid_values, x)

    def evaluate(self, m: int, x) -> np.ndarray:
        """φ_{m+1}(x) (zero-based m)."""
        return self.evaluate_all(x)[:, m]

    def coefficients(self, node_values: np.ndarray) -> np.ndarray:
        """Expansion coefficients c with Σ_m c_m φ_m(x_j) = f(x_j)."""
        return scipy.linalg.lu_solve(self._u_lu, np.sqrt(self.weights) * np.asarray(node_values, dtype=float))

    def interpolation_matrix(self, x) -> np.ndarray:
        """M with (M f)(x) = interpolant of the node values f, shape (len(x), K)."""
        e = self.evaluate_all(x)
        coef = scipy.linalg.lu_solve(self._u_lu, np.diag(np.sqrt(self.weights)))
        return e @ coef

    def projection_residual(self, values_on_grid: np.ndarray) -> float:
        """Relative L² residual of a grid-sampled function after projection onto span(φ)."""
        _, w = self.family.grid
        f = np.asarray(values_on_grid, dtype=float)
        r = f - self.grid_values @ (self.grid_values.T @ (w * f))
        return float(np.sqrt(np.sum(w * r * r) / np.sum(w * f * f)))


@dataclass(frozen=True, eq=False)
class TwoSidedBasis:
    """
    The basis mirrored onto (-δ, δ): ψ = φ(|t|/δ)/√(2δ) and sgn(t) φ(|t|/δ)/√(2δ).

    Nodes are ordered (-δx_K, ..., -δx_1, δx_1, ..., δx_K).
    """

    basis: CornerBasis
    delta: float = 1.0

    @property
    def k(self) -> int:
        return self.basis.k

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.basis.nodes
        return np.concatenate([-self.delta * x[::-1], self.delta * x])

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.basis.weights
        return self.delta * np.concatenate([w[::-1], w])

    @cached_property
    def u_matrix(self) -> np.ndarray:
        u = self.basis.u_matrix
        r = u[:, ::-1]
        return np.block([[r, u], [-r, u]]) / np.sqrt(2.0)

    @cached_property
    def cond(self) -> float:
        return float(np.linalg.cond(self.u_matrix))

    def interpolation_matrix(self, t) -> np.ndarray:
        """Values at t ∈ [-δ, δ] of the interpolant through the 2K node values, shape (len(t), 2K)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = self.k
        out = np.zeros((len(t), 2 * k))
        neg = t < 0.0
        if np.any(~neg):
            out[~neg, k:] = self.basis.interpolation_matrix(t[~neg] / self.delta)
        if np.any(neg):
            out[neg, :k] = self.basis.interpolation_matrix(-t[neg] / self.delta)[:, ::-1]
        return out

    def evaluate(self, t) -> np.ndarray:
        """All 2K functions at t, shape (len(t), 2K): even functions first, then odd."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phi = self.basis.evaluate_all(np.abs(t) / self.delta) / np.sqrt(2.0 * self.delta)
        return np.column_stack([phi, np.sign(t)[:, None] * phi])


def two_sided_extend(basis: CornerBasis, delta: float = 1.0) -> TwoSidedBasis:
    return TwoSidedBasis(basis=basis, delta=float(delta))


@lru_cache(maxsize=16)
def build_corner_basis(
    eps: float = 1e-13,
    family: Optional[PowerFamily] = None,
    cond_bound: float = DEFAULT_COND_BOUND,
    use_cache: bool = True,
) -> CornerBasis:
    """SVD, node and weight construction with an on-disk cache."""
    family = PowerFamily() if family is None else family
    key = ('basis', eps) + family.key
    stored = cache.load_arrays('basis', key) if use_cache else None
    if stored is not None:
        basis = CornerBasis(
            family=family,
            eps=eps,
            k=int(stored['k']),
            grid_values=stored['grid_values'],
            nodes=stored['nodes'],
            weights=stored['weights'],
            singular_values=stored['singular_values'],
            cond_bound=cond_bound,
        )
    else:
        with lg.timed('Corner basis', eps=eps):
            funcs = svd_basis(build_power_matrix(family), eps, family)
            nodes, weights = interpolation_nodes(funcs)
        basis = CornerBasis(
            family=family,
            eps=eps,
            k=funcs.k,
            grid_values=funcs.values[:, : funcs.k],
            nodes=nodes,
            weights=weights,
            singular_values=funcs.singular_values,
            cond_bound=cond_bound,
        )
    if basis.cond > cond_bound:
        raise IllConditioned(f'cond(U) = {basis.cond:.3e} exceeds {cond_bound:.1e} (K={basis.k}, eps={eps!r})')
    if stored is None and use_cache:
        cache.save_arrays(
            'basis',
            key,
            k=np.array(basis.k),
            grid_values=basis.grid_values,
            nodes=basis.nodes,
            weights=basis.weights,
            singular_values=basis.singular_values,
        )
    lg.info('Corner basis ready', k=basis.k, eps=eps, cond=basis.cond, smallest_node=float(basis.nodes[0]))
    return basis
