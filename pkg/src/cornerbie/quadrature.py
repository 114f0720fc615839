"""Quadrature: Gauss-Legendre rules, adaptive integration and singular corner weights."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from . import cache
from .errors import MaxDepthExceeded, ResidualTooLarge, UnsupportedOrder
from .kernels import wedge_kernel
from .log import lg

if TYPE_CHECKING:  # pragma: no cover
    from .corner_basis import CornerBasis

__all__ = [
    'Rule',
    'SingularWeightTable',
    'adaptive_integrate',
    'barycentric_matrix',
    'build_singular_weights',
    'gauss_legendre',
    'legendre_coefficients',
    'near_panel_weights',
    'singular_table',
]

MAX_GL_ORDER = 64
_MACHINE_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Rule:
    """A quadrature rule on [-1, 1]. `degree` is the polynomial exactness degree."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    degree: int

    def on(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights mapped to [a, b]."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Rule:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_GL_ORDER:
        raise UnsupportedOrder(f'Gauss-Legendre order must be in [1, {MAX_GL_ORDER}], got {n!r}')
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return Rule(nodes=x, weights=w, order=int(n), degree=2 * int(n) - 1)


@lru_cache(maxsize=None)
def _gl_barycentric(n: int) -> np.ndarray:
    """Barycentric weights of the n-point Gauss-Legendre nodes."""
    rule = gauss_legendre(n)
    lam = np.sqrt((1.0 - rule.nodes**2) * rule.weights)
    lam[1::2] *= -1.0
    return lam


def barycentric_matrix(n: int, z: np.ndarray) -> np.ndarray:
    """Lagrange basis of the n-point GL nodes evaluated at reference points z, shape (len(z), n)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    nodes = gauss_legendre(n).nodes
    lam = _gl_barycentric(n)
    diff = z[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = lam[None, :] / diff
        out = terms / np.sum(terms, axis=1, keepdims=True)
    hit = np.any(exact, axis=1)
    if np.any(hit):
        out[hit] = exact[hit].astype(float)
    return out


def legendre_coefficients(values: np.ndarray) -> np.ndarray:
    """Legendre coefficients of the polynomial through values on the GL nodes (last axis = nodes)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    rule = gauss_legendre(n)
    vander = np.polynomial.legendre.legvander(rule.nodes, n - 1)
    scale = (2.0 * np.arange(n) + 1.0) / 2.0
    return (values * rule.weights) @ vander * scale


def adaptive_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    eps: float = 1e-13,
    singular_endpoint: Optional[float] = None,
    max_depth: int = 200,
    order: int = 16,
    full_output: bool = False,
):
    """
    Integrate f over [a, b] by interval halving.

    `f` is called with a 1-D array of abscissae and returns an array whose first
    axis matches; trailing axes are integrated componentwise. Each interval is
    estimated with an embedded (order, 2*order) Gauss pair and the difference is
    the error proxy. Intervals are accepted once that proxy is below
    eps * (1 + |value|) / 10 or at the roundoff floor of the interval.

    With `singular_endpoint` (a or b) the interval is first split geometrically
    toward that endpoint.
    """
    lo, hi = gauss_legendre(order), gauss_legendre(2 * order)
    nodes = np.concatenate([lo.nodes, hi.nodes])

    def estimate(x0: float, x1: float):
        half, mid = 0.5 * (x1 - x0), 0.5 * (x1 + x0)
        vals = np.asarray(f(mid + half * nodes), dtype=float)
        v_lo = half * np.tensordot(lo.weights, vals[:order], axes=(0, 0))
        v_hi = half * np.tensordot(hi.weights, vals[order:], axes=(0, 0))
        floor = 64 * _MACHINE_EPS * np.max(abs(half) * np.tensordot(hi.weights, np.abs(vals[order:]), axes=(0, 0)))
        return v_hi, float(np.max(np.abs(v_hi - v_lo))), float(floor)

    whole, whole_err, whole_floor = estimate(a, b)
    tol = 0.1 * eps * (1.0 + float(np.max(np.abs(whole))))

    stack: list[tuple[float, float, int]] = []
    if singular_endpoint is not None and whole_err > max(tol, whole_floor):
        if singular_endpoint not in (a, b):
            raise ValueError(f'singular_endpoint must be one of the interval ends, got {singular_endpoint!r}')
        other = b if singular_endpoint == a else a
        cuts = [singular_endpoint + (other - singular_endpoint) * 0.5**k for k in range(8)]
        cuts.append(singular_endpoint)
        for k in range(8):
            x0, x1 = sorted((cuts[k + 1], cuts[k]))
            stack.append((x0, x1, k + 1))
        total = 0.0
    elif whole_err <= max(tol, whole_floor):
        if full_output:
            return _scalar(whole), {'intervals': 1, 'depth': 0, 'error': whole_err}
        return _scalar(whole)
    else:
        stack.append((a, b, 0))
        total = 0.0

    intervals, depth_reached, err_sum = 0, 0, 0.0
    while stack:
        x0, x1, depth = stack.pop()
        value, err, floor = estimate(x0, x1)
        if err <= max(tol, floor):
            total = total + value
            intervals += 1
            err_sum += err
            depth_reached = max(depth_reached, depth)
            continue
        if depth >= max_depth:
            raise MaxDepthExceeded(
                f'adaptive integration did not converge on [{x0!r}, {x1!r}] after {max_depth} halvings '
                f'(error estimate {err:.3e}, tolerance {tol:.3e})'
            )
        mid = 0.5 * (x0 + x1)
        stack.append((x0, mid, depth + 1))
        stack.append((mid, x1, depth + 1))

    if full_output:
        return _scalar(total), {'intervals': intervals, 'depth': depth_reached, 'error': err_sum}
    return _scalar(total)


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def near_panel_weights(
    kernel: Callable[[np.ndarray], np.ndarray],
    u0: float,
    u1: float,
    order: int,
    eps: float = 1e-14,
    max_depth: int = 80,
) -> np.ndarray:
    """
    Weights v_j with  ∫_{u0}^{u1} kernel(u) σ(u) du ≈ Σ_j v_j σ(u_j)  for σ a polynomial
    sampled on the `order`-point GL nodes of [u0, u1]. `kernel` takes panel offsets.
    """
    half, mid = 0.5 * (u1 - u0), 0.5 * (u1 + u0)

    def integrand(u: np.ndarray) -> np.ndarray:
        return kernel(u)[:, None] * barycentric_matrix(order, (u - mid) / half)

    return adaptive_integrate(integrand, u0, u1, eps=eps, max_depth=max_depth)


@dataclass(frozen=True)
class SingularWeightTable:
    """
    Cross-leg corner weights for one corner angle.

    Row i holds, for a target at reference distance x_i from the vertex on one leg,
    the weights over the K nodes of the opposite leg. Same-leg weights are zero
    because the kernel vanishes on a straight edge. By the reflection symmetry of
    the wedge one table serves both legs; by scale invariance it serves every δ.
    """

    alpha: float
    weights: np.ndarray
    residual: float
    eps: float
    delta: float = 1.0

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def row(self, i: int) -> np.ndarray:
        """Weights of target node i (counted from the vertex, on the negative leg) over all 2K panel nodes."""
        out = np.zeros(2 * self.k)
        out[self.k:] = self.weights[i]
        return out

    def block(self) -> np.ndarray:
        """
        2K x 2K cross-leg block in two-sided node order
        (-x_K, ..., -x_1, x_1, ..., x_K), acting on density values.
        """
        k = self.k
        out = np.zeros((2 * k, 2 * k))
        out[:k, k:] = self.weights[::-1, :]
        out[k:, :k] = self.weights[:, ::-1]
        return out


def _oracle_integrals(
    basis: 'CornerBasis',
    alpha: float,
    targets: np.ndarray,
    fn: Callable[[int, np.ndarray], np.ndarray],
    delta: float,
    eps: float,
    order: int,
) -> np.ndarray:
    """∫_0^δ D(δ x_i, t) g(t/δ) dt summed over the nested grid panels; g given panel-wise by fn."""
    out = None
    for p in range(basis.n_panels):
        a, b = basis.panel_edges[p] * delta, basis.panel_edges[p + 1] * delta
        for i, x in enumerate(targets):
            xd = x * delta

            def integrand(t: np.ndarray, xd: float = xd, p: int = p) -> np.ndarray:
                return wedge_kernel(xd, t, alpha)[:, None] * fn(p, t / delta)

            value = adaptive_integrate(integrand, a, b, eps=eps, order=order, max_depth=80)
            if out is None:
                out = np.zeros((len(targets), np.size(value)))
            out[i] += value
    return out


def build_singular_weights(
    alpha: float,
    basis: 'CornerBasis',
    delta: float = 1.0,
    eps: Optional[float] = None,
    n_certify: int = 10,
    seed: int = 0,
) -> SingularWeightTable:
    """
    Weights W̃ with Σ_j W̃_ij φ_m(x_j) = ∫_0^1 D(x_i, u) φ_m(u) du for every basis member.

    The right-hand sides come from adaptive integration on the nested grid of the
    basis; the weights solve the square system against U. The table is certified on
    `n_certify` random powers x^μ of the family, integrated independently by the
    adaptive oracle: the residual is max_i √w_i |Σ_j W̃_ij x_j^μ − ∫ D(x_i, u) u^μ du|
    over ‖x^μ‖, the row error of the √w-scaled Nyström system for a unit density.
    """
    eps = basis.eps if eps is None else eps
    if not (0.0 < alpha < 2.0) or abs(alpha - 1.0) < 1e-12:
        raise ValueError(f'corner angle parameter must lie in (0, 2) without 1, got {alpha!r}')
    x = basis.nodes
    oracle_eps = min(eps, 1e-14)

    integrals = _oracle_integrals(basis, alpha, x, basis.panel_values, delta, oracle_eps, order=16)
    sqrt_w = np.sqrt(basis.weights)
    weights = np.linalg.solve(basis.u_matrix, integrals.T).T * sqrt_w[None, :]

    rng = np.random.default_rng(seed)
    mus = basis.family.sample_exponents(rng, n_certify)
    exact = _oracle_integrals(
        basis, alpha, x, lambda p, u: u[:, None] ** mus[None, :], delta, oracle_eps, order=24
    )
    approx = weights @ (x[:, None] ** mus[None, :])
    norms = 1.0 / np.sqrt(2.0 * mus + 1.0)
    residual = float(np.max(sqrt_w[:, None] * np.abs(approx - exact) / norms[None, :]))
    bound = 10.0 * eps
    if residual > bound:
        raise ResidualTooLarge(f'singular weights for alpha={alpha!r} certify at {residual:.3e}, above {bound:.3e}')
    if residual > 0.5 * bound:
        lg.warning('Singular weights close to the certification bound', alpha=alpha, residual=residual, bound=bound)
    lg.debug('Singular weights certified', alpha=alpha, k=basis.k, residual=residual, exponents=mus)
    return SingularWeightTable(alpha=float(alpha), weights=weights, residual=residual, eps=eps, delta=float(delta))


@lru_cache(maxsize=64)
def singular_table(
    alpha: float, basis: 'CornerBasis', delta: float = 1.0, use_cache: bool = True
) -> SingularWeightTable:
    """
    Table for one angle at corner half-width δ.

    The wedge kernel is homogeneous of degree -1, so every δ yields the same
    weights; callers pass δ = 1 and share one table per angle.
    """
    alpha_q = round(float(alpha), 12)
    key = ('table', alpha_q, basis.eps, basis.k, float(delta)) + basis.family.key
    stored = cache.load_arrays('table', key) if use_cache else None
    if stored is not None and stored['weights'].shape == (basis.k, basis.k):
        return SingularWeightTable(
            alpha=alpha_q, weights=stored['weights'], residual=float(stored['residual']), eps=basis.eps,
            delta=float(delta),
        )
    with lg.timed('Singular weights', alpha=alpha_q, k=basis.k, delta=delta):
        table = build_singular_weights(alpha_q, basis, delta)
    if use_cache:
        cache.save_arrays('table', key, weights=table.weights, residual=np.array(table.residual))
    return table
