"""
Corner re-solve ladder.

A weak Neumann density is only reliable on a corner panel under inner products.
Each level re-discretizes the corner neighbourhood: the corner panel of the
previous level becomes I_j ∪ L_j ∪ J_j, with Gauss-Legendre panels on I_j, J_j
and a half-size corner panel L_j. The right-hand side f - h - h_1 - ... at the
new nodes is computed from local data only: the previous local matrix applied
(transposed) to the previous local density gives f - h at the old nodes, and
the corner basis interpolates it to the new ones. Densities on I_j and J_j come
out pointwise accurate and are archived.

Level j node layout, in increasing offset from the vertex:

    K_j | I_j = [-δ_j, -δ_j/2] | L_j (2K nodes, half-width δ_j/2) | J_j = [δ_j/2, δ_j] | Q_j

with δ_j = δ 2^-j, K_0 and Q_0 the global flank panels, and K_j = I_{j-1},
Q_j = J_{j-1} afterwards.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.linalg

from .assembly import BIEKind, CornerBlock, SystemMatrix, assemble_dirichlet_form
from .corner_basis import TwoSidedBasis, two_sided_extend
from .errors import ConfigError, IllConditionedU, MaxLevels
from .geometry import NodeSet, TargetPoints
from .kernels import single_layer_matrix
from .log import lg
from .quadrature import gauss_legendre, singular_table
from .solve import DensityPanel, DensityVector

__all__ = [
    'ArchivePanel',
    'FarContribution',
    'LocalLayout',
    'ResolveState',
    'archive_overlap',
    'far_taylor_coefficients',
    'levels_for_radius',
    'local_rhs',
    'resolve_corners',
    'resolve_level',
    'resolve_to_radius',
    'start_resolve',
    'taylor_bound',
]

DEFAULT_MAX_LEVELS = 400
# r - h >= 2h, with h the final half-width
COVER_FACTOR = 3.0
# archived I, J densities and the next level's K, Q values agree to this many ε
OVERLAP_TOL_FACTOR = 10.0
PARTS = ('K', 'I', 'L', 'J', 'Q')


@dataclass(frozen=True, eq=False)
class LocalLayout:
    """Nodes of one level with the index ranges of K, I, L, J, Q."""

    nodes: NodeSet
    parts: dict
    bounds: dict  # part -> (u0, u1) offsets from the vertex
    half_width: float  # of the corner panel L

    def idx(self, *names: str) -> np.ndarray:
        return np.concatenate([self.parts[n] for n in names])


@dataclass(frozen=True, eq=False)
class ArchivePanel(DensityPanel):
    level: int = 0
    side: str = ''


@dataclass(frozen=True, eq=False)
class FarContribution:
    """Sources whose field is smooth on the current corner neighbourhood."""

    level: int
    nodes: NodeSet
    values: np.ndarray  # √w-scaled strengths

    def field(self, targets: TargetPoints) -> np.ndarray:
        return single_layer_matrix(targets, self.nodes) @ (self.values * self.nodes.sqrt_weights)


@dataclass(eq=False)
class ResolveState:
    """
    One corner's ladder after `level` re-solves.

    `far` holds the h lists: the global nodes outside the level-0 neighbourhood,
    then the K and Q flanks of every earlier level. `archive` holds the I and J
    densities of every level, which are pointwise accurate.
    """

    corner_id: int
    alpha: float
    delta: float
    level: int
    kind: BIEKind  # Dirichlet form of the parent matrix
    layout: LocalLayout
    matrix: np.ndarray  # local Dirichlet-form matrix; the local system is its transpose
    rhs: np.ndarray
    sigma: np.ndarray
    two_sided: TwoSidedBasis  # reference basis, δ = 1
    smooth_order: int
    far: list = field(default_factory=list)
    far_panels: list = field(default_factory=list)  # global panels behind far[0]
    flanks: list = field(default_factory=list)  # ArchivePanel per earlier K and Q
    archive: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    overlap_errors: list = field(default_factory=list)  # per level from 1 on

    @property
    def delta_j(self) -> float:
        return self.delta * 0.5**self.level

    @property
    def final_half_width(self) -> float:
        return self.layout.half_width

    def covers(self, r: float) -> bool:
        """Targets at distance r from the vertex are at least one final corner panel length from that panel."""
        return COVER_FACTOR * self.final_half_width <= r

    def far_field(self, points_or_targets) -> np.ndarray:
        """h + h_1 + ... + h_j at the targets."""
        targets = _as_targets(self.layout.nodes.polygon, points_or_targets)
        out = np.zeros(len(targets))
        for h in self.far:
            out += h.field(targets)
        return out

    def local_field(self, points_or_targets) -> np.ndarray:
        """Single-layer field of the current level's density on all of K, I, L, J, Q."""
        targets = _as_targets(self.layout.nodes.polygon, points_or_targets)
        nodes = self.layout.nodes
        return single_layer_matrix(targets, nodes) @ (self.sigma * nodes.sqrt_weights)

    def level_panels(self) -> list[ArchivePanel]:
        """The current level split into its five panels; only L is a corner panel."""
        out = []
        for side in PARTS:
            idx = self.layout.parts[side]
            u0, u1 = self.layout.bounds[side]
            out.append(
                ArchivePanel(self.layout.nodes.subset(idx), self.sigma[idx], u0, u1, side == 'L', self.level, side)
            )
        return out

    def source_panels(self) -> list[DensityPanel]:
        """Every panel whose density enters the resolved field, without overlaps."""
        return list(self.far_panels) + list(self.flanks) + self.level_panels()

    def resolved_panels(self) -> tuple[list, ArchivePanel]:
        """Strong archive panels and the final corner panel, which is weak."""
        final = next(p for p in self.level_panels() if p.side == 'L')
        return list(self.archive), final


def _as_targets(polygon, points_or_targets) -> TargetPoints:
    if isinstance(points_or_targets, TargetPoints):
        return points_or_targets
    return TargetPoints.from_points(polygon, points_or_targets)


def levels_for_radius(delta: float, r: float) -> int:
    """J = ⌈1 + log2(δ/r)⌉, at least 1."""
    if not r > 0.0:
        raise ConfigError(f'resolve radius must be positive, got {r!r}', 'resolve.radius')
    return max(1, math.ceil(1.0 + math.log2(delta / r)))


def _gl_part(polygon, corner: int, u0: float, u1: float, order: int) -> NodeSet:
    u, w = gauss_legendre(order).on(u0, u1)
    return NodeSet.on_corner(polygon, corner, u, w)


def _layout(polygon, corner: int, delta_j: float, basis2: TwoSidedBasis, order: int, k_part: NodeSet,
            q_part: NodeSet, k_bounds: tuple, q_bounds: tuple) -> LocalLayout:
    half = 0.5 * delta_j
    parts_nodes = {
        'K': k_part,
        'I': _gl_part(polygon, corner, -delta_j, -half, order),
        'L': NodeSet.on_corner(polygon, corner, half * basis2.nodes, half * basis2.weights),
        'J': _gl_part(polygon, corner, half, delta_j, order),
        'Q': q_part,
    }
    bounds = {'K': k_bounds, 'I': (-delta_j, -half), 'L': (-half, half), 'J': (half, delta_j), 'Q': q_bounds}
    parts, start = {}, 0
    for name in PARTS:
        n = len(parts_nodes[name])
        parts[name] = np.arange(start, start + n)
        start += n
    nodes = NodeSet.concatenate([parts_nodes[n] for n in PARTS])
    return LocalLayout(nodes=nodes, parts=parts, bounds=bounds, half_width=half)


def local_rhs(
    sigma_loc: np.ndarray,
    matrix_loc: np.ndarray,
    old_nodes: NodeSet,
    old_corner: np.ndarray,
    old_flanks: tuple[np.ndarray, np.ndarray],
    basis2: TwoSidedBasis,
    old_half_width: float,
    new_layout: LocalLayout,
) -> np.ndarray:
    """
    √w-scaled f - h at the new nodes from local data only.

    g = A_locᵀ σ_loc equals (f - h) √w at the old nodes. Flank values carry over
    unchanged; values on I, L, J are interpolated from the old corner nodes with
    the two-sided basis.
    """
    if basis2.cond > basis2.basis.cond_bound:
        raise IllConditionedU(f'cond(U) = {basis2.cond:.3e} exceeds {basis2.basis.cond_bound:.1e}')
    g = matrix_loc.T @ sigma_loc
    values = g / old_nodes.sqrt_weights
    left, right = old_flanks
    new = new_layout.nodes
    out = np.empty(len(new))
    out[new_layout.parts['K']] = values[left]
    out[new_layout.parts['Q']] = values[right]
    inner = new_layout.idx('I', 'L', 'J')
    interp = basis2.interpolation_matrix(new.offset[inner] / old_half_width)
    out[inner] = interp @ values[old_corner]
    return out * new.sqrt_weights


def _local_solve(kind: BIEKind, layout: LocalLayout, table_block: np.ndarray, rhs: np.ndarray):
    matrix = assemble_dirichlet_form(
        layout.nodes,
        interior=kind is BIEKind.INTERIOR_DIRICHLET,
        blocks=[CornerBlock(layout.parts['L'], table_block)],
    )
    sigma = scipy.linalg.solve(matrix.T, rhs)
    residual = float(np.linalg.norm(matrix.T @ sigma - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny))
    return matrix, sigma, residual


def _archive(level: int, layout: LocalLayout, sigma: np.ndarray, sides: Sequence[str]) -> list[ArchivePanel]:
    out = []
    for side in sides:
        idx = layout.parts[side]
        u0, u1 = layout.bounds[side]
        out.append(ArchivePanel(layout.nodes.subset(idx), sigma[idx], u0, u1, False, level, side))
    return out


def start_resolve(density: DensityVector, matrix: SystemMatrix, corner_id: int) -> ResolveState:
    """Level 0: the corner panel and its two flanks of the global mesh, re-discretized."""
    disc = density.disc
    if disc is None or disc.basis is None:
        raise ConfigError('resolve needs a density on a mesh with corner panels')
    if not matrix.kind.is_dirichlet:
        raise ConfigError(f'resolve takes the Dirichlet matrix of the adjoint solve, got {matrix.kind.value}', 'bie_kind')
    if not 0 <= corner_id < disc.polygon.n_corners:
        raise ConfigError(f'no corner {corner_id} on a polygon with {disc.polygon.n_corners} corners', 'resolve.corner')
    polygon = disc.polygon
    delta = float(disc.corner_half_length[corner_id])
    alpha = float(polygon.corner_angles[corner_id])
    basis2 = two_sided_extend(disc.basis, 1.0)
    table = singular_table(round(alpha, 12), disc.basis)
    order = disc.smooth_order

    left, right = disc.flank_indices(corner_id)
    corner = disc.corner_indices(corner_id)
    loc = np.concatenate([left, corner, right])
    outside = np.setdiff1d(np.arange(disc.n), loc)
    lp, rp = disc.flank_panels(corner_id)
    local_panels = {disc.panels.index(lp), disc.panels.index(rp), disc.panels.index(disc.corner_panel(corner_id))}

    layout = _layout(
        polygon, corner_id, delta, basis2, order,
        _gl_part(polygon, corner_id, lp.u0, lp.u1, order), _gl_part(polygon, corner_id, rp.u0, rp.u1, order),
        (lp.u0, lp.u1), (rp.u0, rp.u1),
    )
    n_left, n_corner = len(left), len(corner)
    with lg.timed('Resolve level', corner=corner_id, level=0):
        rhs = local_rhs(
            density.values[loc],
            matrix.values[np.ix_(loc, loc)],
            disc.nodes.subset(loc),
            np.arange(n_left, n_left + n_corner),
            (np.arange(n_left), np.arange(n_left + n_corner, len(loc))),
            basis2,
            delta,
            layout,
        )
        local, sigma, residual = _local_solve(matrix.kind, layout, table.block(), rhs)
    state = ResolveState(
        corner_id=corner_id,
        alpha=alpha,
        delta=delta,
        level=0,
        kind=matrix.kind,
        layout=layout,
        matrix=local,
        rhs=rhs,
        sigma=sigma,
        two_sided=basis2,
        smooth_order=order,
        far=[FarContribution(-1, disc.nodes.subset(outside), density.values[outside])],
        far_panels=density.panels(skip=local_panels),
        archive=_archive(0, layout, sigma, ('I', 'J')),
        residuals=[residual],
    )
    lg.debug('Resolve level', corner=corner_id, level=0, delta_j=delta, n=len(layout.nodes), residual=residual)
    return state


def resolve_level(state: ResolveState) -> ResolveState:
    """One more level: L_j is split into I_{j+1}, L_{j+1}, J_{j+1}."""
    old = state.layout
    polygon = old.nodes.polygon
    level = state.level + 1
    delta_j = state.delta * 0.5**level
    inner = old.idx('I', 'L', 'J')
    layout = _layout(
        polygon, state.corner_id, delta_j, state.two_sided, state.smooth_order,
        old.nodes.subset(old.parts['I']), old.nodes.subset(old.parts['J']),
        old.bounds['I'], old.bounds['J'],
    )
    n_i, n_l = len(old.parts['I']), len(old.parts['L'])
    rhs = local_rhs(
        state.sigma[inner],
        state.matrix[np.ix_(inner, inner)],
        old.nodes.subset(inner),
        np.arange(n_i, n_i + n_l),
        (np.arange(n_i), np.arange(n_i + n_l, len(inner))),
        state.two_sided,
        old.half_width,
        layout,
    )
    table = singular_table(round(state.alpha, 12), state.two_sided.basis)
    local, sigma, residual = _local_solve(state.kind, layout, table.block(), rhs)
    flank_idx = old.idx('K', 'Q')
    overlap = archive_overlap(state, layout, sigma)
    if overlap > OVERLAP_TOL_FACTOR * np.finfo(float).eps:
        lg.warning('Archived density moved on the next level', corner=state.corner_id, level=level, mismatch=overlap)
    new = replace(
        state,
        level=level,
        layout=layout,
        matrix=local,
        rhs=rhs,
        sigma=sigma,
        far=state.far + [FarContribution(state.level, old.nodes.subset(flank_idx), state.sigma[flank_idx])],
        flanks=state.flanks + _archive(state.level, old, state.sigma, ('K', 'Q')),
        archive=state.archive + _archive(level, layout, sigma, ('I', 'J')),
        residuals=state.residuals + [residual],
        overlap_errors=state.overlap_errors + [overlap],
    )
    lg.debug('Resolve level', corner=state.corner_id, level=level, delta_j=delta_j, residual=residual, overlap=overlap)
    return new


def archive_overlap(state: ResolveState, layout: LocalLayout, sigma: np.ndarray) -> float:
    """
    max |σ_{m+1} - σ_m| over K_{m+1} = I_m and Q_{m+1} = J_m, relative to max |σ_m| on I_m ∪ L_m ∪ J_m.

    Both levels carry the same nodes there, so the √w-scaled values compare directly.
    """
    old = state.layout
    scale = max(float(np.max(np.abs(state.sigma[old.idx('I', 'L', 'J')]))), np.finfo(float).tiny)
    diff = max(
        float(np.max(np.abs(sigma[layout.parts['K']] - state.sigma[old.parts['I']]))),
        float(np.max(np.abs(sigma[layout.parts['Q']] - state.sigma[old.parts['J']]))),
    )
    return diff / scale


def resolve_to_radius(state: ResolveState, r: float, max_levels: int = DEFAULT_MAX_LEVELS) -> ResolveState:
    """Run levels until targets at distance r are at least one final corner panel length away."""
    levels = levels_for_radius(state.delta, r)
    while COVER_FACTOR * state.delta * 0.5**levels > r:
        levels += 1
    if levels > max_levels:
        raise MaxLevels(f'radius {r!r} needs {levels} levels, above the cap of {max_levels}', 'resolve.max_levels')
    with lg.timed('Corner resolve', corner=state.corner_id, levels=levels):
        while state.level < levels - 1:
            state = resolve_level(state)
    lg.info(
        'Corner resolved',
        corner=state.corner_id,
        levels=state.level + 1,
        final_half_width=state.final_half_width,
        max_residual=max(state.residuals),
        max_overlap=max(state.overlap_errors, default=0.0),
    )
    return state


def resolve_corners(
    density: DensityVector,
    matrix: SystemMatrix,
    corners: Sequence[int],
    r: Union[float, Mapping[int, float]],
    threads: int = 1,
    max_levels: Union[int, Mapping[int, int]] = DEFAULT_MAX_LEVELS,
) -> dict[int, ResolveState]:
    """Independent ladders for several corners, run on a thread pool. `r` and `max_levels` may be per corner."""

    def one(c: int) -> ResolveState:
        radius = r[c] if isinstance(r, Mapping) else r
        cap = max_levels[c] if isinstance(max_levels, Mapping) else max_levels
        return resolve_to_radius(start_resolve(density, matrix, c), radius, cap)

    corners = list(corners)
    if threads > 1 and len(corners) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            states = list(pool.map(one, corners))
    else:
        states = [one(c) for c in corners]
    return dict(zip(corners, states))


def _far_sources(nodes: NodeSet, values: np.ndarray, corner: int, r: float):
    polygon = nodes.polygon
    rel = (polygon.vertices[nodes.anchor] - polygon.vertices[corner]) + nodes.rel
    keep = np.hypot(*rel.T) > 2.0 * r
    tau = polygon.tangents[polygon.incident_edges(corner)[1]]
    nu = polygon.inward_normals[polygon.incident_edges(corner)[1]]
    z = rel[keep] @ tau + 1j * (rel[keep] @ nu)
    strengths = values[keep] * nodes.sqrt_weights[keep]
    norm = float(np.sqrt(np.sum(values[keep] ** 2)))
    return z, strengths, norm


def far_taylor_coefficients(
    nodes: NodeSet,
    values: np.ndarray,
    corner: int,
    r: float,
    n_max: int = 10,
    method: str = 'fit',
) -> tuple[np.ndarray, float]:
    """
    Taylor coefficients a_0..a_{n_max} at the vertex of

        H(t) = ∫_{Γ \\ B_2r} K(γ(t), γ(s)) f(s) ds

    along the outgoing leg, together with ‖f‖ over the sources used. `values`
    are √w-scaled. `method='fit'` fits a Chebyshev interpolant of H on
    [-r/2, r/2]; `method='series'` sums the closed-form expansion.
    """
    z, strengths, norm = _far_sources(nodes, values, corner, r)
    n = np.arange(n_max + 1)
    if method == 'series':
        coeffs = -np.imag(z[None, :] ** -(n[:, None] + 1.0)) @ strengths / (2.0 * np.pi)
        return coeffs, norm
    if method != 'fit':
        raise ConfigError(f'unknown Taylor method {method!r}', 'method')

    def h(tau: np.ndarray) -> np.ndarray:
        t = 0.5 * r * tau
        return -np.imag(1.0 / (z[None, :] - t[:, None])) @ strengths / (2.0 * np.pi)

    cheb = np.polynomial.Chebyshev.interpolate(h, max(n_max + 14, 24))
    power = np.polynomial.chebyshev.cheb2poly(cheb.coef)
    power = np.pad(power, (0, max(0, n_max + 1 - len(power))))[: n_max + 1]
    return power / (0.5 * r) ** n, norm


def taylor_bound(total_length: float, r: float, n_max: int, f_norm: float) -> np.ndarray:
    """√L ‖f‖ / (2^n r^{n+1}) for n = 0..n_max."""
    n = np.arange(n_max + 1)
    return np.sqrt(total_length) * f_norm / (2.0**n * r ** (n + 1.0))
