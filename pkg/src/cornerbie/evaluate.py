"""
Potential evaluation off the boundary.

Targets are classified by the one-panel-length rule: a target within one panel
length of a panel is near it. Far targets use the plain quadrature sum. Near a
smooth panel the density is interpolated on the panel and integrated
adaptively. Near a corner, a Dirichlet density is interpolated with the corner
basis; a Neumann density needs a resolve ladder for that corner.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .assembly import BIEKind
from .corner_basis import two_sided_extend
from .corner_resolve import ResolveState
from .errors import ConfigError, DimensionMismatch, UnresolvedCorner
from .geometry import Discretization, Polygon, TargetPoints, panel_distance
from .kernels import Layer, double_layer_matrix, layer_kernel_on_edge, single_layer_matrix
from .log import lg
from .quadrature import adaptive_integrate, near_panel_weights
from .solve import DensityPanel, DensityVector, Factorized, solve_neumann_adjoint, weak_inner_product

__all__ = [
    'Classification',
    'TargetClass',
    'TargetGrid',
    'classify',
    'eval_potential',
    'far_field_decay',
    'polarization_tensor',
]

NEAR_EPS = 1e-14


class TargetClass(str, Enum):
    FAR = 'far'
    NEAR_SMOOTH = 'near_smooth'
    NEAR_CORNER = 'near_corner'


@dataclass(frozen=True, eq=False)
class TargetGrid:
    targets: TargetPoints
    shape: Optional[tuple] = None
    label: str = ''

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def points(self) -> np.ndarray:
        return self.targets.points

    @classmethod
    def from_points(cls, polygon: Polygon, points, label: str = 'points') -> 'TargetGrid':
        return cls(TargetPoints.from_points(polygon, points), label=label)

    @classmethod
    def polar(
        cls,
        polygon: Polygon,
        corner: int,
        r_min: float,
        r_max: float,
        n_r: int,
        n_theta: int,
        exterior: bool = False,
    ) -> 'TargetGrid':
        """
        Tensor-product grid anchored at a vertex: radii geometric from r_min to
        r_max, angles at cell midpoints of the interior wedge (or the exterior one)
        measured counterclockwise from the outgoing edge.
        """
        if not 0.0 < r_min <= r_max:
            raise ConfigError(f'polar grid needs 0 < r_min <= r_max, got {r_min!r}, {r_max!r}', 'targets.polar')
        if n_r < 1 or n_theta < 1:
            raise ConfigError(f'polar grid needs n_r, n_theta >= 1, got {n_r}, {n_theta}', 'targets.polar')
        opening = np.pi * polygon.corner_angles[corner]
        start, span = (opening, 2.0 * np.pi - opening) if exterior else (0.0, opening)
        theta = start + span * (np.arange(n_theta) + 0.5) / n_theta
        radii = np.geomspace(r_min, r_max, n_r)
        t = polygon.tangents[polygon.incident_edges(corner)[1]]
        base = np.arctan2(t[1], t[0])
        rr, tt = np.meshgrid(radii, base + theta, indexing='ij')
        rel = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
        side = 'exterior' if exterior else 'interior'
        return cls(TargetPoints.near_corner(polygon, corner, rel), shape=(n_r, n_theta), label=f'polar-{side}-c{corner}')

    def subset(self, idx) -> 'TargetGrid':
        return TargetGrid(self.targets.subset(idx), label=self.label)


@dataclass(frozen=True, eq=False)
class Classification:
    """Per target: its class, the nearest near panel (-1 if far) and the near corner (-1 if none)."""

    kind: np.ndarray
    panel: np.ndarray
    corner: np.ndarray
    corner_distance: np.ndarray

    def mask(self, cls: TargetClass) -> np.ndarray:
        return self.kind == cls.value

    def counts(self) -> dict:
        return {c.value: int(np.sum(self.mask(c))) for c in TargetClass}


def classify(targets, disc: Discretization) -> Classification:
    """NearCorner over NearSmoothPanel over Far; ties count as near."""
    targets = getattr(targets, 'targets', targets)
    n = len(targets)
    polygon = disc.polygon
    kind = np.full(n, TargetClass.FAR.value, dtype=object)
    panel = np.full(n, -1)
    corner = np.full(n, -1)
    corner_dist = np.full(n, np.inf)
    best = np.full(n, np.inf)
    for i, p in enumerate(disc.panels):
        d = panel_distance(polygon, p.anchor, p.edge, p.u0, p.u1, p.is_corner, targets)
        near = d <= p.length
        if p.is_corner:
            hit = near & ((corner < 0) | (d < best))
            kind[hit] = TargetClass.NEAR_CORNER.value
            corner[hit] = p.corner_id
            panel[hit] = i
            best[hit] = d[hit]
            corner_dist[hit] = targets.corner_distance(p.corner_id)[hit]
        else:
            hit = near & (corner < 0) & (d < best)
            kind[hit] = TargetClass.NEAR_SMOOTH.value
            panel[hit] = i
            best[hit] = d[hit]
    return Classification(kind=kind.astype(str), panel=panel, corner=corner, corner_distance=corner_dist)


def _layer(kind: BIEKind) -> Layer:
    return Layer.DOUBLE if kind.is_dirichlet else Layer.SINGLE


def _plain(layer: Layer, targets: TargetPoints, panel: DensityPanel) -> np.ndarray:
    matrix = double_layer_matrix(targets, panel.nodes) if layer is Layer.DOUBLE else single_layer_matrix(targets, panel.nodes)
    return matrix @ (panel.values * panel.nodes.sqrt_weights)


def _near_smooth(layer: Layer, targets: TargetPoints, i: int, panel: DensityPanel) -> float:
    polygon = panel.nodes.polygon

    def kernel(u: np.ndarray) -> np.ndarray:
        return layer_kernel_on_edge(layer, polygon, targets.anchor[i], targets.rel[i], panel.anchor, panel.edge, u)

    v = near_panel_weights(kernel, panel.u0, panel.u1, len(panel.values), eps=NEAR_EPS)
    return float(v @ panel.pointwise)


def _near_corner(layer: Layer, targets: TargetPoints, i: int, panel: DensityPanel, basis) -> float:
    """Both legs integrated adaptively against the two-sided interpolant of the density."""
    polygon = panel.nodes.polygon
    c = panel.anchor
    e_in, e_out = polygon.incident_edges(c)
    two_sided = two_sided_extend(basis, panel.u1)
    total = 0.0
    for edge, a, b in ((e_in, panel.u0, 0.0), (e_out, 0.0, panel.u1)):

        def integrand(u: np.ndarray, edge: int = edge) -> np.ndarray:
            k = layer_kernel_on_edge(layer, polygon, targets.anchor[i], targets.rel[i], c, edge, u)
            return k[:, None] * two_sided.interpolation_matrix(u)

        weights = adaptive_integrate(integrand, a, b, eps=NEAR_EPS, singular_endpoint=0.0, max_depth=120)
        total += float(weights @ panel.pointwise)
    return total


def _panel_sum(layer: Layer, targets: TargetPoints, panels: Sequence[DensityPanel], weak: bool, basis=None) -> np.ndarray:
    out = np.zeros(len(targets))
    for panel in panels:
        out += _plain(layer, targets, panel)
        d = panel.distance(targets)
        for i in np.nonzero(d <= panel.length)[0]:
            if panel.is_corner and weak:
                continue
            plain = _plain(layer, targets.subset([i]), panel)[0]
            if panel.is_corner:
                out[i] += _near_corner(layer, targets, i, panel, basis) - plain
            else:
                out[i] += _near_smooth(layer, targets, i, panel) - plain
    return out


def eval_potential(
    sigma: DensityVector,
    targets,
    resolves: Optional[Mapping[int, ResolveState]] = None,
    classification: Optional[Classification] = None,
    threads: int = 1,
) -> np.ndarray:
    """
    u at the targets from the representation of `sigma.kind`: the double layer
    for Dirichlet kinds (plus ∫σ outside), the single layer for Neumann kinds.
    """
    disc = sigma.disc
    if disc is None:
        raise ConfigError('evaluation needs the density of a mesh')
    targets = getattr(targets, 'targets', targets)
    if len(sigma.values) != disc.n:
        raise DimensionMismatch(f'density of length {len(sigma.values)} on a mesh of {disc.n} nodes')
    cls = classify(targets, disc) if classification is None else classification
    layer = _layer(sigma.kind)
    resolves = dict(resolves or {})
    out = np.zeros(len(targets))

    groups: list[tuple[np.ndarray, list]] = []
    near_corner = cls.mask(TargetClass.NEAR_CORNER)
    if sigma.weak_only:
        for c in np.unique(cls.corner[near_corner]):
            idx = np.nonzero(near_corner & (cls.corner == c))[0]
            r = float(np.min(cls.corner_distance[idx]))
            state = resolves.get(int(c))
            if state is None or not state.covers(r):
                raise UnresolvedCorner(
                    f'targets within {r:.3e} of corner {c} need a resolve down to that radius', int(c), r
                )
            groups.append((idx, state.source_panels()))
        rest = np.nonzero(~near_corner)[0]
    else:
        rest = np.arange(len(targets))
    groups.append((rest, sigma.panels()))

    def run(group) -> tuple[np.ndarray, np.ndarray]:
        idx, panels = group
        return idx, _panel_sum(layer, targets.subset(idx), panels, sigma.weak_only, disc.basis)

    with lg.timed('Evaluation', targets=len(targets), **cls.counts()):
        if threads > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run, groups))
        else:
            results = [run(g) for g in groups]
    for idx, values in results:
        out[idx] = values
    if sigma.kind is BIEKind.EXTERIOR_DIRICHLET:
        out += sigma.integral
    return out


def polarization_tensor(matrix, factorized: Optional[Factorized] = None) -> np.ndarray:
    """
    P[m, k] = ⟨σ_m, x_k⟩ where σ_m solves the exterior Neumann problem with
    data n_m, the m-th component of the outward normal.
    """
    if matrix.kind is not BIEKind.INTERIOR_DIRICHLET:
        raise ConfigError(f'the polarization tensor uses the interior Dirichlet matrix, got {matrix.kind.value}', 'bie_kind')
    factorized = Factorized(matrix) if factorized is None else factorized
    nodes = matrix.nodes
    normals = nodes.normals()
    p = np.empty((2, 2))
    for m in range(2):
        sigma = solve_neumann_adjoint(matrix, normals[:, m] * nodes.sqrt_weights, factorized)
        for k in range(2):
            p[m, k] = weak_inner_product(sigma, nodes.points[:, k])
    lg.info('Polarization tensor', tensor=p, asymmetry=abs(p[0, 1] - p[1, 0]))
    return p


def far_field_decay(sigma: DensityVector, f_integral: float, radii: Sequence[float], n_angles: int = 16) -> np.ndarray:
    """
    max over a circle of |u(y) - (∫f / 2π) log|y|| for each radius, with the
    circle centered at the polygon centroid. It should decay like 1/|y|.
    """
    if sigma.kind is not BIEKind.EXTERIOR_NEUMANN:
        raise ConfigError(f'the decay check applies to exterior Neumann densities, got {sigma.kind.value}', 'bie_kind')
    polygon = sigma.nodes.polygon
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    out = []
    for r in radii:
        y = polygon.centroid + r * np.column_stack([np.cos(theta), np.sin(theta)])
        u = eval_potential(sigma, TargetGrid.from_points(polygon, y))
        out.append(float(np.max(np.abs(u - f_integral / (2.0 * np.pi) * np.log(np.hypot(*(y - polygon.centroid).T))))))
    return np.array(out)
