"""
Polygons, panels and corner-relative node sets.

Every node and every target is stored as an anchor vertex plus a relative vector,
so that differences between two points near the same vertex never go through
global coordinates. Panels of length 2^-200 stay representable this way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np
import shapely
from shapely.geometry import LinearRing
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.validation import explain_validity

from .errors import AtCorner, ConfigError, DegenerateAngle, MeshInfeasible, SelfIntersecting
from .log import lg

if TYPE_CHECKING:  # pragma: no cover
    from .corner_basis import CornerBasis

__all__ = [
    'Discretization',
    'NodeSet',
    'Panel',
    'PanelKind',
    'Polygon',
    'TargetPoints',
    'boundary_point',
    'build_mesh',
    'build_polygon',
    'load_polygon',
    'panel_distance',
    'param_point',
    'point_segment_distance',
    'separation',
]

ANGLE_TOL = 1e-12
DEFAULT_DELTA_FRACTION = 1.0 / 16.0


@dataclass(frozen=True, eq=False)
class Polygon:
    """A simple, counterclockwise polygon. Edge e runs from vertex e to vertex e+1."""

    vertices: np.ndarray
    edge_lengths: np.ndarray
    total_length: float
    corner_angles: np.ndarray  # interior angle of corner c is pi * corner_angles[c]
    corner_params: np.ndarray

    @property
    def n_corners(self) -> int:
        return len(self.vertices)

    @cached_property
    def tangents(self) -> np.ndarray:
        return (np.roll(self.vertices, -1, axis=0) - self.vertices) / self.edge_lengths[:, None]

    @cached_property
    def outward_normals(self) -> np.ndarray:
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @property
    def inward_normals(self) -> np.ndarray:
        return -self.outward_normals

    @cached_property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @cached_property
    def centroid(self) -> np.ndarray:
        v, w = self.vertices, np.roll(self.vertices, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return np.array([np.sum((v[:, 0] + w[:, 0]) * cross), np.sum((v[:, 1] + w[:, 1]) * cross)]) / (6.0 * self.area)

    def incident_edges(self, corner: int) -> tuple[int, int]:
        """(incoming, outgoing) edge of a corner."""
        return (corner - 1) % self.n_corners, corner

    @cached_property
    def outline(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.vertices)

    def contains(self, points) -> np.ndarray:
        """Strictly inside Ω; points on Γ give False."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(shapely.contains_xy(self.outline, p[:, 0], p[:, 1]), dtype=bool)

    def boundary_distance(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        v, w = self.vertices, np.roll(self.vertices, -1, axis=0)
        return np.min(np.stack([point_segment_distance(p, v[e], w[e]) for e in range(self.n_corners)]), axis=0)


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def point_segment_distance(points, a, b) -> np.ndarray:
    """Distance from each point to the closed segment [a, b]."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = b - a
    s = np.clip(((p - a) @ d) / float(d @ d), 0.0, 1.0)
    return np.hypot(*(p - (a + s[:, None] * d)).T)


def _segment_distance(p0, p1, q0, q1) -> float:
    """Distance between two non-intersecting closed segments."""
    return float(
        min(
            point_segment_distance([p0, p1], q0, q1).min(),
            point_segment_distance([q0, q1], p0, p1).min(),
        )
    )


def build_polygon(vertices: Sequence[Sequence[float]]) -> Polygon:
    """
    Validate a vertex list and return the counterclockwise polygon.

    Clockwise input is reversed; the first vertex keeps index 0. Raises
    DegenerateAngle for repeated vertices, zero area or corner angles outside
    (0, 2π) or equal to π, and SelfIntersecting when two edges touch.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise DegenerateAngle(f'a polygon needs at least 3 two-dimensional vertices, got shape {v.shape}', 'vertices')
    if not np.all(np.isfinite(v)):
        raise ConfigError('vertex coordinates must be finite', 'vertices')
    n = len(v)
    dist = np.hypot(v[:, None, 0] - v[None, :, 0], v[:, None, 1] - v[None, :, 1])
    dist[np.diag_indices(n)] = np.inf
    if np.any(dist == 0.0):
        i, j = np.argwhere(dist == 0.0)[0]
        raise DegenerateAngle(f'vertices {i} and {j} coincide at {v[i].tolist()}', 'vertices')

    if np.linalg.matrix_rank(v[1:] - v[0]) < 2:
        raise DegenerateAngle('polygon has zero area, all vertices are collinear', 'vertices')
    if not LinearRing(v).is_simple:
        raise SelfIntersecting(f'boundary is not simple: {explain_validity(ShapelyPolygon(v))}', 'vertices')
    area = _signed_area(v)
    if area == 0.0:
        raise DegenerateAngle('polygon has zero area', 'vertices')
    if area < 0.0:
        v = np.roll(v[::-1], 1, axis=0)

    w = np.roll(v, -1, axis=0)
    lengths = np.hypot(*(w - v).T)
    tangents = (w - v) / lengths[:, None]
    t_in, t_out = np.roll(tangents, 1, axis=0), tangents
    turn = np.arctan2(t_in[:, 0] * t_out[:, 1] - t_in[:, 1] * t_out[:, 0], np.sum(t_in * t_out, axis=1))
    alpha = 1.0 - turn / np.pi
    bad = (alpha <= 0.0) | (alpha >= 2.0) | (np.abs(alpha - 1.0) < ANGLE_TOL)
    if np.any(bad):
        c = int(np.argmax(bad))
        raise DegenerateAngle(f'corner {c} has angle parameter {alpha[c]!r}, outside (0, 2) or equal to 1', 'vertices')

    total = float(np.sum(lengths))
    params = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    for arr in (v, lengths, alpha, params):
        arr.setflags(write=False)
    return Polygon(vertices=v, edge_lengths=lengths, total_length=total, corner_angles=alpha, corner_params=params)


def load_polygon(path: Union[str, Path]) -> Polygon:
    """Read `{"vertices": [[x, y], ...]}`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}') from e
    if not isinstance(doc, dict) or 'vertices' not in doc:
        raise ConfigError(f'{path}: expected an object with a "vertices" list', 'vertices')
    return build_polygon(doc['vertices'])


def param_point(polygon: Polygon, t: float) -> tuple[np.ndarray, np.ndarray, int]:
    """(γ(t), inward unit normal, edge id). Parameters are taken modulo L."""
    L = polygon.total_length
    t = float(t) % L
    hit = np.isclose(t, polygon.corner_params, rtol=0.0, atol=4 * np.finfo(float).eps * L)
    if np.any(hit) or np.isclose(t, L, rtol=0.0, atol=4 * np.finfo(float).eps * L):
        raise AtCorner(f'parameter {t!r} is a corner parameter; the normal is undefined there')
    e = int(np.searchsorted(polygon.corner_params, t, side='right') - 1)
    point = polygon.vertices[e] + (t - polygon.corner_params[e]) * polygon.tangents[e]
    return point, polygon.inward_normals[e].copy(), e


def boundary_point(polygon: Polygon, t: float) -> tuple[np.ndarray, tuple[int, ...]]:
    """γ(t) and the edges containing it. Unlike `param_point` a corner is allowed; it lies on both its edges."""
    L = polygon.total_length
    t = float(t) % L
    tol = 4 * np.finfo(float).eps * L
    if np.isclose(t, L, rtol=0.0, atol=tol):
        t = 0.0
    hit = np.flatnonzero(np.isclose(t, polygon.corner_params, rtol=0.0, atol=tol))
    if hit.size:
        c = int(hit[0])
        return polygon.vertices[c].copy(), polygon.incident_edges(c)
    e = int(np.searchsorted(polygon.corner_params, t, side='right') - 1)
    return polygon.vertices[e] + (t - polygon.corner_params[e]) * polygon.tangents[e], (e,)


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Boundary nodes as (anchor vertex, signed offset along edge) with quadrature weights."""

    polygon: Polygon
    anchor: np.ndarray
    offset: np.ndarray
    edge: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.offset)

    @cached_property
    def rel(self) -> np.ndarray:
        return self.offset[:, None] * self.polygon.tangents[self.edge]

    @cached_property
    def points(self) -> np.ndarray:
        return self.polygon.vertices[self.anchor] + self.rel

    @cached_property
    def params(self) -> np.ndarray:
        return (self.polygon.corner_params[self.anchor] + self.offset) % self.polygon.total_length

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def normals(self, inward: bool = False) -> np.ndarray:
        n = self.polygon.inward_normals if inward else self.polygon.outward_normals
        return n[self.edge]

    def subset(self, idx) -> 'NodeSet':
        return NodeSet(self.polygon, self.anchor[idx], self.offset[idx], self.edge[idx], self.weights[idx])

    def with_weights(self, weights: np.ndarray) -> 'NodeSet':
        return NodeSet(self.polygon, self.anchor, self.offset, self.edge, np.asarray(weights, dtype=float))

    @staticmethod
    def concatenate(sets: Sequence['NodeSet']) -> 'NodeSet':
        return NodeSet(
            sets[0].polygon,
            np.concatenate([s.anchor for s in sets]),
            np.concatenate([s.offset for s in sets]),
            np.concatenate([s.edge for s in sets]),
            np.concatenate([s.weights for s in sets]),
        )

    @classmethod
    def on_corner(cls, polygon: Polygon, corner: int, offsets, weights) -> 'NodeSet':
        """Nodes near `corner`: negative offsets on the incoming edge, positive on the outgoing one."""
        offsets = np.asarray(offsets, dtype=float)
        e_in, e_out = polygon.incident_edges(corner)
        return cls(
            polygon,
            np.full(len(offsets), corner),
            offsets,
            np.where(offsets < 0.0, e_in, e_out),
            np.asarray(weights, dtype=float),
        )


@dataclass(frozen=True, eq=False)
class TargetPoints:
    """Evaluation points as (anchor vertex, relative vector)."""

    polygon: Polygon
    anchor: np.ndarray
    rel: np.ndarray

    def __len__(self) -> int:
        return len(self.anchor)

    @classmethod
    def from_points(cls, polygon: Polygon, points) -> 'TargetPoints':
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.hypot(p[:, None, 0] - polygon.vertices[None, :, 0], p[:, None, 1] - polygon.vertices[None, :, 1])
        anchor = np.argmin(d, axis=1)
        return cls(polygon, anchor, p - polygon.vertices[anchor])

    @classmethod
    def near_corner(cls, polygon: Polygon, corner: int, rel) -> 'TargetPoints':
        rel = np.atleast_2d(np.asarray(rel, dtype=float))
        return cls(polygon, np.full(len(rel), corner), rel)

    @cached_property
    def points(self) -> np.ndarray:
        return self.polygon.vertices[self.anchor] + self.rel

    def subset(self, idx) -> 'TargetPoints':
        return TargetPoints(self.polygon, self.anchor[idx], self.rel[idx])

    def corner_distance(self, corner: int) -> np.ndarray:
        """Distance to a vertex, exact for targets anchored at it."""
        base = self.polygon.vertices[self.anchor] - self.polygon.vertices[corner]
        return np.hypot(*(base + self.rel).T)


def separation(targets, sources) -> tuple[np.ndarray, np.ndarray]:
    """Components of x_i - y_j, formed corner-relatively, each of shape (len(targets), len(sources))."""
    v = targets.polygon.vertices
    ta, sa = targets.anchor, sources.anchor
    dx = (v[ta, 0][:, None] - v[sa, 0][None, :]) + (targets.rel[:, 0][:, None] - sources.rel[:, 0][None, :])
    dy = (v[ta, 1][:, None] - v[sa, 1][None, :]) + (targets.rel[:, 1][:, None] - sources.rel[:, 1][None, :])
    return dx, dy


def panel_distance(polygon: Polygon, anchor: int, edge: int, u0: float, u1: float, is_corner: bool, targets) -> np.ndarray:
    """
    Distance from targets to a panel, formed relative to the panel's anchor vertex.
    A corner panel is the two-segment polyline through its vertex.
    """
    rel = (polygon.vertices[targets.anchor] - polygon.vertices[anchor]) + targets.rel
    if not is_corner:
        t = polygon.tangents[edge]
        return point_segment_distance(rel, u0 * t, u1 * t)
    origin = np.zeros(2)
    e_in, e_out = polygon.incident_edges(anchor)
    return np.minimum(
        point_segment_distance(rel, u0 * polygon.tangents[e_in], origin),
        point_segment_distance(rel, origin, u1 * polygon.tangents[e_out]),
    )


class PanelKind(str, Enum):
    SMOOTH = 'smooth'
    CORNER = 'corner'


@dataclass(frozen=True)
class Panel:
    """
    One panel. [a, b] is its parameter interval (a corner panel at vertex 0 wraps,
    so a > b there); u0 < u1 are its offsets from the anchor vertex.
    """

    a: float
    b: float
    kind: PanelKind
    order: int
    anchor: int
    u0: float
    u1: float
    start: int
    edge: int = -1
    corner_id: Optional[int] = None

    @property
    def is_corner(self) -> bool:
        return self.kind is PanelKind.CORNER

    @property
    def length(self) -> float:
        return self.u1 - self.u0

    @property
    def index(self) -> slice:
        return slice(self.start, self.start + self.order)

    @property
    def corner_distance(self) -> float:
        """Arclength from the panel to its anchor vertex (0 for corner panels)."""
        if self.kind is PanelKind.CORNER:
            return 0.0
        return min(abs(self.u0), abs(self.u1))


@dataclass(frozen=True, eq=False)
class Discretization:
    polygon: Polygon
    panels: tuple
    nodes: NodeSet
    node_panel: np.ndarray
    corner_half_length: np.ndarray
    smooth_order: int
    basis: Optional['CornerBasis'] = None
    rho_min: float = 2.0

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def s(self) -> np.ndarray:
        return self.nodes.params

    @property
    def weights(self) -> np.ndarray:
        return self.nodes.weights

    @property
    def sqrt_weights(self) -> np.ndarray:
        return self.nodes.sqrt_weights

    @cached_property
    def _corner_panel_ids(self) -> dict:
        return {p.corner_id: i for i, p in enumerate(self.panels) if p.kind is PanelKind.CORNER}

    def corner_panel(self, corner: int) -> Panel:
        return self.panels[self._corner_panel_ids[corner]]

    def corner_indices(self, corner: int) -> np.ndarray:
        p = self.corner_panel(corner)
        return np.arange(p.start, p.start + p.order)

    def flank_panels(self, corner: int) -> tuple[Panel, Panel]:
        """The smooth panels [-2δ, -δ] and [δ, 2δ] next to a corner panel."""
        d = self.corner_half_length[corner]
        left = right = None
        for p in self.panels:
            if p.kind is PanelKind.SMOOTH and p.anchor == corner:
                if p.u1 == -d:
                    left = p
                elif p.u0 == d:
                    right = p
        if left is None or right is None:
            raise MeshInfeasible(f'corner {corner} has no flank panels')
        return left, right

    def flank_indices(self, corner: int) -> tuple[np.ndarray, np.ndarray]:
        left, right = self.flank_panels(corner)
        return np.arange(left.start, left.start + left.order), np.arange(right.start, right.start + right.order)

    def panel_nodes(self, panel: Panel) -> NodeSet:
        return self.nodes.subset(panel.index)


def _dyadic_intervals(delta: float, half: float) -> list[tuple[float, float]]:
    out, a = [], delta
    while a < half:
        b = min(2.0 * a, half)
        out.append((a, b))
        a = b
    return out


def _panel_segment(polygon: Polygon, anchor: int, edge: int, u0: float, u1: float) -> tuple[np.ndarray, np.ndarray]:
    v, t = polygon.vertices[anchor], polygon.tangents[edge]
    return v + u0 * t, v + u1 * t


def bernstein_ratio(polygon: Polygon, anchor: int, edge: int, u0: float, u1: float) -> float:
    """
    dist(panel, other edges) / half-length, skipping the panel's own edge and the
    edge that meets it at the anchor vertex.
    """
    e_in, e_out = polygon.incident_edges(anchor)
    skip = {edge, e_in, e_out}
    p0, p1 = _panel_segment(polygon, anchor, edge, u0, u1)
    v, w = polygon.vertices, np.roll(polygon.vertices, -1, axis=0)
    dist = min((_segment_distance(p0, p1, v[e], w[e]) for e in range(polygon.n_corners) if e not in skip), default=np.inf)
    return dist / (0.5 * (u1 - u0))


def _refine(polygon, anchor, edge, u0, u1, delta, rho_min, depth, max_depth) -> list[tuple[float, float]]:
    if bernstein_ratio(polygon, anchor, edge, u0, u1) >= rho_min:
        return [(u0, u1)]
    if abs(u0) == delta or abs(u1) == delta:
        raise MeshInfeasible(
            f'flank panel of corner {anchor} is closer than {rho_min} half-lengths to a non-adjacent edge; '
            f'reduce delta (currently {delta!r})',
            'mesh.delta',
        )
    if depth >= max_depth:
        raise MeshInfeasible(f'panel near corner {anchor} on edge {edge} could not be separated from the boundary')
    mid = 0.5 * (u0 + u1)
    return _refine(polygon, anchor, edge, u0, mid, delta, rho_min, depth + 1, max_depth) + _refine(
        polygon, anchor, edge, mid, u1, delta, rho_min, depth + 1, max_depth
    )


def corner_deltas(polygon: Polygon, delta=None) -> np.ndarray:
    lengths = polygon.edge_lengths
    adjacent = np.minimum(lengths, np.roll(lengths, 1))
    if delta is None:
        return DEFAULT_DELTA_FRACTION * adjacent
    d = np.broadcast_to(np.asarray(delta, dtype=float), (polygon.n_corners,)).copy()
    if np.any(~np.isfinite(d)) or np.any(d <= 0.0):
        raise ConfigError(f'corner half-lengths must be positive, got {d.tolist()}', 'mesh.delta')
    return d


def build_mesh(
    polygon: Polygon,
    delta: Union[None, float, Sequence[float]] = None,
    smooth_order: int = 16,
    corner_order: Optional[int] = None,
    basis: Optional['CornerBasis'] = None,
    rho_min: float = 2.0,
    max_bisections: int = 12,
) -> Discretization:
    """
    Corner panels of half-length δ_c with the two-sided basis nodes, dyadically
    graded Gauss-Legendre panels elsewhere.

    Each edge is split at its midpoint and each half is graded toward its own
    vertex as [δ, 2δ], [2δ, 4δ], ... up to the midpoint. Panels that come closer
    than `rho_min` half-lengths to a non-adjacent edge are bisected.
    """
    from .corner_basis import build_corner_basis
    from .quadrature import gauss_legendre

    if rho_min <= 1.0:
        raise ConfigError(f'rho_min must exceed 1, got {rho_min!r}', 'mesh.rho_min')
    rule = gauss_legendre(smooth_order)
    basis = build_corner_basis() if basis is None else basis
    k = basis.k
    if corner_order is not None and corner_order != 2 * k:
        raise ConfigError(f'corner order must equal 2K = {2 * k} for this basis, got {corner_order}', 'mesh.corner_order')

    n = polygon.n_corners
    deltas = corner_deltas(polygon, delta)
    lengths = polygon.edge_lengths
    v, w = polygon.vertices, np.roll(polygon.vertices, -1, axis=0)
    for c in range(n):
        e_in, e_out = polygon.incident_edges(c)
        if not 4.0 * deltas[c] < min(lengths[e_in], lengths[e_out]):
            raise MeshInfeasible(
                f'corner {c}: 2*delta={2 * deltas[c]!r} is not below half the adjacent edge length', 'mesh.delta'
            )
        for e in range(n):
            if e in (e_in, e_out):
                continue
            d = float(point_segment_distance(v[c], v[e], w[e])[0])
            if d < max(2.0, 1.0 + rho_min) * deltas[c]:
                raise MeshInfeasible(
                    f'corner {c} is {d!r} from edge {e}, too close for delta={deltas[c]!r}', 'mesh.delta'
                )

    panels: list[Panel] = []
    anchors, offsets, edges, weights = [], [], [], []
    x_ref, w_ref = basis.nodes, basis.weights
    L = polygon.total_length
    start = 0

    def add(panel: Panel, u: np.ndarray, wt: np.ndarray, edge_ids: np.ndarray) -> None:
        nonlocal start
        panels.append(panel)
        anchors.append(np.full(len(u), panel.anchor))
        offsets.append(u)
        edges.append(edge_ids)
        weights.append(wt)
        start += len(u)

    for c in range(n):
        d = deltas[c]
        e_in, e_out = polygon.incident_edges(c)
        u = np.concatenate([-d * x_ref[::-1], d * x_ref])
        wt = np.concatenate([d * w_ref[::-1], d * w_ref])
        pc = polygon.corner_params[c]
        add(
            Panel((pc - d) % L, pc + d, PanelKind.CORNER, 2 * k, c, -d, d, start, corner_id=c),
            u,
            wt,
            np.concatenate([np.full(k, e_in), np.full(k, e_out)]),
        )

        e = c
        c_next = (c + 1) % n
        half = 0.5 * lengths[e]
        near = [
            seg
            for a, b in _dyadic_intervals(d, half)
            for seg in _refine(polygon, c, e, a, b, d, rho_min, 0, max_bisections)
        ]
        d_next = deltas[c_next]
        far = [
            seg
            for a, b in reversed(_dyadic_intervals(d_next, half))
            for seg in _refine(polygon, c_next, e, -b, -a, d_next, rho_min, 0, max_bisections)
        ]
        for anchor, segs in ((c, near), (c_next, far)):
            for u0, u1 in segs:
                nodes, wts = rule.on(u0, u1)
                base = polygon.corner_params[anchor]
                add(
                    Panel((base + u0) % L, (base + u1) % L, PanelKind.SMOOTH, smooth_order, anchor, u0, u1, start,
                          edge=e),
                    nodes,
                    wts,
                    np.full(smooth_order, e),
                )

    node_panel = np.concatenate([np.full(p.order, i) for i, p in enumerate(panels)])
    nodes = NodeSet(
        polygon,
        np.concatenate(anchors),
        np.concatenate(offsets),
        np.concatenate(edges),
        np.concatenate(weights),
    )
    disc = Discretization(
        polygon=polygon,
        panels=tuple(panels),
        nodes=nodes,
        node_panel=node_panel,
        corner_half_length=deltas,
        smooth_order=smooth_order,
        basis=basis,
        rho_min=rho_min,
    )
    lg.info(
        'Mesh built',
        corners=n,
        panels=len(panels),
        nodes=disc.n,
        min_delta=float(deltas.min()),
        smooth_order=smooth_order,
        corner_order=2 * k,
    )
    return disc
