"""
Laplace kernels.

The pointwise kernels follow the inward-normal convention:
K(x, y) = ν_in(x)·∇_x G(x, y) with G = -log|x - y| / 2π. The matrix builders work
on corner-relative node sets and use the outward-normal double layer
D_out(y -> x) = n_out(y)·(x - y) / (2π|x - y|²), whose one-sided limits are the
ones returned by `trace_limits`. The two are related by D_out(y -> x) = -K(y, x).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CoincidentPoints
from .geometry import NodeSet, Polygon, boundary_point, param_point, separation

__all__ = [
    'KernelPoint',
    'Layer',
    'Side',
    'dlp_kernel',
    'double_layer_matrix',
    'green',
    'kernel_point',
    'layer_kernel_on_edge',
    'neumann_kernel',
    'neumann_kernel_on_edge',
    'neumann_matrix',
    'single_layer_matrix',
    'trace_limits',
    'wedge_kernel',
]

TWO_PI = 2.0 * np.pi


class Layer(str, Enum):
    SINGLE = 'single'
    DOUBLE = 'double'


class Side(str, Enum):
    INTERIOR = 'interior'
    EXTERIOR = 'exterior'


@dataclass(frozen=True)
class KernelPoint:
    s: float
    t: float
    source: np.ndarray
    target: np.ndarray
    source_normal: np.ndarray  # inward
    same_edge: bool


def kernel_point(polygon: Polygon, s: float, t: float) -> KernelPoint:
    x, nu, edge_s = param_point(polygon, s)
    # only the point carrying the normal must avoid the corners
    y, edges_t = boundary_point(polygon, t)
    return KernelPoint(s=s, t=t, source=x, target=y, source_normal=nu, same_edge=edge_s in edges_t)


def green(x, y) -> float:
    r = float(np.hypot(*(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))))
    if r == 0.0:
        raise CoincidentPoints(f'green evaluated at coincident points {x!r}')
    return -np.log(r) / TWO_PI


def dlp_kernel(polygon: Polygon, s: float, t: float) -> float:
    """k(s, t) = ν_in(γ(s))·∇_x G(γ(s), γ(t)); exactly 0 when s and t share an edge."""
    kp = kernel_point(polygon, s, t)
    d = kp.source - kp.target
    r2 = float(d @ d)
    if r2 == 0.0:
        raise CoincidentPoints(f'dlp_kernel evaluated at coincident parameters s={s!r}, t={t!r}')
    if kp.same_edge:
        return 0.0
    return float(-(kp.source_normal @ d) / (TWO_PI * r2))


def neumann_kernel(polygon: Polygon, s: float, t: float) -> float:
    """Inward normal derivative at γ(t) of the single layer sourced at γ(s)."""
    y, nu_t, edge_t = param_point(polygon, t)
    x, edges_s = boundary_point(polygon, s)
    d = y - x
    r2 = float(d @ d)
    if r2 == 0.0:
        raise CoincidentPoints(f'neumann_kernel evaluated at coincident parameters s={s!r}, t={t!r}')
    if edge_t in edges_s:
        return 0.0
    return float(-(nu_t @ d) / (TWO_PI * r2))


def trace_limits(layer: Layer, side: Side, boundary_value: float, density_value: float, derivative: bool = False) -> float:
    """
    One-sided boundary limits of layer potentials.

    Double layer: interior b - σ/2, exterior b + σ/2. Normal derivative of the
    single layer (`derivative=True`): interior b + σ/2, exterior b - σ/2. The
    single-layer value itself is continuous.
    """
    layer, side = Layer(layer), Side(side)
    sign = 1.0 if side is Side.EXTERIOR else -1.0
    if layer is Layer.DOUBLE:
        return boundary_value + sign * density_value / 2.0
    if derivative:
        return boundary_value - sign * density_value / 2.0
    return boundary_value


def wedge_kernel(x, u, alpha: float):
    """D_out between the two legs of a corner: target at distance x on one leg, source at u on the other."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    theta = np.pi * alpha
    return -x * np.sin(theta) / (TWO_PI * (x * x + u * u - 2.0 * x * u * np.cos(theta)))


def _check_coincident(r2: np.ndarray) -> None:
    if np.any(r2 == 0.0):
        raise CoincidentPoints('kernel matrix requested for a target that coincides with a source node')


def double_layer_matrix(targets, sources: NodeSet, on_boundary: bool = False) -> np.ndarray:
    """
    D[i, j] = D_out(y_j -> x_i), unweighted.

    With `on_boundary` the targets are boundary nodes (they carry `edge`) and
    same-edge entries are exactly zero.
    """
    dx, dy = separation(targets, sources)
    n = sources.normals()
    num = n[:, 0][None, :] * dx + n[:, 1][None, :] * dy
    r2 = dx * dx + dy * dy
    if on_boundary:
        same = targets.edge[:, None] == sources.edge[None, :]
        r2 = np.where(same, 1.0, r2)
        _check_coincident(r2)
        out = num / (TWO_PI * r2)
        out[same] = 0.0
        return out
    _check_coincident(r2)
    return num / (TWO_PI * r2)


def neumann_matrix(targets: NodeSet, sources: NodeSet) -> np.ndarray:
    """N[i, j] = n_out(x_i)·∇_x G(x_i, y_j) for boundary targets; same-edge entries are zero."""
    dx, dy = separation(targets, sources)
    n = targets.normals()
    num = -(n[:, 0][:, None] * dx + n[:, 1][:, None] * dy)
    r2 = dx * dx + dy * dy
    same = targets.edge[:, None] == sources.edge[None, :]
    r2 = np.where(same, 1.0, r2)
    _check_coincident(r2)
    out = num / (TWO_PI * r2)
    out[same] = 0.0
    return out


def single_layer_matrix(targets, sources: NodeSet) -> np.ndarray:
    """S[i, j] = G(x_i, y_j), unweighted."""
    dx, dy = separation(targets, sources)
    r2 = dx * dx + dy * dy
    _check_coincident(r2)
    return -np.log(r2) / (2.0 * TWO_PI)


def layer_kernel_on_edge(layer: Layer, polygon: Polygon, target_anchor: int, target_rel, anchor: int, edge: int, u):
    """
    Kernel of one target against sources at offsets `u` along `edge`, measured
    from vertex `anchor`. The double layer is D_out; the single layer is G.
    """
    u = np.asarray(u, dtype=float)
    base = (polygon.vertices[target_anchor] - polygon.vertices[anchor]) + np.asarray(target_rel, dtype=float)
    t = polygon.tangents[edge]
    dx = base[0] - u * t[0]
    dy = base[1] - u * t[1]
    r2 = dx * dx + dy * dy
    if Layer(layer) is Layer.SINGLE:
        return -np.log(r2) / (2.0 * TWO_PI)
    n = polygon.outward_normals[edge]
    return (n[0] * dx + n[1] * dy) / (TWO_PI * r2)


def neumann_kernel_on_edge(polygon: Polygon, target_anchor: int, target_rel, target_edge: int, anchor: int, edge: int, u):
    """n_out(x)·∇_x G(x, y) for a boundary target x on `target_edge` and sources at offsets `u` along `edge`."""
    u = np.asarray(u, dtype=float)
    base = (polygon.vertices[target_anchor] - polygon.vertices[anchor]) + np.asarray(target_rel, dtype=float)
    t = polygon.tangents[edge]
    dx = base[0] - u * t[0]
    dy = base[1] - u * t[1]
    n = polygon.outward_normals[target_edge]
    return -(n[0] * dx + n[1] * dy) / (TWO_PI * (dx * dx + dy * dy))
