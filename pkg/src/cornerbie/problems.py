"""Test polygons, boundary data and analytic fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import ConfigError
from .geometry import NodeSet, Polygon, build_polygon

__all__ = [
    'HarmonicPolynomial',
    'PointCharges',
    'l_shape',
    'normal_component',
    'proxy_triangle',
    'regular_polygon',
    'star_polygon',
    'unit_square',
]


def unit_square() -> Polygon:
    return build_polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def proxy_triangle() -> Polygon:
    return build_polygon([[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]])


def l_shape() -> Polygon:
    """Unit L with a reentrant corner of angle 3π/2 at (1, 1)."""
    return build_polygon([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])


def regular_polygon(n: int, radius: float = 1.0) -> Polygon:
    if n < 3:
        raise ConfigError(f'a polygon needs at least 3 corners, got {n}', 'polygon.n')
    theta = 2.0 * np.pi * np.arange(n) / n
    return build_polygon(radius * np.column_stack([np.cos(theta), np.sin(theta)]))


def star_polygon(n_points: int, r_out: float = 1.0, r_in: float = 0.6) -> Polygon:
    """Star with `n_points` tips, so 2 * n_points corners, alternating reentrant."""
    if n_points < 2 or not 0.0 < r_in < r_out:
        raise ConfigError(f'star needs n_points >= 2 and 0 < r_in < r_out, got {n_points}, {r_in}, {r_out}', 'polygon')
    theta = np.pi * np.arange(2 * n_points) / n_points
    r = np.where(np.arange(2 * n_points) % 2 == 0, r_out, r_in)
    return build_polygon(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


@dataclass(frozen=True)
class PointCharges:
    """u(x) = -Σ_j c_j log|x - x_j|."""

    locations: np.ndarray
    strengths: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        c = np.atleast_1d(np.asarray(self.strengths, dtype=float))
        if loc.shape != (len(c), 2):
            raise ConfigError(f'{len(c)} strengths for locations of shape {loc.shape}', 'data.charges')
        object.__setattr__(self, 'locations', loc)
        object.__setattr__(self, 'strengths', c)

    @property
    def total(self) -> float:
        return float(np.sum(self.strengths))

    def potential(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(p[:, None, 0] - self.locations[None, :, 0], p[:, None, 1] - self.locations[None, :, 1])
        return -np.log(r) @ self.strengths

    def gradient(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        dx = p[:, None, 0] - self.locations[None, :, 0]
        dy = p[:, None, 1] - self.locations[None, :, 1]
        r2 = dx * dx + dy * dy
        return -np.column_stack([(dx / r2) @ self.strengths, (dy / r2) @ self.strengths])

    def scattering_data(self, nodes: NodeSet) -> np.ndarray:
        """√w-scaled ∇u·n_out on the boundary."""
        return np.sum(self.gradient(nodes.points) * nodes.normals(), axis=1) * nodes.sqrt_weights

    def dirichlet_data(self, nodes: NodeSet) -> np.ndarray:
        return self.potential(nodes.points) * nodes.sqrt_weights

    def flux(self) -> float:
        """∫ ∂u/∂n_out over any curve enclosing all charges."""
        return -2.0 * np.pi * self.total

    @classmethod
    def inside(cls, polygon: Polygon, n: int, rng: np.random.Generator, margin: float = 0.1,
               zero_mean: bool = False) -> 'PointCharges':
        """Charges uniformly placed at least `margin` inside the polygon."""
        lo, hi = polygon.vertices.min(axis=0), polygon.vertices.max(axis=0)
        picked: list[np.ndarray] = []
        for _ in range(1000):
            p = lo + (hi - lo) * rng.random((4 * n, 2))
            ok = polygon.contains(p) & (polygon.boundary_distance(p) >= margin)
            picked.extend(p[ok])
            if len(picked) >= n:
                break
        if len(picked) < n:
            raise ConfigError(f'could not place {n} charges {margin} inside the polygon', 'data.margin')
        return cls(np.array(picked[:n]), _strengths(rng, n, zero_mean))

    @classmethod
    def outside(cls, polygon: Polygon, n: int, rng: np.random.Generator, r_min: float = 1.5, r_max: float = 3.0,
                zero_mean: bool = False) -> 'PointCharges':
        """Charges in an annulus around the centroid, r_min and r_max relative to the circumradius."""
        c = polygon.centroid
        radius = float(np.max(np.hypot(*(polygon.vertices - c).T)))
        r = radius * (r_min + (r_max - r_min) * rng.random(n))
        theta = 2.0 * np.pi * rng.random(n)
        loc = c + np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        return cls(loc, _strengths(rng, n, zero_mean))


def _strengths(rng: np.random.Generator, n: int, zero_mean: bool) -> np.ndarray:
    c = rng.uniform(-1.0, 1.0, n)
    if zero_mean:
        c -= c.mean()
    return c


@dataclass(frozen=True)
class HarmonicPolynomial:
    """Re or Im of (z - z0)^degree."""

    degree: int
    kind: Literal['re', 'im'] = 're'
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.degree < 0:
            raise ConfigError(f'degree must be non-negative, got {self.degree}', 'data.degree')
        if self.kind not in ('re', 'im'):
            raise ConfigError(f"kind must be 're' or 'im', got {self.kind!r}", 'data.kind')

    def _z(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p[:, 0] - self.center[0]) + 1j * (p[:, 1] - self.center[1])

    def potential(self, points) -> np.ndarray:
        w = self._z(points) ** self.degree
        return w.real if self.kind == 're' else w.imag

    def gradient(self, points) -> np.ndarray:
        if self.degree == 0:
            return np.zeros((len(np.atleast_2d(points)), 2))
        d = self.degree * self._z(points) ** (self.degree - 1)
        if self.kind == 're':
            return np.column_stack([d.real, -d.imag])
        return np.column_stack([d.imag, d.real])

    def dirichlet_data(self, nodes: NodeSet) -> np.ndarray:
        return self.potential(nodes.points) * nodes.sqrt_weights

    def neumann_data(self, nodes: NodeSet) -> np.ndarray:
        return np.sum(self.gradient(nodes.points) * nodes.normals(), axis=1) * nodes.sqrt_weights


def normal_component(m: int) -> Callable[[NodeSet], np.ndarray]:
    """√w-scaled n_m, the data of the m-th exterior Neumann problem behind the polarization tensor."""
    if m not in (0, 1):
        raise ConfigError(f'normal component must be 0 or 1, got {m}', 'm')

    def data(nodes: NodeSet) -> np.ndarray:
        return nodes.normals()[:, m] * nodes.sqrt_weights

    return data
