"""
Graded-mesh reference solutions.

Every corner panel of a mesh is replaced by Gauss-Legendre panels graded
dyadically into the vertex, and the boundary integral equation of the
requested kind is assembled straight from its kernel and solved densely.
There is no adjoint step and no singular table, so the result is an
independent check of both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .assembly import BIEKind, assemble_direct
from .errors import ConfigError, IncompatibleData, TooLarge
from .evaluate import eval_potential
from .geometry import Discretization, NodeSet, Panel, PanelKind
from .log import lg
from .quadrature import gauss_legendre
from .solve import COMPATIBILITY_TOL, DensityPanel, DensityVector, Factorized

__all__ = [
    'GradedMesh',
    'ReferenceSolution',
    'ReferenceSystem',
    'build_graded_mesh',
    'build_reference_system',
    'solve_reference',
]

DEFAULT_LEVELS = 160
MAX_LEVELS = 220
DEFAULT_MAX_NODES = 20000


@dataclass(frozen=True, eq=False)
class GradedMesh:
    """A mesh whose corner panels are dyadic Gauss-Legendre ladders, smallest panel δ 2^-levels."""

    disc: Discretization
    levels: int
    graded_order: int

    @property
    def n(self) -> int:
        return self.disc.n

    @property
    def nodes(self) -> NodeSet:
        return self.disc.nodes

    @property
    def panels(self) -> tuple:
        return self.disc.panels

    def smallest_panel(self) -> float:
        return float(min(p.length for p in self.disc.panels))

    def find_panel(self, corner: int, u0: float, u1: float) -> int:
        """Index of the panel anchored at `corner` with offsets [u0, u1]."""
        for i, p in enumerate(self.disc.panels):
            if p.anchor == corner and np.isclose(p.u0, u0, rtol=1e-12, atol=0.0) and np.isclose(p.u1, u1, rtol=1e-12, atol=0.0):
                return i
        raise ConfigError(f'no graded panel [{u0!r}, {u1!r}] at corner {corner}', 'reference')


def _ladder(delta: float, levels: int) -> list[tuple[float, float]]:
    """[0, δ2^-L], [δ2^-L, δ2^-L+1], ..., [δ/2, δ] as offsets from the vertex."""
    out = [(0.0, delta * 0.5**levels)]
    out += [(delta * 0.5 ** (k + 1), delta * 0.5**k) for k in reversed(range(levels))]
    return out


def build_graded_mesh(
    disc: Discretization,
    levels: int = DEFAULT_LEVELS,
    graded_order: Optional[int] = None,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> GradedMesh:
    """Keep every smooth panel of `disc`; replace each corner panel by a graded ladder on both legs."""
    if not 1 <= levels <= MAX_LEVELS:
        raise ConfigError(f'grading depth must be in [1, {MAX_LEVELS}], got {levels!r}', 'reference.levels')
    order = disc.smooth_order if graded_order is None else int(graded_order)
    rule = gauss_legendre(order)
    polygon = disc.polygon
    n_graded = sum(p.order for p in disc.panels if not p.is_corner)
    n_graded += polygon.n_corners * 2 * (levels + 1) * order
    if n_graded > max_nodes:
        raise TooLarge(
            f'graded mesh would have {n_graded} nodes, above the cap of {max_nodes}; reduce the depth or the order',
            'reference.max_nodes',
        )

    panels: list[Panel] = []
    anchors, offsets, edges, weights = [], [], [], []
    start = 0
    L = polygon.total_length

    def add(anchor: int, edge: int, u0: float, u1: float, m: int, u: np.ndarray, w: np.ndarray) -> None:
        nonlocal start
        base = polygon.corner_params[anchor]
        panels.append(Panel((base + u0) % L, (base + u1) % L, PanelKind.SMOOTH, m, anchor, u0, u1, start, edge=edge))
        anchors.append(np.full(m, anchor))
        offsets.append(u)
        edges.append(np.full(m, edge))
        weights.append(w)
        start += m

    for p in disc.panels:
        if not p.is_corner:
            nodes = disc.panel_nodes(p)
            add(p.anchor, p.edge, p.u0, p.u1, p.order, nodes.offset, nodes.weights)
            continue
        c = p.corner_id
        e_in, e_out = polygon.incident_edges(c)
        ladder = _ladder(float(disc.corner_half_length[c]), levels)
        for a, b in reversed(ladder):
            u, w = rule.on(-b, -a)
            add(c, e_in, -b, -a, order, u, w)
        for a, b in ladder:
            u, w = rule.on(a, b)
            add(c, e_out, a, b, order, u, w)

    nodes = NodeSet(
        polygon, np.concatenate(anchors), np.concatenate(offsets), np.concatenate(edges), np.concatenate(weights)
    )
    graded = Discretization(
        polygon=polygon,
        panels=tuple(panels),
        nodes=nodes,
        node_panel=np.concatenate([np.full(q.order, i) for i, q in enumerate(panels)]),
        corner_half_length=disc.corner_half_length,
        smooth_order=disc.smooth_order,
        basis=None,
        rho_min=disc.rho_min,
    )
    lg.info('Graded mesh built', levels=levels, order=order, nodes=graded.n, panels=len(panels))
    return GradedMesh(disc=graded, levels=levels, graded_order=order)


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    mesh: GradedMesh
    density: DensityVector

    @property
    def kind(self) -> BIEKind:
        return self.density.kind

    def potential(self, targets, threads: int = 1) -> np.ndarray:
        return eval_potential(self.density, targets, threads=threads)

    def panel(self, index: int) -> DensityPanel:
        p = self.mesh.panels[index]
        return DensityPanel(self.mesh.disc.panel_nodes(p), self.density.values[p.index], p.u0, p.u1)

    def legendre_coefficients(self, index: int) -> np.ndarray:
        return self.panel(index).legendre_coefficients()

    def density_on(self, corner: int, u0: float, u1: float) -> DensityPanel:
        """The reference density on the graded panel [u0, u1] next to `corner`."""
        return self.panel(self.mesh.find_panel(corner, u0, u1))


@dataclass(eq=False)
class ReferenceSystem:
    """A factorized graded-mesh system, reused for several data vectors."""

    mesh: GradedMesh
    kind: BIEKind
    factorized: Factorized

    def solve(self, data: Callable[[NodeSet], np.ndarray]) -> ReferenceSolution:
        nodes = self.mesh.nodes
        f = np.asarray(data(nodes), dtype=float)
        if self.kind is BIEKind.INTERIOR_NEUMANN:
            total = float(f @ nodes.sqrt_weights)
            if abs(total) > COMPATIBILITY_TOL * max(1.0, float(np.linalg.norm(f))):
                raise IncompatibleData(f'interior Neumann data must integrate to zero, got {total:.3e}', 'data')
        sigma = self.factorized.solve(f)
        lg.info(
            'Reference solve',
            kind=self.kind.value,
            n=self.mesh.n,
            levels=self.mesh.levels,
            density_norm=float(np.linalg.norm(sigma)),
        )
        density = DensityVector(values=sigma, kind=self.kind, weak_only=False, nodes=nodes, disc=self.mesh.disc)
        return ReferenceSolution(mesh=self.mesh, density=density)


def build_reference_system(
    disc: Discretization,
    kind: BIEKind,
    levels: int = DEFAULT_LEVELS,
    graded_order: Optional[int] = None,
    max_nodes: int = DEFAULT_MAX_NODES,
    threads: int = 1,
    near: bool = True,
) -> ReferenceSystem:
    """
    Assemble and factor the `kind` equation on the graded version of `disc`.

    With `near`, entries within one panel length across a vertex are integrated adaptively.
    """
    kind = BIEKind(kind)
    mesh = build_graded_mesh(disc, levels, graded_order, max_nodes)
    with lg.timed('Reference assembly', kind=kind.value, n=mesh.n):
        matrix = assemble_direct(mesh.nodes, kind, threads=threads, near_panels=mesh.panels if near else None)
    matrix = replace(matrix, disc=mesh.disc)
    return ReferenceSystem(mesh=mesh, kind=kind, factorized=Factorized(matrix, overwrite=True))


def solve_reference(
    disc: Discretization,
    kind: BIEKind,
    data: Callable[[NodeSet], np.ndarray],
    levels: int = DEFAULT_LEVELS,
    graded_order: Optional[int] = None,
    max_nodes: int = DEFAULT_MAX_NODES,
    threads: int = 1,
    near: bool = True,
) -> ReferenceSolution:
    """Dense solve of the `kind` equation on the graded version of `disc`; `data` maps a node set to √w-scaled boundary data."""
    system = build_reference_system(disc, kind, levels, graded_order, max_nodes, threads, near)
    return system.solve(data)
