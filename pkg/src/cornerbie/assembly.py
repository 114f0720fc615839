"""
√w-scaled Nyström matrices for the four boundary integral equations.

Dirichlet kinds are assembled directly; Neumann kinds are transposes of the
matching Dirichlet matrix:

    InteriorDirichlet  -I/2 + D
    ExteriorDirichlet  +I/2 + D + √w√wᵀ
    InteriorNeumann    (ExteriorDirichlet)ᵀ
    ExteriorNeumann    (InteriorDirichlet)ᵀ

with D_ij = √(w_i w_j) D_out(s_j -> s_i).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, MissingTable
from .geometry import Discretization, NodeSet, Panel, PanelKind, panel_distance
from .kernels import Layer, double_layer_matrix, layer_kernel_on_edge, neumann_kernel_on_edge, neumann_matrix
from .log import lg
from .quadrature import SingularWeightTable, near_panel_weights, singular_table

__all__ = [
    'BIEKind',
    'CornerBlock',
    'SystemMatrix',
    'apply',
    'assemble',
    'assemble_direct',
    'assemble_dirichlet_form',
    'corner_blocks',
]

DEFAULT_CHUNK = 512


class BIEKind(str, Enum):
    INTERIOR_DIRICHLET = 'interior_dirichlet'
    EXTERIOR_DIRICHLET = 'exterior_dirichlet'
    INTERIOR_NEUMANN = 'interior_neumann'
    EXTERIOR_NEUMANN = 'exterior_neumann'

    @property
    def is_dirichlet(self) -> bool:
        return self in (BIEKind.INTERIOR_DIRICHLET, BIEKind.EXTERIOR_DIRICHLET)

    @property
    def is_interior(self) -> bool:
        return self in (BIEKind.INTERIOR_DIRICHLET, BIEKind.INTERIOR_NEUMANN)

    @property
    def dirichlet_form(self) -> 'BIEKind':
        """The Dirichlet kind whose matrix (or its transpose) this kind uses."""
        return {
            BIEKind.INTERIOR_NEUMANN: BIEKind.EXTERIOR_DIRICHLET,
            BIEKind.EXTERIOR_NEUMANN: BIEKind.INTERIOR_DIRICHLET,
        }.get(self, self)

    @property
    def identity_sign(self) -> float:
        return -1.0 if self.dirichlet_form is BIEKind.INTERIOR_DIRICHLET else 1.0

    @property
    def rank_one(self) -> bool:
        return self.dirichlet_form is BIEKind.EXTERIOR_DIRICHLET


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    values: np.ndarray
    kind: BIEKind
    nodes: NodeSet
    disc: Optional[Discretization] = None
    scaled: bool = True  # rows by √w_i, columns by 1/√w_j on densities

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> np.ndarray:
        return self.values.T


@dataclass(frozen=True)
class CornerBlock:
    """Cross-leg singular block of one corner panel, acting on density values."""

    indices: np.ndarray
    block: np.ndarray


def corner_blocks(disc: Discretization, tables: Optional[Mapping[float, SingularWeightTable]] = None) -> list[CornerBlock]:
    out = []
    for c in range(disc.polygon.n_corners):
        alpha = round(float(disc.polygon.corner_angles[c]), 12)
        if tables is not None:
            if alpha not in tables:
                raise MissingTable(f'no singular weight table for corner {c} (alpha={alpha!r})')
            table = tables[alpha]
        else:
            table = singular_table(alpha, disc.basis)
        if table.k != disc.basis.k:
            raise MissingTable(f'table for alpha={alpha!r} has K={table.k}, basis has K={disc.basis.k}')
        out.append(CornerBlock(disc.corner_indices(c), table.block()))
    return out


def _row_chunks(n: int, chunk: int) -> list[slice]:
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _scaled_double_layer(nodes: NodeSet, threads: int, chunk: int) -> np.ndarray:
    n = len(nodes)
    sw = nodes.sqrt_weights
    out = np.empty((n, n))

    def fill(rows: slice) -> None:
        out[rows] = sw[rows, None] * double_layer_matrix(nodes.subset(rows), nodes, on_boundary=True) * sw[None, :]

    chunks = _row_chunks(n, chunk)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    else:
        for rows in chunks:
            fill(rows)
    return out


def near_entries(
    nodes: NodeSet,
    panels: Sequence[Panel],
    matrix: np.ndarray,
    eps: float = 1e-14,
    skip: Optional[np.ndarray] = None,
    neumann: bool = False,
) -> int:
    """
    Replace cross-edge entries of targets within one panel length of a smooth
    source panel by adaptively integrated ones. With `neumann` the entries are
    those of the single-layer normal derivative at the target instead of the
    double layer. Returns the number of (target, panel) pairs touched.
    """
    polygon = nodes.polygon
    sw = nodes.sqrt_weights
    touched = 0
    for p in panels:
        if p.kind is not PanelKind.SMOOTH:
            continue
        cols = np.arange(p.start, p.start + p.order)
        d = panel_distance(polygon, p.anchor, p.edge, p.u0, p.u1, False, nodes)
        near = np.nonzero((d <= p.length) & (nodes.edge != p.edge))[0]
        if skip is not None:
            near = near[~skip[near]]
        for i in near:

            def kernel(u: np.ndarray, i: int = i) -> np.ndarray:
                if neumann:
                    return neumann_kernel_on_edge(
                        polygon, nodes.anchor[i], nodes.rel[i], nodes.edge[i], p.anchor, p.edge, u
                    )
                return layer_kernel_on_edge(Layer.DOUBLE, polygon, nodes.anchor[i], nodes.rel[i], p.anchor, p.edge, u)

            v = near_panel_weights(kernel, p.u0, p.u1, p.order, eps=eps)
            matrix[i, cols] = sw[i] * v / sw[cols]
            touched += 1
    return touched


def assemble_dirichlet_form(
    nodes: NodeSet,
    interior: bool,
    blocks: Sequence[CornerBlock] = (),
    rank_one: Optional[bool] = None,
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
    paranoid_panels: Optional[Sequence[Panel]] = None,
) -> np.ndarray:
    """
    ∓I/2 + D (+ √w√wᵀ) on an arbitrary node set.

    Corner blocks overwrite the cross-leg entries of their panel with the
    singular weights; same-leg entries are already exactly zero.
    """
    rank_one = (not interior) if rank_one is None else rank_one
    sw = nodes.sqrt_weights
    a = _scaled_double_layer(nodes, threads, chunk)
    corner_rows = np.zeros(len(nodes), dtype=bool)
    for cb in blocks:
        idx = cb.indices
        a[np.ix_(idx, idx)] = sw[idx, None] * cb.block / sw[None, idx]
        corner_rows[idx] = True
    if paranoid_panels is not None:
        touched = near_entries(nodes, paranoid_panels, a, skip=corner_rows)
        lg.warning('Paranoid assembly replaced near entries adaptively', rows=touched)
    a[np.diag_indices_from(a)] += (-0.5 if interior else 0.5)
    if rank_one:
        a += np.outer(sw, sw)
    return a


def assemble(
    disc: Discretization,
    kind: BIEKind,
    tables: Optional[Mapping[float, SingularWeightTable]] = None,
    threads: int = 1,
    paranoid: bool = False,
) -> SystemMatrix:
    """The Nyström matrix of `kind`; Neumann kinds are the transpose of their Dirichlet form."""
    kind = BIEKind(kind)
    form = kind.dirichlet_form
    blocks = corner_blocks(disc, tables)
    with lg.timed('Assembly', kind=kind.value, n=disc.n, threads=threads):
        values = assemble_dirichlet_form(
            disc.nodes,
            interior=form is BIEKind.INTERIOR_DIRICHLET,
            blocks=blocks,
            threads=threads,
            paranoid_panels=disc.panels if paranoid else None,
        )
    if not kind.is_dirichlet:
        values = np.ascontiguousarray(values.T)
    return SystemMatrix(values=values, kind=kind, nodes=disc.nodes, disc=disc)


def assemble_direct(
    nodes: NodeSet,
    kind: BIEKind,
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
    near_panels: Optional[Sequence[Panel]] = None,
) -> SystemMatrix:
    """
    Every kind from its own kernel with plain weights, no singular tables.

    Neumann kinds use the normal derivative of the single layer, so on an
    all-smooth node set they equal the transposed Dirichlet matrices. With
    `near_panels`, cross-edge entries within one panel length of a panel are
    integrated adaptively with the kernel of `kind`.
    """
    kind = BIEKind(kind)
    sw = nodes.sqrt_weights
    if kind.is_dirichlet:
        a = _scaled_double_layer(nodes, threads, chunk)
    else:
        a = np.empty((len(nodes), len(nodes)))
        for rows in _row_chunks(len(nodes), chunk):
            a[rows] = sw[rows, None] * neumann_matrix(nodes.subset(rows), nodes) * sw[None, :]
    if near_panels is not None:
        touched = near_entries(nodes, near_panels, a, neumann=not kind.is_dirichlet)
        lg.debug('Near entries integrated adaptively', kind=kind.value, pairs=touched)
    a[np.diag_indices_from(a)] += kind.identity_sign * 0.5
    if kind.rank_one:
        a += np.outer(sw, sw)
    return SystemMatrix(values=a, kind=kind, nodes=nodes)


def apply(matrix: SystemMatrix, density) -> np.ndarray:
    values = np.asarray(getattr(density, 'values', density), dtype=float)
    if values.shape != (matrix.n,):
        raise DimensionMismatch(f'density of shape {values.shape} does not match a {matrix.n}x{matrix.n} matrix')
    return matrix.values @ values
