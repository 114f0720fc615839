"""Dense solves: Dirichlet densities directly, Neumann densities weakly through the transpose."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .assembly import BIEKind, SystemMatrix
from .errors import ConfigError, DimensionMismatch, IncompatibleData, SingularMatrix
from .geometry import Discretization, NodeSet, panel_distance
from .log import lg
from .quadrature import legendre_coefficients

__all__ = [
    'DensityPanel',
    'DensityVector',
    'Factorized',
    'sample_dirichlet_data',
    'sample_neumann_data',
    'solve_dirichlet',
    'solve_neumann_adjoint',
    'weak_inner_product',
]

RCOND_MIN = 1e-15
COMPATIBILITY_TOL = 1e-12

_NEUMANN_OF = {
    BIEKind.INTERIOR_DIRICHLET: BIEKind.EXTERIOR_NEUMANN,
    BIEKind.EXTERIOR_DIRICHLET: BIEKind.INTERIOR_NEUMANN,
}


@dataclass(frozen=True, eq=False)
class DensityPanel:
    """
    A density restricted to one panel. Offsets u0 < u1 are measured from the
    anchor vertex of the nodes; corner panels straddle it.
    """

    nodes: NodeSet
    values: np.ndarray  # √w-scaled
    u0: float
    u1: float
    is_corner: bool = False

    @property
    def anchor(self) -> int:
        return int(self.nodes.anchor[0])

    @property
    def edge(self) -> int:
        return int(self.nodes.edge[-1])

    @property
    def length(self) -> float:
        return self.u1 - self.u0

    @property
    def pointwise(self) -> np.ndarray:
        return self.values / self.nodes.sqrt_weights

    def legendre_coefficients(self) -> np.ndarray:
        if self.is_corner:
            raise ConfigError('corner panels carry no Legendre expansion')
        return legendre_coefficients(self.pointwise)

    def distance(self, targets) -> np.ndarray:
        return panel_distance(self.nodes.polygon, self.anchor, self.edge, self.u0, self.u1, self.is_corner, targets)


@dataclass(frozen=True, eq=False)
class DensityVector:
    """σ_i = σ(s_i) √w_i. `weak_only` densities are valid on corner panels only under inner products."""

    values: np.ndarray
    kind: BIEKind
    weak_only: bool
    nodes: NodeSet
    disc: Optional[Discretization] = None

    def __len__(self) -> int:
        return len(self.values)

    @cached_property
    def pointwise(self) -> np.ndarray:
        """σ(s_i)."""
        return self.values / self.nodes.sqrt_weights

    @property
    def integral(self) -> float:
        return float(self.values @ self.nodes.sqrt_weights)

    def panels(self, skip: Sequence[int] = ()) -> list[DensityPanel]:
        """The density split by mesh panel, leaving out panel ids in `skip`."""
        if self.disc is None:
            raise ConfigError('density has no mesh to split by panel')
        skip = set(skip)
        return [
            DensityPanel(
                self.nodes.subset(p.index), self.values[p.index], p.u0, p.u1, is_corner=p.is_corner
            )
            for i, p in enumerate(self.disc.panels)
            if i not in skip
        ]


class Factorized:
    """LU of a system matrix, reused for several right-hand sides and for transposed solves."""

    def __init__(self, matrix: SystemMatrix, overwrite: bool = False):
        self.matrix = matrix
        values = matrix.values
        with lg.timed('LU factorization', n=matrix.n):
            anorm = float(np.max(np.sum(np.abs(values), axis=0)))
            self.lu, self.piv = scipy.linalg.lu_factor(values, overwrite_a=overwrite, check_finite=True)
        if np.any(np.diag(self.lu) == 0.0):
            raise SingularMatrix(f'{matrix.kind.value} matrix has an exactly zero pivot')
        self.rcond, _ = scipy.linalg.lapack.dgecon(self.lu, anorm, norm='1')
        lg.debug('Factorization conditioning', kind=matrix.kind.value, rcond=float(self.rcond))
        if self.rcond < RCOND_MIN:
            raise SingularMatrix(f'{matrix.kind.value} matrix is numerically singular (rcond={self.rcond:.3e})')

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.matrix.n:
            raise DimensionMismatch(f'right-hand side of length {rhs.shape[0]} for a {self.matrix.n}x{self.matrix.n} system')
        return scipy.linalg.lu_solve((self.lu, self.piv), rhs, trans=1 if transpose else 0)


def _factor(matrix: SystemMatrix, factorized: Optional[Factorized]) -> Factorized:
    if factorized is None:
        return Factorized(matrix)
    if factorized.matrix is not matrix:
        raise ConfigError('factorization belongs to a different matrix')
    return factorized


def solve_dirichlet(matrix: SystemMatrix, f: np.ndarray, factorized: Optional[Factorized] = None) -> DensityVector:
    """σ = A⁻¹f for √w-scaled Dirichlet data f."""
    if not matrix.kind.is_dirichlet:
        raise ConfigError(f'solve_dirichlet needs a Dirichlet matrix, got {matrix.kind.value}', 'bie_kind')
    lu = _factor(matrix, factorized)
    sigma = lu.solve(f)
    lg.info('Dirichlet solve', kind=matrix.kind.value, n=matrix.n, density_norm=float(np.linalg.norm(sigma)))
    return DensityVector(values=sigma, kind=matrix.kind, weak_only=False, nodes=matrix.nodes, disc=matrix.disc)


def solve_neumann_adjoint(matrix: SystemMatrix, f: np.ndarray, factorized: Optional[Factorized] = None) -> DensityVector:
    """
    σ solving Aᵀσ = f where A is the Dirichlet matrix whose transpose is the
    Neumann equation: InteriorDirichlet gives ExteriorNeumann, ExteriorDirichlet
    gives InteriorNeumann. The result is weak on corner panels.
    """
    if not matrix.kind.is_dirichlet:
        raise ConfigError(f'the adjoint solve takes the Dirichlet matrix, got {matrix.kind.value}', 'bie_kind')
    kind = _NEUMANN_OF[matrix.kind]
    f = np.asarray(f, dtype=float)
    if kind is BIEKind.INTERIOR_NEUMANN:
        total = float(f @ matrix.nodes.sqrt_weights)
        scale = max(1.0, float(np.linalg.norm(f)))
        if abs(total) > COMPATIBILITY_TOL * scale:
            raise IncompatibleData(f'interior Neumann data must integrate to zero, got {total:.3e}', 'data')
    lu = _factor(matrix, factorized)
    sigma = lu.solve(f, transpose=True)
    lg.info('Adjoint Neumann solve', kind=kind.value, n=matrix.n, density_norm=float(np.linalg.norm(sigma)))
    return DensityVector(values=sigma, kind=kind, weak_only=True, nodes=matrix.nodes, disc=matrix.disc)


def weak_inner_product(sigma: DensityVector, g: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]) -> float:
    """Σ g(s_i) √w_i σ_i; g is a callable on node points or an array of node values."""
    values = g(sigma.nodes.points) if callable(g) else np.asarray(g, dtype=float)
    if values.shape != sigma.values.shape:
        raise DimensionMismatch(f'test function has shape {values.shape}, density has {sigma.values.shape}')
    return float(np.sum(values * sigma.nodes.sqrt_weights * sigma.values))


def sample_dirichlet_data(nodes: NodeSet, potential: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """f(s_i) √w_i."""
    return np.asarray(potential(nodes.points), dtype=float) * nodes.sqrt_weights


def sample_neumann_data(nodes: NodeSet, gradient: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """(∇u · n_out)(s_i) √w_i for a gradient returning shape (n, 2)."""
    grad = np.asarray(gradient(nodes.points), dtype=float)
    return np.sum(grad * nodes.normals(), axis=1) * nodes.sqrt_weights
