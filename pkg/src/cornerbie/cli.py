"""
Command-line driver.

    cornerbie <command> --config triangle-scattering --out out/tri

Commands run a prefix of the pipeline mesh -> assemble -> solve -> resolve ->
evaluate -> reference compare and write the artifacts of the stages they ran,
plus summary.json. Exit codes: 0 success, 2 config error, 3 numerical failure,
4 resource cap.
"""

from __future__ import annotations

import argparse
import logging
import sys
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__, artifacts
from .assembly import BIEKind, assemble
from .config import ExperimentConfig, load_config
from .corner_basis import PowerFamily, build_corner_basis
from .corner_resolve import DEFAULT_MAX_LEVELS, resolve_corners
from .errors import CornerBIEError
from .evaluate import TargetClass, TargetGrid, classify, eval_potential, far_field_decay, polarization_tensor
from .geometry import NodeSet, TargetPoints, build_mesh
from .log import lg
from .problems import PointCharges, normal_component
from .reference import solve_reference
from .solve import Factorized, solve_dirichlet, solve_neumann_adjoint, weak_inner_product

__all__ = ['COMMANDS', 'Pipeline', 'build_parser', 'main', 'run']

COMMANDS = ('mesh', 'solve', 'resolve', 'eval', 'polarization', 'reference', 'compare', 'run-experiment')


class Pipeline:
    """Lazily computed stages of one experiment. Each stage runs at most once."""

    def __init__(self, config: ExperimentConfig, out: Path):
        self.config = config
        self.out = Path(out)
        self.timings: dict[str, float] = {}
        self.written: dict[str, Path] = {}

    @property
    def kind(self) -> BIEKind:
        return self.config.bie_kind

    @property
    def threads(self) -> int:
        return self.config.solver.threads

    # ---- Stages ---------------------------------------------------------

    @cached_property
    def polygon(self):
        return self.config.build_polygon()

    @cached_property
    def basis(self):
        b = self.config.basis
        family = PowerFamily(mu_lo=b.mu_lo, mu_hi=b.mu_hi, n_mu=b.n_mu, levels=b.levels, grid_order=b.grid_order)
        with lg.timed('Basis', self.timings, eps=b.eps):
            return build_corner_basis(b.eps, family, b.cond_bound)

    @cached_property
    def disc(self):
        m = self.config.mesh
        with lg.timed('Mesh', self.timings):
            return build_mesh(self.polygon, m.delta, m.smooth_order, basis=self.basis, rho_min=m.rho_min)

    @cached_property
    def field(self):
        """The analytic field behind the boundary data, None for normal-component data."""
        return self.config.data.build(self.polygon, self.config.seed)

    def data(self) -> Callable[[NodeSet], np.ndarray]:
        """√w-scaled boundary data of the configured kind on any node set."""
        if self.config.data.type == 'normal':
            return normal_component(self.config.data.component)
        field = self.field
        if self.kind.is_dirichlet:
            return field.dirichlet_data
        return field.scattering_data if isinstance(field, PointCharges) else field.neumann_data

    @cached_property
    def matrix(self):
        with lg.timed('Assemble', self.timings):
            return assemble(self.disc, self.kind.dirichlet_form, threads=self.threads,
                            paranoid=self.config.solver.paranoid)

    @cached_property
    def factorized(self) -> Factorized:
        with lg.timed('Factorize', self.timings):
            return Factorized(self.matrix)

    @cached_property
    def rhs(self) -> np.ndarray:
        return self.data()(self.disc.nodes)

    @cached_property
    def density(self):
        with lg.timed('Solve', self.timings):
            if self.kind.is_dirichlet:
                return solve_dirichlet(self.matrix, self.rhs, self.factorized)
            return solve_neumann_adjoint(self.matrix, self.rhs, self.factorized)

    @cached_property
    def grid(self) -> tuple[TargetPoints, np.ndarray]:
        """All configured targets and a per-target grid label."""
        polygon, t = self.polygon, self.config.targets
        parts: list[TargetPoints] = []
        labels: list[np.ndarray] = []

        def add(points: TargetPoints, label: str) -> None:
            if len(points):
                parts.append(points)
                labels.append(np.full(len(points), label, dtype=object))

        if t.points:
            add(TargetPoints.from_points(polygon, t.points), 'points')
        if t.ring_radii and t.ring_points:
            c = polygon.centroid
            radius = float(np.max(np.hypot(*(polygon.vertices - c).T)))
            theta = 2.0 * np.pi * np.arange(t.ring_points) / t.ring_points
            ring = np.concatenate(
                [c + rr * radius * np.column_stack([np.cos(theta), np.sin(theta)]) for rr in t.ring_radii]
            )
            add(TargetPoints.from_points(polygon, ring), 'ring')
        if t.interior_grid:
            add(TargetPoints.from_points(polygon, self._box_grid(t.interior_grid)), 'grid')
        for spec in t.polar:
            g = TargetGrid.polar(polygon, spec.corner, spec.r_min, spec.r_max, spec.n_r, spec.n_theta, spec.exterior)
            add(g.targets, g.label)
        if not parts:
            return TargetPoints(polygon, np.zeros(0, dtype=int), np.zeros((0, 2))), np.zeros(0, dtype=object)
        targets = TargetPoints(
            polygon, np.concatenate([p.anchor for p in parts]), np.concatenate([p.rel for p in parts])
        )
        return targets, np.concatenate(labels)

    def _box_grid(self, n: int) -> np.ndarray:
        """n x n points over the bounding box (padded outside for exterior kinds) on the problem's side of Γ."""
        polygon = self.polygon
        lo, hi = polygon.vertices.min(axis=0), polygon.vertices.max(axis=0)
        if not self.kind.is_interior:
            pad = 0.5 * (hi - lo)
            lo, hi = lo - pad, hi + pad
        x, y = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n), indexing='ij')
        pts = np.column_stack([x.ravel(), y.ravel()])
        inside = polygon.contains(pts)
        keep = (inside if self.kind.is_interior else ~inside) & (polygon.boundary_distance(pts) > 0.0)
        return pts[keep]

    @cached_property
    def classification(self):
        return classify(self.grid[0], self.disc)

    @cached_property
    def resolves(self) -> dict:
        """
        Requested ladders, plus one for every corner with near-corner targets a
        weak density cannot reach otherwise, run down to the closest such target.
        """
        if self.kind.is_dirichlet:
            return {}
        radius: dict[int, float] = {}
        caps: dict[int, int] = {}
        for req in self.config.resolve:
            radius[req.corner] = min(radius.get(req.corner, np.inf), req.radius)
            caps[req.corner] = max(caps.get(req.corner, 0), req.max_levels)
        cls = self.classification
        near = cls.mask(TargetClass.NEAR_CORNER)
        for c in np.unique(cls.corner[near]):
            r = float(np.min(cls.corner_distance[near & (cls.corner == c)]))
            if r < radius.get(int(c), np.inf):
                lg.info('Resolving corner for near-corner targets', corner=int(c), radius=r)
                radius[int(c)] = r
            caps.setdefault(int(c), DEFAULT_MAX_LEVELS)
        if not radius:
            return {}
        with lg.timed('Resolve', self.timings, corners=sorted(radius)):
            return resolve_corners(self.density, self.matrix, sorted(radius), radius, self.threads, caps)

    @cached_property
    def potential(self) -> np.ndarray:
        with lg.timed('Evaluate', self.timings):
            return eval_potential(self.density, self.grid[0], self.resolves, self.classification, self.threads)

    @cached_property
    def oracle(self) -> Optional[np.ndarray]:
        if self.field is None or not len(self.grid[0]):
            return None
        return self.field.potential(self.grid[0].points)

    @cached_property
    def polarization(self) -> np.ndarray:
        with lg.timed('Polarization', self.timings):
            if self.matrix.kind is BIEKind.INTERIOR_DIRICHLET:
                return polarization_tensor(self.matrix, self.factorized)
            return polarization_tensor(assemble(self.disc, BIEKind.INTERIOR_DIRICHLET, threads=self.threads))

    def _reference(self, kind: BIEKind, data: Callable[[NodeSet], np.ndarray]):
        r = self.config.reference
        return solve_reference(self.disc, kind, data, r.levels, r.graded_order, r.max_nodes, self.threads, r.near)

    @cached_property
    def reference(self):
        with lg.timed('Reference', self.timings):
            return self._reference(self.kind, self.data())

    @cached_property
    def reference_potential(self) -> np.ndarray:
        with lg.timed('Reference evaluate', self.timings):
            return self.reference.potential(self.grid[0], threads=self.threads)

    @cached_property
    def reference_polarization(self) -> np.ndarray:
        p = np.empty((2, 2))
        with lg.timed('Reference polarization', self.timings):
            for m in range(2):
                ref = self._reference(BIEKind.EXTERIOR_NEUMANN, normal_component(m))
                for k in range(2):
                    p[m, k] = weak_inner_product(ref.density, ref.mesh.nodes.points[:, k])
        return p

    # ---- Artifacts ------------------------------------------------------

    def _errors(self, u: np.ndarray, expected: np.ndarray) -> np.ndarray:
        diff = u - expected
        if self.kind is BIEKind.INTERIOR_NEUMANN and len(diff):
            # interior Neumann solutions are unique up to a constant
            diff = diff - np.mean(diff)
        return np.abs(diff)

    def _max_by_class(self, err: np.ndarray) -> dict:
        cls = self.classification
        out = {c.value: float(np.max(err[cls.mask(c)])) for c in TargetClass if np.any(cls.mask(c))}
        if len(err):
            out['all'] = float(np.max(err))
        return out

    def write_mesh(self) -> None:
        self.written['mesh'] = artifacts.write_mesh_csv(self.disc, self.out / 'mesh.csv')

    def write_density(self, dump_matrix: bool = False) -> None:
        self.written['density'] = artifacts.write_density_csv(self.density, self.out / 'density.csv')
        if dump_matrix:
            self.written['matrix'] = artifacts.write_matrix(self.matrix, self.out / 'matrix.bin')

    def write_resolves(self, reference: bool = False) -> None:
        ref = self.reference if reference else None
        for c, state in sorted(self.resolves.items()):
            self.written[f'resolve_corner{c}'] = artifacts.write_resolve_log(
                state, self.out / f'resolve_corner{c}.csv', ref
            )

    def write_eval(self) -> None:
        targets, labels = self.grid
        if not len(targets):
            lg.warning('No targets configured, skipping evaluation')
            return
        expected = self.oracle
        u = self.potential
        if expected is not None and self.kind is BIEKind.INTERIOR_NEUMANN:
            u = u - np.mean(u - expected)
        self.written['eval'] = artifacts.write_eval_csv(
            targets, self.classification.kind, u, self.out / 'eval.csv', expected, labels
        )

    def write_polarization(self, reference: bool = False) -> None:
        p = self.polarization
        payload = {'tensor': p.tolist(), 'asymmetry': abs(p[0, 1] - p[1, 0]), 'area': self.polygon.area}
        if reference:
            ref = self.reference_polarization
            payload['reference'] = ref.tolist()
            payload['max_error'] = float(np.max(np.abs(p - ref)))
        self.written['polarization'] = artifacts.write_json(self.out / 'polarization.json', payload)

    def write_reference(self) -> None:
        self.written['reference_density'] = artifacts.write_density_csv(
            self.reference.density, self.out / 'reference_density.csv', source='reference'
        )
        targets, labels = self.grid
        if len(targets):
            self.written['reference_eval'] = artifacts.write_eval_csv(
                targets, ['reference'] * len(targets), self.reference_potential, self.out / 'reference_eval.csv',
                self.oracle, labels,
            )

    def write_compare(self) -> None:
        targets, labels = self.grid
        if len(targets):
            self.written['compare'] = artifacts.write_eval_csv(
                targets, self.classification.kind, self.potential, self.out / 'compare.csv',
                self.reference_potential, labels,
            )
        self.write_resolves(reference=True)

    def summary(self) -> dict:
        """Everything computed so far."""
        done = self.__dict__
        cfg = self.config
        out: dict = {
            'name': cfg.name,
            'bie_kind': self.kind.value,
            'seed': cfg.seed,
            'eps': cfg.basis.eps,
            'version': __version__,
        }
        if 'disc' in done:
            out['mesh'] = {
                'nodes': self.disc.n,
                'panels': len(self.disc.panels),
                'corners': self.polygon.n_corners,
                'k': self.basis.k,
                'corner_half_lengths': self.disc.corner_half_length.tolist(),
            }
        if 'density' in done:
            out['density'] = {'norm': float(np.linalg.norm(self.density.values)), 'integral': self.density.integral,
                              'weak_only': self.density.weak_only, 'rcond': float(self.factorized.rcond)}
        if 'potential' in done:
            out['targets'] = self.classification.counts()
            if self.oracle is not None:
                out['max_error'] = self._max_by_class(self._errors(self.potential, self.oracle))
        if 'resolves' in done:
            out['resolves'] = {
                str(c): {'levels': s.level + 1, 'final_half_width': s.final_half_width,
                         'max_residual': float(max(s.residuals)),
                         'max_overlap': float(max(s.overlap_errors, default=0.0))}
                for c, s in sorted(self.resolves.items())
            }
        if 'polarization' in done:
            out['polarization'] = self.polarization.tolist()
        if 'reference' in done:
            out['reference'] = {'nodes': self.reference.mesh.n, 'levels': self.reference.mesh.levels,
                                'smallest_panel': self.reference.mesh.smallest_panel()}
            if 'reference_potential' in done and 'potential' in done:
                out['max_error_vs_reference'] = self._max_by_class(
                    self._errors(self.potential, self.reference_potential)
                )
            if 'resolves' in done:
                out['archive_error'] = {
                    str(c): max(artifacts.archive_errors(s, self.reference).values(), default=0.0)
                    for c, s in sorted(self.resolves.items())
                }
        if 'reference_polarization' in done:
            out['polarization_error'] = float(np.max(np.abs(self.polarization - self.reference_polarization)))
        if self.kind is BIEKind.EXTERIOR_NEUMANN and cfg.targets.ring_radii and 'density' in done:
            radius = float(np.max(np.hypot(*(self.polygon.vertices - self.polygon.centroid).T)))
            f_integral = float(self.rhs @ self.disc.sqrt_weights)
            radii = [r * radius for r in cfg.targets.ring_radii]
            out['far_field_decay'] = dict(zip(map(str, radii), far_field_decay(self.density, f_integral, radii).tolist()))
        out['timings'] = dict(self.timings)
        return out

    def write_summary(self) -> None:
        self.written['summary'] = artifacts.write_json(self.out / 'summary.json', self.summary())


def run(config: ExperimentConfig, command: str = 'run-experiment', dump_matrix: bool = False) -> dict[str, Path]:
    """Run `command` on `config` and return the written artifacts by name."""
    out = Path(config.out or Path('out') / config.name)
    p = Pipeline(config, out)
    lg.info('Run started', command=command, name=config.name, kind=config.bie_kind.value, out=str(out))
    if command == 'mesh':
        p.write_mesh()
    elif command == 'solve':
        p.write_density(dump_matrix)
    elif command == 'resolve':
        p.write_density(dump_matrix)
        p.write_resolves()
    elif command == 'eval':
        p.write_eval()
    elif command == 'polarization':
        p.write_polarization()
    elif command == 'reference':
        p.write_reference()
    elif command == 'compare':
        p.write_compare()
        if config.polarization:
            p.write_polarization(reference=True)
    else:
        p.write_mesh()
        p.write_density(dump_matrix)
        p.write_eval()
        if config.reference.enabled:
            p.write_compare()
        else:
            p.write_resolves()
        if config.polarization:
            p.write_polarization(reference=config.reference.enabled)
    p.write_summary()
    lg.info('Run finished', command=command, artifacts=sorted(p.written), seconds=round(sum(p.timings.values()), 3))
    return dict(p.written)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='config file, or the name of a bundled config')
    common.add_argument('--out', default=None, help='output directory (overrides the config)')
    common.add_argument('--eps', type=float, default=None, help='basis tolerance override')
    common.add_argument('--seed', type=int, default=None, help='seed for random charge placement')
    common.add_argument('--threads', type=int, default=None, help='worker threads for assembly and evaluation')
    common.add_argument('--log-file', default=None, help='log file (default: <out>/cornerbie.log)')
    common.add_argument('-v', '--verbose', action='count', default=0, help='log to stderr; twice for debug')
    common.add_argument('--dump-matrix', action='store_true', help='also write the system matrix as matrix.bin')

    parser = argparse.ArgumentParser(prog='cornerbie', description='Laplace boundary integral equations on polygons.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    helps = {
        'mesh': 'build the mesh and write mesh.csv',
        'solve': 'solve the boundary integral equation and write density.csv',
        'resolve': 'run corner resolve ladders and write resolve logs',
        'eval': 'evaluate the potential at the configured targets',
        'polarization': 'compute the polarization tensor',
        'reference': 'solve on the graded reference mesh',
        'compare': 'compare the solution against the graded reference',
        'run-experiment': 'run every stage the config enables',
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_overrides(
            eps=args.eps, seed=args.seed, threads=args.threads, out=args.out
        )
    except CornerBIEError as e:
        print(f'cornerbie: error: {e}', file=sys.stderr)
        return e.exit_code
    out = Path(config.out or Path('out') / config.name)
    stderr_level = {0: logging.NOTSET, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    lg.setup_logging(
        args.log_file or out / 'cornerbie.log',
        level=logging.DEBUG if args.verbose > 1 else logging.INFO,
        to_stderr_level=stderr_level,
    )
    try:
        run(config, args.command, args.dump_matrix)
    except CornerBIEError as e:
        lg.error('Run failed', error=str(e), type=type(e).__name__, exit_code=e.exit_code)
        print(f'cornerbie: error: {e}', file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
