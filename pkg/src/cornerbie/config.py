"""
Experiment configuration.

A run is described by one JSON document. `load_config` accepts a path or the
name of a bundled config (`triangle-scattering`, `square-dirichlet-harmonic`)
and validates every field; the first violation raises ConfigError with the
dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .assembly import BIEKind
from .errors import ConfigError
from .geometry import Polygon, build_polygon, load_polygon
from . import problems

__all__ = [
    'BasisConfig',
    'ChargeSpec',
    'DataConfig',
    'ExperimentConfig',
    'MeshConfig',
    'PolarGridSpec',
    'ReferenceConfig',
    'ResolveRequest',
    'SolverConfig',
    'TargetConfig',
    'bundled_configs',
    'load_config',
    'parse_config',
]

SHAPES = ('triangle', 'square', 'l_shape', 'star', 'regular')
DATA_TYPES = ('charges', 'harmonic', 'normal')


@dataclass(frozen=True)
class MeshConfig:
    delta: Union[None, float, tuple] = None
    smooth_order: int = 16
    rho_min: float = 2.0


@dataclass(frozen=True)
class BasisConfig:
    eps: float = 1e-13
    mu_lo: float = 0.5
    mu_hi: float = 50.0
    n_mu: int = 200
    levels: int = 60
    grid_order: int = 30
    cond_bound: float = 1e4


@dataclass(frozen=True)
class SolverConfig:
    threads: int = 1
    paranoid: bool = False


@dataclass(frozen=True)
class ResolveRequest:
    corner: int
    radius: float
    max_levels: int = 400


@dataclass(frozen=True)
class PolarGridSpec:
    corner: int
    r_min: float
    r_max: float
    n_r: int
    n_theta: int
    exterior: bool = False


@dataclass(frozen=True)
class TargetConfig:
    points: tuple = ()
    ring_radii: tuple = ()  # relative to the circumradius, around the centroid
    ring_points: int = 0
    interior_grid: int = 0  # n x n grid of the bounding box, kept inside and at least one panel from Γ
    polar: tuple = ()


@dataclass(frozen=True)
class ReferenceConfig:
    enabled: bool = False
    levels: int = 160
    graded_order: Optional[int] = None
    max_nodes: int = 20000
    near: bool = True


@dataclass(frozen=True)
class ChargeSpec:
    locations: Optional[tuple] = None
    strengths: Optional[tuple] = None
    n: int = 3
    placement: str = 'inside'
    margin: float = 0.1
    zero_mean: bool = False


@dataclass(frozen=True)
class DataConfig:
    type: str = 'charges'
    charges: ChargeSpec = field(default_factory=ChargeSpec)
    degree: int = 1
    harmonic_kind: str = 're'
    component: int = 0

    def build(self, polygon: Polygon, seed: int):
        """The analytic field behind the data: PointCharges, HarmonicPolynomial, or None for normal data."""
        if self.type == 'harmonic':
            return problems.HarmonicPolynomial(self.degree, self.harmonic_kind)
        if self.type == 'normal':
            return None
        spec = self.charges
        if spec.locations is not None:
            return problems.PointCharges(np.array(spec.locations), np.array(spec.strengths))
        rng = np.random.default_rng(seed)
        if spec.placement == 'inside':
            return problems.PointCharges.inside(polygon, spec.n, rng, spec.margin, spec.zero_mean)
        return problems.PointCharges.outside(polygon, spec.n, rng, zero_mean=spec.zero_mean)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    polygon: dict
    bie_kind: BIEKind
    data: DataConfig = field(default_factory=DataConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    resolve: tuple = ()
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    polarization: bool = False
    seed: int = 0
    out: Optional[str] = None
    source: Optional[str] = None

    def build_polygon(self) -> Polygon:
        spec = self.polygon
        if 'vertices' in spec:
            return build_polygon(spec['vertices'])
        if 'file' in spec:
            path = Path(spec['file'])
            if not path.is_absolute() and self.source:
                path = Path(self.source).parent / path
            return load_polygon(path)
        shape = spec['shape']
        if shape == 'triangle':
            return problems.proxy_triangle()
        if shape == 'square':
            return problems.unit_square()
        if shape == 'l_shape':
            return problems.l_shape()
        if shape == 'star':
            return problems.star_polygon(spec.get('n', 8), spec.get('r_out', 1.0), spec.get('r_in', 0.6))
        return problems.regular_polygon(spec.get('n', 6), spec.get('radius', 1.0))

    def with_overrides(
        self,
        eps: Optional[float] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        out: Optional[str] = None,
    ) -> 'ExperimentConfig':
        cfg = self
        if eps is not None:
            _check(1e-16 < eps < 1e-6, 'basis.eps', f'must lie in (1e-16, 1e-6), got {eps!r}')
            cfg = replace(cfg, basis=replace(cfg.basis, eps=float(eps)))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if threads is not None:
            _check(threads >= 1, 'solver.threads', f'must be at least 1, got {threads!r}')
            cfg = replace(cfg, solver=replace(cfg.solver, threads=int(threads)))
        if out is not None:
            cfg = replace(cfg, out=str(out))
        return cfg


# ---- Validation -------------------------------------------------------------


def _check(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise ConfigError(message, path or 'config')


def _join(path: str, key: str) -> str:
    return f'{path}.{key}' if path else key


def _section(doc: Any, path: str, allowed: set) -> dict:
    if doc is None:
        return {}
    _check(isinstance(doc, dict), path, f'expected an object, got {type(doc).__name__}')
    unknown = sorted(set(doc) - allowed)
    _check(not unknown, _join(path, unknown[0]) if unknown else path, 'unknown field')
    return doc


def _num(doc: dict, key: str, path: str, default, kind=float, lo=None, hi=None, optional=False):
    if key not in doc or doc[key] is None:
        _check(default is not None or optional, _join(path, key), 'required field is missing')
        return default
    v = doc[key]
    if kind is int:
        _check(isinstance(v, int) and not isinstance(v, bool), _join(path, key), f'expected an integer, got {v!r}')
    else:
        _check(isinstance(v, (int, float)) and not isinstance(v, bool), _join(path, key), f'expected a number, got {v!r}')
        _check(bool(np.isfinite(v)), _join(path, key), f'must be finite, got {v!r}')
    if lo is not None:
        _check(v >= lo, _join(path, key), f'must be at least {lo}, got {v!r}')
    if hi is not None:
        _check(v <= hi, _join(path, key), f'must be at most {hi}, got {v!r}')
    return kind(v)


def _bool(doc: dict, key: str, path: str, default: bool) -> bool:
    v = doc.get(key, default)
    _check(isinstance(v, bool), _join(path, key), f'expected true or false, got {v!r}')
    return v


def _choice(doc: dict, key: str, path: str, default: str, choices) -> str:
    v = doc.get(key, default)
    _check(v in choices, _join(path, key), f'expected one of {list(choices)}, got {v!r}')
    return v


def _points(v: Any, path: str) -> tuple:
    _check(isinstance(v, list), path, 'expected a list of [x, y] pairs')
    for i, p in enumerate(v):
        ok = isinstance(p, list) and len(p) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in p)
        _check(ok, f'{path}[{i}]', f'expected [x, y], got {p!r}')
    return tuple(tuple(float(x) for x in p) for p in v)


def _parse_polygon(doc: Any) -> dict:
    doc = _section(doc, 'polygon', {'vertices', 'file', 'shape', 'n', 'r_out', 'r_in', 'radius'})
    given = [k for k in ('vertices', 'file', 'shape') if k in doc]
    _check(len(given) == 1, 'polygon', 'give exactly one of "vertices", "file" or "shape"')
    if 'vertices' in doc:
        return {'vertices': [list(p) for p in _points(doc['vertices'], 'polygon.vertices')]}
    if 'file' in doc:
        _check(isinstance(doc['file'], str), 'polygon.file', 'expected a path string')
        return {'file': doc['file']}
    _choice(doc, 'shape', 'polygon', 'triangle', SHAPES)
    out = {'shape': doc['shape']}
    if 'n' in doc:
        out['n'] = _num(doc, 'n', 'polygon', None, int, lo=2)
    for key in ('r_out', 'r_in', 'radius'):
        if key in doc:
            out[key] = _num(doc, key, 'polygon', None, lo=0.0)
    return out


def _parse_mesh(doc: Any) -> MeshConfig:
    doc = _section(doc, 'mesh', {'delta', 'smooth_order', 'rho_min'})
    delta = doc.get('delta')
    if isinstance(delta, list):
        for i, d in enumerate(delta):
            _check(isinstance(d, (int, float)) and not isinstance(d, bool) and d > 0, f'mesh.delta[{i}]', f'must be positive, got {d!r}')
        delta = tuple(float(d) for d in delta)
    elif delta is not None:
        delta = _num(doc, 'delta', 'mesh', None)
        _check(delta > 0.0, 'mesh.delta', f'must be positive, got {delta!r}')
    return MeshConfig(
        delta=delta,
        smooth_order=_num(doc, 'smooth_order', 'mesh', 16, int, lo=2, hi=64),
        rho_min=_num(doc, 'rho_min', 'mesh', 2.0, lo=1.0 + 1e-9),
    )


def _parse_basis(doc: Any) -> BasisConfig:
    doc = _section(doc, 'basis', {'eps', 'mu_lo', 'mu_hi', 'n_mu', 'levels', 'grid_order', 'cond_bound'})
    cfg = BasisConfig(
        eps=_num(doc, 'eps', 'basis', 1e-13, lo=1e-16, hi=1e-6),
        mu_lo=_num(doc, 'mu_lo', 'basis', 0.5, lo=0.0),
        mu_hi=_num(doc, 'mu_hi', 'basis', 50.0),
        n_mu=_num(doc, 'n_mu', 'basis', 200, int, lo=1),
        levels=_num(doc, 'levels', 'basis', 60, int, lo=1, hi=200),
        grid_order=_num(doc, 'grid_order', 'basis', 30, int, lo=2, hi=64),
        cond_bound=_num(doc, 'cond_bound', 'basis', 1e4, lo=1.0),
    )
    _check(cfg.mu_hi > cfg.mu_lo, 'basis.mu_hi', f'must exceed mu_lo={cfg.mu_lo!r}')
    return cfg


def _parse_targets(doc: Any) -> TargetConfig:
    doc = _section(doc, 'targets', {'points', 'ring_radii', 'ring_points', 'interior_grid', 'polar'})
    points = _points(doc['points'], 'targets.points') if 'points' in doc else ()
    radii = doc.get('ring_radii', [])
    _check(isinstance(radii, list), 'targets.ring_radii', 'expected a list of numbers')
    for i, r in enumerate(radii):
        _check(isinstance(r, (int, float)) and not isinstance(r, bool) and r > 1.0, f'targets.ring_radii[{i}]',
               f'must exceed 1 (relative to the circumradius), got {r!r}')
    polar = []
    for i, spec in enumerate(doc.get('polar', [])):
        path = f'targets.polar[{i}]'
        spec = _section(spec, path, {'corner', 'r_min', 'r_max', 'n_r', 'n_theta', 'exterior'})
        grid = PolarGridSpec(
            corner=_num(spec, 'corner', path, None, int, lo=0),
            r_min=_num(spec, 'r_min', path, None, lo=0.0),
            r_max=_num(spec, 'r_max', path, None, lo=0.0),
            n_r=_num(spec, 'n_r', path, None, int, lo=1),
            n_theta=_num(spec, 'n_theta', path, None, int, lo=1),
            exterior=_bool(spec, 'exterior', path, False),
        )
        _check(0.0 < grid.r_min <= grid.r_max, f'{path}.r_min', 'needs 0 < r_min <= r_max')
        polar.append(grid)
    return TargetConfig(
        points=points,
        ring_radii=tuple(float(r) for r in radii),
        ring_points=_num(doc, 'ring_points', 'targets', 0, int, lo=0),
        interior_grid=_num(doc, 'interior_grid', 'targets', 0, int, lo=0),
        polar=tuple(polar),
    )


def _parse_data(doc: Any) -> DataConfig:
    doc = _section(doc, 'data', {'type', 'charges', 'degree', 'harmonic_kind', 'component'})
    kind = _choice(doc, 'type', 'data', 'charges', DATA_TYPES)
    c = _section(doc.get('charges'), 'data.charges', {'locations', 'strengths', 'n', 'placement', 'margin', 'zero_mean'})
    locations = _points(c['locations'], 'data.charges.locations') if 'locations' in c else None
    strengths = None
    if locations is not None:
        s = c.get('strengths')
        _check(isinstance(s, list) and len(s) == len(locations), 'data.charges.strengths',
               f'expected {len(locations)} numbers to match the locations')
        for i, x in enumerate(s):
            _check(isinstance(x, (int, float)) and not isinstance(x, bool), f'data.charges.strengths[{i}]', f'expected a number, got {x!r}')
        strengths = tuple(float(x) for x in s)
    charges = ChargeSpec(
        locations=locations,
        strengths=strengths,
        n=_num(c, 'n', 'data.charges', 3, int, lo=1),
        placement=_choice(c, 'placement', 'data.charges', 'inside', ('inside', 'outside')),
        margin=_num(c, 'margin', 'data.charges', 0.1, lo=0.0),
        zero_mean=_bool(c, 'zero_mean', 'data.charges', False),
    )
    return DataConfig(
        type=kind,
        charges=charges,
        degree=_num(doc, 'degree', 'data', 1, int, lo=0),
        harmonic_kind=_choice(doc, 'harmonic_kind', 'data', 're', ('re', 'im')),
        component=_num(doc, 'component', 'data', 0, int, lo=0, hi=1),
    )


def _parse_reference(doc: Any) -> ReferenceConfig:
    doc = _section(doc, 'reference', {'enabled', 'levels', 'graded_order', 'max_nodes', 'near'})
    return ReferenceConfig(
        enabled=_bool(doc, 'enabled', 'reference', False),
        levels=_num(doc, 'levels', 'reference', 160, int, lo=1, hi=220),
        graded_order=_num(doc, 'graded_order', 'reference', None, int, lo=2, hi=64, optional=True),
        max_nodes=_num(doc, 'max_nodes', 'reference', 20000, int, lo=1),
        near=_bool(doc, 'near', 'reference', True),
    )


def parse_config(doc: Any, source: Optional[str] = None) -> ExperimentConfig:
    doc = _section(
        doc,
        '',
        {'name', 'polygon', 'bie_kind', 'data', 'mesh', 'basis', 'solver', 'targets', 'resolve', 'reference',
         'polarization', 'seed', 'out'},
    )
    _check('polygon' in doc, 'polygon', 'required field is missing')
    kinds = [k.value for k in BIEKind]
    bie_kind = BIEKind(_choice(doc, 'bie_kind', '', 'exterior_neumann', kinds))
    solver = _section(doc.get('solver'), 'solver', {'threads', 'paranoid'})
    resolve = []
    _check(isinstance(doc.get('resolve', []), list), 'resolve', 'expected a list of resolve requests')
    for i, r in enumerate(doc.get('resolve', [])):
        path = f'resolve[{i}]'
        r = _section(r, path, {'corner', 'radius', 'max_levels'})
        req = ResolveRequest(
            corner=_num(r, 'corner', path, None, int, lo=0),
            radius=_num(r, 'radius', path, None),
            max_levels=_num(r, 'max_levels', path, 400, int, lo=1),
        )
        _check(req.radius > 0.0, f'{path}.radius', f'must be positive, got {req.radius!r}')
        resolve.append(req)
    data = _parse_data(doc.get('data'))
    if bie_kind.is_dirichlet:
        _check(data.type != 'normal', 'data.type', 'normal-component data belongs to Neumann problems')
        _check(not resolve, 'resolve', 'corner resolves apply to weak Neumann densities only')
    name = doc.get('name', Path(source).stem if source else 'experiment')
    _check(isinstance(name, str) and bool(name), 'name', 'expected a non-empty string')
    out = doc.get('out')
    _check(out is None or isinstance(out, str), 'out', 'expected a directory path')
    return ExperimentConfig(
        name=name,
        polygon=_parse_polygon(doc['polygon']),
        bie_kind=bie_kind,
        data=data,
        mesh=_parse_mesh(doc.get('mesh')),
        basis=_parse_basis(doc.get('basis')),
        solver=SolverConfig(
            threads=_num(solver, 'threads', 'solver', 1, int, lo=1),
            paranoid=_bool(solver, 'paranoid', 'solver', False),
        ),
        targets=_parse_targets(doc.get('targets')),
        resolve=tuple(resolve),
        reference=_parse_reference(doc.get('reference')),
        polarization=_bool(doc, 'polarization', '', False),
        seed=_num(doc, 'seed', '', 0, int, lo=0),
        out=out,
        source=source,
    )


def bundled_configs() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files('cornerbie') / 'configs').iterdir() if p.name.endswith('.json'))


def load_config(path_or_name: Union[str, Path]) -> ExperimentConfig:
    """Load a config file, or a bundled config by name."""
    path = Path(path_or_name)
    if path.exists():
        text, source = path.read_text(), str(path)
    else:
        bundled = resources.files('cornerbie') / 'configs' / f'{path_or_name}.json'
        if not bundled.is_file():
            raise ConfigError(f'no config file or bundled config named {str(path_or_name)!r}', 'config')
        text, source = bundled.read_text(), None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f'invalid JSON at line {e.lineno} column {e.colno}: {e.msg}', 'config') from e
    return parse_config(doc, source=source)
