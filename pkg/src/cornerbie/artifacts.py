"""
CSV, JSON and binary artifacts.

Every number is written with '%.17g' so a float read back is the float that
was written, and identical inputs give byte-identical files. Files are written
to a temp name and moved into place with os.replace.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .assembly import BIEKind, SystemMatrix
from .geometry import Discretization
from .log import _json_default, lg

__all__ = [
    'FLOAT_FMT',
    'archive_errors',
    'read_matrix',
    'write_density_csv',
    'write_eval_csv',
    'write_json',
    'write_matrix',
    'write_mesh_csv',
    'write_resolve_log',
]

FLOAT_FMT = '%.17g'
MATRIX_MAGIC = b'CBIEMAT1'
_KIND_CODES = {kind: i for i, kind in enumerate(BIEKind)}


def _fmt(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _atomic_write(path: Union[str, Path], fill: Callable[[io.TextIOBase], None], binary: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f'.{os.getpid()}.tmp')
    try:
        with tmp.open('wb' if binary else 'w', **({} if binary else {'newline': ''})) as f:
            fill(f)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    lg.debug('Artifact written', path=str(path))
    return path


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    def fill(f) -> None:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    return _atomic_write(path, fill)


def write_json(path, payload: dict) -> Path:
    """JSON with sorted keys; floats keep full precision through repr."""

    def fill(f) -> None:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default, allow_nan=True)
        f.write('\n')

    return _atomic_write(path, fill)


def write_mesh_csv(disc: Discretization, path) -> Path:
    """One row per node: panel_id, kind, a, b, node_index, s, w."""

    def rows():
        s, w = disc.s, disc.weights
        for pid, p in enumerate(disc.panels):
            for i in range(p.index.start, p.index.stop):
                yield pid, p.kind.value, p.a, p.b, i, s[i], w[i]

    return _write_csv(path, ('panel_id', 'kind', 'a', 'b', 'node_index', 's', 'w'), rows())


def write_density_csv(density, path, source: str = 'solve') -> Path:
    """Node parameter, weight, √w-scaled density and the weak-only flag."""
    nodes = density.nodes
    s, w = nodes.params, nodes.weights
    weak = np.zeros(len(nodes), dtype=bool)
    if density.weak_only and density.disc is not None:
        for p in density.disc.panels:
            if p.is_corner:
                weak[p.index] = True
    rows = ((i, s[i], w[i], density.values[i], weak[i], source) for i in range(len(nodes)))
    return _write_csv(path, ('node_index', 's', 'w', 'sigma_sqrt_w', 'weak_only', 'source'), rows)


def write_eval_csv(
    targets,
    classes: Sequence[str],
    u: np.ndarray,
    path,
    reference: Optional[np.ndarray] = None,
    label: Optional[Sequence[str]] = None,
) -> Path:
    """x, y, class, u and, when an oracle is given, reference_u and abs_error."""
    pts = getattr(targets, 'points', targets)
    header = ['x', 'y', 'class', 'u']
    if reference is not None:
        header += ['reference_u', 'abs_error']
    if label is not None:
        header.append('grid')

    def rows():
        for i in range(len(u)):
            row = [pts[i, 0], pts[i, 1], classes[i], u[i]]
            if reference is not None:
                row += [reference[i], abs(u[i] - reference[i])]
            if label is not None:
                row.append(label[i])
            yield row

    return _write_csv(path, header, rows())


def archive_errors(state, reference) -> dict:
    """Max Legendre-coefficient difference between each archived panel and the reference, keyed by level."""
    out: dict[int, float] = {}
    for panel in state.archive:
        ref = reference.density_on(state.corner_id, panel.u0, panel.u1)
        c_res = panel.legendre_coefficients()
        c_ref = ref.legendre_coefficients()
        m = min(len(c_res), len(c_ref))
        err = float(np.max(np.abs(c_res[:m] - c_ref[:m])))
        out[panel.level] = max(out.get(panel.level, 0.0), err)
    return out


def write_resolve_log(state, path, reference=None) -> Path:
    """level, delta_j, n_local, residual and, with a reference, the archive coefficient error."""
    errors = archive_errors(state, reference) if reference is not None else {}
    header = ['level', 'delta_j', 'n_local', 'residual']
    if reference is not None:
        header.append('archive_error')
    n_local = len(state.layout.nodes)

    def rows():
        for j, residual in enumerate(state.residuals):
            row = [j, state.delta * 0.5**j, n_local, residual]
            if reference is not None:
                row.append(errors.get(j, float('nan')))
            yield row

    return _write_csv(path, header, rows())


def write_matrix(matrix: SystemMatrix, path) -> Path:
    """Magic, then N and the kind code as int64, then N*N float64 row-major, all little-endian."""
    values = np.ascontiguousarray(matrix.values, dtype='<f8')

    def fill(f) -> None:
        f.write(MATRIX_MAGIC)
        f.write(np.array([matrix.n, _KIND_CODES[matrix.kind]], dtype='<i8').tobytes())
        f.write(values.tobytes(order='C'))

    return _atomic_write(path, fill, binary=True)


def read_matrix(path) -> tuple[np.ndarray, BIEKind]:
    data = Path(path).read_bytes()
    if data[:8] != MATRIX_MAGIC:
        raise ValueError(f'{path} is not a matrix dump')
    n, code = np.frombuffer(data[8:24], dtype='<i8')
    values = np.frombuffer(data[24:], dtype='<f8').reshape(int(n), int(n))
    return values.copy(), list(BIEKind)[int(code)]
