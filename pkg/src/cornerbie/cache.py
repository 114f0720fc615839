"""On-disk .npz cache for corner bases and singular weight tables."""

import hashlib
import os
from pathlib import Path
from typing import Optional

import numpy as np

from .log import lg

ENV_VAR = 'CORNERBIE_CACHE'
DEFAULT_DIR = Path('~/.cache/cornerbie')
# bumped whenever the stored basis or table construction changes
FORMAT = 2


def cache_dir() -> Path:
    return Path(os.environ.get(ENV_VAR) or DEFAULT_DIR).expanduser()


def _path(kind: str, key: tuple) -> Path:
    digest = hashlib.sha256(repr((FORMAT,) + key).encode('utf-8')).hexdigest()[:24]
    return cache_dir() / f'{kind}-{digest}.npz'


def load_arrays(kind: str, key: tuple) -> Optional[dict]:
    """Arrays stored under `key`, or None when absent or unreadable."""
    path = _path(kind, key)
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            if str(data['__key__']) != repr(key):
                lg.warning('Cache key collision, rebuilding', path=str(path))
                return None
            return {name: data[name] for name in data.files if name != '__key__'}
    except (OSError, ValueError, KeyError) as e:
        lg.warning('Corrupted cache entry, rebuilding', path=str(path), error=str(e))
        return None


def save_arrays(kind: str, key: tuple, **arrays: np.ndarray) -> Optional[Path]:
    """Write atomically (temp file + os.replace). Failures are logged, never raised."""
    path = _path(kind, key)
    tmp = path.with_name(path.name + f'.{os.getpid()}.tmp')
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tmp.open('wb') as f:
            np.savez(f, __key__=np.array(repr(key)), **arrays)
        os.replace(tmp, path)
    except OSError as e:
        lg.warning('Could not write cache entry', path=str(path), error=str(e))
        tmp.unlink(missing_ok=True)
        return None
    lg.debug('Cache entry written', path=str(path))
    return path
