import csv
import json

import pytest

from cornerbie.cli import main


def _write(tmp_path, doc, name='case.json'):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_config_error_exit_code(tmp_path, capsys):
    config = _write(tmp_path, {'polygon': {'shape': 'square'}, 'mesh': {'smooth_order': 100}})
    assert main(['mesh', '--config', config, '--out', str(tmp_path / 'out')]) == 2
    err = capsys.readouterr().err
    assert err.startswith('cornerbie: error: mesh.smooth_order: ')
    assert not (tmp_path / 'out').exists()


def test_malformed_json_exit_code(tmp_path, capsys):
    path = tmp_path / 'broken.json'
    path.write_text('{"polygon": ')
    assert main(['solve', '--config', str(path), '--out', str(tmp_path / 'out')]) == 2
    assert 'invalid JSON at line 1' in capsys.readouterr().err


def test_eps_override_is_validated(tmp_path, capsys):
    assert main(['mesh', '--config', 'square-dirichlet-harmonic', '--eps', '1e-3', '--out', str(tmp_path)]) == 2
    assert 'basis.eps' in capsys.readouterr().err


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(['mesh-everything', '--config', 'square-dirichlet-harmonic'])


def test_mesh_command(tmp_path, basis):
    out = tmp_path / 'run'
    assert main(['mesh', '--config', 'square-dirichlet-harmonic', '--out', str(out)]) == 0
    with open(out / 'mesh.csv', newline='') as f:
        rows = list(csv.reader(f))
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['name'] == 'square-dirichlet-harmonic'
    assert summary['bie_kind'] == 'interior_dirichlet'
    assert summary['mesh']['corners'] == 4
    assert summary['mesh']['nodes'] == len(rows) - 1
    assert summary['mesh']['k'] == basis.k
    assert 'Mesh' in summary['timings']
    assert (out / 'cornerbie.log').exists()


def test_mesh_is_reproducible(tmp_path):
    for name in ('a', 'b'):
        assert main(['mesh', '--config', 'square-dirichlet-harmonic', '--out', str(tmp_path / name)]) == 0
    assert (tmp_path / 'a' / 'mesh.csv').read_bytes() == (tmp_path / 'b' / 'mesh.csv').read_bytes()


def test_solve_command_dumps_the_matrix(tmp_path):
    out = tmp_path / 'run'
    assert main(['solve', '--config', 'square-dirichlet-harmonic', '--out', str(out), '--dump-matrix']) == 0
    assert (out / 'density.csv').exists()
    assert (out / 'matrix.bin').read_bytes()[:8] == b'CBIEMAT1'
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['density']['weak_only'] is False
    assert 0.0 < summary['density']['rcond'] <= 1.0


@pytest.mark.slow
def test_square_dirichlet_experiment(tmp_path):
    out = tmp_path / 'run'
    assert main(['run-experiment', '--config', 'square-dirichlet-harmonic', '--out', str(out)]) == 0
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['max_error']['all'] <= 1e-12
    assert summary['targets']['far'] > 0
    with open(out / 'eval.csv', newline='') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == sum(summary['targets'].values())
    assert {r['grid'] for r in rows} == {'grid'}


@pytest.mark.slow
def test_triangle_scattering_experiment(tmp_path):
    out = tmp_path / 'run'
    assert main(['run-experiment', '--config', 'triangle-scattering', '--out', str(out), '--threads', '2']) == 0
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['max_error']['far'] <= 5e-13
    assert sum(summary['targets'].values()) == 1024
    assert summary['targets']['near_corner'] == 0
    decay = list(summary['far_field_decay'].values())
    assert decay == sorted(decay, reverse=True)
    p = json.loads((out / 'polarization.json').read_text())
    assert p['asymmetry'] <= 1e-12
