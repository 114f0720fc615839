import logging

import numpy as np

from cornerbie import lg, setup_logging
from cornerbie.log import StructuredFormatter, _json_default, _to_text


def _read(path):
    for handler in logging.getLogger('cornerbie').handlers:
        handler.flush()
    return path.read_text()


def test_messages_go_to_the_log_file(tmp_path):
    log_file = tmp_path / 'logs' / 'cornerbie.log'
    setup_logging(log_file)
    lg.info('Mesh built', panels=29, nodes=512)
    lg.warning('Archived density moved on the next level', level=3, mismatch=4e-15)
    lg.debug('Debug lines stay out at INFO')
    text = _read(log_file)
    assert 'INFO Mesh built' in text
    assert '  panels: 29' in text
    assert 'WARNING Archived density moved on the next level' in text
    assert 'Debug lines stay out' not in text


def test_setup_is_idempotent(tmp_path):
    log_file = tmp_path / 'run.log'
    setup_logging(log_file)
    setup_logging(log_file)
    lg.info('once')
    assert _read(log_file).count('once') == 1


def test_arrays_and_floats_keep_full_precision(tmp_path):
    log_file = tmp_path / 'run.log'
    setup_logging(log_file)
    lg.info('Polarization tensor', tensor=np.array([[0.1, 0.2], [0.2, 0.3]]), residual=np.float64(1.0 / 3.0))
    text = _read(log_file)
    assert '0.33333333333333331' in text
    assert '0.1' in text and '0.3' in text


def test_timed_records_stage(tmp_path):
    log_file = tmp_path / 'run.log'
    setup_logging(log_file)
    timings = {}
    with lg.timed('Assembly', timings, n=10):
        pass
    with lg.timed('Assembly', timings, n=10):
        pass
    assert set(timings) == {'Assembly'}
    assert timings['Assembly'] >= 0.0
    assert _read(log_file).count('Assembly finished') == 2


def test_json_default_handles_numpy():
    assert _json_default(np.arange(3)) == [0, 1, 2]
    assert _json_default(np.int64(7)) == 7
    assert _to_text(0.1) == '0.10000000000000001'
    assert _to_text({'a': 1}) == '{"a": 1}'


def test_formatter_short_vectors_stay_inline():
    formatter = StructuredFormatter()
    record = logging.LogRecord('cornerbie', logging.INFO, __file__, 1, 'Residuals', (), None)
    record._extra_args = ['[1.0, 2.0, 3.0]']
    record._extra_kwargs = {'radii': '[0.5, 0.25]', 'corner': '2'}
    text = formatter.format(record)
    assert '  [1.0, 2.0, 3.0]' in text
    assert '  radii:\n    [0.5, 0.25]' in text
    assert '  corner: 2' in text
