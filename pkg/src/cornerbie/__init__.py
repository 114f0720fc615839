"""cornerbie - Laplace boundary integral equations on polygons with corner-singular quadrature."""

from importlib.metadata import PackageNotFoundError, version

from .log import lg

__all__ = ['lg', 'setup_logging']


def setup_logging(*args, **kwargs):
    """
    Configure the package logger.

    Example:
        from cornerbie import setup_logging, lg

        setup_logging('logs/cornerbie.log', to_stderr_level=logging.INFO)
        lg.info('Mesh built', nodes=1024)

    Parameters:
        log_file_path: Path to log file (required)
        level: Minimum level for file logging (default: logging.INFO)
        to_stderr_level: Minimum level for stderr (default: logging.NOTSET)
        max_bytes: Max file size before rotation (default: 1_000_000)
        backup_count: Number of backup files to keep (default: 5)
        logger_name: Internal logger name (default: 'cornerbie')

    See lg.setup_logging for full parameter documentation.
    """
    return lg.setup_logging(*args, **kwargs)


try:
    __version__ = version('cornerbie')
except PackageNotFoundError:
    # Package not installed yet (development mode)
    __version__ = '0.0.0-dev'
