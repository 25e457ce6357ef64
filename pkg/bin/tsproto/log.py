""" Logging setup for the command line and for library users who want the same layout.

The app directory looks like::

    <app-root>
        bin
            tsp.py
            tsproto/
        default
            logging.conf
        local
            logging.conf      (optional, site overrides)

:func:`configure_logging` loads the first logging configuration file it finds, ``local`` before
``default``. Library code never configures logging itself; it only asks for module loggers.
"""
import logging
import warnings
from logging.config import fileConfig
from os import path

from tsproto.exceptions import TsprotoWarning

app_root = path.dirname(path.dirname(path.dirname(path.abspath(__file__))))

_current_logging_configuration_file = None

FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(level=None, filename=None):
    """ Configure the root logger and return the configuration file that was loaded, if any.

    :param level: Level name or number applied to the root logger after the file is loaded.
    :param filename: Alternative configuration file. Relative names are looked up under
        ``local`` then ``default``.
    """
    global _current_logging_configuration_file

    if filename is None:
        for relative_path in (path.join('local', 'logging.conf'),
                              path.join('default', 'logging.conf')):
            configuration_file = path.join(app_root, relative_path)
            if path.exists(configuration_file):
                filename = configuration_file
                break
    elif not path.isabs(filename):
        for conf in 'local', 'default':
            configuration_file = path.join(app_root, conf, filename)
            if path.exists(configuration_file):
                filename = configuration_file
                break
        else:
            raise ValueError('Logging configuration file "{}" not found in local or default '
                             'directory'.format(filename))
    elif not path.exists(filename):
        raise ValueError('Logging configuration file "{}" not found'.format(filename))

    if filename is not None:
        filename = path.realpath(filename)
        if filename != _current_logging_configuration_file:
            fileConfig(filename, disable_existing_loggers=False)
            _current_logging_configuration_file = filename

    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(FORMAT))
        root.addHandler(handler)
    if level is not None:
        root.setLevel(level.upper() if isinstance(level, str) else level)
    return filename


def warn(logger, message, *args):
    """ Log a data anomaly and raise it as a :class:`TsprotoWarning` so callers can catch it. """
    text = message.format(*args)
    logger.warning(text)
    warnings.warn(text, TsprotoWarning, stacklevel=3)
