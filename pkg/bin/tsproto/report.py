""" Run reports: one ``report.json`` per command run, queried with JMESPath.

A report holds the command, the effective config, metrics and timings::

    {"command": "sweep-k", "config": {...}, "metrics": {"runs": [{"k": 8, "ma": 0.71}, ...]},
     "timings": {"total": 12.3}}

Queries get a few extra functions on top of the JMESPath built-ins::

    tsp report out/report.json --query "argmax_by(metrics.runs, 'ma').k"
    tsp report out/report.json --query "mean(metrics.runs[].ma)"
"""
import json
import logging
import math

import jmespath
import numpy as np
from jmespath import functions
from jmespath.exceptions import JMESPathError

from tsproto.exceptions import DataFormatError, UsageError

logger = logging.getLogger(__name__)


class ReportFunctions(functions.Functions):

    @functions.signature({'types': ['array']}, {'types': ['string']})
    def _func_argmax_by(self, objs, key):
        """ The object with the largest ``key``; the first one on ties, null if none has it. """
        best = None
        for item in objs:
            try:
                value = item[key]
            except (KeyError, TypeError):
                continue
            if value is not None and (best is None or value > best[key]):
                best = item
        return best

    @functions.signature({'types': ['array-number']})
    def _func_mean(self, values):
        if not values:
            return None
        return math.fsum(values) / len(values)

    @functions.signature({'types': ['array-number']})
    def _func_stdev(self, values):
        """ Population standard deviation, matching the summaries the CLI prints. """
        if not values:
            return None
        return float(np.std(values))

    @functions.signature({'types': ['object']})
    def _func_items(self, h):
        return [list(item) for item in h.items()]


options = jmespath.Options(custom_functions=ReportFunctions())


def _plain(value):
    if isinstance(value, dict):
        return dict((str(k), _plain(v)) for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_report(path, command, config=None, metrics=None, timings=None):
    report = {'command': command, 'config': _plain(config or {}),
              'metrics': _plain(metrics or {}), 'timings': _plain(timings or {})}
    with open(path, 'w') as stream:
        json.dump(report, stream, indent=2, sort_keys=True)
    logger.debug('Wrote report {}'.format(path))
    return report


def read_report(path):
    with open(path) as stream:
        try:
            return json.load(stream)
        except ValueError as e:
            raise DataFormatError(getattr(e, 'lineno', None), 'not a JSON report: {}'.format(e),
                                  path)


def query(report, expression):
    try:
        return jmespath.search(expression, report, options=options)
    except JMESPathError as e:
        raise UsageError('Bad query {!r}: {}'.format(expression, e))


def format_result(value):
    """ Scalars as plain text, anything structured as JSON. """
    if value is None:
        return 'null'
    if isinstance(value, str):
        return value
    if isinstance(value, (dict, list)):
        return json.dumps(value, indent=2, sort_keys=True)
    return json.dumps(value)
