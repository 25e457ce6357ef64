""" Flat ``key=value`` configuration with declarative, validated options.

Settings classes declare :class:`Option` attributes::

    class TrainSettings(Settings):
        patience = Option(doc='Validation steps without improvement before a stage switch.',
                          default=5, validate=Integer(1))

Files hold one ``key=value`` per line; ``#`` starts a comment. Values given on the command line
override values read from a file.
"""
import csv
import logging
import math
from io import StringIO

from tsproto.exceptions import ConfigError, DataFormatError

logger = logging.getLogger(__name__)


class Validator(object):
    """ Converts a raw (string) option value, raising ``ValueError`` if it will not convert.

    :meth:`format` gives back the text form written to config files.
    """
    def __call__(self, value):
        raise NotImplementedError()

    def format(self, value):
        return None if value is None else str(value)


class Boolean(Validator):
    truth_values = {
        '1': True, '0': False,
        't': True, 'f': False,
        'true': True, 'false': False,
        'y': True, 'n': False,
        'yes': True, 'no': False,
        'on': True, 'off': False,
    }

    def __call__(self, value):
        if not (value is None or isinstance(value, bool)):
            value = str(value).strip().lower()
            if value not in Boolean.truth_values:
                raise ValueError('Unrecognized truth value: {0}'.format(value))
            value = Boolean.truth_values[value]
        return value

    def format(self, value):
        return None if value is None else 'true' if value else 'false'


class Integer(Validator):
    def __init__(self, minimum=None, maximum=None):
        self.minimum = minimum
        self.maximum = maximum

    def __call__(self, value):
        if value is None:
            return None
        if isinstance(value, bool):
            raise ValueError('Expected integer value, not {}'.format(value))
        try:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError()
            value = int(value)
        except ValueError:
            raise ValueError('Expected integer value, not {!r}'.format(value))
        if self.minimum is not None and value < self.minimum:
            raise ValueError('Expected integer >= {0}, not {1}'.format(self.minimum, value))
        if self.maximum is not None and value > self.maximum:
            raise ValueError('Expected integer <= {0}, not {1}'.format(self.maximum, value))
        return value


class Float(Validator):
    """ Validates real values; ``positive=True`` excludes zero. """
    def __init__(self, minimum=None, maximum=None, positive=False):
        self.minimum = minimum
        self.maximum = maximum
        self.positive = positive

    def __call__(self, value):
        if value is None:
            return None
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValueError('Expected real value, not {!r}'.format(value))
        if math.isnan(value):
            raise ValueError('Expected real value, not NaN')
        if self.positive and not value > 0:
            raise ValueError('Expected a value > 0, not {0}'.format(value))
        if self.minimum is not None and value < self.minimum:
            raise ValueError('Expected a value >= {0}, not {1}'.format(self.minimum, value))
        if self.maximum is not None and value > self.maximum:
            raise ValueError('Expected a value <= {0}, not {1}'.format(self.maximum, value))
        return value

    def format(self, value):
        return None if value is None else repr(float(value))


class Set(Validator):
    def __init__(self, *args):
        self.membership = set(args)

    def __call__(self, value):
        if value is None:
            return None
        value = str(value).strip()
        if value not in self.membership:
            raise ValueError('Unrecognized value: {} (expected one of {})'.format(
                value, ', '.join(sorted(self.membership))))
        return value


class List(Validator):
    """ Comma separated values, each checked by an optional item validator. """
    def __init__(self, validator=None):
        self._validator = validator

    def __call__(self, value):
        if value is None:
            return None
        if isinstance(value, str):
            try:
                value = [item.strip() for item in next(csv.reader([value]))]
            except (csv.Error, StopIteration) as error:
                raise ValueError(error)
        value = list(value)
        if self._validator is None:
            return value
        converted = []
        for index, item in enumerate(value):
            try:
                converted.append(self._validator(item))
            except ValueError as error:
                raise ValueError('Could not convert item {}: {}'.format(index, error))
        return converted

    def format(self, value):
        if value is None:
            return None
        fmt = self._validator.format if self._validator is not None else str
        output = StringIO()
        csv.writer(output, lineterminator='').writerow([fmt(item) for item in value])
        return output.getvalue()


class Option(object):
    """ A named, validated setting. The attribute name becomes the key unless ``name`` is given. """
    def __init__(self, doc=None, name=None, default=None, validate=None):
        self.__doc__ = doc
        self.name = name
        self.default = default
        self.validate = validate

    def __set_name__(self, owner, name):
        if self.name is None:
            self.name = name

    def __get__(self, instance, owner):
        if instance is None:
            return self
        return instance._values.get(self.name, self.default)

    def __set__(self, instance, value):
        try:
            if self.validate is not None:
                value = self.validate(value)
        except ValueError as error:
            raise ConfigError(self.name, value, str(error))
        instance._values[self.name] = value

    def format(self, value):
        if self.validate is not None:
            return self.validate.format(value)
        return None if value is None else str(value)


class Settings(object):
    """ Base for groups of options. Keys that no option declares are rejected. """

    def __init__(self, **values):
        self._values = {}
        self.update(values)

    @classmethod
    def options(cls):
        found = {}
        for klass in reversed(cls.__mro__):
            for attr in vars(klass).values():
                if isinstance(attr, Option):
                    found[attr.name] = attr
        return found

    def update(self, values):
        options = self.options()
        for key, value in values.items():
            key = key.replace('-', '_')
            if key not in options:
                raise ConfigError(key, value, 'unknown configuration key')
            if value is None:
                continue
            setattr(self, key, value)
        return self

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in sorted(self.options()))

    def dump(self):
        lines = []
        for name, option in sorted(self.options().items()):
            value = getattr(self, name)
            if value is None:
                continue
            if option.__doc__:
                lines.append('# {}'.format(option.__doc__))
            lines.append('{}={}'.format(name, option.format(value)))
        return '\n'.join(lines) + '\n'

    def write(self, filename):
        with open(filename, 'w') as stream:
            stream.write(self.dump())


def parse_pairs(text, path=None):
    """ Parse ``key=value`` lines into an ordered dict of raw strings. """
    values = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise DataFormatError(number, 'expected key=value, found {!r}'.format(raw), path)
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise DataFormatError(number, 'empty key', path)
        if key in values:
            logger.warning('{}:{}: key {} repeated, last value wins'.format(path, number, key))
        values[key] = value.strip()
    return values


def load(settings_cls, filename=None, overrides=None):
    """ Build ``settings_cls`` from an optional file and command line overrides. """
    values = {}
    if filename is not None:
        with open(filename) as stream:
            values.update(parse_pairs(stream.read(), filename))
        logger.info('Loaded configuration from {}'.format(filename))
    if overrides:
        values.update((k, v) for k, v in overrides.items() if v is not None)
    return settings_cls(**values)


class RunSettings(Settings):
    """ Every key a ``tsp`` command reads from a config file. """

    lambda_tv = Option(doc='Total variation weight, unsupervised.', default=1.0,
                       validate=Float(positive=True))
    mu_tv = Option(doc='Total variation weight, supervised.', default=1.0,
                   validate=Float(positive=True))
    nu_cont = Option(doc='Contrastive loss weight.', default=0.01, validate=Float(positive=True))
    sigma = Option(doc='Gaussian filter width in days.', default=7.0, validate=Float(positive=True))
    learning_rate = Option(default=1e-5, validate=Float(positive=True))
    landmarks = Option(doc='Warp landmarks M; 0 means one per 30 days.', default=0,
                       validate=Integer(0))
    k = Option(doc='Prototypes for clustering; classification uses the class count.', default=32,
               validate=Integer(1))
    warp_scale = Option(doc='Maximum landmark shift in days.', default=7.0,
                        validate=Float(positive=True))
    patience = Option(default=5, validate=Integer(1))
    batch_size = Option(default=2048, validate=Integer(1))
    validation_interval = Option(doc='Optimizer steps between validations.', default=200,
                                 validate=Integer(1))
    max_steps = Option(doc='Hard cap on optimizer steps.', default=20000, validate=Integer(1))
    cont_normalized = Option(doc='Divide contrastive distances by T*C.', default=False,
                             validate=Boolean())
    filters = Option(default=[128, 256, 128], validate=List(Integer(1)))
    kernels = Option(default=[8, 5, 3], validate=List(Integer(1)))
    bn_momentum = Option(default=0.9, validate=Float(0.0, 1.0))
    kmeans_iters = Option(default=100, validate=Integer(1))
    kmeans_batch_size = Option(doc='0 runs full-batch K-means.', default=0, validate=Integer(0))
    threads = Option(default=1, validate=Integer(1))
    gap_fill = Option(default='gaussian', validate=Set('none', 'previous', 'movavg', 'gaussian'))
    input_filtering = Option(default=True, validate=Boolean())
    cloud_band = Option(doc='Channel whose bright values mark a cloudy stamp; unset disables it.',
                        validate=Integer(0))
    cloud_threshold = Option(doc='Stamps with cloud_band above this are dropped.',
                             validate=Float())
    normalize = Option(default=True, validate=Boolean())
    dtw_band = Option(doc='Sakoe-Chiba half width; 0 disables the band.', default=0,
                      validate=Integer(0))
    seed = Option(default=0, validate=Integer(0))
    seeds = Option(doc='Seeds trained one after the other; unset uses seed.',
                   validate=List(Integer(0)))
    mode = Option(doc='sup trains a classifier, unsup a clustering.', default='sup',
                  validate=Set('sup', 'unsup'))
    train_fraction = Option(doc='Random share of the train split used for training.', default=1.0,
                            validate=Float(maximum=1.0, positive=True))
    per_cluster = Option(doc='Annotated series per cluster for labeling; 0 uses every label.',
                         default=0, validate=Integer(0))
    selection = Option(default='closest', validate=Set('closest', 'random'))
    baseline = Option(default='ncc', validate=Set('ncc', '1nn', '1nn-dtw', 'kmeans'))
    train_subsample = Option(doc='Random share of the train split per baseline run.', default=1.0,
                             validate=Float(maximum=1.0, positive=True))
    runs = Option(default=1, validate=Integer(1))
    k_true = Option(doc='Classes of a synthetic benchmark.', default=4, validate=Integer(2))
    n_train = Option(doc='Synthetic train series.', default=4000, validate=Integer(1))
    n_test = Option(doc='Synthetic test series; 0 means a quarter of n_train.', default=0,
                    validate=Integer(0))
    length = Option(doc='Stamps per generated series (synth, warp-demo).', default=180,
                    validate=Integer(2))
    channels = Option(default=4, validate=Integer(1))
    shift_range = Option(doc='Largest synthetic time shift in days.', default=7.0,
                         validate=Float(0.0))
    offset_range = Option(default=0.3, validate=Float(0.0))
    noise_sd = Option(default=0.05, validate=Float(0.0))
    missing_rate = Option(doc='Chance that a synthetic stamp is dropped.', default=0.0,
                          validate=Float(0.0, 1.0))
    test_shift_bias = Option(doc='Extra shift in days added to every synthetic test series.',
                             default=0.0, validate=Float())
