class TsprotoError(ValueError):
    pass


class TsprotoWarning(UserWarning):
    pass


class DataFormatError(TsprotoError):
    _ERROR_MESSAGE = 'Malformed file'

    def __init__(self, line, message=_ERROR_MESSAGE, path=None):
        super(DataFormatError, self).__init__(line, message)
        self.line = line
        self.message = message
        # Whatever reads the file can fill in the path.
        self.path = path

    def __str__(self):
        where = self.path if self.path is not None else '<stream>'
        if self.line is None:
            return '%s: %s' % (where, self.message)
        return '%s:%s: %s' % (where, self.line, self.message)


class ValidationError(TsprotoError):
    def __init__(self, violations):
        super(ValidationError, self).__init__(violations)
        self.violations = list(violations)

    def __str__(self):
        shown = self.violations[:5]
        more = len(self.violations) - len(shown)
        text = '; '.join(shown)
        if more > 0:
            text += ' (and %s more)' % more
        return 'Invalid dataset: %s' % text


class ShapeError(TsprotoError):
    def __init__(self, what, expected, actual):
        super(ShapeError, self).__init__(what, expected, actual)
        self.what = what
        self.expected = expected
        self.actual = actual

    def __str__(self):
        return 'Shape mismatch for %s: expected %s, received %s' % (
            self.what, self.expected, self.actual)


class EmptyInputError(TsprotoError):
    def __init__(self, what):
        super(EmptyInputError, self).__init__(what)
        self.what = what

    def __str__(self):
        return 'Empty input: %s' % self.what


class LabelError(TsprotoError):
    def __init__(self, label, n_classes):
        super(LabelError, self).__init__(label, n_classes)
        self.label = label
        self.n_classes = n_classes

    def __str__(self):
        if self.label is None:
            return 'Labels are required but the dataset is unlabeled'
        return 'Label %s out of range, expected one of 1..%s' % (
            self.label, self.n_classes)


class NonScalarLossError(TsprotoError):
    def __init__(self, shape):
        super(NonScalarLossError, self).__init__(shape)
        self.shape = shape

    def __str__(self):
        return 'backward() requires a scalar loss, received shape %s' % (
            self.shape,)


class DivergenceError(TsprotoError):
    def __init__(self, step, stage, value):
        super(DivergenceError, self).__init__(step, stage, value)
        self.step = step
        self.stage = stage
        self.value = value

    def __str__(self):
        return ('Training diverged at step %s (stage %s): loss is %s. '
                'Try a lower learning_rate.' % (self.step, self.stage,
                                                 self.value))


class ConfigError(TsprotoError):
    def __init__(self, key, value, reason):
        super(ConfigError, self).__init__(key, value, reason)
        self.key = key
        self.value = value
        self.reason = reason

    def __str__(self):
        return 'Invalid value for %s: %r (%s)' % (self.key, self.value,
                                                   self.reason)


class UsageError(TsprotoError):
    pass
