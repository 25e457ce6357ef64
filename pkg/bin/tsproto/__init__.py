__version__ = '0.1.0'


def load(path, split=None):
    """ Read a dataset file (text or binary). """
    from tsproto.io import read_dataset
    return read_dataset(path, split)


def fit(train, val, mode='sup', hyper=None, seed=0):
    """ Initialize and train a run on prepared ``train`` and ``val`` datasets. """
    from tsproto.core import HyperParams
    from tsproto.train import init_run, train_curriculum
    hyper = hyper or HyperParams()
    return train_curriculum(init_run(train, mode, hyper, seed), train, val)


def predict(run, dataset):
    from tsproto.train import predict as _predict
    return _predict(run, dataset)
