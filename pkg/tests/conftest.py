import numpy as np
import pytest

from memlab import nn
from memlab.data import Dataset


def flat_params(net):
    return np.concatenate([p.ravel() for p in net.params()])


def set_flat_params(net, flat):
    off = 0
    for p in net.params():
        p[...] = flat[off:off + p.size].reshape(p.shape)
        off += p.size
    net.touch()


def central_diff(f, x0, h=1e-6):
    """Central finite differences of scalar f at flat vector x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))


@pytest.fixture
def tiny_net():
    return nn.init_network([2, 4, 2], seed=7)


@pytest.fixture
def ten_samples():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 2)) * 0.3 + np.repeat([[-0.3, 0.0], [0.3, 0.0]], 5, axis=0)
    return Dataset(x, np.repeat([0, 1], 5))


@pytest.fixture(scope="session")
def natural_toy():
    """A Standard-loss model trained on the default toy data, with its training set."""
    from memlab.data import ToySpec, generate_toy
    from memlab.losses import LossConfig
    from memlab.seeding import stream
    from memlab.train import TrainConfig, train

    spec = ToySpec()
    tr = generate_toy(spec, "train", stream(0, "data_train"))
    te = generate_toy(spec, "test", stream(0, "data_test"))
    cfg = TrainConfig(epochs=20, loss=LossConfig("Standard", beta=0.0))
    state, _ = train(tr, te, cfg)
    return state.net, tr


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
