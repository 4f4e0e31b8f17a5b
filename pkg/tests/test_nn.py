import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memlab import nn
from conftest import central_diff, flat_params, rel_err, set_flat_params


def hand_forward(W0, b0, W1, b1, x):
    # straight-line reference: one hidden ReLU layer and a softmax
    h = [max(0.0, sum(x[i] * W0[i][j] for i in range(len(x))) + b0[j]) for j in range(len(b0))]
    z = [sum(h[j] * W1[j][c] for j in range(len(h))) + b1[c] for c in range(len(b1))]
    m = max(z)
    e = [np.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def test_zero_net_gives_half():
    net = nn.Network([np.zeros((3, 2))], [np.zeros(2)], ["identity"])
    probs, _ = nn.forward(net, np.random.default_rng(0).normal(size=(5, 3)))
    assert np.all(probs == 0.5)


def test_zero_logits_uniform():
    net = nn.Network([np.zeros((2, 5))], [np.zeros(5)], ["identity"])
    probs, _ = nn.forward(net, [[1.0, 2.0]])
    assert np.allclose(probs, 0.2, atol=1e-15)


def test_forward_matches_hand_rolled():
    net = nn.init_network([2, 4, 2], seed=11)
    net.biases[0][:] = [0.1, -0.2, 0.05, 0.0]
    net.biases[1][:] = [0.03, -0.01]
    x = [0.3, -0.1]
    probs, _ = nn.forward(net, [x])
    ref = hand_forward(net.weights[0].tolist(), net.biases[0].tolist(),
                       net.weights[1].tolist(), net.biases[1].tolist(), x)
    assert np.allclose(probs[0], ref, rtol=0, atol=1e-14)


def test_forward_shape_error(tiny_net):
    with pytest.raises(nn.ShapeError):
        nn.forward(tiny_net, np.zeros((3, 5)))


def test_forward_deterministic(tiny_net):
    x = np.random.default_rng(1).normal(size=(8, 2))
    a, _ = nn.forward(tiny_net, x)
    b, _ = nn.forward(tiny_net, x)
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 40.0))
def test_softmax_rows_normalised(seed, scale):
    rng = np.random.default_rng(seed)
    net = nn.init_network([3, 5, 4], seed=seed)
    probs, trace = nn.forward(net, scale * rng.normal(size=(6, 3)))
    assert np.all(np.isfinite(probs))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(trace.logits) <= 50)


def test_zero_grad_out_gives_zero_grads(tiny_net):
    _, trace = nn.forward(tiny_net, np.ones((3, 2)))
    pg, gx = nn.backward(tiny_net, trace, np.zeros((3, 2)))
    assert all(np.all(a == 0) for a in pg.arrays())
    assert np.all(gx == 0)


def test_linear_layer_grads_by_hand():
    # L = 0.5 * ||z - t||^2 with z = x W + b, so dL/dz = z - t = delta
    W = np.array([[0.5, -1.0], [2.0, 0.25]])
    b = np.array([0.1, -0.3])
    net = nn.Network([W.copy()], [b.copy()], ["identity"])
    x = np.array([[1.5, -2.0]])
    t = np.array([[0.0, 1.0]])
    _, trace = nn.forward(net, x)
    delta = trace.logits - t
    pg, gx = nn.backward(net, trace, delta)
    assert np.allclose(pg.weights[0], x.T @ delta, atol=1e-15)
    assert np.allclose(pg.biases[0], delta[0], atol=1e-15)
    assert np.allclose(gx, delta @ W.T, atol=1e-15)


def test_linear_net_input_grad_is_weight():
    w = np.array([[0.7], [-1.2], [3.0]])
    net = nn.Network([np.hstack([w, np.zeros((3, 1))])], [np.zeros(2)], ["identity"])
    _, trace = nn.forward(net, [[0.1, 0.2, 0.3]])
    gx = nn.backward_inputs(net, trace, np.array([[1.0, 0.0]]))
    assert np.array_equal(gx[0], w[:, 0])


@pytest.mark.parametrize("seed", range(5))
def test_param_and_input_grads_match_fd(seed):
    rng = np.random.default_rng(seed)
    net = nn.init_network([3, 6, 5, 3], seed=seed)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    x = rng.normal(size=(4, 3))
    r = rng.normal(size=(4, 3))  # L = sum(r * logits)

    _, trace = nn.forward(net, x)
    pg, gx = nn.backward(net, trace, r)
    theta = flat_params(net)

    def f_theta(t):
        m = net.copy()
        set_flat_params(m, t)
        return float(np.sum(r * nn.logits(m, x)))

    def f_x(v):
        return float(np.sum(r * nn.logits(net, v.reshape(x.shape))))

    assert rel_err(pg.flat(), central_diff(f_theta, theta)) < 1e-6
    assert rel_err(gx, central_diff(f_x, x.ravel()).reshape(x.shape)) < 1e-6


def test_two_class_softmax_ce_equals_sigmoid_bce():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(20, 2)) * 3
    y = rng.integers(0, 2, 20)
    p = nn.softmax(z)
    ce = -np.log(p[np.arange(20), y])
    s = 1 / (1 + np.exp(-(z[:, 1] - z[:, 0])))
    bce = -(y * np.log(s) + (1 - y) * np.log(1 - s))
    assert np.allclose(ce, bce, atol=1e-12)


def test_stale_trace_rejected(tiny_net):
    _, trace = nn.forward(tiny_net, np.ones((1, 2)))
    nn.backward(tiny_net, trace, np.ones((1, 2)))
    with pytest.raises(nn.StaleTraceError):
        nn.backward(tiny_net, trace, np.ones((1, 2)))
    _, trace = nn.forward(tiny_net, np.ones((1, 2)))
    tiny_net.touch()
    with pytest.raises(nn.StaleTraceError):
        nn.backward(tiny_net, trace, np.ones((1, 2)))
    other = tiny_net.copy()
    _, trace = nn.forward(other, np.ones((1, 2)))
    with pytest.raises(nn.StaleTraceError):
        nn.backward(tiny_net, trace, np.ones((1, 2)))


def test_predict_ties_and_rows():
    net = nn.Network([np.zeros((2, 2))], [np.array([np.log(0.9), np.log(0.1)])], ["identity"])
    assert nn.predict(net, [[0.0, 0.0]])[0] == 0
    tie = nn.Network([np.zeros((2, 3))], [np.zeros(3)], ["identity"])
    assert nn.predict(tie, [[1.0, 1.0]])[0] == 0

    net = nn.init_network([2, 3, 3], seed=5)
    x = np.random.default_rng(2).normal(size=(3, 2))
    probs, _ = nn.forward(net, x)
    labels = nn.predict(net, x)
    assert labels.shape == (3,)
    for row, lab in zip(probs, labels):
        best = 0
        for c in range(len(row)):
            if row[c] > row[best]:
                best = c
        assert lab == best


def test_checkpoint_round_trip(tmp_path):
    net = nn.init_network([2, 7, 3, 4], seed=9)
    net.biases[1][:] = [1e-300, -0.0, np.pi]
    path = tmp_path / "n.ckpt"
    nn.save_network(net, path)
    back = nn.load_network(path)
    assert back.activations == net.activations
    for a, b in zip(net.params(), back.params()):
        assert a.tobytes() == b.tobytes()
    assert nn.network_to_bytes(back) == path.read_bytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        nn.network_from_bytes(b"not a checkpoint")
    blob = nn.network_to_bytes(nn.init_network([2, 2], seed=0))
    with pytest.raises(ValueError):
        nn.network_from_bytes(blob[:-8])


def test_network_validation():
    with pytest.raises(nn.ShapeError):
        nn.Network([np.zeros((2, 3)), np.zeros((4, 2))], [np.zeros(3), np.zeros(2)],
                   ["relu", "identity"])
