import math
from dataclasses import replace

import numpy as np
import pytest

from memlab import memory as mb
from memlab import nn
from memlab.attacks import AttackConfig
from memlab.data import Dataset, ToySpec, generate_toy
from memlab.losses import LossConfig, ce_rows
from memlab.seeding import stream
from memlab.train import (TrainConfig, TrainConfigError, TrainingAborted, lr_at, metrics_csv,
                          new_state, sgd_step, train)
from conftest import central_diff, flat_params, set_flat_params

QUICK_EVAL = AttackConfig(eps=0.1, alpha=0.05, steps=3, init="uniform", name="pgd20")


def small_toy(n=20, seed=0):
    spec = ToySpec(n_per_class=n, seed=seed)
    return (generate_toy(spec, "train", stream(seed, "data_train")),
            generate_toy(spec, "test", stream(seed, "data_test")))


def test_config_validation():
    with pytest.raises(TrainConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(TrainConfigError):
        TrainConfig(warmup_frac=1.0)
    with pytest.raises(TrainConfigError):
        TrainConfig(schedule="Step")


def test_lr_schedule():
    cfg = TrainConfig(lr_max=0.2, schedule="OneCycleCosine", warmup_frac=0.3)
    assert lr_at(cfg, 0, 100) == 0.0
    assert lr_at(cfg, 15, 100) == pytest.approx(0.1, abs=1e-15)
    assert lr_at(cfg, 30, 100) == 0.2
    assert lr_at(cfg, 99, 100) <= 1e-8 * 0.2
    assert lr_at(cfg, 60, 100) == pytest.approx(0.1 * (1 + math.cos(math.pi * 30 / 69)), abs=1e-15)
    assert lr_at(replace(cfg, schedule="Constant"), 77, 100) == 0.2
    with pytest.raises(ValueError):
        lr_at(cfg, 100, 100)


def test_sgd_plain_and_zero_grad():
    net = nn.init_network([2, 3, 2], seed=0)
    before = [p.copy() for p in net.params()]
    g = nn.ParamGrads([np.ones_like(w) for w in net.weights], [np.ones_like(b) for b in net.biases])
    sgd_step(new_state(net), g, 0.1, TrainConfig(momentum=0.0, weight_decay=0.0))
    for a, b in zip(before, net.params()):
        assert np.array_equal(b, a - 0.1)
    net = nn.init_network([2, 3, 2], seed=0)
    sgd_step(new_state(net), nn.ParamGrads.zeros_like(net), 0.1, TrainConfig(weight_decay=0.0))
    for a, b in zip(before, net.params()):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("nesterov", [False, True])
def test_two_momentum_steps(nesterov):
    mu, wd, lr = 0.9, 0.01, 0.05
    cfg = TrainConfig(momentum=mu, weight_decay=wd, nesterov=nesterov)
    net = nn.init_network([2, 2, 2], seed=3)
    state = new_state(net)
    theta0 = flat_params(net)
    rng = np.random.default_rng(0)
    g1, g2 = rng.normal(size=theta0.size), rng.normal(size=theta0.size)

    def as_grads(flat):
        tmp = net.copy()
        set_flat_params(tmp, flat)
        return nn.ParamGrads(tmp.weights, tmp.biases)

    sgd_step(state, as_grads(g1), lr, cfg)
    sgd_step(state, as_grads(g2), lr, cfg)

    d1 = g1 + wd * theta0
    v1 = d1
    t1 = theta0 - lr * ((d1 + mu * v1) if nesterov else v1)
    d2 = g2 + wd * t1
    v2 = mu * v1 + d2
    t2 = t1 - lr * ((d2 + mu * v2) if nesterov else v2)
    assert np.allclose(flat_params(net), t2, rtol=0, atol=1e-15)


def test_single_batch_step_matches_hand_computation():
    x = np.array([[0.5, -0.2], [-0.3, 0.8], [1.0, 0.1], [-0.7, -0.4]])
    y = np.array([0, 1, 1, 0])
    ds = Dataset(x, y)
    net = nn.init_network([2, 2, 2], seed=stream(0, "init"))
    net.biases[0][:] = [0.3, 0.2]  # keep both hidden units active
    theta0 = flat_params(net)
    cfg = TrainConfig(epochs=1, batch_size=4, lr_max=0.1, momentum=0.9, weight_decay=0.01,
                      hidden=[2], loss=LossConfig("Standard", beta=0.0), early_stop_attack=QUICK_EVAL)

    def loss(t):
        m = net.copy()
        set_flat_params(m, t)
        return float(np.mean(ce_rows(nn.forward(m, x)[0], y)))

    g = central_diff(loss, theta0)
    expected = theta0 - 0.1 * (g + 0.01 * theta0)
    state, _ = train(ds, ds, cfg, net=net.copy())
    assert np.allclose(flat_params(state.net), expected, rtol=0, atol=1e-9)


def test_nan_loss_aborts():
    x = np.array([[0.0, 0.0], [np.nan, 1.0]])
    ds = Dataset(x, [0, 1])
    cfg = TrainConfig(epochs=1, batch_size=2, loss=LossConfig("Standard", 0.0))
    with pytest.raises(TrainingAborted) as info:
        train(ds, ds, cfg)
    assert info.value.epoch == 1 and info.value.batch == 0


def test_early_stopping_and_determinism(tmp_path):
    tr, te = small_toy()
    cfg = TrainConfig(epochs=4, early_stop_attack=QUICK_EVAL,
                      loss=LossConfig("MemLossV1", 5.0, [2.0], 1))
    s1, best1 = train(tr, te, cfg, out_dir=tmp_path / "a")
    s2, best2 = train(tr, te, cfg, out_dir=tmp_path / "b")
    series = [r["robust_acc_pgd20"] for r in s1.history]
    assert s1.best_robust == max(series)
    assert s1.best_epoch == series.index(max(series)) + 1
    assert nn.network_to_bytes(best1) == nn.network_to_bytes(best2)
    assert metrics_csv(s1.history) == metrics_csv(s2.history)
    for name in ["best.ckpt", "memory.bank", "metrics.csv"] + [f"epoch_{n}.ckpt" for n in range(1, 5)]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,lr,loss_total,loss_ce,loss_kl,loss_mem,clean_acc,robust_acc_pgd20"
    assert nn.network_to_bytes(nn.load_network(tmp_path / "a" / "best.ckpt")) == nn.network_to_bytes(best1)


def test_memory_slot_holds_previous_epoch_examples():
    tr, te = small_toy(5)
    cfg = TrainConfig(epochs=3, batch_size=4, early_stop_attack=QUICK_EVAL,
                      loss=LossConfig("MemLossV1", 5.0, [2.0], 1))
    seen = []

    def cb(epoch, state, adv):
        seen.append(adv.copy())

    starts = []
    orig_fetch = mb.fetch

    def spy(bank, ids):
        starts.append(bank.slots[:, -1].copy())
        return orig_fetch(bank, ids)

    mb.fetch = spy
    try:
        train(tr, te, cfg, callback=cb)
    finally:
        mb.fetch = orig_fetch
    per_epoch = len(starts) // 3
    assert np.array_equal(starts[0], tr.inputs)
    for n in (2, 3):
        assert np.array_equal(starts[(n - 1) * per_epoch], seen[n - 2])


def test_zero_lr_keeps_parameters():
    tr, te = small_toy()
    net = nn.init_network([2, 20, 20, 2], seed=stream(0, "init"))
    cfg = TrainConfig(epochs=2, lr_max=0.0, early_stop_attack=QUICK_EVAL)
    state, _ = train(tr, te, cfg)
    for a, b in zip(net.params(), state.net.params()):
        assert np.array_equal(a, b)
