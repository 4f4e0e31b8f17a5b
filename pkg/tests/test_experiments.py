from dataclasses import replace

import numpy as np
import pytest

from memlab.attacks import AttackConfig
from memlab.data import ToySpec, generate_toy
from memlab.evaluation import evaluate
from memlab.experiments import (SWEEP_COLUMNS, ForgettingRecord, beta_sweep, forgetting_csv,
                                forgetting_experiment, sweep_csv, with_betas)
from memlab.losses import LossConfig
from memlab.seeding import stream
from memlab.train import TrainConfig, train

QUICK_EVAL = AttackConfig(eps=0.1, alpha=0.05, steps=3, init="uniform", name="pgd20")


def toy(n=30, seed=0, **kw):
    spec = ToySpec(n_per_class=n, seed=seed, **kw)
    return (generate_toy(spec, "train", stream(seed, "data_train")),
            generate_toy(spec, "test", stream(seed, "data_test")))


def test_record_drop():
    r = ForgettingRecord(5, 0.9, 0.75)
    assert r.drop == pytest.approx(0.15)


def test_zero_lr_gives_zero_drops():
    tr, te = toy()
    cfg = TrainConfig(epochs=4, lr_max=0.0, early_stop_attack=QUICK_EVAL,
                      loss=LossConfig("AT", 0.0))
    runs = forgetting_experiment({"AT": cfg}, tr, te, keep_epochs=(3, 4))
    recs = runs["AT"].records
    assert [r.epoch for r in recs] == [2, 3, 4]
    assert all(r.drop == 0.0 for r in recs)
    assert runs["AT"].mean_drop() == 0.0
    assert set(runs["AT"].snapshots) == {3, 4}
    lines = forgetting_csv(runs).splitlines()
    assert lines[0] == "method,epoch,acc_on_prev_adv_before,acc_on_prev_adv_after,drop"
    assert len(lines) == 4


def test_records_follow_definition():
    tr, te = toy()
    cfg = TrainConfig(epochs=3, early_stop_attack=QUICK_EVAL, loss=LossConfig("AT", 0.0))
    run = forgetting_experiment({"AT": cfg}, tr, te, keep_epochs=(1, 2, 3))["AT"]
    from memlab import nn
    for rec in run.records:
        prev_net, prev_adv = run.snapshots[rec.epoch - 1]
        cur_net, _ = run.snapshots[rec.epoch]
        assert rec.acc_on_prev_adv_before == np.mean(nn.predict(prev_net, prev_adv) == tr.labels)
        assert rec.acc_on_prev_adv_after == np.mean(nn.predict(cur_net, prev_adv) == tr.labels)


def test_single_point_sweep_matches_standalone():
    tr, te = toy()
    base = TrainConfig(epochs=3, early_stop_attack=QUICK_EVAL, loss=LossConfig("MemLossV1", 1.0, [1.0], 1))
    rows = beta_sweep(base, [2.0], [0.5], tr, te)
    _, best = train(tr, te, with_betas(base, 2.0, 0.5))
    rep = evaluate(best, te, [QUICK_EVAL], seed=0)
    assert rows == [{"beta": 2.0, "beta_mem": 0.5, "clean": rep.clean_acc, "robust": rep.robust_acc["pgd20"]}]
    assert sweep_csv(rows).splitlines()[0] == ",".join(SWEEP_COLUMNS)
    with pytest.raises(ValueError):
        beta_sweep(base, [], [0.0], tr, te)


def test_degenerate_sweep_point_pinned():
    # beta = beta_mem = 0 reduces to natural training. On this well-separated toy an
    # eps = 0.1 attack moves few points across the boundary, so robust accuracy stays high.
    spec = ToySpec()
    tr = generate_toy(spec, "train", stream(0, "data_train"))
    te = generate_toy(spec, "test", stream(0, "data_test"))
    rows = beta_sweep(TrainConfig(epochs=30, loss=LossConfig("MemLossV1", 5.0, [0.0], 1)),
                      [0.0], [0.0], tr, te)
    assert rows[0]["clean"] == pytest.approx(0.983, abs=1e-9)
    assert rows[0]["robust"] == pytest.approx(0.977, abs=1e-9)
