"""Toy-scale experiments: epoch-to-epoch forgetting and the beta trade-off sweep."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from memlab import nn
from memlab.data import Dataset
from memlab.evaluation import evaluate
from memlab.train import TrainConfig, train


@dataclass
class ForgettingRecord:
    """Accuracy on the previous epoch's adversarial examples, before and after epoch ``epoch``."""

    epoch: int
    acc_on_prev_adv_before: float
    acc_on_prev_adv_after: float

    @property
    def drop(self) -> float:
        return self.acc_on_prev_adv_before - self.acc_on_prev_adv_after


@dataclass
class ForgettingRun:
    records: list = field(default_factory=list)
    # epoch -> (network after that epoch, adversarial examples generated during it)
    snapshots: dict = field(default_factory=dict)
    best_net: nn.Network | None = None
    history: list = field(default_factory=list)

    def mean_drop(self, last: int = 10) -> float:
        tail = self.records[-last:]
        return float(np.mean([r.drop for r in tail])) if tail else 0.0


class ForgettingTracker:
    """Training callback that scores model n and model n-1 on epoch n-1's adversarial examples."""

    def __init__(self, train_ds: Dataset, keep_epochs=()):
        self.ds = train_ds
        self.keep = set(keep_epochs)
        self.run = ForgettingRun()
        self._prev = None  # (net after epoch n-1, adversarial examples of epoch n-1)

    def __call__(self, epoch, state, adv_epoch):
        net = state.net.copy()
        if self._prev is not None:
            prev_net, prev_adv = self._prev
            before = float(np.mean(nn.predict(prev_net, prev_adv) == self.ds.labels))
            after = float(np.mean(nn.predict(net, prev_adv) == self.ds.labels))
            self.run.records.append(ForgettingRecord(epoch, before, after))
        self._prev = (net, adv_epoch.copy())
        if epoch in self.keep:
            self.run.snapshots[epoch] = self._prev


def forgetting_experiment(cfgs: dict, train_ds: Dataset, test_ds: Dataset, keep_epochs=()):
    """Train each named config with a forgetting tracker; returns ``{name: ForgettingRun}``."""
    out = {}
    for name, cfg in cfgs.items():
        tracker = ForgettingTracker(train_ds, keep_epochs)
        state, best = train(train_ds, test_ds, cfg, callback=tracker)
        tracker.run.best_net = best
        tracker.run.history = state.history
        out[name] = tracker.run
    return out


def forgetting_csv(runs: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "epoch", "acc_on_prev_adv_before", "acc_on_prev_adv_after", "drop"])
    for name, run in runs.items():
        for r in run.records:
            w.writerow([name, r.epoch, repr(r.acc_on_prev_adv_before),
                        repr(r.acc_on_prev_adv_after), repr(r.drop)])
    return buf.getvalue()


SWEEP_COLUMNS = ("beta", "beta_mem", "clean", "robust")


def with_betas(cfg: TrainConfig, beta: float, beta_mem: float) -> TrainConfig:
    loss = replace(cfg.loss, beta=float(beta),
                   beta_mem=[float(beta_mem)] * cfg.loss.K)
    return replace(cfg, loss=loss)


def beta_sweep(base_cfg: TrainConfig, beta_values, beta_mem_values, train_ds, test_ds,
               eval_attacks=None):
    """Train and evaluate one model per ``(beta, beta_mem)`` grid point.

    Each row reports clean and robust test accuracy of the early-stopped model
    under ``eval_attacks[0]`` (default: the config's early-stopping attack).
    Memory-free methods ignore ``beta_mem``.
    """
    beta_values, beta_mem_values = list(beta_values), list(beta_mem_values)
    if not beta_values or not beta_mem_values:
        raise ValueError("beta sweep needs non-empty grids")
    attack = (eval_attacks or [base_cfg.early_stop_attack])[0]
    rows = []
    for beta in beta_values:
        for beta_mem in beta_mem_values:
            cfg = with_betas(base_cfg, beta, beta_mem)
            _, best = train(train_ds, test_ds, cfg)
            rep = evaluate(best, test_ds, [attack], seed=cfg.seed)
            rows.append({"beta": float(beta), "beta_mem": float(beta_mem),
                         "clean": rep.clean_acc, "robust": rep.robust_acc[attack.name]})
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([repr(float(r[c])) for c in SWEEP_COLUMNS])
    return buf.getvalue()
