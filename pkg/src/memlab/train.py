"""Adversarial training with a memory of previous adversarial examples.

Per mini-batch: craft adversarial examples with PGD from a small Gaussian start,
read the batch's memory slots, evaluate the configured loss and take one SGD
step. At the end of the epoch the epoch's adversarial examples are pushed into
the memory bank, the model is scored on the test split with the early-stopping
attack, and the best-scoring snapshot is kept.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from memlab import memory as membank
from memlab import nn
from memlab.attacks import AttackConfig, pgd_attack
from memlab.data import Dataset, batch_iter
from memlab.evaluation import evaluate
from memlab.losses import LossConfig, loss_and_grads
from memlab.seeding import stream

SCHEDULES = ("OneCycleCosine", "Constant")
METRIC_COLUMNS = ("epoch", "lr", "loss_total", "loss_ce", "loss_kl", "loss_mem",
                  "clean_acc", "robust_acc_pgd20")


class TrainConfigError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    def __init__(self, epoch, batch, components):
        self.epoch, self.batch, self.components = epoch, batch, components
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {components}")


def _default_train_attack():
    return AttackConfig(norm="Linf", eps=0.1, alpha=0.025, steps=10, objective="KLFromClean",
                        init="normal", init_noise_std=0.001, name="train")


def _default_eval_attack():
    return AttackConfig(norm="Linf", eps=0.1, alpha=0.025, steps=20, objective="CE",
                        init="uniform", name="pgd20")


@dataclass
class TrainConfig:
    epochs: int = 120
    batch_size: int = 32
    lr_max: float = 0.005
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 5e-4
    schedule: str = "Constant"
    warmup_frac: float = 0.3
    seed: int = 0
    hidden: list = field(default_factory=lambda: [20, 20])
    loss: LossConfig = field(default_factory=LossConfig)
    train_attack: AttackConfig = field(default_factory=_default_train_attack)
    early_stop_attack: AttackConfig = field(default_factory=_default_eval_attack)

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainConfigError("train.epochs: must be >= 1")
        if self.batch_size < 1:
            raise TrainConfigError("train.batch_size: must be >= 1")
        if not self.lr_max >= 0:
            raise TrainConfigError("train.lr_max: must be >= 0")
        if not 0 <= self.warmup_frac < 1:
            raise TrainConfigError("train.warmup_frac: must lie in [0, 1)")
        if self.schedule not in SCHEDULES:
            raise TrainConfigError(f"train.schedule: expected one of {SCHEDULES}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise TrainConfigError("train.momentum / train.weight_decay: must be >= 0")


@dataclass
class TrainState:
    net: nn.Network
    velocity: list
    memory: membank.MemoryBank | None = None
    epoch: int = 0
    step: int = 0
    best_net: nn.Network | None = None
    best_robust: float = -math.inf
    best_epoch: int = 0
    history: list = field(default_factory=list)


def lr_at(cfg: TrainConfig, step_index: int, total_steps: int) -> float:
    """Learning rate for optimizer step ``step_index`` of ``total_steps``.

    One-cycle: linear ramp from 0 to ``lr_max`` over the first
    ``int(warmup_frac * total_steps)`` steps, then half-cosine down to 0 at the
    final step.
    """
    if not 0 <= step_index < total_steps:
        raise ValueError(f"step {step_index} outside [0, {total_steps})")
    if cfg.schedule == "Constant":
        return cfg.lr_max
    warm = int(cfg.warmup_frac * total_steps)
    if step_index < warm:
        return cfg.lr_max * step_index / warm
    span = total_steps - 1 - warm
    if span <= 0:
        return cfg.lr_max
    return cfg.lr_max * 0.5 * (1.0 + math.cos(math.pi * (step_index - warm) / span))


def sgd_step(state: TrainState, grads: nn.ParamGrads, lr: float, cfg: TrainConfig) -> None:
    """SGD with L2 weight decay folded into the gradient and (Nesterov) momentum."""
    params = state.net.params()
    garrs = grads.arrays()
    if len(garrs) != len(params):
        raise nn.ShapeError("gradient list does not match parameters")
    mu, wd = cfg.momentum, cfg.weight_decay
    for p, g, v in zip(params, garrs, state.velocity):
        if g.shape != p.shape:
            raise nn.ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        g = g + wd * p
        v *= mu
        v += g
        if cfg.nesterov:
            p -= lr * (g + mu * v)
        else:
            p -= lr * v
    state.net.touch()


def new_state(net: nn.Network) -> TrainState:
    return TrainState(net=net, velocity=[np.zeros_like(p) for p in net.params()])


def _empty_bank(ds: Dataset) -> membank.MemoryBank:
    return membank.MemoryBank(ds.ids, np.zeros((len(ds), 0, ds.dim)), np.zeros((len(ds), 0)))


def metrics_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in history:
        w.writerow([row["epoch"]] + [repr(float(row[c])) for c in METRIC_COLUMNS[1:]])
    return buf.getvalue()


def train(train_ds: Dataset, test_ds: Dataset, cfg: TrainConfig, net: nn.Network | None = None,
          out_dir=None, callback=None):
    """Run the full training loop and return ``(final_state, best_network)``.

    ``callback(epoch, state, adv_epoch)`` is called after every epoch with the
    adversarial examples generated during that epoch, in dataset row order.
    When ``out_dir`` is given the run writes ``epoch_{n}.ckpt``, ``best.ckpt``,
    ``memory.bank`` and ``metrics.csv`` there.
    """
    if net is None:
        sizes = [train_ds.dim, *cfg.hidden, train_ds.n_classes]
        net = nn.init_network(sizes, seed=stream(cfg.seed, "init"))
    state = new_state(net)
    if cfg.loss.uses_memory:
        state.memory = membank.init_clean(train_ds, cfg.loss.K)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    n_batches = math.ceil(len(train_ds) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    attack_rng = stream(cfg.seed, "attack_train")
    row_of = {int(i): r for r, i in enumerate(train_ds.ids)}

    for epoch in range(1, cfg.epochs + 1):
        state.epoch = epoch
        adv_epoch = train_ds.inputs.copy()
        sums = {"loss_total": 0.0, "loss_ce": 0.0, "loss_kl": 0.0, "loss_mem": 0.0}
        lr = cfg.lr_max
        for b, (ids, xb, yb) in enumerate(batch_iter(train_ds, cfg.batch_size, cfg.seed, epoch)):
            lr = lr_at(cfg, state.step, total_steps)
            if cfg.loss.needs_adversarial:
                x_adv = pgd_attack(state.net, xb, yb, cfg.train_attack, attack_rng)
            else:
                x_adv = xb.copy()
            mem_rows = membank.fetch(state.memory, ids) if state.memory is not None else None
            value, grads = loss_and_grads(state.net, xb, yb, x_adv, mem_rows, cfg.loss)
            if not math.isfinite(value.total):
                raise TrainingAborted(epoch, b, value.components)
            sgd_step(state, grads.params, lr, cfg)
            state.step += 1

            adv_epoch[[row_of[int(i)] for i in ids]] = x_adv
            m = len(yb)
            sums["loss_total"] += m * value.total
            sums["loss_ce"] += m * value.components.get("ce", 0.0)
            sums["loss_kl"] += m * value.components.get("robust_kl", 0.0)
            sums["loss_mem"] += m * value.mem_total

        if state.memory is not None:
            membank.push(state.memory, train_ds.ids, adv_epoch, epoch)

        report = evaluate(state.net, test_ds, [cfg.early_stop_attack], seed=cfg.seed)
        robust = report.robust_acc[cfg.early_stop_attack.name]
        row = {"epoch": epoch, "lr": lr, "clean_acc": report.clean_acc, "robust_acc_pgd20": robust}
        row.update({k: v / len(train_ds) for k, v in sums.items()})
        state.history.append(row)
        if robust > state.best_robust:
            state.best_robust, state.best_epoch = robust, epoch
            state.best_net = state.net.copy()
            if out is not None:
                nn.save_network(state.best_net, out / "best.ckpt")

        if out is not None:
            nn.save_network(state.net, out / f"epoch_{epoch}.ckpt")
            membank.save_bank(state.memory if state.memory is not None else _empty_bank(train_ds),
                              out / "memory.bank")
            (out / "metrics.csv").write_text(metrics_csv(state.history))
        if callback is not None:
            callback(epoch, state, adv_epoch)

    return state, state.best_net
