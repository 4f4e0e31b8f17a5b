"""Projected gradient ascent attacks in l-inf and l2 balls."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from memlab import nn
from memlab.losses import ce_rows, ce_rows_grad, kl_rows, kl_rows_grads

NORMS = ("Linf", "L2")
OBJECTIVES = ("CE", "KLFromClean", "CWMargin")
INITS = ("normal", "uniform", "zero")


class AttackConfigError(ValueError):
    pass


@dataclass
class AttackConfig:
    """Threat model and optimizer settings for one PGD attack.

    ``init`` selects the starting point: ``"normal"`` adds
    ``init_noise_std * N(0, I)`` (the training-time start), ``"uniform"`` draws
    uniformly from the eps-ball (evaluation restarts), ``"zero"`` starts at x.
    """

    norm: str = "Linf"
    eps: float = 0.1
    alpha: float = 0.025
    steps: int = 10
    restarts: int = 1
    objective: str = "CE"
    init: str = "normal"
    init_noise_std: float = 0.001
    domain_box: tuple | None = None
    name: str = "pgd"

    def __post_init__(self):
        if self.norm not in NORMS:
            raise AttackConfigError(f"norm: expected one of {NORMS}, got {self.norm!r}")
        if self.objective not in OBJECTIVES:
            raise AttackConfigError(f"objective: expected one of {OBJECTIVES}, got {self.objective!r}")
        if self.init not in INITS:
            raise AttackConfigError(f"init: expected one of {INITS}, got {self.init!r}")
        if not self.eps >= 0:
            raise AttackConfigError(f"eps: must be >= 0, got {self.eps}")
        if not self.alpha > 0:
            raise AttackConfigError(f"alpha: must be > 0, got {self.alpha}")
        if self.steps < 0:
            raise AttackConfigError(f"steps: must be >= 0, got {self.steps}")
        if self.restarts < 1:
            raise AttackConfigError(f"restarts: must be >= 1, got {self.restarts}")
        if self.init_noise_std < 0:
            raise AttackConfigError(f"init_noise_std: must be >= 0, got {self.init_noise_std}")
        if self.domain_box is not None:
            if len(self.domain_box) == 0:
                self.domain_box = None
            else:
                lo, hi = self.domain_box
                if not lo <= hi:
                    raise AttackConfigError(f"domain_box: lower bound {lo} above upper {hi}")
                self.domain_box = (float(lo), float(hi))


def project(delta, norm, eps) -> np.ndarray:
    """Project perturbations row-wise onto the eps-ball of the given norm."""
    delta = np.asarray(delta, dtype=np.float64)
    if norm == "Linf":
        return np.clip(delta, -eps, eps)
    if norm == "L2":
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        outside = norms > eps
        scale = np.where(outside, eps / np.where(outside, norms, 1.0), 1.0)
        return delta * scale
    raise AttackConfigError(f"unknown norm {norm!r}")


def _objective_and_grad(net, x_cur, y, objective, clean_probs=None):
    """Per-sample objective values and their input gradients at ``x_cur``."""
    probs, trace = nn.forward(net, x_cur)
    y = np.asarray(y, dtype=np.int64)
    rows = np.arange(len(y))
    if objective == "CE":
        vals = ce_rows(probs, y)
        g = ce_rows_grad(probs, y)
    elif objective == "KLFromClean":
        if clean_probs is None:
            raise AttackConfigError("KLFromClean needs the clean probabilities")
        vals = kl_rows(clean_probs, probs)
        _, g = kl_rows_grads(clean_probs, probs, vals)
    elif objective == "CWMargin":
        z = trace.logits
        other = z.copy()
        other[rows, y] = -np.inf
        j = np.argmax(other, axis=1)
        vals = z[rows, j] - z[rows, y]
        g = np.zeros_like(z)
        g[rows, j] += 1.0
        g[rows, y] -= 1.0
    else:
        raise AttackConfigError(f"unknown objective {objective!r}")
    return vals, nn.backward_inputs(net, trace, g)


def attack_objective_values(net, x_cur, x_clean, y, objective) -> np.ndarray:
    clean_probs = nn.forward(net, x_clean)[0] if objective == "KLFromClean" else None
    return _objective_and_grad(net, x_cur, y, objective, clean_probs)[0]


def attack_objective_grad(net, x_cur, x_clean, y, objective) -> np.ndarray:
    """Input gradient of the per-sample attack objective (summed over the batch).

    For ``KLFromClean`` the reference distribution ``f(x_clean)`` is a constant.
    At ``x_cur == x_clean`` that objective is 0 and so is its gradient; the
    random start is what lets the attack move.
    """
    clean_probs = nn.forward(net, x_clean)[0] if objective == "KLFromClean" else None
    return _objective_and_grad(net, x_cur, y, objective, clean_probs)[1]


def _start(x, cfg, rng):
    if cfg.init == "zero" or cfg.eps == 0:
        return x.copy()
    if cfg.init == "normal":
        if cfg.init_noise_std == 0:
            return x.copy()
        return x + cfg.init_noise_std * rng.standard_normal(x.shape)
    if cfg.norm == "Linf":
        return x + rng.uniform(-cfg.eps, cfg.eps, size=x.shape)
    direction = rng.standard_normal(x.shape)
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    radius = cfg.eps * rng.uniform(size=(x.shape[0], 1)) ** (1.0 / x.shape[1])
    return x + radius * direction


def _feasible(x, x_new, cfg):
    out = x + project(x_new - x, cfg.norm, cfg.eps)
    if cfg.domain_box is not None:
        out = np.clip(out, *cfg.domain_box)
    return out


def _check_inputs(x, cfg):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("attack input contains non-finite values")
    if cfg.domain_box is not None:
        lo, hi = cfg.domain_box
        if x.size and (x.min() < lo or x.max() > hi):
            raise ValueError(f"clean inputs lie outside domain_box {cfg.domain_box}")
    return x


def pgd_single(net, x, y, cfg: AttackConfig, rng, clean_probs=None) -> np.ndarray:
    """One PGD run (no restarts) from a fresh random start."""
    x = _check_inputs(x, cfg)
    if cfg.objective == "KLFromClean" and clean_probs is None:
        clean_probs = nn.forward(net, x)[0]
    x_adv = _feasible(x, _start(x, cfg, rng), cfg)
    for _ in range(cfg.steps):
        _, g = _objective_and_grad(net, x_adv, y, cfg.objective, clean_probs)
        if cfg.norm == "Linf":
            step = np.sign(g)
        else:
            gn = np.linalg.norm(g, axis=1, keepdims=True)
            step = np.where(gn > 0, g / np.where(gn > 0, gn, 1.0), 0.0)
        x_adv = _feasible(x, x_adv + cfg.alpha * step, cfg)
    return x_adv


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def pgd_restarts(net, x, y, cfg: AttackConfig, rng):
    """Yield the output of each restart in turn.

    Restarts consume ``rng`` sequentially, so the first ``r`` outputs are the
    same whatever the total number of restarts.
    """
    rng = _as_rng(rng)
    x = _check_inputs(x, cfg)
    clean_probs = nn.forward(net, x)[0] if cfg.objective == "KLFromClean" else None
    for _ in range(cfg.restarts):
        yield pgd_single(net, x, y, cfg, rng, clean_probs)


def pgd_attack(net, x, y, cfg: AttackConfig, rng) -> np.ndarray:
    """PGD with random restarts; per sample, keep the restart with the largest objective."""
    x = _check_inputs(x, cfg)
    if cfg.restarts == 1:
        return next(pgd_restarts(net, x, y, cfg, rng))
    best, best_val = None, None
    for x_r in pgd_restarts(net, x, y, cfg, rng):
        val = attack_objective_values(net, x_r, x, y, cfg.objective)
        if best is None:
            best, best_val = x_r, val
            continue
        better = val > best_val
        best[better] = x_r[better]
        best_val = np.where(better, val, best_val)
    return best
