"""Training objectives: CE, PGD-AT, TRADES and the memory-regularized variants.

Every objective is a batch mean of per-sample terms. ``loss_and_grads`` returns
the value together with exact gradients w.r.t. the network parameters and every
input tensor that enters the loss (clean batch, adversarial batch, memory rows).

KL gradients are the analytic softmax forms (``q - p`` on the second argument's
logits, ``p * (log p - log q - KL)`` on the first's). They coincide with the
derivative of the floored KL wherever no probability is below ``PROB_FLOOR``
and make ``KL(p || p)`` contribute an exactly-zero gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from memlab import nn

PROB_FLOOR = 1e-12

METHODS = ("Standard", "AT", "TRADES", "MemLossV1", "MemLossV2", "MemLossV3")
MEMORY_METHODS = ("MemLossV1", "MemLossV2", "MemLossV3")


class LossConfigError(ValueError):
    pass


@dataclass
class LossConfig:
    method: str = "TRADES"
    beta: float = 5.0
    beta_mem: list = field(default_factory=list)
    K: int = 0
    stop_grad_weight: bool = True

    def __post_init__(self):
        self.beta_mem = [float(b) for b in self.beta_mem]
        if self.method not in METHODS:
            raise LossConfigError(f"loss.method: unknown method {self.method!r}")
        if self.beta < 0:
            raise LossConfigError("loss.beta: must be >= 0")
        if self.K < 0:
            raise LossConfigError("loss.K: must be >= 0")
        if len(self.beta_mem) != self.K:
            raise LossConfigError(f"loss.beta_mem: expected {self.K} weights, got {len(self.beta_mem)}")
        if any(b < 0 for b in self.beta_mem):
            raise LossConfigError("loss.beta_mem: weights must be >= 0")
        if self.uses_memory and self.K == 0:
            raise LossConfigError(f"loss.K: {self.method} needs K >= 1")
        if not self.uses_memory and self.K != 0:
            raise LossConfigError(f"loss.K: {self.method} does not use memory; set K = 0")

    @property
    def uses_memory(self) -> bool:
        return self.method in MEMORY_METHODS

    @property
    def needs_adversarial(self) -> bool:
        return self.method != "Standard"


@dataclass
class LossValue:
    total: float
    components: dict

    def __getitem__(self, key):
        return self.components[key]

    @property
    def mem_total(self) -> float:
        return float(sum(v for k, v in self.components.items() if k.startswith("mem_")))


@dataclass
class LossGrads:
    params: nn.ParamGrads
    x: np.ndarray
    x_adv: np.ndarray | None = None
    memory: list = field(default_factory=list)


# -- row-wise primitives ---------------------------------------------------------

def _log(p):
    return np.log(np.maximum(p, PROB_FLOOR))


def _check_labels(probs, y):
    y = np.asarray(y)
    if y.shape != (probs.shape[0],):
        raise nn.ShapeError(f"labels shape {y.shape} does not match batch of {probs.shape[0]}")
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise ValueError(f"label out of range [0, {probs.shape[1]})")
    return y.astype(np.int64)


def ce_rows(probs, y):
    y = _check_labels(probs, y)
    return -_log(probs[np.arange(len(y)), y])


def ce_rows_grad(probs, y):
    """d(-log p_y)/dlogits per row."""
    g = probs.copy()
    g[np.arange(len(y)), y] -= 1.0
    return g


def kl_rows(p, q):
    if p.shape != q.shape:
        raise nn.ShapeError(f"KL shape mismatch {p.shape} vs {q.shape}")
    return np.sum(p * (_log(p) - _log(q)), axis=1)


def kl_rows_grads(p, q, kl=None):
    """Gradients of row-wise KL(p || q) w.r.t. the logits behind p and behind q."""
    d = _log(p) - _log(q)
    if kl is None:
        kl = np.sum(p * d, axis=1)
    g_p = p * (d - kl[:, None])
    g_q = q - p
    return g_p, g_q


def ce_loss(probs, y) -> LossValue:
    v = float(np.mean(ce_rows(np.asarray(probs, dtype=np.float64), y)))
    return LossValue(v, {"ce": v})


def kl_div(p, q) -> float:
    """Batch mean of KL(p_i || q_i) with a 1e-12 floor inside the logs."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return float(np.mean(kl_rows(p, q)))


# -- full objectives ----------------------------------------------------------------

class _Pass:
    """One forward pass entering the loss, with its logit-gradient accumulator."""

    def __init__(self, net, x):
        self.x = np.asarray(x, dtype=np.float64)
        self.probs, self.trace = nn.forward(net, self.x)
        self.grad = np.zeros_like(self.probs)


def _evaluate(net, x, y, x_adv, memory_rows, cfg: LossConfig, frozen_weights=None):
    x = np.asarray(x, dtype=np.float64)
    clean = _Pass(net, x)
    y = _check_labels(clean.probs, y)
    m = len(y)
    comps = {}
    passes = {"clean": clean, "adv": None, "memory": []}

    if cfg.uses_memory:
        if memory_rows is None:
            raise LossConfigError(f"{cfg.method} requires memory rows")
        if len(memory_rows) != cfg.K:
            raise LossConfigError(f"expected {cfg.K} memory tensors, got {len(memory_rows)}")
    if cfg.needs_adversarial:
        if x_adv is None:
            raise LossConfigError(f"{cfg.method} requires an adversarial batch")
        if np.shape(x_adv) != x.shape:
            raise nn.ShapeError(f"adversarial batch shape {np.shape(x_adv)} != {x.shape}")

    if cfg.method == "Standard":
        comps["ce"] = float(np.mean(ce_rows(clean.probs, y)))
        clean.grad += ce_rows_grad(clean.probs, y) / m
    elif cfg.method == "AT":
        adv = passes["adv"] = _Pass(net, x_adv)
        comps["ce"] = float(np.mean(ce_rows(adv.probs, y)))
        adv.grad += ce_rows_grad(adv.probs, y) / m
    else:
        adv = passes["adv"] = _Pass(net, x_adv)
        comps["ce"] = float(np.mean(ce_rows(clean.probs, y)))
        clean.grad += ce_rows_grad(clean.probs, y) / m
        kl = kl_rows(clean.probs, adv.probs)
        comps["robust_kl"] = cfg.beta * float(np.mean(kl))
        g_p, g_q = kl_rows_grads(clean.probs, adv.probs, kl)
        clean.grad += (cfg.beta / m) * g_p
        adv.grad += (cfg.beta / m) * g_q

    if cfg.uses_memory:
        adv = passes["adv"]
        for k, (rows, b) in enumerate(zip(memory_rows, cfg.beta_mem)):
            if np.shape(rows) != x.shape:
                raise nn.ShapeError(f"memory slot {k} shape {np.shape(rows)} != {x.shape}")
            mem = _Pass(net, rows)
            passes["memory"].append(mem)
            if cfg.method == "MemLossV1":
                kl = kl_rows(clean.probs, mem.probs)
                if frozen_weights is not None:
                    w = np.asarray(frozen_weights[k], dtype=np.float64)
                else:
                    w = 1.0 - mem.probs[np.arange(m), y]
                comps[f"mem_{k}"] = b * float(np.mean(kl * w))
                g_p, g_q = kl_rows_grads(clean.probs, mem.probs, kl)
                clean.grad += (b / m) * w[:, None] * g_p
                mem.grad += (b / m) * w[:, None] * g_q
                if not cfg.stop_grad_weight and frozen_weights is None:
                    # d(1 - q_y)/dz = -q_y (e_y - q)
                    q_y = mem.probs[np.arange(m), y]
                    dw = mem.probs * q_y[:, None]
                    dw[np.arange(m), y] -= q_y
                    mem.grad += (b / m) * kl[:, None] * dw
            elif cfg.method == "MemLossV2":
                kl = kl_rows(clean.probs, mem.probs)
                comps[f"mem_{k}"] = b * float(np.mean(kl))
                g_p, g_q = kl_rows_grads(clean.probs, mem.probs, kl)
                clean.grad += (b / m) * g_p
                mem.grad += (b / m) * g_q
            else:  # MemLossV3: memory prediction as the reference for the current adversarial one
                kl = kl_rows(mem.probs, adv.probs)
                comps[f"mem_{k}"] = b * float(np.mean(kl))
                g_p, g_q = kl_rows_grads(mem.probs, adv.probs, kl)
                mem.grad += (b / m) * g_p
                adv.grad += (b / m) * g_q

    total = 0.0
    for v in comps.values():
        total += v
    return LossValue(total, comps), passes


def memory_weights(net, memory_rows, y) -> list[np.ndarray]:
    """Per-slot difficulty weights ``1 - p_y(x'_k)`` under the current parameters."""
    y = np.asarray(y)
    out = []
    for rows in memory_rows:
        probs, _ = nn.forward(net, rows)
        out.append(1.0 - probs[np.arange(len(y)), y])
    return out


def total_loss(net, x, y, x_adv=None, memory_rows=None, cfg: LossConfig | None = None,
               frozen_weights=None) -> LossValue:
    """Value of the configured objective on one mini-batch.

    Standard is CE on ``x``; AT is CE on ``x_adv``; TRADES is
    ``CE(x) + beta * KL(f(x) || f(x_adv))``. The memory variants add one term
    per slot ``k`` weighted by ``beta_mem[k]``:

    * V1: ``KL(f(x) || f(x'_k)) * (1 - p_y(x'_k))``
    * V2: ``KL(f(x) || f(x'_k))``
    * V3: ``KL(f(x'_k) || f(x_adv))``
    """
    cfg = cfg or LossConfig()
    value, _ = _evaluate(net, x, y, x_adv, memory_rows, cfg, frozen_weights)
    return value


def loss_and_grads(net, x, y, x_adv=None, memory_rows=None, cfg: LossConfig | None = None,
                   frozen_weights=None) -> tuple[LossValue, LossGrads]:
    """Like :func:`total_loss` but also returns gradients for parameters and inputs.

    ``frozen_weights`` replaces the V1 difficulty weights by given constants; the
    finite-difference checks use it to hold the weights fixed.
    """
    cfg = cfg or LossConfig()
    value, passes = _evaluate(net, x, y, x_adv, memory_rows, cfg, frozen_weights)
    grads = nn.ParamGrads.zeros_like(net)

    def run(p):
        pg, gx = nn.backward(net, p.trace, p.grad)
        grads.__iadd__(pg)
        return gx

    gx = run(passes["clean"])
    g_adv = run(passes["adv"]) if passes["adv"] is not None else None
    g_mem = [run(p) for p in passes["memory"]]
    return value, LossGrads(grads, gx, g_adv, g_mem)


def trades_loss(net, x, x_adv, y, beta=5.0) -> LossValue:
    return total_loss(net, x, y, x_adv, cfg=LossConfig("TRADES", beta=beta))


def memloss_k_term(net, x, y, memory_rows, beta_mem, stop_grad_weight=True) -> LossValue:
    """The weighted memory regularizer on its own (no CE or TRADES part)."""
    beta_mem = [float(b) for b in beta_mem]
    if len(memory_rows) != len(beta_mem):
        raise LossConfigError(f"expected {len(beta_mem)} memory tensors, got {len(memory_rows)}")
    x = np.asarray(x, dtype=np.float64)
    p, _ = nn.forward(net, x)
    y = _check_labels(p, y)
    comps = {}
    for k, (rows, b) in enumerate(zip(memory_rows, beta_mem)):
        q, _ = nn.forward(net, rows)
        w = 1.0 - q[np.arange(len(y)), y]
        comps[f"mem_{k}"] = b * float(np.mean(kl_rows(p, q) * w))
    total = 0.0
    for v in comps.values():
        total += v
    return LossValue(total, comps)
