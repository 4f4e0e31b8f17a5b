"""A small MLP, its exact gradients, and the loss family evaluated on one batch."""
import numpy as np

from memlab import nn
from memlab.losses import LossConfig, kl_div, loss_and_grads, memory_weights, total_loss

rule = "-" * 60
rng = np.random.default_rng(0)

net = nn.init_network([2, 8, 8, 2], seed=1)
x = rng.normal(size=(4, 2))
y = np.array([0, 1, 1, 0])
probs, _ = nn.forward(net, x)
print("class probabilities for four points")
print(probs)
print("predicted labels", nn.predict(net, x))
print(rule)

# Gradients are exact reverse-mode derivatives; compare one entry with a central difference.
cfg = LossConfig("TRADES", beta=5.0)
x_adv = x + 0.05 * rng.normal(size=x.shape)
value, grads = loss_and_grads(net, x, y, x_adv, cfg=cfg)
h = 1e-6
bumped = net.copy()
bumped.weights[0][0, 0] += h
up = total_loss(bumped, x, y, x_adv, cfg=cfg).total
bumped.weights[0][0, 0] -= 2 * h
bumped.touch()
down = total_loss(bumped, x, y, x_adv, cfg=cfg).total
print("TRADES loss", value.total, value.components)
print("dL/dW0[0,0] analytic", grads.params.weights[0][0, 0], " central difference", (up - down) / (2 * h))
print(rule)

# KL between two fixed distributions, in both directions
p, q = np.array([0.5, 0.5]), np.array([0.25, 0.75])
print("KL(p||q) =", kl_div(p, q), " KL(q||p) =", kl_div(q, p))
print(rule)

# The memory variants add one term per stored example x'_k.
mem = [x + 0.2 * rng.normal(size=x.shape)]
print("difficulty weights 1 - p_y(x'):", memory_weights(net, mem, y)[0])
for method in ("MemLossV1", "MemLossV2", "MemLossV3"):
    v = total_loss(net, x, y, x_adv, mem, LossConfig(method, beta=5.0, beta_mem=[2.0], K=1))
    print(f"{method}: total {v.total:.6f}  memory term {v.mem_total:.6f}")

# A memory filled with the clean inputs contributes nothing.
clean = total_loss(net, x, y, x_adv, [x.copy()], LossConfig("MemLossV1", 5.0, [2.0], 1))
print("clean-filled memory term:", clean.mem_total, " equals TRADES:", clean.total == value.total)
