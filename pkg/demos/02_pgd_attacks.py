"""PGD in l-inf and l2 balls: projections, objectives and restarts."""
import numpy as np

from memlab import nn
from memlab.attacks import AttackConfig, attack_objective_values, pgd_attack, project
from memlab.evaluation import evaluate
from memlab.data import ToySpec, generate_toy

rule = "-" * 60

print("l-inf projection of (0.3, -0.05) onto eps=0.2:", project([[0.3, -0.05]], "Linf", 0.2))
print("l2 projection of (0.3, 0.4) onto eps=0.25:  ", project([[0.3, 0.4]], "L2", 0.25))
print(rule)

# A 1-D model whose loss grows with x: three sign steps of 0.1 from 0.5, capped at 0.5 + 0.2.
net = nn.Network([np.array([[0.0, 2.0]])], [np.zeros(2)], ["identity"])
cfg = AttackConfig(eps=0.2, alpha=0.1, steps=3, init="zero")
print("1-D attack from 0.5:", pgd_attack(net, [[0.5]], [0], cfg, 0)[0, 0])
print(rule)

data = generate_toy(ToySpec(n_per_class=200))
net = nn.init_network([2, 20, 20, 2], seed=0)
for objective in ("CE", "KLFromClean", "CWMargin"):
    for norm, eps in (("Linf", 0.1), ("L2", 0.14)):
        cfg = AttackConfig(norm=norm, eps=eps, steps=10, objective=objective)
        adv = pgd_attack(net, data.inputs, data.labels, cfg, 0)
        gain = attack_objective_values(net, adv, data.inputs, data.labels, objective) \
            - attack_objective_values(net, data.inputs, data.inputs, data.labels, objective)
        dist = np.abs(adv - data.inputs).max() if norm == "Linf" else np.linalg.norm(adv - data.inputs, axis=1).max()
        print(f"{objective:12s} {norm:4s} mean objective gain {gain.mean():+.4f}  max distance {dist:.4f}")
print(rule)

# Robust accuracy counts a point only if every restart fails to flip it.
for r in (1, 5, 10):
    atk = AttackConfig(eps=0.1, steps=20, restarts=r, init="uniform", name=f"r{r}")
    print(f"restarts={r:2d}: robust accuracy {evaluate(net, data, [atk]).robust_acc[atk.name]:.4f}")
