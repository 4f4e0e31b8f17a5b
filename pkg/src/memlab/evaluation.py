"""Clean and robust accuracy."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from memlab import nn
from memlab.attacks import pgd_restarts
from memlab.seeding import stream


@dataclass
class EvalReport:
    clean_acc: float
    robust_acc: dict = field(default_factory=dict)
    # per-sample correctness: "clean" plus one entry per attack name
    outcomes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"clean_acc": self.clean_acc, "robust_acc": self.robust_acc}, indent=2,
                          sort_keys=True)

    def table(self) -> str:
        rows = [("clean", self.clean_acc)] + list(self.robust_acc.items())
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {acc * 100:7.2f}%" for name, acc in rows)


def robust_correct(net, x, y, attack, seed, index=0) -> np.ndarray:
    """Per-sample robustness: correct under every restart's output."""
    y = np.asarray(y)
    ok = np.ones(len(y), dtype=bool)
    rng = stream(seed, "attack_eval", index)
    for x_r in pgd_restarts(net, x, y, attack, rng):
        ok &= nn.predict(net, x_r) == y
    return ok


def evaluate(net, dataset, attacks, seed=0) -> EvalReport:
    """Clean accuracy plus worst-case-over-restarts accuracy for each attack.

    Attack ``i`` draws its random starts from the ``attack_eval`` stream
    ``(seed, i)``, so repeated calls with the same seed are identical.
    """
    clean_ok = nn.predict(net, dataset.inputs) == dataset.labels
    report = EvalReport(float(np.mean(clean_ok)), outcomes={"clean": clean_ok})
    for i, attack in enumerate(attacks):
        ok = robust_correct(net, dataset.inputs, dataset.labels, attack, seed, i)
        report.robust_acc[attack.name] = float(np.mean(ok))
        report.outcomes[attack.name] = ok
    return report
