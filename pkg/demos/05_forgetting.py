"""Epoch-to-epoch forgetting of adversarial examples: AT against MemLossV1.

After each epoch n we score model n and model n-1 on the adversarial examples
generated during epoch n-1. A positive drop means the update forgot them.
Pass a smaller epoch count as the first argument for a quick look.
"""
import sys
from dataclasses import replace
from pathlib import Path

from memlab.attacks import AttackConfig
from memlab.data import ToySpec, generate_toy
from memlab.experiments import forgetting_csv, forgetting_experiment
from memlab.losses import LossConfig
from memlab.plotting import boundary_plot
from memlab.seeding import stream
from memlab.train import TrainConfig

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 120
out = Path("demo_out")
out.mkdir(exist_ok=True)

spec = ToySpec(means=[[-0.25, 0.0], [0.25, 0.0]], noise_std=0.1125)
tr = generate_toy(spec, "train", stream(0, "data_train"))
te = generate_toy(spec, "test", stream(0, "data_test"))
at = AttackConfig(eps=0.1, alpha=0.025, steps=10, objective="CE", name="train")
base = TrainConfig(epochs=epochs)
cfgs = {"AT": replace(base, loss=LossConfig("AT", 0.0), train_attack=at),
        "MemLossV1": replace(base, loss=LossConfig("MemLossV1", 5.0, [2.0], 1),
                             train_attack=replace(at, objective="KLFromClean"))}
runs = forgetting_experiment(cfgs, tr, te, keep_epochs=(epochs - 1, epochs))
(out / "forgetting.csv").write_text(forgetting_csv(runs))

for name, run in runs.items():
    worst = max(run.records, key=lambda r: r.drop)
    print(f"{name:10s} mean drop over last 10 epochs {run.mean_drop(10):+.5f}; "
          f"largest single drop {worst.drop:+.4f} at epoch {worst.epoch}")
    (net_prev, adv_prev), (net_cur, _) = run.snapshots[epochs - 1], run.snapshots[epochs]
    boundary_plot(net_cur, tr, out / f"{name}_boundary{epochs}_adv{epochs - 1}.png",
                  resolution=(150, 150), adv=adv_prev)
print("per-epoch records in", out / "forgetting.csv")
