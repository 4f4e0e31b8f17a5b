"""Train MemLossV1 on the two-Gaussian toy and draw its decision boundary."""
import sys
from pathlib import Path

from memlab import nn
from memlab.attacks import AttackConfig
from memlab.data import ToySpec, generate_toy
from memlab.evaluation import evaluate
from memlab.losses import LossConfig
from memlab.plotting import boundary_plot
from memlab.seeding import stream
from memlab.train import TrainConfig, metrics_csv, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
epochs = 30

spec = ToySpec(means=[[-0.25, 0.0], [0.25, 0.0]], noise_std=0.1125)
tr = generate_toy(spec, "train", stream(0, "data_train"))
te = generate_toy(spec, "test", stream(0, "data_test"))
cfg = TrainConfig(epochs=epochs, loss=LossConfig("MemLossV1", beta=5.0, beta_mem=[2.0], K=1))
state, best = train(tr, te, cfg, out_dir=out / "run")
print(metrics_csv(state.history[-5:]))
print(f"best robust accuracy {state.best_robust:.4f} at epoch {state.best_epoch}")

attacks = [AttackConfig(eps=0.1, steps=20, init="uniform", name="pgd20"),
           AttackConfig(eps=0.1, steps=40, restarts=5, init="uniform", name="pgd40x5"),
           AttackConfig(eps=0.1, steps=40, objective="CWMargin", init="uniform", name="cw40")]
print(evaluate(best, te, attacks).table())

boundary_plot(best, tr, out / "boundary.png", resolution=(150, 150))
print("wrote", out / "boundary.png", "and checkpoints under", out / "run")
print("checkpoint reloads identically:",
      nn.network_to_bytes(nn.load_network(out / "run" / "best.ckpt")) == nn.network_to_bytes(best))
