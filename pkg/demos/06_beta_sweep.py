"""Clean against robust accuracy as beta grows, TRADES and MemLossV1 side by side."""
from dataclasses import replace

from scipy.stats import spearmanr

from memlab.data import ToySpec, generate_toy
from memlab.experiments import beta_sweep, sweep_csv
from memlab.losses import LossConfig
from memlab.seeding import stream
from memlab.train import TrainConfig

spec = ToySpec(generator="TwoMoons", noise_std=0.1)
tr = generate_toy(spec, "train", stream(0, "data_train"))
te = generate_toy(spec, "test", stream(0, "data_test"))
betas = [1.0, 2.0, 4.0, 8.0]
base = TrainConfig(epochs=60)

trades = beta_sweep(replace(base, loss=LossConfig("TRADES", 1.0)), betas, [0.0], tr, te)
mem = beta_sweep(replace(base, loss=LossConfig("MemLossV1", 1.0, [2.0], 1)), betas, [2.0], tr, te)
print("TRADES\n" + sweep_csv(trades))
print("MemLossV1\n" + sweep_csv(mem))
print("Spearman(beta, clean accuracy) for TRADES:",
      round(spearmanr(betas, [r["clean"] for r in trades]).statistic, 3))
