"""Adversarial training with a memory of past adversarial examples, at desk scale."""
from memlab.attacks import AttackConfig, pgd_attack, project
from memlab.data import CsvSchema, Dataset, ToySpec, batch_iter, generate_toy, load_csv
from memlab.evaluation import EvalReport, evaluate
from memlab.losses import LossConfig, LossValue, loss_and_grads, total_loss
from memlab.memory import MemoryBank
from memlab.nn import Network, forward, init_network, predict
from memlab.train import TrainConfig

__all__ = [
    "AttackConfig", "CsvSchema", "Dataset", "EvalReport", "LossConfig", "LossValue",
    "MemoryBank", "Network", "ToySpec", "TrainConfig", "batch_iter", "evaluate", "forward",
    "generate_toy", "init_network", "load_csv", "loss_and_grads", "pgd_attack", "predict",
    "project", "total_loss",
]
