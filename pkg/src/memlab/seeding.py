"""Named random streams derived from a single run seed.

Each consumer gets ``default_rng([seed, stream_id, *extra])`` so streams never
overlap and adding draws in one place does not shift any other.
"""
import numpy as np

STREAMS = {
    "data_train": 1,
    "data_test": 2,
    "init": 3,
    "shuffle": 4,
    "attack_train": 5,
    "attack_eval": 6,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name], *(int(e) for e in extra)])
