"""The per-sample memory of past adversarial examples."""
import numpy as np

from memlab import memory
from memlab.data import Dataset

ds = Dataset(np.arange(6.0).reshape(3, 2), [0, 1, 0])
bank = memory.init_clean(ds, K=3)
print("fresh bank, sample 0 slots (oldest first):")
print(bank.slots[0])

for epoch, value in enumerate((10.0, 20.0, 30.0, 40.0), start=1):
    memory.push(bank, [0], np.full((1, 2), value), epoch=epoch)
    print(f"after epoch {epoch}: slots {bank.slots[0, :, 0]}  tags {bank.epoch_filled[0]}")

print("sample 1 was never pushed:", bank.slots[1, :, 0])
rows = memory.fetch(bank, [2, 0])
print("fetch([2, 0]) slot by slot:", [r[:, 0].tolist() for r in rows])

blob = memory.bank_to_bytes(bank)
print("serialized bytes:", len(blob), " round trip equal:", memory.bank_from_bytes(blob) == bank)
