"""Per-sample memory of the last K adversarial examples.

Slots are ordered oldest to newest: after a push, slot ``K - 1`` holds the
example just written and slot 0 the oldest one still kept. A freshly created
bank holds each sample's clean input in every slot, so memory terms computed
from unwritten slots vanish.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_BANK_MAGIC = b"MEMLAB-BANK"
BANK_FORMAT_VERSION = 1
CLEAN = -1  # epoch tag of a slot that still holds the clean input


class MemoryBank:
    def __init__(self, ids, slots, epoch_filled):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.slots = np.asarray(slots, dtype=np.float64)
        self.epoch_filled = np.asarray(epoch_filled, dtype=np.int64)
        if self.slots.ndim != 3 or self.slots.shape[0] != len(self.ids):
            raise ValueError(f"slots shape {self.slots.shape} does not match {len(self.ids)} ids")
        if self.epoch_filled.shape != self.slots.shape[:2]:
            raise ValueError("epoch_filled shape must be (n_samples, K)")
        self._order = np.argsort(self.ids, kind="stable")
        self._sorted = self.ids[self._order]

    @property
    def n_samples(self) -> int:
        return self.slots.shape[0]

    @property
    def K(self) -> int:
        return self.slots.shape[1]

    @property
    def dim(self) -> int:
        return self.slots.shape[2]

    def rows_for(self, sample_ids) -> np.ndarray:
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        pos = np.searchsorted(self._sorted, sample_ids)
        pos = np.clip(pos, 0, len(self._sorted) - 1)
        if sample_ids.size and not np.array_equal(self._sorted[pos], sample_ids):
            missing = sample_ids[self._sorted[pos] != sample_ids]
            raise IndexError(f"unknown sample ids: {missing[:5].tolist()}")
        return self._order[pos]

    def __eq__(self, other):
        if not isinstance(other, MemoryBank):
            return NotImplemented
        return (np.array_equal(self.ids, other.ids)
                and self.slots.shape == other.slots.shape
                and self.slots.tobytes() == other.slots.tobytes()
                and np.array_equal(self.epoch_filled, other.epoch_filled))


def init_clean(dataset, K: int) -> MemoryBank:
    """A bank whose K slots all hold the sample's clean input."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(dataset) == 0:
        raise ValueError("cannot build a memory bank for an empty dataset")
    slots = np.repeat(dataset.inputs[:, None, :], K, axis=1)
    tags = np.full((len(dataset), K), CLEAN, dtype=np.int64)
    return MemoryBank(dataset.ids.copy(), slots, tags)


def fetch(bank: MemoryBank, sample_ids) -> list[np.ndarray]:
    """K arrays, oldest first; row i of array k is slot k of ``sample_ids[i]``."""
    rows = bank.rows_for(sample_ids)
    return [bank.slots[rows, k].copy() for k in range(bank.K)]


def push(bank: MemoryBank, sample_ids, x_adv_new, epoch: int = 0) -> None:
    """Shift each touched sample's slots one step older and write the new example last."""
    rows = bank.rows_for(sample_ids)
    x_adv_new = np.asarray(x_adv_new, dtype=np.float64)
    if x_adv_new.shape != (len(rows), bank.dim):
        raise ValueError(f"new rows shape {x_adv_new.shape} != ({len(rows)}, {bank.dim})")
    if len(np.unique(rows)) != len(rows):
        raise ValueError("duplicate sample ids in push")
    bank.slots[rows, :-1] = bank.slots[rows, 1:]
    bank.slots[rows, -1] = x_adv_new
    bank.epoch_filled[rows, :-1] = bank.epoch_filled[rows, 1:]
    bank.epoch_filled[rows, -1] = epoch


# Layout: b"MEMLAB-BANK" | u32 version | u32 header length | JSON header
#         | int64 LE ids (n) | int64 LE epoch tags (n*K) | float64 LE slots (n*K*dim)

def bank_to_bytes(bank: MemoryBank) -> bytes:
    header = json.dumps({"n_samples": bank.n_samples, "K": bank.K, "dim": bank.dim},
                        sort_keys=True).encode("utf-8")
    return b"".join([
        _BANK_MAGIC, struct.pack("<II", BANK_FORMAT_VERSION, len(header)), header,
        np.ascontiguousarray(bank.ids, dtype="<i8").tobytes(),
        np.ascontiguousarray(bank.epoch_filled, dtype="<i8").tobytes(),
        np.ascontiguousarray(bank.slots, dtype="<f8").tobytes(),
    ])


def bank_from_bytes(blob: bytes) -> MemoryBank:
    if not blob.startswith(_BANK_MAGIC):
        raise ValueError("not a memlab memory bank")
    off = len(_BANK_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, off)
    if version != BANK_FORMAT_VERSION:
        raise ValueError(f"unsupported memory bank version {version}")
    off += 8
    h = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen
    n, K, d = h["n_samples"], h["K"], h["dim"]
    expected = off + 8 * (n + n * K + n * K * d)
    if len(blob) != expected:
        raise ValueError(f"memory bank size {len(blob)} != expected {expected}")
    ids = np.frombuffer(blob, "<i8", n, off).astype(np.int64)
    off += 8 * n
    tags = np.frombuffer(blob, "<i8", n * K, off).reshape(n, K).astype(np.int64)
    off += 8 * n * K
    slots = np.frombuffer(blob, "<f8", n * K * d, off).reshape(n, K, d).astype(np.float64)
    return MemoryBank(ids, slots, tags)


def save_bank(bank: MemoryBank, path) -> None:
    Path(path).write_bytes(bank_to_bytes(bank))


def load_bank(path) -> MemoryBank:
    return bank_from_bytes(Path(path).read_bytes())
