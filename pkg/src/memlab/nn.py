"""Dense feed-forward networks with a softmax head and exact reverse-mode gradients.

Parameters are float64 throughout. Weights are stored ``(fan_in, fan_out)`` so a
layer computes ``a @ W + b``. The last layer is always linear and produces the
logits; logits are clamped to ``[-LOGIT_CLAMP, LOGIT_CLAMP]`` before the softmax.
"""
from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOGIT_CLAMP = 50.0
ACTIVATIONS = ("relu", "identity")

_NET_MAGIC = b"MEMLAB-NET"
NET_FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class StaleTraceError(RuntimeError):
    pass


@dataclass
class Network:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    # bumped on every in-place parameter update; traces remember it
    version: int = 0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        if not self.weights:
            raise ShapeError("network needs at least one layer")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i}: input dim {w.shape[0]} does not chain")
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
        if self.activations[-1] != "identity":
            raise ValueError("the output layer must be linear (identity)")
        if self.n_classes < 2:
            raise ShapeError("softmax head needs at least 2 classes")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order ``W0, b0, W1, b1, ...`` (live views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def touch(self) -> None:
        """Mark parameters as modified; outstanding traces become stale."""
        self.version += 1


def init_network(sizes, seed=0, hidden_activation="relu") -> Network:
    """Glorot-uniform weights in ``±sqrt(6/(fan_in+fan_out))``, zero biases.

    ``sizes`` lists layer widths from input to number of classes, e.g.
    ``[2, 20, 20, 2]`` for two hidden ReLU layers of 20 units.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ShapeError("sizes needs an input and an output width")
    rng = np.random.default_rng(seed)
    weights, biases, acts = [], [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        acts.append(hidden_activation)
    acts[-1] = "identity"
    return Network(weights, biases, acts)


@dataclass
class ForwardTrace:
    net_id: int
    version: int
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer; pre[-1] = raw logits
    logits: np.ndarray  # clamped logits
    probs: np.ndarray
    used: bool = field(default=False)

    @property
    def raw_logits(self) -> np.ndarray:
        return self.pre[-1]


@dataclass
class ParamGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: Network) -> "ParamGrads":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def __iadd__(self, other: "ParamGrads") -> "ParamGrads":
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(net: Network, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"batch shape {x.shape} incompatible with input dim {net.input_dim}")
    return x


def forward(net: Network, batch) -> tuple[np.ndarray, ForwardTrace]:
    """Class probabilities for ``batch`` plus the trace needed for backward."""
    a = _as_batch(net, batch)
    inputs, pre = [], []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if act == "relu" else z
    logits = np.clip(pre[-1], -LOGIT_CLAMP, LOGIT_CLAMP)
    probs = softmax(logits)
    trace = ForwardTrace(id(net), net.version, inputs, pre, logits, probs)
    return probs, trace


def logits(net: Network, batch) -> np.ndarray:
    return forward(net, batch)[1].logits


def predict(net: Network, batch) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    probs, _ = forward(net, batch)
    return np.argmax(probs, axis=1)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    return probs * (grad_probs - np.sum(grad_probs * probs, axis=1, keepdims=True))


def backward(net: Network, trace: ForwardTrace, grad_logits) -> tuple[ParamGrads, np.ndarray]:
    """Backpropagate ``dL/dlogits`` to parameter and input gradients.

    ``grad_logits`` is taken w.r.t. the clamped logits fed to the softmax;
    entries whose raw logit sits outside the clamp receive no gradient.
    """
    if trace.net_id != id(net) or trace.version != net.version:
        raise StaleTraceError("trace was produced by a different or since-updated network")
    if trace.used:
        raise StaleTraceError("trace already consumed by a backward pass")
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != trace.probs.shape:
        raise ShapeError(f"grad shape {g.shape} != output shape {trace.probs.shape}")
    trace.used = True

    g = g * (np.abs(trace.raw_logits) <= LOGIT_CLAMP)
    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if net.activations[i] == "relu":
            g = g * (trace.pre[i] > 0)
        gw[i] = trace.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return ParamGrads(gw, gb), g


def backward_params(net: Network, trace: ForwardTrace, grad_logits) -> ParamGrads:
    return backward(net, trace, grad_logits)[0]


def backward_inputs(net: Network, trace: ForwardTrace, grad_logits) -> np.ndarray:
    return backward(net, trace, grad_logits)[1]


# -- checkpoints ---------------------------------------------------------------
#
# Layout (all integers little-endian):
#   b"MEMLAB-NET" | u32 format version | u32 header length | JSON header (utf-8)
#   | float64 LE payload: W0, b0, W1, b1, ... each C-order
# The header records layer shapes and activations.


def network_to_bytes(net: Network) -> bytes:
    header = {
        "layers": [
            {"in": int(w.shape[0]), "out": int(w.shape[1]), "activation": act}
            for w, act in zip(net.weights, net.activations)
        ],
        "dtype": "<f8",
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in net.params())
    return _NET_MAGIC + struct.pack("<II", NET_FORMAT_VERSION, len(hbytes)) + hbytes + payload


def network_from_bytes(blob: bytes) -> Network:
    if not blob.startswith(_NET_MAGIC):
        raise ValueError("not a memlab network checkpoint")
    off = len(_NET_MAGIC)
    try:
        version, hlen = struct.unpack_from("<II", blob, off)
    except struct.error as exc:
        raise ValueError("truncated network checkpoint") from exc
    if version != NET_FORMAT_VERSION:
        raise ValueError(f"unsupported network checkpoint version {version}")
    off += 8
    header = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen
    weights, biases, acts = [], [], []
    for layer in header["layers"]:
        n_in, n_out = layer["in"], layer["out"]
        for shape in ((n_in, n_out), (n_out,)):
            count = int(np.prod(shape))
            if off + 8 * count > len(blob):
                raise ValueError("truncated network checkpoint")
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
            off += 8 * count
            (weights if len(shape) == 2 else biases).append(arr.astype(np.float64))
        acts.append(layer["activation"])
    if off != len(blob):
        raise ValueError("trailing bytes in network checkpoint")
    return Network(weights, biases, acts)


def save_network(net: Network, path) -> None:
    Path(path).write_bytes(network_to_bytes(net))


def load_network(path) -> Network:
    return network_from_bytes(Path(path).read_bytes())
