"""Dense feed-forward networks with hand-written backprop, Adam, and a replay buffer.

Everything is float64.  Weights are stored ``(fan_in, fan_out)`` and inputs
are batched row-wise, so a layer computes ``x @ W + b``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .physics import ContractError

ACTIVATIONS = ("identity", "relu", "tanh")
_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
CHECKPOINT_MAGIC = b"VSMLP\x00\x01\x00"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ContractError("an MLP needs at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            raise ContractError(f"layer sizes must be positive, got {sizes}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ContractError("hidden_activation must be relu or tanh")
        if self.output_activation not in ("identity", "tanh"):
            raise ContractError("output_activation must be identity or tanh")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == self.n_layers - 1 else self.hidden_activation


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ContractError("parameter count does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ContractError(f"layer {i} shapes {w.shape}/{b.shape} do not match spec")

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "MlpParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        ws, bs = [], []
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(spec, ws, bs)

    @classmethod
    def zeros(cls, spec: MlpSpec) -> "MlpParams":
        s = spec.layer_sizes
        return cls(spec, [np.zeros((a, b)) for a, b in zip(s[:-1], s[1:])],
                   [np.zeros(b) for b in s[1:]])

    def tensors(self) -> list:
        """Weights and biases interleaved; the order used by optimisers and checkpoints."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())


@dataclass
class ForwardCache:
    spec: MlpSpec
    inputs: list          # input to each layer
    outputs: list         # post-activation output of each layer


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def mlp_forward(params: MlpParams, x: np.ndarray, cache: bool = False):
    """Evaluate the network on ``x`` (a vector or a row batch).

    Returns the output, or ``(output, ForwardCache)`` when ``cache`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.spec.layer_sizes[0]:
        raise ContractError(f"input width {h.shape[1]} != {params.spec.layer_sizes[0]}")
    inputs, outputs = [], []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = _act(params.spec.activation(i), h @ w + b)
        outputs.append(h)
    out = h[0] if single else h
    if cache:
        return out, ForwardCache(params.spec, inputs, outputs)
    return out


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray):
    """Reverse-mode pass for ``loss`` with ``d loss / d output == grad_out``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is an
    ``MlpParams`` holding the gradients.
    """
    if cache.spec != params.spec:
        raise ContractError("forward cache was produced by a different network spec")
    g = np.asarray(grad_out, dtype=np.float64)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    if g.shape != cache.outputs[-1].shape:
        raise ContractError(f"output gradient shape {g.shape} != {cache.outputs[-1].shape}")
    n = params.spec.n_layers
    gw, gb = [None] * n, [None] * n
    for i in reversed(range(n)):
        name = params.spec.activation(i)
        out = cache.outputs[i]
        if name == "relu":
            g = g * (out > 0.0)
        elif name == "tanh":
            g = g * (1.0 - out * out)
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    grads = MlpParams(params.spec, gw, gb)
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: MlpParams, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "AdamState":
        return cls([np.zeros_like(t) for t in params.tensors()],
                   [np.zeros_like(t) for t in params.tensors()], 0, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v], self.step,
                         self.beta1, self.beta2, self.eps)


def adam_update(params: MlpParams, grads: MlpParams, state: AdamState, lr: float):
    """Bias-corrected Adam step; returns new ``(params, state)``."""
    if grads.spec != params.spec or len(state.m) != 2 * params.spec.n_layers:
        raise ContractError("gradient/optimiser shapes do not match parameters")
    st = state.copy()
    st.step += 1
    b1, b2 = st.beta1, st.beta2
    c1 = 1.0 - b1 ** st.step
    c2 = 1.0 - b2 ** st.step
    new = []
    for k, (p, g) in enumerate(zip(params.tensors(), grads.tensors())):
        st.m[k] = b1 * st.m[k] + (1.0 - b1) * g
        st.v[k] = b2 * st.v[k] + (1.0 - b2) * g * g
        step = lr * (st.m[k] / c1) / (np.sqrt(st.v[k] / c2) + st.eps)
        new.append(p - step)
    return MlpParams(params.spec, new[0::2], new[1::2]), st


class Adam:
    """Mutable convenience wrapper used by the training loops."""

    def __init__(self, params: MlpParams, lr: float):
        self.lr = lr
        self.state = AdamState.fresh(params)

    def step(self, params: MlpParams, grads: MlpParams) -> MlpParams:
        params, self.state = adam_update(params, grads, self.state, self.lr)
        return params


# ------------------------------------------------------------- checkpoints

def params_to_bytes(params: MlpParams, metadata: Optional[dict] = None) -> bytes:
    """Checkpoint layout (little-endian)::

        magic[8] | n_sizes u32 | sizes u32*n | hidden u8 | output u8
        | meta_len u32 | meta (UTF-8 JSON, sorted keys)
        | per layer: W (row-major f64) then b (f64)
    """
    spec = params.spec
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = [CHECKPOINT_MAGIC, struct.pack("<I", len(spec.layer_sizes)),
            struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes),
            struct.pack("<BB", _ACT_CODE[spec.hidden_activation], _ACT_CODE[spec.output_activation]),
            struct.pack("<I", len(meta)), meta]
    body = [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in params.tensors()]
    return b"".join(head + body)


def params_from_bytes(data: bytes) -> tuple[MlpParams, dict]:
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not an MLP checkpoint (bad magic)")
    off = 8
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    sizes = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    hid, outp = struct.unpack_from("<BB", data, off)
    off += 2
    (mlen,) = struct.unpack_from("<I", data, off)
    off += 4
    meta = json.loads(data[off:off + mlen].decode("utf-8"))
    off += mlen
    spec = MlpSpec(tuple(sizes), ACTIVATIONS[hid], ACTIVATIONS[outp])
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=a * b, offset=off).reshape(a, b).astype(np.float64)
        off += 8 * a * b
        bias = np.frombuffer(data, dtype="<f8", count=b, offset=off).astype(np.float64)
        off += 8 * b
        ws.append(w)
        bs.append(bias)
    if off != len(data):
        raise ValueError("checkpoint has trailing bytes")
    return MlpParams(spec, ws, bs), meta


def save_params(path, params: MlpParams, metadata: Optional[dict] = None) -> None:
    Path(path).write_bytes(params_to_bytes(params, metadata))


def load_params(path) -> tuple[MlpParams, dict]:
    return params_from_bytes(Path(path).read_bytes())


# ------------------------------------------------------------ replay buffer

@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool

    def __post_init__(self):
        if np.shape(self.obs) != np.shape(self.next_obs):
            raise ContractError("obs and next_obs must have the same length")


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    indices: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions held in preallocated arrays."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity <= 0:
            raise ContractError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size <= 0:
            raise ContractError("batch_size must be positive")
        if self.size < batch_size:
            raise ContractError(f"buffer holds {self.size} transitions, need {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx],
                     self.done[idx], idx)


def buffer_push(buffer: ReplayBuffer, t: Transition) -> ReplayBuffer:
    buffer.push(t)
    return buffer


def buffer_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch_size, rng)
