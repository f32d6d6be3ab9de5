"""Layers, recurrent encoder, losses and the Adam optimiser."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError, TrainingError

PROB_CLAMP = 1e-7

ACTIVATIONS = ("none", "tanh", "sigmoid", "softmax")


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)


class Module:
    """Container that discovers parameters held in attributes.

    Attributes holding a trainable :class:`Tensor`, another ``Module`` or a
    list of modules are walked in definition order, which gives every
    parameter a stable dotted name.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ContractError(f"state is missing parameters: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {arr.shape}, expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
        return self


@contextlib.contextmanager
def frozen(*modules: Module):
    """Temporarily stop gradients from reaching the modules' parameters."""
    params = [p for m in modules if m is not None for p in m.parameters().values()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag


def _param(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


# --------------------------------------------------------------------------
# dense


class DenseLayer(Module):
    def __init__(self, in_features: int, out_features: int, activation: str = "none",
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = _param(glorot_uniform(rng, out_features, in_features, dtype))
        self.b = _param(np.zeros(out_features, dtype=dtype))
        self.activation = activation

    @property
    def in_features(self) -> int:
        return self.W.shape[1]

    @property
    def out_features(self) -> int:
        return self.W.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)


def activate(x: Tensor, activation: str) -> Tensor:
    if activation == "none":
        return x
    if activation == "tanh":
        return ad.tanh(x)
    if activation == "sigmoid":
        return ad.sigmoid(x)
    if activation == "softmax":
        return ad.softmax(x)
    raise ContractError(f"unknown activation {activation!r}")


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    """``activation(x W^T + b)`` for ``x`` of shape ``(in,)`` or ``(batch, in)``."""
    x = ad.as_tensor(x)
    if x.shape[-1] != layer.in_features:
        raise DimensionError(
            f"dense: input width {x.shape[-1]} does not match layer input {layer.in_features}"
        )
    return activate(ad.linear(x, layer.W, layer.b), layer.activation)


# --------------------------------------------------------------------------
# LSTM

GATES = ("i", "f", "o", "g")


class LSTMCell(Module):
    """Single-layer LSTM with separate input, forget, output and candidate paths.

    Each path has a weight ``(hidden, input + hidden)`` acting on ``[x, h]``
    and a bias ``(hidden,)``. The forget bias starts at +1.
    """

    def __init__(self, input_size: int, hidden_size: int = 300,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        k = input_size + hidden_size
        self.W_i = _param(glorot_uniform(rng, hidden_size, k, dtype))
        self.W_f = _param(glorot_uniform(rng, hidden_size, k, dtype))
        self.W_o = _param(glorot_uniform(rng, hidden_size, k, dtype))
        self.W_g = _param(glorot_uniform(rng, hidden_size, k, dtype))
        self.b_i = _param(np.zeros(hidden_size, dtype=dtype))
        self.b_f = _param(np.ones(hidden_size, dtype=dtype))
        self.b_o = _param(np.zeros(hidden_size, dtype=dtype))
        self.b_g = _param(np.zeros(hidden_size, dtype=dtype))
        self.input_size = input_size
        self.hidden_size = hidden_size

    def weights(self) -> list[Tensor]:
        return [self.W_i, self.W_f, self.W_o, self.W_g]

    def biases(self) -> list[Tensor]:
        return [self.b_i, self.b_f, self.b_o, self.b_g]


def lstm_step(cell: LSTMCell, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One recurrence step built from tape primitives.

    ``x_t`` is ``(input,)`` or ``(batch, input)``; the state tensors match it
    with ``hidden`` in place of ``input``.
    """
    x_t = ad.as_tensor(x_t)
    h_prev = ad.as_tensor(h_prev)
    c_prev = ad.as_tensor(c_prev)
    if x_t.shape[-1] != cell.input_size:
        raise DimensionError(f"lstm_step: input width {x_t.shape[-1]}, cell expects {cell.input_size}")
    if h_prev.shape != c_prev.shape or h_prev.shape[-1] != cell.hidden_size:
        raise DimensionError(
            f"lstm_step: states {h_prev.shape}/{c_prev.shape} do not match hidden {cell.hidden_size}"
        )
    if x_t.shape[:-1] != h_prev.shape[:-1]:
        raise DimensionError(f"lstm_step: batch of input {x_t.shape} and state {h_prev.shape} differ")
    xh = ad.concat([x_t, h_prev], axis=-1)
    i = ad.sigmoid(ad.linear(xh, cell.W_i, cell.b_i))
    f = ad.sigmoid(ad.linear(xh, cell.W_f, cell.b_f))
    o = ad.sigmoid(ad.linear(xh, cell.W_o, cell.b_o))
    g = ad.tanh(ad.linear(xh, cell.W_g, cell.b_g))
    c_t = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h_t = ad.mul(o, ad.tanh(c_t))
    return h_t, c_t


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return ad._sigmoid_array(x)


def _lstm_forward(W: np.ndarray, b: np.ndarray, X: np.ndarray):
    """Run ``S`` independent LSTMs side by side.

    W: (S, D+H, 4H) with column blocks ordered i, f, o, g; b: (S, 4H);
    X: (S, B, T, D). Returns the final hidden state (S, B, H) and the cache
    needed for backpropagation through time.
    """
    S, B, T, D = X.shape
    H = W.shape[2] // 4
    h = np.zeros((S, B, H), dtype=W.dtype)
    c = np.zeros((S, B, H), dtype=W.dtype)
    bias = b[:, None, :]
    cache = []
    for t in range(T):
        xh = np.concatenate([X[:, :, t, :], h], axis=2)
        a = np.matmul(xh, W) + bias
        ifo = _sigmoid(a[..., : 3 * H])
        g = np.tanh(a[..., 3 * H:])
        i, f, o = ifo[..., :H], ifo[..., H: 2 * H], ifo[..., 2 * H:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((xh, ifo, g, c, tc))
        h = o * tc
        c = c_new
    return h, cache


def _lstm_backward(W: np.ndarray, cache, dh: np.ndarray, D: int, need_x: bool):
    S, B, _ = dh.shape
    H = W.shape[2] // 4
    T = len(cache)
    dW = np.zeros_like(W)
    db = np.zeros((S, 4 * H), dtype=W.dtype)
    dX = np.zeros((S, B, T, D), dtype=W.dtype) if need_x else None
    Wt = np.swapaxes(W, 1, 2)
    dc = np.zeros_like(dh)
    da = np.empty((S, B, 4 * H), dtype=W.dtype)
    for t in range(T - 1, -1, -1):
        xh, ifo, g, c_prev, tc = cache[t]
        i, f, o = ifo[..., :H], ifo[..., H: 2 * H], ifo[..., 2 * H:]
        dc = dc + dh * o * (1.0 - tc * tc)
        da[..., :H] = dc * g * i * (1.0 - i)
        da[..., H: 2 * H] = dc * c_prev * f * (1.0 - f)
        da[..., 2 * H: 3 * H] = dh * tc * o * (1.0 - o)
        da[..., 3 * H:] = dc * i * (1.0 - g * g)
        dc = dc * f
        dW += np.matmul(np.swapaxes(xh, 1, 2), da)
        db += da.sum(axis=1)
        dxh = np.matmul(da, Wt)
        if need_x:
            dX[:, :, t, :] = dxh[..., :D]
        dh = dxh[..., D:]
    return dW, db, dX


def _check_sequences(cells: Sequence[LSTMCell], seqs: Tensor) -> None:
    if seqs.ndim != 4 or seqs.shape[0] != len(cells):
        raise DimensionError(
            f"expected sequences shaped (streams={len(cells)}, batch, T, d), got {seqs.shape}"
        )
    if seqs.shape[2] < 1:
        raise ContractError("cannot encode an empty sequence")
    H = cells[0].hidden_size
    for cell in cells:
        if cell.input_size != seqs.shape[3]:
            raise DimensionError(
                f"sequence feature dim {seqs.shape[3]} does not match cell input {cell.input_size}"
            )
        if cell.hidden_size != H:
            raise DimensionError("cells encoded together must share a hidden size")


def lstm_encode_streams(cells: Sequence[LSTMCell], seqs) -> Tensor:
    """Encode ``S`` streams, each with its own cell, in one fused primitive.

    ``seqs`` has shape ``(S, batch, T, d)``; the result is the final hidden
    state of every stream, shape ``(S, batch, hidden)``. Zero initial state.
    The backward pass is hand-written backpropagation through time.
    """
    seqs = ad.as_tensor(seqs)
    cells = list(cells)
    _check_sequences(cells, seqs)
    dtype = cells[0].W_i.dtype
    W = np.stack([np.concatenate([w.data for w in c.weights()], axis=0).T for c in cells])
    b = np.stack([np.concatenate([v.data for v in c.biases()]) for c in cells])
    X = seqs.data.astype(dtype, copy=False)
    h, cache = _lstm_forward(W, b, X)
    D = X.shape[3]
    H = cells[0].hidden_size
    parents: list[Tensor] = [seqs]
    for c in cells:
        parents.extend(c.weights())
        parents.extend(c.biases())

    def grad_fn(g):
        dW, db, dX = _lstm_backward(W, cache, g, D, seqs.requires_grad)
        grads: list = [dX]
        for s in range(len(cells)):
            dWs = dW[s].T
            grads.extend(dWs[k * H: (k + 1) * H] for k in range(4))
            grads.extend(db[s, k * H: (k + 1) * H] for k in range(4))
        return grads

    return ad.apply_op(h, parents, grad_fn, "lstm_encode")


def lstm_encode(cell: LSTMCell, seq) -> Tensor:
    """Final hidden state ``h_T`` for ``seq`` of shape ``(T, d)`` or ``(batch, T, d)``."""
    seq = ad.as_tensor(seq)
    if seq.ndim not in (2, 3):
        raise DimensionError(f"lstm_encode: expected (T, d) or (batch, T, d), got {seq.shape}")
    if seq.shape[-2] < 1:
        raise ContractError("cannot encode an empty sequence")
    single = seq.ndim == 2
    if single:
        seq = _reshape(seq, (1, 1) + seq.shape)
    else:
        seq = _reshape(seq, (1,) + seq.shape)
    h = ad.select(lstm_encode_streams([cell], seq), 0)
    return ad.select(h, 0) if single else h


def _reshape(t: Tensor, shape) -> Tensor:
    old = t.shape
    return ad.apply_op(t.data.reshape(shape), (t,), lambda g: (g.reshape(old),), "reshape")


# --------------------------------------------------------------------------
# losses


def bce_loss(p: Tensor, target) -> Tensor:
    """Mean binary cross-entropy, with ``p`` clamped to ``[1e-7, 1 - 1e-7]``."""
    p = ad.as_tensor(p)
    t = np.broadcast_to(np.asarray(target, dtype=p.dtype), p.shape)
    pc = ad.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    terms = ad.add(
        ad.mul(Tensor(t), ad.log(pc)),
        ad.mul(Tensor(1.0 - t), ad.log(1.0 - pc)),
    )
    return ad.neg(ad.mean(terms))


def categorical_ce_loss(probs: Tensor, labels) -> Tensor:
    """Mean of ``-log probs[i, labels[i]]`` with the same clamp as :func:`bce_loss`."""
    probs = ad.as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2:
        raise DimensionError(f"categorical_ce_loss expects (batch, k) probabilities, got {probs.shape}")
    k = probs.shape[1]
    if labels.shape != (probs.shape[0],):
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for batch {probs.shape[0]}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"labels must lie in [0, {k})")
    picked = ad.clip(ad.pick(probs, labels), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return ad.neg(ad.mean(ad.log(picked)))


# --------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class LRSchedule:
    """Two-phase step schedule: ``lr1`` for ``epochs1`` epochs, then ``lr2``."""

    lr1: float = 1e-3
    epochs1: int = 12
    lr2: float = 1e-4
    epochs2: int = 38

    def lr_at(self, epoch: int) -> float:
        return self.lr1 if epoch < self.epochs1 else self.lr2

    @property
    def total_epochs(self) -> int:
        return self.epochs1 + self.epochs2

    @classmethod
    def long_run(cls) -> "LRSchedule":
        return cls(lr1=0.1, epochs1=250, lr2=0.01, epochs2=750)

    @classmethod
    def desk(cls, epochs: int, lr: float = 1e-3) -> "LRSchedule":
        """Factor-10 drop after the first quarter of ``epochs``."""
        first = max(1, epochs // 4)
        return cls(lr1=lr, epochs1=first, lr2=lr / 10.0, epochs2=max(0, epochs - first))


class Adam:
    """Bias-corrected Adam over a fixed, named set of parameters."""

    def __init__(self, params: dict[str, Tensor], schedule: LRSchedule | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.schedule = schedule or LRSchedule()
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, epoch: int) -> float:
        """Apply one update with the learning rate scheduled for ``epoch``.

        Raises :class:`TrainingError` (before touching any parameter) when a
        gradient holds NaN or Inf.
        """
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in {name}", parameter=name)
        lr = self.schedule.lr_at(epoch)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
        return lr

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"t": np.array([self.t], dtype=np.float64)}
        for k in self.params:
            state[f"m.{k}"] = self.m[k].copy()
            state[f"v.{k}"] = self.v[k].copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["t"][0])
        for k, p in self.params.items():
            self.m[k] = np.asarray(state[f"m.{k}"], dtype=p.dtype).reshape(p.shape).copy()
            self.v[k] = np.asarray(state[f"v.{k}"], dtype=p.dtype).reshape(p.shape).copy()


def adam_step(state: Adam, epoch: int) -> float:
    return state.step(epoch)
