"""Gated fusion of several feature streams.

For streams ``Z_1 .. Z_M`` the unit computes

    h_n = tanh(E_n Z_n)
    q_n = sigmoid(G_n [Z_1, ..., Z_M] + b_n)
    C   = sum_n h_n * q_n

so every gate looks at all streams, while each embedding sees only its own.
Sums over streams are taken in a canonical (sorted) order, which makes the
output bit-for-bit invariant to reordering the streams together with their
weights.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError
from .nn import DenseLayer, Module, glorot_uniform


def _canonical_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    if len(arrays) == 1:
        return arrays[0].copy()
    return np.sort(np.stack(arrays), axis=0).sum(axis=0)


class StreamWeights(Module):
    """Encode and gate parameters owned by one stream."""

    def __init__(self, stream_dim: int, total_dim: int, fused: int, rng, dtype):
        self.encode = Tensor(glorot_uniform(rng, fused, stream_dim, dtype), requires_grad=True)
        self.gate = Tensor(glorot_uniform(rng, fused, total_dim, dtype), requires_grad=True)
        self.gate_bias = Tensor(np.zeros(fused, dtype=dtype), requires_grad=True)


class GatedFusionUnit(Module):
    def __init__(self, stream_dims: Sequence[int], fused: int,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if len(stream_dims) < 1:
            raise ContractError("a fusion unit needs at least one stream")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stream_dims = [int(d) for d in stream_dims]
        self.fused = int(fused)
        total = sum(self.stream_dims)
        self.streams = [StreamWeights(d, total, self.fused, rng, dtype) for d in self.stream_dims]

    @property
    def n_streams(self) -> int:
        return len(self.stream_dims)

    def __call__(self, streams: Sequence[Tensor]) -> Tensor:
        return gfu_forward(self, streams)


def _block_affine(streams: Sequence[Tensor], weight: Tensor, bias: Tensor,
                  dims: Sequence[int]) -> Tensor:
    """``weight @ concat(streams) + bias`` with the column blocks summed canonically."""
    bounds = np.cumsum([0] + list(dims))
    blocks = [np.ascontiguousarray(weight.data[:, bounds[j]: bounds[j + 1]]) for j in range(len(dims))]
    parts = [z.data @ blk.T for z, blk in zip(streams, blocks)]
    value = _canonical_sum(parts) + bias.data

    def grad_fn(g):
        grads = []
        for z, blk in zip(streams, blocks):
            grads.append(g @ blk if z.requires_grad else None)
        gw = None
        if weight.requires_grad:
            gw = np.concatenate(
                [np.outer(g, z.data) if z.ndim == 1 else g.T @ z.data for z in streams], axis=1
            )
        gb = (g if g.ndim == 1 else g.sum(axis=0)) if bias.requires_grad else None
        return grads + [gw, gb]

    return ad.apply_op(value, list(streams) + [weight, bias], grad_fn, "gate_preactivation")


def _gated_sum_backward(g: np.ndarray, hs: Sequence[np.ndarray], qs: Sequence[np.ndarray]):
    return [g * q for q in qs] + [g * h for h in hs]


def _gated_sum(hs: Sequence[Tensor], qs: Sequence[Tensor]) -> Tensor:
    h_data = [h.data for h in hs]
    q_data = [q.data for q in qs]
    value = _canonical_sum([h * q for h, q in zip(h_data, q_data)])

    def grad_fn(g):
        # looked up at call time so tests can swap in a corrupted version
        return _gated_sum_backward(g, h_data, q_data)

    return ad.apply_op(value, list(hs) + list(qs), grad_fn, "gated_sum")


def _check_streams(unit: GatedFusionUnit, streams: Sequence[Tensor]) -> list[Tensor]:
    streams = [ad.as_tensor(z) for z in streams]
    if len(streams) != unit.n_streams:
        raise DimensionError(f"fusion unit expects {unit.n_streams} streams, got {len(streams)}")
    lead = streams[0].shape[:-1]
    for n, (z, dim) in enumerate(zip(streams, unit.stream_dims)):
        if z.ndim not in (1, 2) or z.shape[-1] != dim or z.shape[:-1] != lead:
            raise DimensionError(f"stream {n} has shape {z.shape}, expected (..., {dim}) with batch {lead}")
    return streams


def _forward(unit: GatedFusionUnit, streams: Sequence[Tensor]) -> tuple[Tensor, list[Tensor]]:
    streams = _check_streams(unit, streams)
    hs, qs = [], []
    for z, w in zip(streams, unit.streams):
        hs.append(ad.tanh(ad.linear(z, w.encode)))
        qs.append(ad.sigmoid(_block_affine(streams, w.gate, w.gate_bias, unit.stream_dims)))
    return _gated_sum(hs, qs), qs


def gfu_forward(unit: GatedFusionUnit, streams: Sequence[Tensor]) -> Tensor:
    """Fused output ``C`` for ``M`` streams of shape ``(dim_n,)`` or ``(batch, dim_n)``."""
    return _forward(unit, streams)[0]


def gfu_pair_forward(unit: GatedFusionUnit, code_embed: Tensor, scene_embed: Tensor) -> Tensor:
    """Two-stream fusion of an embedded action code with a scene encoding."""
    if unit.n_streams != 2:
        raise DimensionError(f"pair fusion needs a two-stream unit, this one has {unit.n_streams}")
    return gfu_forward(unit, [code_embed, scene_embed])


def gfu_with_gates(unit: GatedFusionUnit, streams: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    """Fused output together with the stacked gates ``(M, ..., fused)`` of the same pass."""
    out, qs = _forward(unit, streams)
    return out, ad.stack(qs)


def gate_activations(unit: GatedFusionUnit, streams: Sequence[Tensor]) -> Tensor:
    """All gate values ``q_n`` stacked along a new leading axis of size ``M``."""
    return gfu_with_gates(unit, streams)[1]


class ConcatFusion(Module):
    """Ablation stand-in for the gated unit: ``tanh(W [Z_1, ..., Z_M] + b)``."""

    def __init__(self, stream_dims: Sequence[int], fused: int,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        self.stream_dims = [int(d) for d in stream_dims]
        self.fused = int(fused)
        self.dense = DenseLayer(sum(self.stream_dims), self.fused, "tanh", rng=rng, dtype=dtype)

    @property
    def n_streams(self) -> int:
        return len(self.stream_dims)

    def __call__(self, streams: Sequence[Tensor]) -> Tensor:
        if len(streams) != self.n_streams:
            raise DimensionError(f"concat fusion expects {self.n_streams} streams, got {len(streams)}")
        return self.dense(ad.concat(list(streams), axis=-1))
