"""Finite-difference checks over every differentiable building block.

Each component builds a tiny float64 instance, reduces its output to a
scalar with a fixed random projection (so gradients are not all ones) and
compares backprop against central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_diff_check
from .fusion import GatedFusionUnit, gfu_forward, gfu_pair_forward
from .models import Discriminator, Generator, ModelConfig, d_loss, g_loss
from .nn import DenseLayer, LSTMCell, bce_loss, categorical_ce_loss, lstm_encode, lstm_encode_streams, lstm_step

DEFAULT_TOLERANCE = 1e-5
# balances truncation (eps^2) against roundoff (1e-16 |f| / eps) for O(1) losses
DEFAULT_EPSILON = 1e-5


@dataclass
class ComponentResult:
    name: str
    errors: dict[str, float]
    tolerance: float
    seconds: float

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst_parameter(self) -> str:
        return max(self.errors, key=self.errors.get) if self.errors else ""

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


@dataclass
class SuiteReport:
    components: list[ComponentResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.components)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.components if not c.passed]

    def to_text(self) -> str:
        lines = []
        for c in self.components:
            status = "ok" if c.passed else "FAIL"
            lines.append(f"{c.name:<22} {status:<4} worst={c.worst:.3e} ({c.worst_parameter}) {c.seconds:.2f}s")
        lines.append(f"{len(self.components)} components, {len(self.failed)} failed")
        return "\n".join(lines) + "\n"


def _leaf(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _projection(rng, out: Tensor) -> Callable[[Tensor], Tensor]:
    weights = Tensor(rng.standard_normal(out.shape))
    return lambda t: ad.sum(ad.mul(t, weights))


def _prefixed(prefix: str, module) -> dict[str, Tensor]:
    return {f"{prefix}.{k}": v for k, v in module.parameters().items()}


# --------------------------------------------------------------------------
# component cases; each returns (loss closure, params)


def _case_dense(rng):
    layers = [DenseLayer(4, 3, act, rng) for act in ("none", "tanh", "sigmoid", "softmax")]
    x = _leaf(rng, 2, 4)
    outs = [layer(x) for layer in layers]
    projs = [_projection(rng, o) for o in outs]

    def f():
        total = projs[0](layers[0](x))
        for layer, proj in zip(layers[1:], projs[1:]):
            total = ad.add(total, proj(layer(x)))
        return total

    params = {"x": x}
    for layer, act in zip(layers, ("none", "tanh", "sigmoid", "softmax")):
        params.update(_prefixed(act, layer))
    return f, params


def _case_lstm_step(rng):
    cell = LSTMCell(3, 2, rng)
    x, h, c = _leaf(rng, 3), _leaf(rng, 2), _leaf(rng, 2)
    h1, c1 = lstm_step(cell, x, h, c)
    ph, pc = _projection(rng, h1), _projection(rng, c1)

    def f():
        h_new, c_new = lstm_step(cell, x, h, c)
        return ad.add(ph(h_new), pc(c_new))

    return f, {"x": x, "h": h, "c": c, **_prefixed("cell", cell)}


def _case_lstm_sequence(rng):
    single = LSTMCell(2, 3, rng)
    cells = [LSTMCell(2, 3, rng) for _ in range(2)]
    seq = _leaf(rng, 2, 4, 2)
    seqs = _leaf(rng, 2, 2, 3, 2)
    p1 = _projection(rng, lstm_encode(single, seq))
    p2 = _projection(rng, lstm_encode_streams(cells, seqs))

    def f():
        return ad.add(p1(lstm_encode(single, seq)), p2(lstm_encode_streams(cells, seqs)))

    params = {"seq": seq, "seqs": seqs, **_prefixed("single", single)}
    for i, cell in enumerate(cells):
        params.update(_prefixed(f"stream{i}", cell))
    return f, params


def _gfu_case(m: int):
    def case(rng):
        dims = ([2, 3, 2, 1] * m)[:m]
        unit = GatedFusionUnit(dims, 3, rng)
        for w in unit.streams:
            w.gate_bias.data = rng.standard_normal(w.gate_bias.shape)
        streams = [_leaf(rng, 2, d) for d in dims]
        proj = _projection(rng, gfu_forward(unit, streams))

        def f():
            return proj(gfu_forward(unit, streams))

        params = {f"stream{i}": z for i, z in enumerate(streams)}
        params.update(_prefixed("unit", unit))
        return f, params

    return case


def _case_gfu_pair(rng):
    unit = GatedFusionUnit([3, 3], 2, rng)
    code, scene = _leaf(rng, 3), _leaf(rng, 3)
    proj = _projection(rng, gfu_pair_forward(unit, code, scene))

    def f():
        return proj(gfu_pair_forward(unit, code, scene))

    return f, {"code": code, "scene": scene, **_prefixed("unit", unit)}


_SMALL = ModelConfig(n_persons=2, seq_len=3, feature_dim=2, n_classes=3, hidden=3, z_dim=2)


def _case_generator(rng):
    gen = Generator(_SMALL, rng=rng)
    persons = rng.standard_normal((2, 2, 3, 2))
    scene = rng.standard_normal((2, 3, 2))
    z = rng.standard_normal((2, 2))
    proj = _projection(rng, gen(persons, scene, z))

    def f():
        return proj(gen(persons, scene, z))

    return f, _prefixed("generator", gen)


def _case_discriminator(rng):
    disc = Discriminator(_SMALL, rng=rng)
    scene = rng.standard_normal((4, 3, 2))
    codes = Tensor(rng.uniform(0.05, 0.95, size=(4, 3)), requires_grad=True)
    labels = np.array([0, 2])

    def f():
        p, cls = disc(scene, codes)
        # rows 0-1 play the real half, rows 2-3 the fake half
        p_real = ad.stack([ad.select(p, 0), ad.select(p, 1)])
        p_fake = ad.stack([ad.select(p, 2), ad.select(p, 3)])
        cls_real = ad.stack([ad.select(cls, 0), ad.select(cls, 1)])
        return d_loss(p_real, p_fake, cls_real, labels, 2.5)

    return f, {"codes": codes, **_prefixed("discriminator", disc)}


def _case_losses(rng):
    p = Tensor(rng.uniform(0.1, 0.9, size=5), requires_grad=True)
    logits = _leaf(rng, 4, 3)
    labels = np.array([0, 2, 1, 2])

    def f():
        probs = ad.softmax(logits)
        total = ad.add(bce_loss(p, 1.0), bce_loss(p, 0.0))
        total = ad.add(total, categorical_ce_loss(probs, labels))
        return ad.add(total, g_loss(p, probs, labels, 2.5, "minimax"))

    return f, {"p": p, "logits": logits}


def _case_gan_objective(rng):
    gen = Generator(_SMALL, rng=rng)
    disc = Discriminator(_SMALL, rng=rng)
    persons = rng.standard_normal((2, 2, 3, 2))
    scene = rng.standard_normal((2, 3, 2))
    z = rng.standard_normal((2, 2))
    labels = np.array([1, 0])

    def f():
        p_fake, cls_fake = disc(scene, gen(persons, scene, z))
        return g_loss(p_fake, cls_fake, labels, 2.5)

    return f, {**_prefixed("generator", gen), **_prefixed("discriminator", disc)}


COMPONENTS: dict[str, Callable] = {
    "dense": _case_dense,
    "lstm_step": _case_lstm_step,
    "lstm_sequence": _case_lstm_sequence,
    "gated_fusion_m1": _gfu_case(1),
    "gated_fusion_m2": _gfu_case(2),
    "gated_fusion_m4": _gfu_case(4),
    "gated_fusion_pair": _case_gfu_pair,
    "generator": _case_generator,
    "discriminator": _case_discriminator,
    "losses": _case_losses,
    "gan_objective": _case_gan_objective,
}


def run_suite(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE, epsilon: float = DEFAULT_EPSILON,
              only: list[str] | None = None) -> SuiteReport:
    """Run the finite-difference checks; ``only`` restricts to named components."""
    report = SuiteReport()
    for i, (name, case) in enumerate(COMPONENTS.items()):
        if only is not None and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        start = time.perf_counter()
        f, params = case(rng)
        result = finite_diff_check(f, params, epsilon=epsilon, tolerance=tolerance)
        report.components.append(ComponentResult(name, result.errors, tolerance, time.perf_counter() - start))
    return report
