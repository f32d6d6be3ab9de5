"""Generator, discriminator, the GAN losses and ablation assemblies."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError
from .fusion import ConcatFusion, GatedFusionUnit, gfu_pair_forward, gfu_with_gates
from .nn import DenseLayer, LSTMCell, Module, bce_loss, categorical_ce_loss, lstm_encode, lstm_encode_streams

DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by every variant."""

    n_persons: int
    seq_len: int
    feature_dim: int
    n_classes: int
    hidden: int = 300
    z_dim: int = 16
    fused: Optional[int] = None
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("n_persons", "seq_len", "feature_dim", "n_classes", "hidden"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.z_dim < 0:
            raise ContractError("z_dim must be non-negative")
        if self.fused is not None and self.fused < 1:
            raise ContractError("fused must be positive")
        if self.dtype not in DTYPES:
            raise ContractError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def fused_dim(self) -> int:
        return self.hidden if self.fused is None else self.fused

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def to_dict(self) -> dict:
        return asdict(self)


class Generator(Module):
    """Person and scene sequences plus noise to a normalised action code.

    Stream order is fixed: person slots ``0 .. N-1`` followed by the scene.
    With ``use_scene=False`` the scene stream is dropped; with
    ``use_gfu=False`` the gated unit is replaced by concatenation and a dense
    tanh layer.
    """

    def __init__(self, config: ModelConfig, use_gfu: bool = True, use_scene: bool = True,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        dtype = config.np_dtype
        self.config = config
        self.use_gfu = use_gfu
        self.use_scene = use_scene
        n_streams = config.n_persons + (1 if use_scene else 0)
        self.lstms = [LSTMCell(config.feature_dim, config.hidden, rng, dtype) for _ in range(n_streams)]
        dims = [config.hidden] * n_streams
        if use_gfu:
            self.fusion = GatedFusionUnit(dims, config.fused_dim, rng, dtype)
        else:
            self.fusion = ConcatFusion(dims, config.fused_dim, rng, dtype)
        self.out = DenseLayer(config.fused_dim + config.z_dim, config.n_classes, "sigmoid", rng, dtype)

    @property
    def n_streams(self) -> int:
        return len(self.lstms)

    def _stack_inputs(self, persons, scene) -> Tensor:
        persons = np.asarray(persons)
        scene = np.asarray(scene)
        cfg = self.config
        if persons.ndim != 4 or persons.shape[1:] != (cfg.n_persons, cfg.seq_len, cfg.feature_dim):
            raise DimensionError(
                f"persons must be (batch, {cfg.n_persons}, {cfg.seq_len}, {cfg.feature_dim}), got {persons.shape}"
            )
        if scene.shape != (persons.shape[0], cfg.seq_len, cfg.feature_dim):
            raise DimensionError(f"scene must be (batch, {cfg.seq_len}, {cfg.feature_dim}), got {scene.shape}")
        seqs = np.swapaxes(persons, 0, 1)
        if self.use_scene:
            seqs = np.concatenate([seqs, scene[None]], axis=0)
        return Tensor(np.ascontiguousarray(seqs, dtype=cfg.np_dtype))

    def encode_streams(self, persons, scene) -> list[Tensor]:
        """Final LSTM state of every stream, each ``(batch, hidden)``."""
        hs = lstm_encode_streams(self.lstms, self._stack_inputs(persons, scene))
        return [ad.select(hs, s) for s in range(self.n_streams)]

    def _fuse(self, streams) -> tuple[Tensor, Optional[Tensor]]:
        if self.use_gfu:
            return gfu_with_gates(self.fusion, streams)
        return self.fusion(streams), None

    def _code(self, fused: Tensor, z) -> Tensor:
        cfg = self.config
        batch = fused.shape[0]
        if z is None:
            z = np.zeros((batch, cfg.z_dim))
        z = np.asarray(z, dtype=cfg.np_dtype)
        if z.shape != (batch, cfg.z_dim):
            raise DimensionError(f"z must be ({batch}, {cfg.z_dim}), got {z.shape}")
        x = ad.concat([fused, Tensor(z)], axis=1) if cfg.z_dim else fused
        return self.out(x)

    def __call__(self, persons, scene, z=None) -> Tensor:
        """Normalised codes ``(batch, k)`` in (0, 1); ``z=None`` means the zero vector."""
        fused, _ = self._fuse(self.encode_streams(persons, scene))
        return self._code(fused, z)

    def forward_with_gates(self, persons, scene, z=None) -> tuple[Tensor, Tensor]:
        if not self.use_gfu:
            raise ContractError("this generator has no gated fusion unit")
        fused, gates = self._fuse(self.encode_streams(persons, scene))
        return self._code(fused, z), gates

    def gate_activations(self, persons, scene) -> np.ndarray:
        """Gate values ``(streams, batch, fused)`` for the given inputs."""
        with ad.no_grad():
            return self.forward_with_gates(persons, scene)[1].data


class Discriminator(Module):
    """Scene sequence plus action code to (real probability, class probabilities)."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        dtype = config.np_dtype
        self.config = config
        self.scene_lstm = LSTMCell(config.feature_dim, config.hidden, rng, dtype)
        self.code_embed = DenseLayer(config.n_classes, config.hidden, "tanh", rng, dtype)
        self.fusion = GatedFusionUnit([config.hidden, config.hidden], config.fused_dim, rng, dtype)
        self.adv_head = DenseLayer(config.fused_dim, 1, "sigmoid", rng, dtype)
        self.cls_head = DenseLayer(config.fused_dim, config.n_classes, "softmax", rng, dtype)

    def __call__(self, scene, codes) -> tuple[Tensor, Tensor]:
        cfg = self.config
        scene = np.asarray(scene)
        if scene.ndim != 3 or scene.shape[1:] != (cfg.seq_len, cfg.feature_dim):
            raise DimensionError(f"scene must be (batch, {cfg.seq_len}, {cfg.feature_dim}), got {scene.shape}")
        codes = ad.as_tensor(codes)
        if codes.shape != (scene.shape[0], cfg.n_classes):
            raise DimensionError(f"codes must be ({scene.shape[0]}, {cfg.n_classes}), got {codes.shape}")
        scene_z = lstm_encode(self.scene_lstm, Tensor(scene.astype(cfg.np_dtype)))
        fused = gfu_pair_forward(self.fusion, self.code_embed(codes), scene_z)
        p_real = ad.select(self.adv_head(fused), 0, axis=1)
        return p_real, self.cls_head(fused)


class SoftmaxHead(Module):
    """Dense softmax layer placed on top of generated codes."""

    def __init__(self, n_classes: int, rng: np.random.Generator | None = None, dtype=np.float64):
        self.dense = DenseLayer(n_classes, n_classes, "softmax", rng, dtype)

    def __call__(self, codes: Tensor) -> Tensor:
        return self.dense(codes)


# --------------------------------------------------------------------------
# objective


def d_loss(p_real_on_real: Tensor, p_real_on_fake: Tensor, class_probs_real: Tensor,
           labels, lambda_c: float = 2.5) -> Tensor:
    """BCE(real -> 1) + BCE(fake -> 0) + lambda_c * CE on the real half."""
    loss = ad.add(bce_loss(p_real_on_real, 1.0), bce_loss(p_real_on_fake, 0.0))
    if lambda_c:
        loss = ad.add(loss, ad.scale(categorical_ce_loss(class_probs_real, labels), lambda_c))
    return loss


def g_loss(p_real_on_fake: Tensor, class_probs_fake: Tensor, labels, lambda_c: float = 2.5,
           form: str = "non_saturating", class_term: bool = True) -> Tensor:
    """Generator objective on generated codes.

    ``form="non_saturating"`` minimises ``-log D(fake)``; ``form="minimax"``
    minimises ``log(1 - D(fake))`` as written in the min-max game.
    """
    if form == "non_saturating":
        loss = bce_loss(p_real_on_fake, 1.0)
    elif form == "minimax":
        loss = ad.neg(bce_loss(p_real_on_fake, 0.0))
    else:
        raise ContractError(f"unknown generator loss form {form!r}")
    if class_term and lambda_c:
        loss = ad.add(loss, ad.scale(categorical_ce_loss(class_probs_fake, labels), lambda_c))
    return loss


# --------------------------------------------------------------------------
# ablation variants


@dataclass(frozen=True)
class VariantSpec:
    gfu: bool
    scene: bool
    adversarial: bool
    label: str


VARIANTS: dict[str, VariantSpec] = {
    "mls_gan": VariantSpec(gfu=True, scene=True, adversarial=True, label="MLS-GAN"),
    "g_gfu_ablated": VariantSpec(gfu=False, scene=True, adversarial=False, label="G-GFU"),
    "g_supervised": VariantSpec(gfu=True, scene=True, adversarial=False, label="G"),
    "cgan_no_gfu_no_scene": VariantSpec(gfu=False, scene=False, adversarial=True, label="cGAN-(GFU and scene)"),
    "cgan_gfu": VariantSpec(gfu=False, scene=True, adversarial=True, label="cGAN-GFU"),
    "mls_gan_no_scene": VariantSpec(gfu=True, scene=False, adversarial=True, label="MLS-GAN-scene"),
}


@dataclass
class ModelAssembly:
    """A generator plus either a discriminator (GAN variants) or a softmax head."""

    variant: str
    config: ModelConfig
    generator: Generator
    discriminator: Optional[Discriminator] = None
    head: Optional[SoftmaxHead] = None

    @property
    def spec(self) -> VariantSpec:
        return VARIANTS[self.variant]

    def modules(self) -> dict[str, Module]:
        out: dict[str, Module] = {"generator": self.generator}
        if self.discriminator is not None:
            out["discriminator"] = self.discriminator
        if self.head is not None:
            out["head"] = self.head
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for prefix, module in self.modules().items():
            for name, arr in module.state_dict().items():
                state[f"{prefix}.{name}"] = arr
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for prefix, module in self.modules().items():
            sub = {k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + ".")}
            module.load_state_dict(sub)

    def class_probs(self, persons, scene, z=None) -> Tensor:
        """Class probabilities used for prediction."""
        codes = self.generator(persons, scene, z)
        if self.spec.adversarial:
            return self.discriminator(scene, codes)[1]
        return self.head(codes)


def build_variant(variant: str, config: ModelConfig, rng: np.random.Generator | None = None) -> ModelAssembly:
    if variant not in VARIANTS:
        raise ContractError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = VARIANTS[variant]
    gen = Generator(config, use_gfu=spec.gfu, use_scene=spec.scene, rng=rng)
    if spec.adversarial:
        return ModelAssembly(variant, config, gen, discriminator=Discriminator(config, rng))
    return ModelAssembly(variant, config, gen, head=SoftmaxHead(config.n_classes, rng, config.np_dtype))
