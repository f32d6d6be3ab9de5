"""Alternating GAN training, supervised ablations, inference and probes."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .codes import encode_batch
from .data import Dataset, SceneSample
from .exceptions import ContractError, MLSGANError, NumericError, TrainingError
from .metrics import MetricsReport
from .models import VARIANTS, ModelAssembly, ModelConfig, build_variant, d_loss, g_loss
from .nn import Adam, DenseLayer, LRSchedule, categorical_ce_loss, frozen
from .rng import stream

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "d_loss", "g_loss", "mca", "mpca")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lambda_c: float = 2.5
    lr: float = 1e-3
    lr_drop_epoch: Optional[int] = None
    lr2: Optional[float] = None
    long_schedule: bool = False
    seed: int = 0
    variant: str = "mls_gan"
    eval_every: int = 1
    generator_loss: str = "non_saturating"
    g_class_loss: bool = True

    def validate(self) -> None:
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ContractError("batch_size must be even and at least 2")
        if self.lambda_c < 0:
            raise ContractError("lambda_c must be >= 0")
        if self.lr <= 0:
            raise ContractError("lr must be positive")
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")
        if self.generator_loss not in ("non_saturating", "minimax"):
            raise ContractError("generator_loss must be 'non_saturating' or 'minimax'")

    def schedule(self) -> LRSchedule:
        if self.long_schedule:
            return LRSchedule.long_run()
        first = self.lr_drop_epoch if self.lr_drop_epoch is not None else max(1, self.epochs // 4)
        lr2 = self.lr2 if self.lr2 is not None else self.lr / 10.0
        return LRSchedule(lr1=self.lr, epochs1=first, lr2=lr2, epochs2=max(0, self.epochs - first))

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class EpochRecord:
    epoch: int
    d_loss: Optional[float]
    g_loss: float
    mca: Optional[float] = None
    mpca: Optional[float] = None

    def csv_row(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [str(self.epoch), fmt(self.d_loss), fmt(self.g_loss), fmt(self.mca), fmt(self.mpca)]


@dataclass
class TrainedModel:
    assembly: ModelAssembly
    train_config: TrainConfig
    g_opt: Adam
    d_opt: Optional[Adam]
    epochs_done: int = 0
    history: list[EpochRecord] = field(default_factory=list)
    steps: dict = field(default_factory=lambda: {"d": 0, "g": 0})

    @property
    def variant(self) -> str:
        return self.assembly.variant


def model_config_for(dataset: Dataset, **kwargs) -> ModelConfig:
    return ModelConfig(dataset.n_persons, dataset.seq_len, dataset.feature_dim, dataset.n_classes, **kwargs)


def _generator_side(assembly: ModelAssembly) -> dict:
    params = {f"generator.{k}": v for k, v in assembly.generator.parameters().items()}
    if assembly.head is not None:
        params.update({f"head.{k}": v for k, v in assembly.head.parameters().items()})
    return params


def init_model(model_config: ModelConfig, train_config: TrainConfig) -> TrainedModel:
    train_config.validate()
    assembly = build_variant(train_config.variant, model_config, stream(train_config.seed, "init"))
    schedule = train_config.schedule()
    g_opt = Adam(_generator_side(assembly), schedule)
    d_opt = None
    if assembly.discriminator is not None:
        d_opt = Adam({f"discriminator.{k}": v for k, v in assembly.discriminator.parameters().items()}, schedule)
    return TrainedModel(assembly, train_config, g_opt, d_opt)


def _check_compatible(dataset: Dataset, cfg: ModelConfig) -> None:
    if (dataset.n_persons, dataset.seq_len, dataset.feature_dim, dataset.n_classes) != (
        cfg.n_persons, cfg.seq_len, cfg.feature_dim, cfg.n_classes
    ):
        raise ContractError("dataset dimensions (N, T, d, k) do not match the model configuration")


def train(
    dataset: Dataset,
    train_config: TrainConfig,
    model_config: ModelConfig | None = None,
    test_set: Dataset | None = None,
    resume: TrainedModel | None = None,
    callback: Callable[[str, int, int, TrainedModel], None] | None = None,
) -> tuple[TrainedModel, list[EpochRecord]]:
    """Train ``train_config.epochs`` epochs and return the model and new epoch records.

    GAN variants alternate one discriminator step and one generator step per
    mini-batch. In the discriminator step the first half of the batch is
    paired with ground-truth codes and the second half with codes generated
    (without gradient) for those same scenes. Supervised variants take a
    single cross-entropy step per batch. ``callback(phase, epoch, batch,
    model)`` runs after every optimiser step.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    train_config.validate()
    if resume is None:
        model_config = model_config or model_config_for(dataset)
        model = init_model(model_config, train_config)
    else:
        model = resume
        model.train_config = train_config
    cfg = model.assembly.config
    _check_compatible(dataset, cfg)
    adversarial = model.assembly.spec.adversarial
    n = len(dataset)
    bs = train_config.batch_size
    records = []
    start = model.epochs_done
    for epoch in range(start, start + train_config.epochs):
        order = stream(train_config.seed, "shuffle", epoch).permutation(n)
        z_rng = stream(train_config.seed, "z", epoch)
        d_losses, g_losses = [], []
        for b, lo in enumerate(range(0, n, bs)):
            idx = np.sort(order[lo: lo + bs])
            if adversarial and idx.size < 2:
                continue
            try:
                if adversarial:
                    d_losses.append(_d_step(model, dataset, idx, epoch, z_rng))
                    if callback:
                        callback("d", epoch, b, model)
                    g_losses.append(_g_step(model, dataset, idx, epoch, z_rng))
                else:
                    g_losses.append(_supervised_step(model, dataset, idx, epoch, z_rng))
                if callback:
                    callback("g", epoch, b, model)
            except TrainingError as exc:
                exc.epoch, exc.batch = epoch, b
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}", epoch=epoch, batch=b,
                                    head=exc.head, parameter=exc.parameter) from exc
        rec = EpochRecord(
            epoch=epoch,
            d_loss=float(np.mean(d_losses)) if d_losses else None,
            g_loss=float(np.mean(g_losses)) if g_losses else float("nan"),
        )
        is_last = epoch == start + train_config.epochs - 1
        if test_set is not None and len(test_set) and ((epoch + 1) % train_config.eval_every == 0 or is_last):
            report = evaluate(model, test_set)
            rec.mca, rec.mpca = report.mca, report.mpca
        model.epochs_done = epoch + 1
        model.history.append(rec)
        records.append(rec)
        log.info("epoch %d d_loss=%s g_loss=%.4f mca=%s", epoch, rec.d_loss, rec.g_loss, rec.mca)
    return model, records


def _noise(z_rng, batch: int, cfg: ModelConfig) -> np.ndarray:
    return z_rng.standard_normal((batch, cfg.z_dim)).astype(cfg.np_dtype)


def _guard(fn, head: str):
    try:
        return fn()
    except NumericError as exc:
        raise TrainingError(f"non-finite value in {head}: {exc}", head=head) from exc


def _d_step(model: TrainedModel, ds: Dataset, idx: np.ndarray, epoch: int, z_rng) -> float:
    asm = model.assembly
    cfg = asm.config
    tc = model.train_config
    half = idx.size // 2
    real, fake = idx[:half], idx[half:]
    with ad.no_grad():
        fake_codes = _guard(lambda: asm.generator(ds.persons[fake], ds.scene[fake],
                                                   _noise(z_rng, fake.size, cfg)), "generator")
    real_codes = encode_batch(ds.labels[real], cfg.n_classes).astype(cfg.np_dtype)

    def forward():
        p_real, cls_real = asm.discriminator(ds.scene[real], Tensor(real_codes))
        p_fake, _ = asm.discriminator(ds.scene[fake], fake_codes.detach())
        return d_loss(p_real, p_fake, cls_real, ds.labels[real], tc.lambda_c)

    model.d_opt.zero_grad()
    loss = _guard(forward, "discriminator")
    loss.backward()
    model.d_opt.step(epoch)
    model.steps["d"] += 1
    return loss.item()


def _g_step(model: TrainedModel, ds: Dataset, idx: np.ndarray, epoch: int, z_rng) -> float:
    asm = model.assembly
    tc = model.train_config
    z = _noise(z_rng, idx.size, asm.config)

    def forward():
        codes = asm.generator(ds.persons[idx], ds.scene[idx], z)
        p_fake, cls_fake = asm.discriminator(ds.scene[idx], codes)
        return g_loss(p_fake, cls_fake, ds.labels[idx], tc.lambda_c, tc.generator_loss, tc.g_class_loss)

    model.g_opt.zero_grad()
    with frozen(asm.discriminator):
        loss = _guard(forward, "generator")
        loss.backward()
    model.g_opt.step(epoch)
    model.steps["g"] += 1
    return loss.item()


def _supervised_step(model: TrainedModel, ds: Dataset, idx: np.ndarray, epoch: int, z_rng) -> float:
    asm = model.assembly
    z = _noise(z_rng, idx.size, asm.config)

    def forward():
        probs = asm.head(asm.generator(ds.persons[idx], ds.scene[idx], z))
        return categorical_ce_loss(probs, ds.labels[idx])

    model.g_opt.zero_grad()
    loss = _guard(forward, "classifier")
    loss.backward()
    model.g_opt.step(epoch)
    model.steps["g"] += 1
    return loss.item()


# --------------------------------------------------------------------------
# inference


def _as_assembly(model) -> ModelAssembly:
    if isinstance(model, TrainedModel):
        return model.assembly
    if isinstance(model, ModelAssembly):
        return model
    raise ContractError("expected a trained model")


def predict_proba(model, persons, scene, z_samples: int = 0, seed: int = 0,
                  chunk: int = 512) -> np.ndarray:
    """Class probabilities with ``z`` at zero, or averaged over ``z_samples`` draws."""
    asm = _as_assembly(model)
    cfg = asm.config
    persons = np.asarray(persons)
    scene = np.asarray(scene)
    out = []
    rng = stream(seed, "inference")
    with ad.no_grad():
        for lo in range(0, len(persons), chunk):
            p, s = persons[lo: lo + chunk], scene[lo: lo + chunk]
            if z_samples <= 0:
                out.append(asm.class_probs(p, s).data)
            else:
                acc = sum(asm.class_probs(p, s, _noise(rng, len(p), cfg)).data for _ in range(z_samples))
                out.append(acc / z_samples)
    if not out:
        return np.zeros((0, cfg.n_classes))
    return np.concatenate(out)


def predict(model, persons, scene, **kwargs) -> np.ndarray:
    return np.argmax(predict_proba(model, persons, scene, **kwargs), axis=1)


def classify(model, sample: SceneSample) -> int:
    """Predicted group class of one padded sample (lowest index wins ties)."""
    if model is None:
        raise ContractError("classify needs a trained model")
    persons = np.stack(sample.person_seqs)[None]
    scene = np.asarray(sample.scene_seq)[None]
    return int(predict(model, persons, scene)[0])


def evaluate(model, dataset: Dataset) -> MetricsReport:
    preds = predict(model, dataset.persons, dataset.scene)
    curves = {}
    if isinstance(model, TrainedModel):
        curves = {
            "d_losses": [r.d_loss for r in model.history if r.d_loss is not None],
            "g_losses": [r.g_loss for r in model.history],
        }
    return MetricsReport.from_predictions(dataset.labels, preds, dataset.n_classes, **curves)


def generated_codes(model, dataset: Dataset) -> np.ndarray:
    """Normalised codes from the generator with ``z = 0``."""
    asm = _as_assembly(model)
    with ad.no_grad():
        return np.concatenate([
            asm.generator(dataset.persons[lo: lo + 512], dataset.scene[lo: lo + 512]).data
            for lo in range(0, len(dataset), 512)
        ])


# --------------------------------------------------------------------------
# probe


def parameter_digest(module) -> str:
    """SHA-256 over parameter names and bytes of a module or a whole assembly."""
    if isinstance(module, ModelAssembly):
        items = module.state_dict().items()
    else:
        items = ((name, p.data) for name, p in module.named_parameters())
    h = hashlib.sha256()
    for name, arr in items:
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


@dataclass
class ProbeResult:
    report: MetricsReport
    layer: DenseLayer
    digest_before: str
    digest_after: str

    @property
    def frozen_intact(self) -> bool:
        return self.digest_before == self.digest_after


def probe_codes(model, train_set: Dataset, test_set: Dataset, epochs: int = 100,
                lr: float = 1e-2, batch_size: int = 32, seed: int = 0) -> ProbeResult:
    """Fit a dense softmax layer on frozen generator codes and score it.

    Codes are standardised with training-set statistics before the layer;
    that affine step adds no capacity beyond the layer itself but lets the
    probe converge even when an untrained generator emits nearly constant
    codes.
    """
    asm = _as_assembly(model)
    k = asm.config.n_classes
    before = parameter_digest(asm.generator)
    train_codes = generated_codes(asm, train_set)
    test_codes = generated_codes(asm, test_set)
    mu = train_codes.mean(axis=0)
    sd = train_codes.std(axis=0) + 1e-8
    x_train = (train_codes - mu) / sd
    x_test = (test_codes - mu) / sd
    rng = stream(seed, "probe")
    layer = DenseLayer(k, k, "softmax", rng=rng)
    opt = Adam(layer.parameters(), LRSchedule(lr1=lr, epochs1=epochs, lr2=lr, epochs2=0))
    n = len(train_set)
    for epoch in range(epochs):
        order = stream(seed, "probe", epoch).permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo: lo + batch_size]
            opt.zero_grad()
            loss = categorical_ce_loss(layer(Tensor(x_train[idx])), train_set.labels[idx])
            loss.backward()
            opt.step(epoch)
    with ad.no_grad():
        preds = np.argmax(layer(Tensor(x_test)).data, axis=1)
    report = MetricsReport.from_predictions(test_set.labels, preds, k)
    return ProbeResult(report, layer, before, parameter_digest(asm.generator))


# --------------------------------------------------------------------------
# gate read-out


@dataclass
class GateReport:
    present: np.ndarray   # per slot, mean gate over samples where the slot holds a real agent
    absent: np.ndarray    # per slot, mean gate over samples where the slot is a dummy (nan if never)
    real_mean: float
    dummy_mean: float

    def __len__(self) -> int:
        return len(self.present)


def gate_attention_report(model, dataset: Dataset) -> GateReport:
    asm = _as_assembly(model)
    gen = asm.generator
    if not gen.use_gfu:
        raise ContractError(f"variant {asm.variant!r} has no gated fusion unit")
    gates = np.concatenate([
        gen.gate_activations(dataset.persons[lo: lo + 512], dataset.scene[lo: lo + 512]).mean(axis=2)
        for lo in range(0, len(dataset), 512)
    ], axis=1)  # (streams, n)
    mask = dataset.mask.T
    if gen.use_scene:
        mask = np.vstack([mask, np.ones((1, mask.shape[1]), dtype=bool)])
    present = np.array([g[m].mean() if m.any() else np.nan for g, m in zip(gates, mask)])
    absent = np.array([g[~m].mean() if (~m).any() else np.nan for g, m in zip(gates, mask)])
    real_mean = float(gates[mask].mean()) if mask.any() else float("nan")
    dummy_mean = float(gates[~mask].mean()) if (~mask).any() else float("nan")
    return GateReport(present, absent, real_mean, dummy_mean)


# --------------------------------------------------------------------------
# persistence


def save_model(model: TrainedModel, path) -> None:
    arrays = {f"param.{k}": v for k, v in model.assembly.state_dict().items()}
    arrays.update({f"opt_g.{k}": v for k, v in model.g_opt.state_dict().items()})
    if model.d_opt is not None:
        arrays.update({f"opt_d.{k}": v for k, v in model.d_opt.state_dict().items()})
    meta = {
        "variant": model.variant,
        "model": model.assembly.config.to_dict(),
        "train": asdict(model.train_config),
        "epochs_done": model.epochs_done,
        "steps": model.steps,
        "history": [asdict(r) for r in model.history],
    }
    save_checkpoint(path, arrays, meta)


def load_model(path) -> TrainedModel:
    arrays, meta = load_checkpoint(path)
    try:
        model_config = ModelConfig(**meta["model"])
        train_config = TrainConfig(**meta["train"])
    except (KeyError, TypeError) as exc:
        raise MLSGANError(f"{path}: checkpoint metadata is incomplete ({exc})") from exc
    model = init_model(model_config, train_config)

    def section(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    model.assembly.load_state_dict(section("param."))
    model.g_opt.load_state_dict(section("opt_g."))
    if model.d_opt is not None:
        model.d_opt.load_state_dict(section("opt_d."))
    model.epochs_done = int(meta["epochs_done"])
    model.steps = dict(meta.get("steps", {"d": 0, "g": 0}))
    model.history = [EpochRecord(**r) for r in meta.get("history", [])]
    return model
