"""Synthetic multi-agent datasets, dummy padding, splitting and feature files.

Feature file, binary variant (little-endian throughout)::

    8 bytes   magic b"MLSDATA1"
    5 x u32   N, T, d, k, count
    count records, each:
        u32             group label
        N x u8          presence mask (1 = real agent, 0 = dummy)
        N x i32         individual action ids (-1 for dummy slots)
        N*T*d x f32     person sequences, slot-major then time then feature
        T*d x f32       scene sequence

Text variant: a header line ``MLSDATA-TEXT 1 N T d k count`` followed by one
line per record holding the same fields in the same order, separated by
single spaces. Floats are written with ``repr`` of the float32 value widened
to float64, so reading them back and narrowing to float32 is exact.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import ContractError, FormatError, ParseError
from .rng import stream

log = logging.getLogger(__name__)

BINARY_MAGIC = b"MLSDATA1"
TEXT_MAGIC = "MLSDATA-TEXT 1"
LABEL_RULES = ("majority", "key_agent")


@dataclass
class SceneSample:
    """One labelled example. ``person_seqs`` holds only real agents until padded."""

    person_seqs: list[np.ndarray]
    scene_seq: np.ndarray
    presence_mask: list[bool]
    group_label: int
    individual_labels: list[int]


@dataclass
class Dataset:
    """Padded examples stored as stacked float32 arrays.

    persons ``(n, N, T, d)``, scene ``(n, T, d)``, mask ``(n, N)``,
    labels ``(n,)``, individual ``(n, N)`` with -1 in dummy slots.
    """

    persons: np.ndarray
    scene: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    individual: np.ndarray
    n_classes: int

    def __post_init__(self):
        n = len(self.labels)
        if self.persons.ndim != 4 or self.persons.shape[0] != n:
            raise ContractError(f"persons must be (n, N, T, d), got {self.persons.shape}")
        _, N, T, d = self.persons.shape
        if self.scene.shape != (n, T, d) or self.mask.shape != (n, N) or self.individual.shape != (n, N):
            raise ContractError("dataset arrays have inconsistent shapes")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ContractError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> SceneSample:
        return SceneSample(
            person_seqs=list(self.persons[i]),
            scene_seq=self.scene[i],
            presence_mask=[bool(m) for m in self.mask[i]],
            group_label=int(self.labels[i]),
            individual_labels=[int(v) for v in self.individual[i]],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.n_classes == other.n_classes and all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in (
                (self.persons, other.persons),
                (self.scene, other.scene),
                (self.mask, other.mask),
                (self.labels, other.labels),
                (self.individual, other.individual),
            )
        )

    @property
    def n_persons(self) -> int:
        return self.persons.shape[1]

    @property
    def seq_len(self) -> int:
        return self.persons.shape[2]

    @property
    def feature_dim(self) -> int:
        return self.persons.shape[3]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.persons[idx], self.scene[idx], self.mask[idx], self.labels[idx],
                       self.individual[idx], self.n_classes)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def fingerprint(self) -> str:
        """SHA-256 over the array bytes; used to show two runs saw the same data."""
        h = hashlib.sha256()
        for arr in (self.persons, self.scene, self.mask, self.labels, self.individual):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``X`` of shape ``(n, N + 1, T, d)`` (scene in the last slot) and ``y``."""
        X = np.concatenate([self.persons, self.scene[:, None]], axis=1)
        return X, self.labels.copy()

    @classmethod
    def from_samples(cls, samples: Sequence[SceneSample], n_classes: int) -> "Dataset":
        if not samples:
            raise ContractError("cannot build a dataset from zero samples")
        return cls(
            persons=np.stack([np.stack(s.person_seqs) for s in samples]).astype(np.float32),
            scene=np.stack([s.scene_seq for s in samples]).astype(np.float32),
            mask=np.array([s.presence_mask for s in samples], dtype=bool),
            labels=np.array([s.group_label for s in samples], dtype=np.int64),
            individual=np.array([s.individual_labels for s in samples], dtype=np.int64),
            n_classes=n_classes,
        )


# --------------------------------------------------------------------------
# generation


@dataclass
class SyntheticConfig:
    n_samples: int = 500
    k_group: int = 4
    k_ind: Optional[int] = None
    n_persons: int = 5
    seq_len: int = 10
    feature_dim: int = 8
    agents_min: int = 1
    agents_max: int = 5
    noise_std: float = 0.1
    class_separation: float = 3.0
    transition_prob: float = 0.0
    class_weights: Optional[list[float]] = None
    label_rule: str = "majority"
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ContractError("n_samples must be positive")
        for name in ("k_group", "n_persons", "seq_len", "feature_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.k_ind is not None and self.k_ind != self.k_group:
            raise ContractError("k_ind must equal k_group: group labels are drawn from individual actions")
        if not 1 <= self.agents_min <= self.agents_max:
            raise ContractError("need 1 <= agents_min <= agents_max")
        if self.agents_max > self.n_persons:
            raise ContractError(
                f"agents_max ({self.agents_max}) must not exceed n_persons ({self.n_persons})"
            )
        if self.noise_std < 0:
            raise ContractError("noise_std must be >= 0")
        if not 0.0 <= self.transition_prob <= 1.0:
            raise ContractError("transition_prob must lie in [0, 1]")
        if self.label_rule not in LABEL_RULES:
            raise ContractError(f"label_rule must be one of {LABEL_RULES}")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=float)
            if w.shape != (self.k_group,) or np.any(w < 0) or w.sum() <= 0:
                raise ContractError("class_weights needs k_group non-negative entries with a positive sum")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def majority_label(actions: Sequence[int]) -> int:
    """Most frequent id; ties go to the lowest id."""
    if len(actions) == 0:
        raise ContractError("majority of an empty action list")
    counts = np.bincount(np.asarray(actions, dtype=np.int64))
    return int(np.argmax(counts))


def make_anchors(config: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    """One fixed trajectory per action, shape ``(k, T, d)``."""
    k, T, d = config.k_group, config.seq_len, config.feature_dim
    centre = rng.standard_normal((k, d))
    centre /= np.linalg.norm(centre, axis=1, keepdims=True)
    swing = rng.standard_normal((k, d))
    swing /= np.linalg.norm(swing, axis=1, keepdims=True)
    freq = rng.uniform(0.5, 2.0, size=k)
    phase = rng.uniform(0.0, 2 * np.pi, size=k)
    t = np.arange(T) / max(T, 1)
    wave = np.sin(2 * np.pi * freq[:, None] * t[None] + phase[:, None])
    return config.class_separation * (centre[:, None, :] + 0.5 * wave[:, :, None] * swing[:, None, :])


def _draw_actions(config: SyntheticConfig, n_agents: int, target: int, rng) -> list[int]:
    k = config.k_group
    if config.label_rule == "key_agent":
        return [target] + [int(a) for a in rng.integers(0, k, size=n_agents - 1)]
    while True:
        favour = rng.random(n_agents) < 0.5
        actions = np.where(favour, target, rng.integers(0, k, size=n_agents))
        if majority_label(actions) == target:
            return [int(a) for a in actions]


def generate_unpadded(config: SyntheticConfig) -> tuple[list[SceneSample], np.ndarray]:
    """Samples holding only real agents, plus the anchors used to build them."""
    config.validate()
    rng = stream(config.seed, "data")
    anchors = make_anchors(config, rng)
    k, T, d = config.k_group, config.seq_len, config.feature_dim
    weights = None
    if config.class_weights is not None:
        weights = np.asarray(config.class_weights, dtype=float)
        weights = weights / weights.sum()
    samples = []
    for _ in range(config.n_samples):
        n_agents = int(rng.integers(config.agents_min, config.agents_max + 1))
        target = int(rng.choice(k, p=weights))
        actions = _draw_actions(config, n_agents, target, rng)
        seqs = []
        for a in actions:
            seq = anchors[a].copy()
            if config.transition_prob > 0 and k > 1 and rng.random() < config.transition_prob:
                start = int(rng.integers(int(np.ceil(T / 2)), T)) if T > 1 else 0
                other = int((a + rng.integers(1, k)) % k)
                seq[start:] = anchors[other][start:]
            if config.noise_std > 0:
                seq = seq + rng.normal(0.0, config.noise_std, size=(T, d))
            seqs.append(seq.astype(np.float32))
        scene = np.mean(seqs, axis=0, dtype=np.float64)
        if config.noise_std > 0:
            scene = scene + rng.normal(0.0, config.noise_std, size=(T, d))
        label = actions[0] if config.label_rule == "key_agent" else majority_label(actions)
        samples.append(SceneSample(seqs, scene.astype(np.float32), [True] * n_agents, label, actions))
    return samples, anchors


def pad_dummy(sample: SceneSample, n_persons: int) -> SceneSample:
    """Fill empty slots with all-zero sequences and mark them absent."""
    count = len(sample.person_seqs)
    if count == 0:
        raise ContractError("a sample needs at least one real agent")
    if count > n_persons:
        raise ContractError(f"{count} agents do not fit into {n_persons} slots")
    missing = n_persons - count
    template = np.zeros_like(sample.person_seqs[0])
    return SceneSample(
        person_seqs=list(sample.person_seqs) + [template.copy() for _ in range(missing)],
        scene_seq=sample.scene_seq,
        presence_mask=list(sample.presence_mask[:count]) + [False] * missing,
        group_label=sample.group_label,
        individual_labels=list(sample.individual_labels[:count]) + [-1] * missing,
    )


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    samples, _ = generate_unpadded(config)
    padded = [pad_dummy(s, config.n_persons) for s in samples]
    return Dataset.from_samples(padded, config.k_group)


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split stratified by group label.

    Each class with at least two samples contributes to both parts; a class
    with a single sample goes to the training part with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = stream(seed, "split")
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        if idx.size < 2:
            log.warning("class %d has %d sample(s); placing it in the training split", c, idx.size)
            train_idx.extend(idx.tolist())
            continue
        n_train = int(round(train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


# --------------------------------------------------------------------------
# feature files


def save_dataset(dataset: Dataset, path, fmt: str | None = None) -> None:
    fmt = fmt or ("text" if str(path).endswith(".txt") else "binary")
    if fmt == "binary":
        _save_binary(dataset, path)
    elif fmt == "text":
        _save_text(dataset, path)
    else:
        raise ContractError(f"unknown dataset format {fmt!r}")


def load_features(path) -> Dataset:
    """Read either feature-file variant, detected from the leading bytes."""
    raw = Path(path).read_bytes()
    if raw.startswith(BINARY_MAGIC):
        return _load_binary(raw, path)
    if raw.startswith(TEXT_MAGIC.encode()):
        return _load_text(raw.decode("utf-8"), path)
    raise FormatError(f"{path}: unrecognised dataset file")


def _save_binary(ds: Dataset, path) -> None:
    n, N, T, d = ds.persons.shape
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<5I", N, T, d, ds.n_classes, n))
        for i in range(n):
            fh.write(struct.pack("<I", int(ds.labels[i])))
            fh.write(ds.mask[i].astype("u1").tobytes())
            fh.write(ds.individual[i].astype("<i4").tobytes())
            fh.write(ds.persons[i].astype("<f4").tobytes())
            fh.write(ds.scene[i].astype("<f4").tobytes())


def _load_binary(raw: bytes, path) -> Dataset:
    head = len(BINARY_MAGIC)
    if len(raw) < head + 20:
        raise ParseError(f"{path}: truncated header")
    N, T, d, k, n = struct.unpack_from("<5I", raw, head)
    rec = 4 + N + 4 * N + 4 * N * T * d + 4 * T * d
    offset = head + 20
    expected = offset + n * rec
    if len(raw) < expected:
        done = (len(raw) - offset) // rec
        raise ParseError(f"{path}: truncated in record {done} of {n}")
    if len(raw) > expected:
        raise ParseError(f"{path}: {len(raw) - expected} trailing bytes after record {n - 1}")
    persons = np.empty((n, N, T, d), np.float32)
    scene = np.empty((n, T, d), np.float32)
    mask = np.empty((n, N), bool)
    labels = np.empty(n, np.int64)
    individual = np.empty((n, N), np.int64)
    for i in range(n):
        pos = offset + i * rec
        labels[i] = struct.unpack_from("<I", raw, pos)[0]
        if labels[i] >= k:
            raise FormatError(f"{path}: record {i} has label {labels[i]} but header k={k}")
        pos += 4
        mask[i] = np.frombuffer(raw, "u1", N, pos).astype(bool)
        pos += N
        individual[i] = np.frombuffer(raw, "<i4", N, pos)
        pos += 4 * N
        persons[i] = np.frombuffer(raw, "<f4", N * T * d, pos).reshape(N, T, d)
        pos += 4 * N * T * d
        scene[i] = np.frombuffer(raw, "<f4", T * d, pos).reshape(T, d)
    return Dataset(persons, scene, mask, labels, individual, k)


def _fmt(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values.reshape(-1))


def _save_text(ds: Dataset, path) -> None:
    n, N, T, d = ds.persons.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{TEXT_MAGIC} {N} {T} {d} {ds.n_classes} {n}\n")
        for i in range(n):
            parts = [
                str(int(ds.labels[i])),
                " ".join(str(int(m)) for m in ds.mask[i]),
                " ".join(str(int(v)) for v in ds.individual[i]),
                _fmt(ds.persons[i]),
                _fmt(ds.scene[i]),
            ]
            fh.write(" ".join(parts) + "\n")


def _load_text(text: str, path) -> Dataset:
    lines = text.split("\n")
    header = lines[0].split()
    magic_len = len(TEXT_MAGIC.split())
    try:
        N, T, d, k, n = (int(v) for v in header[magic_len:])
    except ValueError as exc:
        raise ParseError(f"{path}:1: malformed header") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) < n:
        raise ParseError(f"{path}: truncated, {len(body)} of {n} records present")
    if len(body) > n:
        raise ParseError(f"{path}:{n + 2}: more records than the header declares")
    width = 1 + 2 * N + N * T * d + T * d
    persons = np.empty((n, N, T, d), np.float32)
    scene = np.empty((n, T, d), np.float32)
    mask = np.empty((n, N), bool)
    labels = np.empty(n, np.int64)
    individual = np.empty((n, N), np.int64)
    for i, line in enumerate(body):
        lineno = i + 2
        tok = line.split()
        if len(tok) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} fields, found {len(tok)}")
        try:
            labels[i] = int(tok[0])
            mask[i] = [bool(int(v)) for v in tok[1: 1 + N]]
            individual[i] = [int(v) for v in tok[1 + N: 1 + 2 * N]]
            vals = np.array([float(v) for v in tok[1 + 2 * N:]], dtype=np.float64).astype(np.float32)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= labels[i] < k:
            raise FormatError(f"{path}:{lineno}: label {labels[i]} but header k={k}")
        persons[i] = vals[: N * T * d].reshape(N, T, d)
        scene[i] = vals[N * T * d:].reshape(T, d)
    return Dataset(persons, scene, mask, labels, individual, k)
