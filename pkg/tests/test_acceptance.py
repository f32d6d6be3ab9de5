"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every test records a PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the run. The training runs
take about seven minutes on one CPU core.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import naive_lstm

from mlsgan.autodiff import Tensor
from mlsgan.codes import decode, encode_ground_truth
from mlsgan.data import SyntheticConfig, generate_synthetic, split
from mlsgan.fusion import GatedFusionUnit, gate_activations, gfu_forward
from mlsgan.gradcheck import run_suite
from mlsgan.metrics import confusion_matrix, mca, mpca
from mlsgan.nn import LSTMCell, lstm_encode
from mlsgan.training import (
    TrainConfig,
    gate_attention_report,
    generated_codes,
    init_model,
    model_config_for,
    predict,
    probe_codes,
    train,
)

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
HIDDEN = 32


def easy_set(seed):
    # 2500 samples split 0.8 gives 2000 train / 500 test
    cfg = SyntheticConfig(n_samples=2500, k_group=4, n_persons=5, seq_len=10, feature_dim=8,
                          noise_std=0.5, class_separation=3.0, seed=seed)
    return split(generate_synthetic(cfg), 0.8, seed)


def standard_set(seed):
    cfg = SyntheticConfig(n_samples=1250, k_group=4, n_persons=5, seq_len=10, feature_dim=8,
                          noise_std=1.0, class_separation=3.0, seed=seed)
    return split(generate_synthetic(cfg), 0.8, seed)


def fit(train_set, test_set, variant, seed, epochs):
    tc = TrainConfig(epochs=epochs, seed=seed, variant=variant, eval_every=epochs)
    model, records = train(train_set, tc, model_config_for(train_set, hidden=HIDDEN), test_set)
    return model, records[-1].mca


# --------------------------------------------------------------------------
# 1


def test_c01_gradient_integrity(criterion):
    start = time.perf_counter()
    report = run_suite(seed=0)
    seconds = time.perf_counter() - start
    names = {c.name for c in report.components}
    required = {"dense", "lstm_step", "lstm_sequence", "gated_fusion_m1", "gated_fusion_m2",
                "gated_fusion_m4", "generator", "discriminator"}
    worst = max(c.worst for c in report.components)
    ok = report.passed and required <= names and worst < 1e-5 and seconds < 120
    criterion(1, ok, f"{len(names)} components, worst rel. error {worst:.2e} (< 1e-5), {seconds:.1f} s (< 120 s)")
    assert ok, report.to_text()


# --------------------------------------------------------------------------
# 2


def test_c02_lstm_oracle(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        T, hidden, d = (int(v) for v in rng.integers(1, [5, 4, 4]))
        cell = LSTMCell(d, hidden, rng)
        for b in cell.biases():
            b.data = rng.standard_normal(hidden)
        seq = rng.standard_normal((T, d))
        got = lstm_encode(cell, Tensor(seq)).data
        ref, _ = naive_lstm([w.data.tolist() for w in cell.weights()],
                            [b.data.tolist() for b in cell.biases()], seq.tolist(), hidden)
        worst = max(worst, float(np.max(np.abs(got - np.array(ref)))))
    ok = worst < 1e-10
    criterion(2, ok, f"20 random instances, max |diff| {worst:.1e} (< 1e-10)")
    assert ok


# --------------------------------------------------------------------------
# 3


def _unit(dims, fused, rng):
    unit = GatedFusionUnit(dims, fused, rng)
    for w in unit.streams:
        w.gate_bias.data = rng.standard_normal(fused)
    return unit


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def _gate_range(m, seed):
    rng = np.random.default_rng(seed)
    unit = _unit([3] * m, 4, rng)
    # stream values are LSTM hidden states, so they lie in (-1, 1)
    streams = [Tensor(np.tanh(rng.standard_normal((2, 3)))) for _ in range(m)]
    q = gate_activations(unit, streams).data
    assert np.all(q > 0) and np.all(q < 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1), st.data())
def _co_permutation(m, seed, data):
    rng = np.random.default_rng(seed)
    dims = [int(v) for v in rng.integers(1, 4, size=m)]
    unit = _unit(dims, 3, rng)
    streams = [Tensor(rng.standard_normal((2, d))) for d in dims]
    perm = data.draw(st.permutations(range(m)))
    bounds = np.cumsum([0] + dims)
    other = GatedFusionUnit([dims[p] for p in perm], 3)
    for new, old in enumerate(perm):
        src, dst = unit.streams[old], other.streams[new]
        dst.encode.data = src.encode.data.copy()
        dst.gate_bias.data = src.gate_bias.data.copy()
        dst.gate.data = np.concatenate([src.gate.data[:, bounds[p]:bounds[p + 1]] for p in perm], axis=1)
    a = gfu_forward(unit, streams).data
    b = gfu_forward(other, [streams[p] for p in perm]).data
    assert a.tobytes() == b.tobytes()


def test_c03_gfu_properties(criterion):
    rng = np.random.default_rng(3)
    _gate_range()
    _co_permutation()

    suppression = 0.0
    for m in (1, 2, 3, 4):
        unit = _unit([3] * m, 4, rng)
        for w in unit.streams:
            w.gate.data[:] = 0.0
        unit.streams[0].gate_bias.data[:] = -20.0
        big = Tensor(1e3 * rng.standard_normal((2, 3)))
        rest = [Tensor(rng.standard_normal((2, 3))) for _ in range(m - 1)]
        q0 = gate_activations(unit, [big] + rest).data[0]
        contribution = np.tanh(big.data @ unit.streams[0].encode.data.T) * q0
        suppression = max(suppression, float(np.max(np.abs(contribution))))

    unit = _unit([4], 3, rng)
    unit.streams[0].gate.data[:] = 0.0
    unit.streams[0].gate_bias.data[:] = 20.0
    z = Tensor(rng.standard_normal((5, 4)))
    reduction = float(np.max(np.abs(gfu_forward(unit, [z]).data - np.tanh(z.data @ unit.streams[0].encode.data.T))))

    ok = suppression < 1e-6 and reduction < 1e-6
    criterion(3, ok, f"gate range and co-permutation hold over 50 draws each, "
                     f"suppression {suppression:.1e}, reduction gap {reduction:.1e} (< 1e-6)")
    assert ok


# --------------------------------------------------------------------------
# 4


def test_c04_code_roundtrip(criterion):
    bad = [(c, k) for k in range(1, 17) for c in range(k) if decode(encode_ground_truth(c, k)) != c]
    rng = np.random.default_rng(4)
    ds = generate_synthetic(SyntheticConfig(n_samples=64, k_group=5, n_persons=3, agents_max=3,
                                            seq_len=4, feature_dim=3, noise_std=3.0, seed=4))
    lo, hi = 1.0, 0.0
    for _ in range(3):
        tc = TrainConfig(seed=int(rng.integers(1 << 30)))
        model = init_model(model_config_for(ds, hidden=8), tc)
        for p in model.assembly.generator.parameters().values():
            p.data = p.data * 10.0  # push the output layer towards saturation
        codes = generated_codes(model, ds)
        lo, hi = min(lo, codes.min()), max(hi, codes.max())
    ok = not bad and lo >= 0.0 and hi <= 1.0
    criterion(4, ok, f"136 (class, k) pairs round-trip, generated codes in [{lo:.3g}, {hi:.3g}]")
    assert ok


# --------------------------------------------------------------------------
# 5

HAND_CASES = [
    ([[2, 0], [1, 1]], 0.75, 0.75),
    ([[8, 2], [0, 0]], 0.8, 0.8),
    (np.eye(3, dtype=int) * 4, 1.0, 1.0),
    ([[3, 1, 0], [0, 1, 1], [0, 0, 2]], 6 / 8, (3 / 4 + 1 / 2 + 1) / 3),
    ([[0, 5], [5, 0]], 0.0, 0.0),
    ([[1, 2, 3], [4, 5, 6], [7, 8, 9]], 15 / 45, (1 / 6 + 5 / 15 + 9 / 24) / 3),
]


def test_c05_metrics(criterion):
    errors = []
    with pytest.warns(UserWarning):
        for cm, want_mca, want_mpca in HAND_CASES:
            errors.append(abs(mca(cm) - want_mca))
            errors.append(abs(mpca(cm) - want_mpca))
    y = np.repeat([0, 1, 2, 3], [70, 10, 10, 10])
    cm = confusion_matrix(y, np.zeros_like(y), 4)
    imbalance = (mca(cm), mpca(cm))
    errors += [abs(imbalance[0] - 0.7), abs(imbalance[1] - 0.25)]
    ok = max(errors) <= 1e-12
    criterion(5, ok, f"{len(HAND_CASES) + 1} matrices, imbalance MCA {imbalance[0]:.2f} MPCA {imbalance[1]:.2f}, "
                     f"max error {max(errors):.1e}")
    assert ok


# --------------------------------------------------------------------------
# 6 and 8 share the seed-0 easy-set model


@pytest.fixture(scope="module")
def easy_runs():
    runs = {}
    start = time.perf_counter()
    for seed in SEEDS:
        tr, te = easy_set(seed)
        for variant in ("g_supervised", "mls_gan"):
            runs[variant, seed] = fit(tr, te, variant, seed, epochs=25)
    return runs, time.perf_counter() - start


def test_c06_end_to_end(criterion, easy_runs):
    runs, seconds = easy_runs
    sup = [runs["g_supervised", s][1] for s in SEEDS]
    gan = [runs["mls_gan", s][1] for s in SEEDS]
    ok = sum(v >= 0.95 for v in sup) >= 2 and sum(v >= 0.90 for v in gan) >= 2 and seconds <= 900
    criterion(6, ok, f"25 epochs, G MCA {[round(v, 3) for v in sup]} (>= 0.95), "
                     f"MLS-GAN MCA {[round(v, 3) for v in gan]} (>= 0.90), {seconds:.0f} s (<= 900 s)")
    assert ok


def test_c08_probe_contribution(criterion, easy_runs):
    runs, _ = easy_runs
    model = runs["mls_gan", 0][0]
    tr, te = easy_set(0)
    trained = probe_codes(model, tr, te, seed=0)
    untrained = probe_codes(init_model(model.assembly.config, model.train_config), tr, te, seed=0)
    gap = trained.report.mca - untrained.report.mca
    ok = gap >= 0.20 and trained.frozen_intact and untrained.frozen_intact
    criterion(8, ok, f"probe MCA trained {trained.report.mca:.3f} vs untrained {untrained.report.mca:.3f}, "
                     f"gap {100 * gap:.1f} points (>= 20)")
    assert ok


# --------------------------------------------------------------------------
# 7


def test_c07_ablation_ordering(criterion):
    scores = {}
    for seed in SEEDS:
        tr, te = standard_set(seed)
        for variant in ("mls_gan", "g_supervised", "mls_gan_no_scene"):
            scores[variant, seed] = fit(tr, te, variant, seed, epochs=30)[1]
    over_sup = sum(scores["mls_gan", s] >= scores["g_supervised", s] for s in SEEDS)
    over_ns = sum(scores["mls_gan", s] >= scores["mls_gan_no_scene", s] for s in SEEDS)
    ok = over_sup >= 2 and over_ns >= 2
    table = ", ".join(f"seed {s}: {scores['mls_gan', s]:.3f}/{scores['g_supervised', s]:.3f}/"
                      f"{scores['mls_gan_no_scene', s]:.3f}" for s in SEEDS)
    criterion(7, ok, f"MLS >= G in {over_sup}/3, MLS >= no-scene in {over_ns}/3 ({table})")
    assert ok


# --------------------------------------------------------------------------
# 9


def test_c09_dummy_gate(criterion):
    wins, pairs = 0, []
    for seed in range(5):
        cfg = SyntheticConfig(n_samples=600, k_group=4, n_persons=5, seq_len=10, feature_dim=8,
                              agents_max=4, noise_std=0.5, seed=seed)
        tr, te = split(generate_synthetic(cfg), 0.8, seed)
        assert not te.mask[:, -1].any()
        model, _ = fit(tr, te, "mls_gan", seed, epochs=20)
        rep = gate_attention_report(model, te)
        pairs.append((rep.dummy_mean, rep.real_mean))
        wins += rep.dummy_mean < rep.real_mean
    ok = wins >= 4
    detail = ", ".join(f"{d:.3f}<{r:.3f}" for d, r in pairs)
    criterion(9, ok, f"dummy < real gate in {wins}/5 seeds ({detail})")
    assert ok


# --------------------------------------------------------------------------
# 10


def test_c10_determinism(criterion, tmp_path):
    import json

    cfg = {
        "seed": 7,
        "data": {"n_samples": 96, "k_group": 3, "n_persons": 3, "agents_max": 3, "seq_len": 5, "feature_dim": 4},
        "model": {"hidden": 10, "z_dim": 4},
        "train": {"epochs": 3, "batch_size": 16},
    }
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    blobs = []
    for run in ("a", "b"):
        for cmd in ("gen-data", "train"):
            extra = ["--out", str(tmp_path / run / "d.bin")] if cmd == "gen-data" else \
                ["--out", str(tmp_path / run), "--checkpoint", str(tmp_path / run / "m.ckpt")]
            if cmd == "train":
                (tmp_path / "run.json").write_text(json.dumps({**cfg, "paths": {"dataset": f"{run}/d.bin"}}))
            proc = subprocess.run([sys.executable, "-m", "mlsgan.cli", cmd, "--config", str(tmp_path / "run.json"),
                                   *extra], capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
        blobs.append([(tmp_path / run / name).read_bytes() for name in ("d.bin", "m.ckpt", "metrics.csv")])
    ok = blobs[0] == blobs[1]
    criterion(10, ok, "dataset, checkpoint and metrics CSV byte-identical across two runs")
    assert ok


# --------------------------------------------------------------------------
# 11


def test_c11_throughput(criterion):
    cfg = SyntheticConfig(n_samples=164, k_group=4, n_persons=12, agents_max=12, seq_len=10, feature_dim=8,
                          noise_std=0.5, seed=11)
    ds = generate_synthetic(cfg)
    tr, te = ds.subset(range(64)), ds.subset(range(64, 164))
    model, _ = train(tr, TrainConfig(epochs=1, seed=11), model_config_for(tr))  # full-size hidden 300
    start = time.perf_counter()
    preds = [int(predict(model, te.persons[i:i + 1], te.scene[i:i + 1])[0]) for i in range(len(te))]
    seconds = time.perf_counter() - start
    ok = len(preds) == 100 and seconds < 30
    criterion(11, ok, f"100 one-by-one predictions (N=12, T=10, hidden 300) in {seconds:.2f} s (< 30 s)")
    assert ok
