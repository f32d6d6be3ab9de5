import numpy as np
import pytest

from mlsgan.data import SyntheticConfig, generate_synthetic, split
from mlsgan.exceptions import ContractError, TrainingError
from mlsgan.models import VARIANTS
from mlsgan.training import (
    TrainConfig,
    classify,
    evaluate,
    gate_attention_report,
    init_model,
    load_model,
    model_config_for,
    parameter_digest,
    predict_proba,
    probe_codes,
    save_model,
    train,
)

TINY = SyntheticConfig(n_samples=32, k_group=3, n_persons=3, seq_len=4, feature_dim=3,
                       agents_max=3, noise_std=0.3, seed=1)


@pytest.fixture(scope="module")
def tiny():
    return generate_synthetic(TINY)


def _mc(ds, **kw):
    return model_config_for(ds, hidden=kw.pop("hidden", 6), z_dim=kw.pop("z_dim", 2), **kw)


def test_one_epoch_is_one_d_and_one_g_step(tiny):
    model, records = train(tiny, TrainConfig(epochs=1, batch_size=32), _mc(tiny))
    assert model.steps == {"d": 1, "g": 1}
    assert len(records) == 1 and records[0].epoch == 0


def test_supervised_variant_has_no_d_step(tiny):
    model, records = train(tiny, TrainConfig(epochs=1, variant="g_supervised"), _mc(tiny))
    assert model.steps == {"d": 0, "g": 1}
    assert records[0].d_loss is None


def test_runs_are_bit_identical(tiny):
    tc = TrainConfig(epochs=2, batch_size=8, seed=3)
    a, ra = train(tiny, tc, _mc(tiny), test_set=tiny)
    b, rb = train(tiny, tc, _mc(tiny), test_set=tiny)
    assert parameter_digest(a.assembly) == parameter_digest(b.assembly)
    assert ra == rb
    assert evaluate(a, tiny).confusion.tolist() == evaluate(b, tiny).confusion.tolist()


def test_different_seed_differs(tiny):
    a, _ = train(tiny, TrainConfig(epochs=1, seed=0), _mc(tiny))
    b, _ = train(tiny, TrainConfig(epochs=1, seed=1), _mc(tiny))
    assert parameter_digest(a.assembly) != parameter_digest(b.assembly)


def test_alternation_contract(tiny):
    seen = []

    def snap(model):
        asm = model.assembly
        return parameter_digest(asm.generator), parameter_digest(asm.discriminator)

    model = init_model(_mc(tiny), TrainConfig(epochs=2, batch_size=8))
    last = [snap(model)]

    def cb(phase, epoch, batch, m):
        g, d = snap(m)
        g0, d0 = last[0]
        if phase == "d":
            assert g == g0 and d != d0
        else:
            assert d == d0 and g != g0
        seen.append(phase)
        last[0] = (g, d)

    train(tiny, TrainConfig(epochs=2, batch_size=8), resume=model, callback=cb)
    assert seen == ["d", "g"] * 8


@pytest.mark.parametrize("target,head", [("generator", "generator"), ("discriminator", "discriminator")])
def test_nan_aborts_with_snapshot(tiny, target, head):
    model = init_model(_mc(tiny), TrainConfig(epochs=1))
    module = getattr(model.assembly, target)
    next(iter(module.parameters().values())).data[...] = np.nan
    with pytest.raises(TrainingError) as info:
        train(tiny, TrainConfig(epochs=1), resume=model)
    err = info.value
    assert (err.epoch, err.batch, err.head) == (0, 0, head)


def test_invalid_config_rejected(tiny):
    with pytest.raises(ContractError):
        train(tiny, TrainConfig(batch_size=7))
    with pytest.raises(ContractError):
        train(tiny, TrainConfig(variant="nope"))
    with pytest.raises(ContractError):
        train(tiny.subset([]), TrainConfig())


def test_mismatched_dataset_rejected(tiny):
    other = generate_synthetic(SyntheticConfig(n_samples=8, k_group=3, n_persons=3, seq_len=5,
                                               feature_dim=3, agents_max=3))
    model, _ = train(tiny, TrainConfig(epochs=1), _mc(tiny))
    with pytest.raises(ContractError):
        train(other, TrainConfig(epochs=1), resume=model)


# --------------------------------------------------------------------------
# inference


def test_classify_is_deterministic_and_matches_batch(tiny):
    model, _ = train(tiny, TrainConfig(epochs=1), _mc(tiny))
    preds = np.argmax(predict_proba(model, tiny.persons, tiny.scene), axis=1)
    for i in range(5):
        assert classify(model, tiny[i]) == classify(model, tiny[i]) == preds[i]


def test_uniform_class_head_predicts_zero(tiny):
    model = init_model(_mc(tiny), TrainConfig())
    for p in model.assembly.discriminator.cls_head.parameters().values():
        p.data[...] = 0
    assert classify(model, tiny[0]) == 0
    np.testing.assert_allclose(predict_proba(model, tiny.persons[:3], tiny.scene[:3]), 1 / 3, atol=1e-12)


def test_classify_requires_model(tiny):
    with pytest.raises(ContractError):
        classify(None, tiny[0])


def test_sampled_z_average(tiny):
    model, _ = train(tiny, TrainConfig(epochs=1), _mc(tiny))
    p = predict_proba(model, tiny.persons[:4], tiny.scene[:4], z_samples=3, seed=2)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert p.tobytes() == predict_proba(model, tiny.persons[:4], tiny.scene[:4], z_samples=3, seed=2).tobytes()


def test_noiseless_supervised_sanity():
    cfg = SyntheticConfig(n_samples=96, k_group=3, n_persons=2, seq_len=4, feature_dim=4, agents_min=1,
                          agents_max=1, noise_std=0.0, seed=6)
    ds = generate_synthetic(cfg)
    model, _ = train(ds, TrainConfig(epochs=40, lr=1e-2, variant="g_supervised"), _mc(ds, hidden=8))
    assert evaluate(model, ds).mca == 1.0


def test_every_variant_trains_one_epoch(tiny):
    for v in VARIANTS:
        model, rec = train(tiny, TrainConfig(epochs=1, variant=v), _mc(tiny), test_set=tiny)
        assert 0 <= rec[0].mca <= 1 and np.isfinite(rec[0].g_loss)


# --------------------------------------------------------------------------
# probe and gates


def test_probe_keeps_generator_frozen(tiny):
    model, _ = train(tiny, TrainConfig(epochs=1), _mc(tiny))
    before = parameter_digest(model.assembly)
    res = probe_codes(model, tiny, tiny, epochs=3)
    assert res.frozen_intact
    assert parameter_digest(model.assembly) == before
    assert res.report.confusion.sum() == len(tiny)


def test_probe_single_class_is_perfect():
    ds = generate_synthetic(SyntheticConfig(n_samples=20, k_group=1, n_persons=2, seq_len=3,
                                            feature_dim=2, agents_max=2))
    model = init_model(_mc(ds), TrainConfig())
    res = probe_codes(model, ds, ds, epochs=1)
    assert res.report.mca == 1.0


def test_gate_report_shape_and_untrained_half(tiny):
    model = init_model(_mc(tiny), TrainConfig())
    for w in model.assembly.generator.fusion.streams:
        w.gate.data[...] = 0
        w.gate_bias.data[...] = 0
    rep = gate_attention_report(model, tiny)
    assert len(rep) == tiny.n_persons + 1
    assert np.all(rep.present == 0.5)
    assert rep.real_mean == 0.5
    no_scene = init_model(_mc(tiny), TrainConfig(variant="mls_gan_no_scene"))
    assert len(gate_attention_report(no_scene, tiny)) == tiny.n_persons


def test_gate_report_needs_gfu(tiny):
    model = init_model(_mc(tiny), TrainConfig(variant="g_gfu_ablated"))
    with pytest.raises(ContractError):
        gate_attention_report(model, tiny)


# --------------------------------------------------------------------------
# persistence


def test_save_load_resume_matches_uninterrupted(tmp_path, tiny):
    tc = TrainConfig(epochs=4, batch_size=16, seed=5)
    full, _ = train(tiny, tc, _mc(tiny))

    half = TrainConfig(epochs=2, batch_size=16, seed=5, lr_drop_epoch=tc.schedule().epochs1)
    part, _ = train(tiny, half, _mc(tiny))
    save_model(part, tmp_path / "m.ckpt")
    loaded = load_model(tmp_path / "m.ckpt")
    assert loaded.epochs_done == 2
    assert parameter_digest(loaded.assembly) == parameter_digest(part.assembly)
    resumed, recs = train(tiny, half, resume=loaded)
    assert [r.epoch for r in recs] == [2, 3]
    assert [r.epoch for r in resumed.history] == [0, 1, 2, 3]
    assert parameter_digest(resumed.assembly) == parameter_digest(full.assembly)


def test_save_is_byte_deterministic(tmp_path, tiny):
    model, _ = train(tiny, TrainConfig(epochs=1), _mc(tiny))
    save_model(model, tmp_path / "a")
    save_model(load_model(tmp_path / "a"), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_split_then_train_eval(tiny):
    tr, te = split(tiny, 0.75, seed=0)
    _, recs = train(tr, TrainConfig(epochs=2, eval_every=2), _mc(tr), test_set=te)
    assert recs[0].mca is None and recs[1].mca is not None
