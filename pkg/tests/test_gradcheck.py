import pytest

from mlsgan import fusion
from mlsgan.gradcheck import COMPONENTS, DEFAULT_EPSILON, run_suite


@pytest.fixture(scope="module")
def report():
    return run_suite(seed=0)


def test_pristine_suite_passes(report):
    assert report.passed, report.to_text()
    assert report.failed == []


def test_covers_every_building_block(report):
    names = [c.name for c in report.components]
    assert len(names) >= 6
    for required in ("dense", "lstm_step", "lstm_sequence", "gated_fusion_m2", "generator", "discriminator"):
        assert required in names
    assert names == list(COMPONENTS)


def test_report_text_lists_worst_error(report):
    text = report.to_text()
    for c in report.components:
        assert c.name in text
        assert c.worst < c.tolerance


def test_epsilon_default():
    assert 1e-7 <= DEFAULT_EPSILON <= 1e-4


def test_only_subset():
    rep = run_suite(only=["dense", "losses"])
    assert [c.name for c in rep.components] == ["dense", "losses"]


@pytest.mark.parametrize("seed", [1, 2])
def test_other_seeds_pass(seed):
    assert run_suite(seed=seed).passed


def test_injected_sign_flip_is_localised(monkeypatch):
    original = fusion._gated_sum_backward
    monkeypatch.setattr(fusion, "_gated_sum_backward", lambda g, hs, qs: [-x for x in original(g, hs, qs)])
    rep = run_suite()
    assert not rep.passed
    assert any(name.startswith("gated_fusion") for name in rep.failed)
    assert "dense" not in rep.failed and "lstm_step" not in rep.failed
