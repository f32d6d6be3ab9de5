import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlsgan.exceptions import ContractError
from mlsgan.metrics import MetricsReport, confusion_matrix, mca, mpca


def test_two_by_two():
    cm = [[2, 0], [1, 1]]
    assert mca(cm) == 0.75 and mpca(cm) == 0.75


def test_empty_row_skipped_with_warning():
    cm = [[8, 2], [0, 0]]
    assert mca(cm) == 0.8
    with pytest.warns(UserWarning, match="no samples"):
        assert mpca(cm) == 0.8


def test_identity():
    cm = np.eye(4, dtype=int) * 7
    assert mca(cm) == 1.0 and mpca(cm) == 1.0


def test_always_class_zero_on_imbalanced_set():
    y = np.repeat([0, 1, 2, 3], [70, 10, 10, 10])
    cm = confusion_matrix(y, np.zeros_like(y), 4)
    assert abs(mca(cm) - 0.7) < 1e-12
    assert abs(mpca(cm) - 0.25) < 1e-12


def test_three_class_hand_case():
    # recalls 3/4, 1/2, 2/2
    cm = [[3, 1, 0], [0, 1, 1], [0, 0, 2]]
    assert abs(mca(cm) - 6 / 8) < 1e-12
    assert abs(mpca(cm) - (0.75 + 0.5 + 1.0) / 3) < 1e-12


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(2, 5)).map(lambda s: (s[0], s[0])), elements=st.integers(0, 20)),
       st.randoms())
def test_label_permutation_invariance(cm, rnd):
    if cm.sum() == 0:
        return
    k = cm.shape[0]
    perm = list(range(k))
    rnd.shuffle(perm)
    permuted = cm[np.ix_(perm, perm)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert mca(permuted) == pytest.approx(mca(cm), abs=1e-12)
        assert mpca(permuted) == pytest.approx(mpca(cm), abs=1e-12)
        assert 0 <= mca(cm) <= 1 and 0 <= mpca(cm) <= 1


def test_confusion_counts():
    cm = confusion_matrix([0, 1, 1, 2], [0, 2, 1, 2], 3)
    assert cm.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert cm.sum() == 4


def test_errors():
    with pytest.raises(ContractError):
        mca([[1, 2, 3]])
    with pytest.raises(ContractError):
        mpca([[1, -1], [0, 1]])
    with pytest.raises(ContractError):
        mca(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        confusion_matrix([0, 3], [0, 0], 3)


def test_report_text():
    rep = MetricsReport.from_predictions([0, 1], [0, 0], 2)
    text = rep.to_text()
    assert text.startswith("MCA 0.500000\nMPCA 0.500000\n")
    assert text.endswith("1 0\n1 0\n")
