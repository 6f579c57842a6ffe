import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invkern.errors import ConfigError
from invkern.evaluation import (RocCurve, ScoreSet, all_pairs_verify, auc, roc, summarize, vr_at_far,
                                write_report, write_roc_csv)

from oracles import roc_by_enumeration


def scores(g, i):
    return ScoreSet(np.asarray(g, dtype=float), np.asarray(i, dtype=float))


def test_pair_counts():
    s = all_pairs_verify(np.array([[1.0, 0], [1.0, 0.1], [0.0, 1]]), ["a", "a", "b"])
    assert s.n_genuine == 1 and s.n_impostor == 2
    rng = np.random.default_rng(0)
    n = 17
    s = all_pairs_verify(rng.standard_normal((n, 4)), rng.integers(0, 3, n))
    assert s.n_genuine + s.n_impostor == n * (n - 1) // 2


def test_identical_features_score_one():
    s = all_pairs_verify(np.ones((4, 3)), [0, 0, 1, 1])
    assert np.allclose(s.genuine, 1.0) and np.allclose(s.impostor, 1.0)


def test_input_errors():
    with pytest.raises(ConfigError):
        all_pairs_verify(np.ones((3, 2)), [0, 0, 0])
    with pytest.raises(ConfigError):
        all_pairs_verify(np.ones((1, 2)), [0])
    with pytest.raises(ConfigError):
        all_pairs_verify(np.ones((5, 2)), [0, 1, 0, 1, 0], pair_cap=9)
    with pytest.raises(ConfigError):
        roc(scores([], [0.1]))


def test_zero_vectors_score_zero():
    s = all_pairs_verify(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]), [0, 0, 1])
    assert s.degenerate_pairs == 2
    assert sorted(s.impostor.tolist()) == [0.0, 1.0]


def test_perfect_separation():
    c = roc(scores([0.9, 0.8], [0.1, 0.2]))
    assert vr_at_far(c, 0.0) == 1.0
    assert vr_at_far(c, 0.001) == 1.0
    assert auc(c) == 1.0


def test_reversed_separation_has_zero_auc():
    assert auc(roc(scores([0.1, 0.2], [0.8, 0.9]))) == 0.0


def test_equal_distributions_near_diagonal():
    rng = np.random.default_rng(0)
    a = auc(roc(scores(rng.random(3000), rng.random(3000))))
    assert abs(a - 0.5) < 0.03


def test_vr_at_far_conventions():
    c = RocCurve(far=np.array([0.0, 0.5, 1.0]), vr=np.array([0.0, 0.8, 1.0]), thresholds=np.array([np.inf, 0.5, 0.1]))
    assert vr_at_far(c, 0.4) == 0.0
    assert vr_at_far(c, 0.5) == 0.8
    with pytest.raises(ConfigError):
        vr_at_far(c, 1.5)
    empty = RocCurve(far=np.array([0.2, 1.0]), vr=np.array([0.5, 1.0]), thresholds=np.array([0.3, 0.1]))
    assert vr_at_far(empty, 0.1) == 0.0


def test_writers(tmp_path):
    s = scores([0.9, 0.4], [0.1, 0.5])
    c = roc(s)
    write_roc_csv(c, tmp_path / "roc.csv")
    rows = list(csv.reader(open(tmp_path / "roc.csv")))
    assert rows[0] == ["threshold", "far", "vr"] and len(rows) == len(c.far) + 1
    write_report(summarize(s), tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["auc"] == pytest.approx(0.75) and set(data["vr_at_far"]) == {"0.001", "0.01", "0.1"}


# -- properties ---------------------------------------------------------

score_lists = st.lists(st.floats(-1, 1), min_size=1, max_size=40)


@given(score_lists, score_lists)
def test_curve_shape(g, i):
    c = roc(scores(g, i))
    assert c.far[0] == 0.0 and c.vr[0] == 0.0
    assert c.far[-1] == 1.0 and c.vr[-1] == 1.0
    assert np.all(np.diff(c.far) >= 0) and np.all(np.diff(c.vr) >= 0)
    assert np.all((0 <= c.vr) & (c.vr <= 1))


@given(score_lists, score_lists)
def test_auc_matches_pair_enumeration(g, i):
    assert auc(roc(scores(g, i))) == pytest.approx(roc_by_enumeration(g, i), abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(3, 25))
def test_row_order_independence(seed, n):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, 3))
    cls = rng.integers(0, 3, n)
    cls[:2] = [0, 1]
    perm = rng.permutation(n)
    a = all_pairs_verify(F, cls)
    b = all_pairs_verify(F[perm], cls[perm])
    assert np.allclose(np.sort(a.genuine), np.sort(b.genuine), atol=1e-12)
    assert np.allclose(np.sort(a.impostor), np.sort(b.impostor), atol=1e-12)


def test_blocks_and_threads_are_bit_identical():
    rng = np.random.default_rng(1)
    F = rng.standard_normal((300, 5))
    cls = rng.integers(0, 20, 300)
    a = all_pairs_verify(F, cls, threads=1, block_rows=64)
    b = all_pairs_verify(F, cls, threads=8, block_rows=64)
    assert a.genuine.tobytes() == b.genuine.tobytes() and a.impostor.tobytes() == b.impostor.tobytes()
